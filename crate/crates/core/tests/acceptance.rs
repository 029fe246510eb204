//! Acceptance criteria C1–C10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use logdiff_core::diagnostics::{
    check_h12_bound, check_lp_linf_smoothing, check_lx_l2_smoothing, check_monotone,
    contraction_profile, Family,
};
use logdiff_core::experiment::{run_suite, ExperimentSpec, InitialDataSpec, Suite};
use logdiff_core::inequality::{FamilyKind, SampleFamily};
use logdiff_core::transport::modified_hilbert_direct;
use logdiff_core::{
    a_kernel, evolve, frac_laplacian_spectral, modified_hilbert, poisson_kernel, poisson_value,
    to_transport, transport_residual, Field, Grid1D, Nonlinearity, RunConfig, TimeSchedule,
    Trajectory,
};
use rayon::prelude::*;

struct Line {
    id: &'static str,
    pass: bool,
    msg: String,
    secs: f64,
}

fn run(f: &Field, nl: Nonlinearity, t_end: f64, dt: f64, every: usize) -> Trajectory {
    let mut cfg = RunConfig::new(f.clone(), nl, t_end, TimeSchedule::Fixed { dt });
    cfg.record_every = every;
    evolve(&cfg).expect("run completes")
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn c1() -> (bool, String) {
    let grid = Grid1D::new(4096, 200.0).unwrap();
    let p = poisson_kernel(grid, 1.0).unwrap();
    let out = frac_laplacian_spectral(&p, 1.0).unwrap();
    let want = Field::from_fn(grid, |x| a_kernel(x, 1.0)).unwrap();
    let e = sup(out.values(), want.values());
    (
        e <= 1e-4,
        format!("sup |(-Δ)^(1/2) P(·,1) - (1 - x²)/(π(1+x²)²)| = {e:.3e} (tol 1e-4)"),
    )
}

fn c2() -> (bool, String) {
    let grid = Grid1D::new(2048, 100.0).unwrap();
    let f = poisson_kernel(grid, 1.0).unwrap();
    let want: Vec<f64> = (0..grid.n())
        .map(|j| poisson_value(grid.x(j), 2.0))
        .collect();
    let errs: Vec<f64> = [0.02, 0.01, 0.005]
        .par_iter()
        .map(|&dt| {
            sup(
                run(&f, Nonlinearity::Linear, 1.0, dt, 1000)
                    .last()
                    .u
                    .values(),
                &want,
            )
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = errs[2] <= 1e-3 && orders.iter().all(|&o| o >= 0.9);
    (
        pass,
        format!(
            "P(·,1) -> P(·,2): errors {:.3e}, {:.3e}, {:.3e} at dt 0.02/0.01/0.005 (tol 1e-3); orders {:.3}, {:.3} (min 0.9)",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    )
}

fn seeded_data(grid: Grid1D) -> Vec<Field> {
    let mut out = SampleFamily::new(FamilyKind::MultiBump, 12, 101).realize(grid);
    out.extend(SampleFamily::new(FamilyKind::BandLimited, 8, 202).realize(grid));
    out
}

fn c4(runs: &[Trajectory]) -> (bool, String) {
    let reps: Vec<_> = runs.iter().map(check_monotone).collect();
    let worst_inc = reps
        .iter()
        .map(|r| r.worst_increase())
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_e = reps
        .iter()
        .map(|r| r.energy_bound_ratio)
        .fold(0.0, f64::max);
    (
        runs.len() >= 20 && worst_inc <= 1e-9 && worst_e <= 1.01,
        format!(
            "{} runs: largest increase of L1/L2/L4/Linf/LX/E = {worst_inc:.3e} (slack 1e-9); max 2tE/LX(f) = {worst_e:.6} (max 1.01)",
            runs.len()
        ),
    )
}

fn c5(grid: Grid1D) -> (bool, String, Vec<Trajectory>) {
    let base = SampleFamily::new(FamilyKind::MultiBump, 20, 303).realize(grid);
    let extra = SampleFamily::new(FamilyKind::GaussianBumps, 10, 404).realize(grid);
    let results: Vec<(f64, f64, Vec<Trajectory>)> = (0..10)
        .into_par_iter()
        .map(|k| {
            // Ordered pair f <= f + g with g >= 0.
            let f = &base[k];
            let ft = Field::new(
                grid,
                f.values()
                    .iter()
                    .zip(extra[k].values())
                    .map(|(a, b)| a + b)
                    .collect(),
            )
            .unwrap();
            let a = run(f, Nonlinearity::Log1p, 2.0, 0.02, 1);
            let b = run(&ft, Nonlinearity::Log1p, 2.0, 0.02, 1);
            let ordered = contraction_profile(&a, &b)
                .unwrap()
                .iter()
                .map(|x| x.1)
                .fold(0.0, f64::max);
            // Unordered pair.
            let c = run(&base[10 + k], Nonlinearity::Log1p, 2.0, 0.02, 1);
            let prof = contraction_profile(&a, &c).unwrap();
            let inc = prof
                .windows(2)
                .map(|w| w[1].1 - w[0].1)
                .fold(f64::NEG_INFINITY, f64::max);
            (ordered, inc, vec![a, b, c])
        })
        .collect();
    let ordered = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let inc = results
        .iter()
        .map(|r| r.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let runs = results.into_iter().flat_map(|r| r.2).collect();
    (
        ordered <= 1e-9 && inc <= 1e-9,
        format!("ordered pairs: max ∫(u-ũ)+ = {ordered:.3e} (tol 1e-9); unordered pairs: largest increase {inc:.3e} (tol 1e-9)"),
        runs,
    )
}

fn c6(dir: &std::path::Path) -> (bool, String, Vec<Trajectory>) {
    let grid = Grid1D::new(512, 20.0).unwrap();
    let file = dir.join("bump.csv");
    Field::from_fn(grid, |x| {
        if x.abs() < 1.0 {
            (1.0 - x * x).powi(2)
        } else {
            0.0
        }
    })
    .unwrap()
    .write_csv(std::fs::File::create(&file).unwrap())
    .unwrap();
    let catalog = [
        InitialDataSpec::Gaussian {
            amplitude: 3.0,
            width: 0.5,
            center: 1.0,
        },
        InitialDataSpec::Box {
            height: 2.0,
            halfwidth: 1.5,
        },
        InitialDataSpec::DoubleBump {
            amplitudes: [1.0, 4.0],
            centers: [-3.0, 2.0],
            widths: [0.3, 1.0],
        },
        InitialDataSpec::Poisson { t0: 0.2, mass: 1.0 },
        InitialDataSpec::FromFile { path: file },
    ];
    let runs: Vec<Trajectory> = catalog
        .par_iter()
        .map(|d| {
            run(
                &d.sample(grid, dir).unwrap(),
                Nonlinearity::Log1p,
                0.5,
                0.05,
                1,
            )
        })
        .collect();
    let zero_in_data = runs.iter().filter(|r| r.initial().u.min() == 0.0).count();
    let worst = runs
        .iter()
        .map(|r| {
            r.frames
                .iter()
                .skip(1)
                .map(|f| f.u.min())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    (
        worst > 0.0,
        format!(
            "{} catalog data ({} with zeros): smallest value after the first step {worst:.3e} (must be > 0)",
            runs.len(),
            zero_in_data
        ),
        runs,
    )
}

/// Amplitude family `λ 2e^{-x²}` for the smoothing criteria; calibration at
/// the smallest amplitude.
struct SmoothingRuns {
    calibration: Trajectory,
    members: Vec<(String, Trajectory)>,
}

const C7_SCALES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

fn smoothing_runs() -> SmoothingRuns {
    // Wide domain so the fit window ends before the periodic images matter.
    let grid = Grid1D::new(4096, 400.0).unwrap();
    let mut scales = vec![0.5];
    scales.extend(C7_SCALES);
    let mut runs: Vec<Trajectory> = scales
        .par_iter()
        .map(|&s| {
            let f = Field::from_fn(grid, |x| 2.0 * s * (-x * x).exp()).unwrap();
            run(&f, Nonlinearity::Log1p, 80.0, 0.02, 4)
        })
        .collect();
    let calibration = runs.remove(0);
    let members = C7_SCALES
        .iter()
        .zip(runs)
        .map(|(s, t)| (format!("x{s}"), t))
        .collect();
    SmoothingRuns {
        calibration,
        members,
    }
}

fn family(r: &SmoothingRuns) -> Family<'_> {
    Family {
        id: "gaussian amplitude".into(),
        calibration: &r.calibration,
        members: r.members.iter().map(|(l, t)| (l.clone(), t)).collect(),
    }
}

fn c7(r: &SmoothingRuns) -> (bool, String) {
    let rep = check_lp_linf_smoothing(&family(r), 2.0).unwrap();
    print!("{}", indent(&rep.to_table()));
    let exps: Vec<f64> = rep
        .runs
        .iter()
        .filter_map(|x| x.exponent.map(|e| e.slope))
        .collect();
    let exp_ok = exps.len() == rep.runs.len() && exps.iter().all(|e| (e + 1.0).abs() <= 0.15);
    let list: Vec<String> = exps.iter().map(|e| format!("{e:.3}")).collect();
    (
        rep.passed && exp_ok,
        format!(
            "bound with 2C (C = {:.4e}) {} on {} members; decay exponents [{}] (target -1 ± 0.15)",
            rep.constant,
            if rep.passed { "holds" } else { "FAILS" },
            rep.runs.len(),
            list.join(", ")
        ),
    )
}

fn c8(r: &SmoothingRuns) -> (bool, String) {
    let fam = family(r);
    let a = check_lx_l2_smoothing(&fam).unwrap();
    let b = check_h12_bound(&fam).unwrap();
    print!("{}{}", indent(&a.to_table()), indent(&b.to_table()));
    let recorded: usize = r.members.iter().map(|m| m.1.frames.len() - 1).sum();
    let checked: usize = a.runs.iter().map(|x| x.frames_checked).sum();
    let worst = |x: &logdiff_core::diagnostics::SmoothingReport| {
        x.runs.iter().map(|r| r.worst_ratio).fold(0.0, f64::max)
    };
    (
        a.passed && b.passed,
        format!(
            "LX-L2 worst ratio {:.4} (C = {:.4e}); H1/2 worst ratio {:.4} (c = {:.4e}); {checked} of {recorded} frames before wrap-around",
            worst(&a),
            a.constant,
            worst(&b),
            b.constant
        ),
    )
}

fn c9() -> (bool, String, Vec<Trajectory>) {
    let datum =
        |x: f64| 2.0 * (-(x - 0.5) * (x - 0.5)).exp() + (-2.0 * (x + 1.0) * (x + 1.0)).exp();
    let levels = [(512usize, 0.02), (1024, 0.01), (2048, 0.005)];
    let runs: Vec<Trajectory> = levels
        .par_iter()
        .map(|&(n, dt)| {
            let grid = Grid1D::new(n, 20.0).unwrap();
            run(
                &Field::from_fn(grid, datum).unwrap(),
                Nonlinearity::Log1p,
                1.0,
                dt,
                1,
            )
        })
        .collect();
    let mut cons: f64 = 0.0;
    let mut res = Vec::new();
    for tr in &runs {
        for f in &tr.frames {
            let tf = to_transport(&f.u, f.t, f.shift).unwrap();
            cons = cons.max((tf.mass_integral() - f.diag.mass).abs() / f.diag.mass);
        }
        let r = transport_residual(tr).unwrap();
        let at = r
            .iter()
            .min_by(|a, b| (a.0 - 0.5).abs().total_cmp(&(b.0 - 0.5).abs()))
            .unwrap();
        res.push(at.1);
    }
    let orders: Vec<f64> = res.windows(2).map(|w| (w[0] / w[1]).log2()).collect();

    // Direct kernel against conjugation on the same frame.
    let f = |x: f64| 1.5 * (-x * x).exp() + 0.5 * (-(x - 2.0) * (x - 2.0) * 3.0).exp();
    let hdiff: Vec<(f64, f64)> = [64usize, 128, 256]
        .iter()
        .map(|&n| {
            let grid = Grid1D::new(n, 12.0).unwrap();
            let u = Field::from_fn(grid, f).unwrap();
            let tf = to_transport(&u, 0.0, 0.0).unwrap();
            let a = modified_hilbert(&tf, &u).unwrap();
            let b = modified_hilbert_direct(&tf).unwrap();
            (grid.h(), sup(&a, &b))
        })
        .collect();
    let h_order = (hdiff[0].1 / hdiff[1].1)
        .log2()
        .min((hdiff[1].1 / hdiff[2].1).log2());
    let pass = cons <= 1e-4
        && orders.iter().all(|&o| o >= 0.9)
        && hdiff[1].1 <= hdiff[1].0
        && h_order >= 0.9;
    (
        pass,
        format!(
            "mass identity worst rel. error {cons:.3e} (tol 1e-4); residual at t=0.5: {:.3e}, {:.3e}, {:.3e}, orders {:.3}, {:.3} (min 0.9); direct vs conjugated H̃ at n=128: {:.3e} <= h = {:.3e}, order {h_order:.3}",
            res[0], res[1], res[2], orders[0], orders[1], hdiff[1].1, hdiff[1].0
        ),
        runs,
    )
}

fn c10() -> (bool, String) {
    let spec = ExperimentSpec::parse(
        "name = \"lab\"\nseed = 2024\n[grid]\nn = 64\nL = 10.0\n[initial]\nkind = \"gaussian\"\namplitude = 0.0\nwidth = 1.0\n[time]\nt_end = 1.0\nschedule = { kind = \"fixed\", dt = 0.1 }\n",
        "acceptance",
    )
    .unwrap();
    let rep = run_suite(Suite::Inequality, &spec, None).unwrap();
    let d = &rep.details;
    (
        rep.passed,
        format!(
            "(e^{{ax}}-1)² bound margin {:.3e} over {} points; SV {} samples all hold = {}, witness {:.3e}; NGN C = {:.4} / {:.4} (coarse/fine), dilation dev {:.4}; Trudinger α = {:.4}, {:.4}",
            d["exp_square"]["worst_margin"].as_f64().unwrap(),
            d["exp_square"]["points"],
            d["stroock_varopoulos"]["samples"],
            d["stroock_varopoulos"]["all_hold"],
            d["stroock_varopoulos"]["identity_witness"].as_f64().unwrap(),
            d["ngn"]["empirical_c"].as_f64().unwrap(),
            d["ngn"]["empirical_c_fine"].as_f64().unwrap(),
            d["ngn_dilation_deviation"].as_f64().unwrap(),
            d["trudinger"][0]["alpha"].as_f64().unwrap(),
            d["trudinger"][1]["alpha"].as_f64().unwrap(),
        ),
    )
}

fn indent(s: &str) -> String {
    s.lines().map(|l| format!("    {l}\n")).collect()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    let mut log1p_runs: Vec<Trajectory> = Vec::new();

    let ((p, m), s) = timed(c1);
    lines.push(Line {
        id: "C1",
        pass: p && s < 1.0,
        msg: format!("{m}; {s:.2}s (limit 1s)"),
        secs: s,
    });
    let ((p, m), s) = timed(c2);
    lines.push(Line {
        id: "C2",
        pass: p,
        msg: m,
        secs: s,
    });

    let grid = Grid1D::new(256, 20.0).unwrap();
    let (c4_runs, s4a) = timed(|| {
        seeded_data(grid)
            .par_iter()
            .map(|f| run(f, Nonlinearity::Log1p, 2.0, 0.02, 1))
            .collect::<Vec<_>>()
    });
    let ((p, m), s) = timed(|| c4(&c4_runs));
    lines.push(Line {
        id: "C4",
        pass: p,
        msg: m,
        secs: s + s4a,
    });
    let ((p, m, runs), s) = timed(|| c5(grid));
    lines.push(Line {
        id: "C5",
        pass: p,
        msg: m,
        secs: s,
    });
    log1p_runs.extend(c4_runs);
    log1p_runs.extend(runs);
    let ((p, m, runs), s) = timed(|| c6(dir.path()));
    lines.push(Line {
        id: "C6",
        pass: p,
        msg: m,
        secs: s,
    });
    log1p_runs.extend(runs);

    let (sm, s_runs) = timed(smoothing_runs);
    println!("smoothing family (5 runs, n = 4096, L = 400, T = 80) in {s_runs:.1}s");
    let ((p, m), s) = timed(|| c7(&sm));
    lines.push(Line {
        id: "C7",
        pass: p,
        msg: m,
        secs: s + s_runs,
    });
    let ((p, m), s) = timed(|| c8(&sm));
    lines.push(Line {
        id: "C8",
        pass: p,
        msg: m,
        secs: s,
    });
    log1p_runs.push(sm.calibration);
    log1p_runs.extend(sm.members.into_iter().map(|m| m.1));

    let ((p, m, runs), s) = timed(c9);
    lines.push(Line {
        id: "C9",
        pass: p,
        msg: m,
        secs: s,
    });
    log1p_runs.extend(runs);
    let ((p, m), s) = timed(c10);
    lines.push(Line {
        id: "C10",
        pass: p,
        msg: m,
        secs: s,
    });

    let drift = log1p_runs
        .iter()
        .map(|r| r.relative_mass_drift())
        .fold(0.0, f64::max);
    lines.push(Line {
        id: "C3",
        pass: drift <= 1e-8,
        msg: format!(
            "max relative mass drift over {} log1p runs = {drift:.3e} (tol 1e-8)",
            log1p_runs.len()
        ),
        secs: 0.0,
    });

    lines.sort_by_key(|l| l.id[1..].parse::<u32>().unwrap());
    println!();
    for l in &lines {
        println!(
            "{} {:<4} {} [{:.1}s]",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.msg,
            l.secs
        );
    }
    if lines.iter().all(|l| l.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
