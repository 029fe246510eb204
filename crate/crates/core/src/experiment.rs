//! Experiment descriptions, the initial-data catalog, suite runners and the
//! on-disk artifact layout used by the command-line tool.
//!
//! A spec is parsed and fully validated before anything is written, so a bad
//! config never leaves partial output behind.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::{
    check_full_smoothing, check_h12_bound, check_lp_linf_smoothing, check_lx_l2_smoothing,
    check_monotone, check_v_smoothing, Family, SmoothingReport,
};
use crate::error::{invalid, Error, Result};
use crate::evolve::{
    evolve, evolve_explicit, mild_form_residual, RunConfig, TimeSchedule, Trajectory,
};
use crate::grid::{Field, Grid1D};
use crate::inequality::{
    check_exp_square, check_log_inequality_suite, check_ngn, check_stroock_varopoulos,
    check_stroock_varopoulos_with, ngn_empirical_constant, trudinger_alpha_search, FamilyKind,
    FamilyMember, SampleFamily,
};
use crate::nonlinearity::Nonlinearity;
use crate::poisson::{a_kernel, poisson_kernel, poisson_value};
use crate::spectral::{apply, frac_laplacian_spectral, hilbert_transform, spectral_derivative};
use crate::transport::{to_transport, transport_residual, TransportField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDataSpec {
    /// `a exp(-((x - c) / w)²)`
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `height` on `|x| <= halfwidth`.
    Box { height: f64, halfwidth: f64 },
    /// Sum of two Gaussians in the same form as `gaussian`.
    DoubleBump {
        amplitudes: [f64; 2],
        centers: [f64; 2],
        widths: [f64; 2],
    },
    /// `mass P(x, t0)`.
    Poisson {
        t0: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    /// `x,value` CSV on exactly the configured grid.
    FromFile { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

fn gaussian(a: f64, c: f64, w: f64) -> impl Fn(f64) -> f64 {
    move |x| a * (-((x - c) / w).powi(2)).exp()
}

impl InitialDataSpec {
    fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be >= 0, got {v}")))
            }
        };
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be > 0, got {v}")))
            }
        };
        match self {
            InitialDataSpec::Gaussian {
                amplitude,
                width,
                center,
            } => {
                nonneg("amplitude", *amplitude)?;
                pos("width", *width)?;
                if !center.is_finite() {
                    return Err(invalid("center", "must be finite"));
                }
            }
            InitialDataSpec::Box { height, halfwidth } => {
                nonneg("height", *height)?;
                pos("halfwidth", *halfwidth)?;
            }
            InitialDataSpec::DoubleBump {
                amplitudes,
                centers,
                widths,
            } => {
                for k in 0..2 {
                    nonneg("amplitudes", amplitudes[k])?;
                    pos("widths", widths[k])?;
                    if !centers[k].is_finite() {
                        return Err(invalid("centers", "must be finite"));
                    }
                }
            }
            InitialDataSpec::Poisson { t0, mass } => {
                pos("t0", *t0)?;
                nonneg("mass", *mass)?;
            }
            InitialDataSpec::FromFile { .. } => {}
        }
        Ok(())
    }

    /// Samples the datum on `grid`; relative paths resolve against `base`.
    pub fn sample(&self, grid: Grid1D, base: &Path) -> Result<Field> {
        self.validate()?;
        let f = match self {
            InitialDataSpec::Gaussian {
                amplitude,
                width,
                center,
            } => Field::from_fn(grid, gaussian(*amplitude, *center, *width))?,
            InitialDataSpec::Box { height, halfwidth } => {
                Field::from_fn(grid, |x| if x.abs() <= *halfwidth { *height } else { 0.0 })?
            }
            InitialDataSpec::DoubleBump {
                amplitudes,
                centers,
                widths,
            } => {
                let a = gaussian(amplitudes[0], centers[0], widths[0]);
                let b = gaussian(amplitudes[1], centers[1], widths[1]);
                Field::from_fn(grid, |x| a(x) + b(x))?
            }
            InitialDataSpec::Poisson { t0, mass } => {
                Field::from_fn(grid, |x| mass * poisson_value(x, *t0))?
            }
            InitialDataSpec::FromFile { path } => {
                let p = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let f = Field::read_csv(
                    File::open(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                )?;
                if f.grid() != grid {
                    return Err(Error::Config(format!(
                        "{}: file grid (n = {}, L = {}) differs from the configured grid (n = {}, L = {})",
                        p.display(),
                        f.grid().n(),
                        f.grid().half_width(),
                        grid.n(),
                        grid.half_width()
                    )));
                }
                f
            }
        };
        f.ensure_nonnegative()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Mass drift, monotone functionals, energy bound, positivity.
    Diagnostics,
    /// Bäcklund frames: conserved integrals and the transport residual.
    Transport,
    /// Calibrated smoothing estimates on an amplitude family of the datum.
    Smoothing,
    /// Mild-form residual at the final time.
    Mild,
    /// Functional inequalities on seeded families.
    Inequality,
    /// Operator oracles against closed forms.
    Operators,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Diagnostics,
        Suite::Transport,
        Suite::Smoothing,
        Suite::Mild,
        Suite::Inequality,
        Suite::Operators,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Diagnostics => "diagnostics",
            Suite::Transport => "transport",
            Suite::Smoothing => "smoothing",
            Suite::Mild => "mild",
            Suite::Inequality => "inequality",
            Suite::Operators => "operators",
        }
    }

    pub fn parse(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
                Error::Config(format!(
                    "unknown suite `{s}`, expected one of {}",
                    names.join(", ")
                ))
            })
    }

    /// Suites that need a trajectory.
    pub fn needs_run(self) -> bool {
        !matches!(self, Suite::Inequality | Suite::Operators)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    pub schedule: TimeSchedule,
    #[serde(default = "default_every")]
    pub record_every: usize,
}

fn default_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_iters")]
    pub max_newton_iters: usize,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
}

fn default_tol() -> f64 {
    1e-11
}
fn default_iters() -> usize {
    50
}
fn default_integrator() -> Integrator {
    Integrator::Implicit
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            newton_tol: default_tol(),
            max_newton_iters: default_iters(),
            integrator: default_integrator(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Dt,
    N,
    Amplitude,
    Mass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub suites: Vec<Suite>,
    pub grid: GridSpec,
    pub initial: InitialDataSpec,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    pub time: TimeSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Directory that relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str, origin: &str) -> Result<ExperimentSpec> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
        } else {
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
        }
    }

    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut spec = ExperimentSpec::parse(&text, &path.display().to_string())?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.n, self.grid.half_width)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let f = self.initial.sample(self.grid()?, &self.base_dir)?;
        let mut cfg = RunConfig::new(f, self.nonlinearity, self.time.t_end, self.time.schedule);
        cfg.record_every = self.time.record_every;
        cfg.newton_tol = self.solver.newton_tol;
        cfg.max_newton_iters = self.solver.max_newton_iters;
        Ok(cfg)
    }

    /// Everything that can be checked without running the solver.
    pub fn validate(&self) -> Result<RunConfig> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must be nonempty"));
        }
        let cfg = self.run_config()?;
        cfg.validate()?;
        if self.suites.contains(&Suite::Transport) && self.nonlinearity != Nonlinearity::Log1p {
            return Err(invalid(
                "suites",
                "the transport suite needs the log1p nonlinearity",
            ));
        }
        if self.suites.contains(&Suite::Mild)
            && (self.time.record_every != 1 || self.solver.integrator != Integrator::Implicit)
        {
            return Err(invalid(
                "suites",
                "the mild suite needs record_every = 1 and the implicit integrator",
            ));
        }
        if let Some(sw) = &self.sweep {
            self.validate_sweep(sw)?;
        }
        Ok(cfg)
    }

    fn validate_sweep(&self, sw: &SweepSpec) -> Result<()> {
        if sw.values.len() < 2 {
            return Err(invalid("sweep.values", "need at least two points"));
        }
        for &v in &sw.values {
            let s = self.at_point(sw.axis, v)?;
            s.run_config()?.validate()?;
        }
        if sw.axis == SweepAxis::N && matches!(self.initial, InitialDataSpec::FromFile { .. }) {
            return Err(invalid(
                "sweep.axis",
                "file data cannot be resampled along n",
            ));
        }
        if sw.axis == SweepAxis::Mass && self.run_config()?.initial.mean() <= 0.0 {
            return Err(invalid(
                "sweep.axis",
                "a mass sweep needs data with positive mass",
            ));
        }
        Ok(())
    }

    /// Copy of the experiment moved to one sweep point.
    pub fn at_point(&self, axis: SweepAxis, v: f64) -> Result<ExperimentSpec> {
        let mut s = self.clone();
        match axis {
            SweepAxis::Dt => {
                s.time.schedule = TimeSchedule::Fixed { dt: v };
            }
            SweepAxis::N => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(invalid(
                        "sweep.values",
                        format!("n must be an integer, got {v}"),
                    ));
                }
                s.grid.n = v as usize;
            }
            SweepAxis::Amplitude | SweepAxis::Mass => {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid("sweep.values", format!("must be >= 0, got {v}")));
                }
            }
        }
        Ok(s)
    }
}

/// Result of one suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub name: String,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
    #[serde(skip)]
    pub artifacts: Vec<PathBuf>,
}

pub fn run_trajectory(cfg: &RunConfig, integrator: Integrator) -> Result<Trajectory> {
    match integrator {
        Integrator::Implicit => evolve(cfg),
        Integrator::Explicit => evolve_explicit(cfg),
    }
}

fn write_json(path: &Path, value: &impl Serialize, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    artifacts.push(path.to_path_buf());
    Ok(())
}

/// Validates, runs the solver if any artifact or suite needs it, runs the
/// suites and writes everything under `out`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ExperimentOutcome> {
    let cfg = spec.validate()?;
    fs::create_dir_all(out.join("reports"))?;
    let mut artifacts = Vec::new();
    write_json(&out.join("spec.json"), spec, &mut artifacts)?;

    let traj = run_trajectory(&cfg, spec.solver.integrator)?;
    log::info!(
        "`{}`: {} frames, {} Newton iterations",
        spec.name,
        traj.frames.len(),
        traj.newton_iterations
    );
    let p = out.join("diagnostics.csv");
    traj.write_diagnostics_csv(BufWriter::new(File::create(&p)?))?;
    artifacts.push(p);
    write_json(
        &out.join("snapshots.json"),
        &traj.snapshots(),
        &mut artifacts,
    )?;
    let p = out.join("final.csv");
    traj.last().u.write_csv(BufWriter::new(File::create(&p)?))?;
    artifacts.push(p);

    let mut suites = spec.suites.clone();
    suites.sort();
    suites.dedup();
    let mut reports = Vec::new();
    for s in suites {
        let rep = run_suite(s, spec, Some(&traj))?;
        if s == Suite::Transport && spec.nonlinearity == Nonlinearity::Log1p {
            let last = traj.last();
            let tf = to_transport(&last.u, last.t, last.shift)?;
            let p = out.join("transport_final.csv");
            tf.write_csv(BufWriter::new(File::create(&p)?))?;
            artifacts.push(p);
        }
        write_json(
            &out.join("reports").join(format!("{}.json", s.name())),
            &rep,
            &mut artifacts,
        )?;
        reports.push(rep);
    }
    let outcome = ExperimentOutcome {
        name: spec.name.clone(),
        passed: reports.iter().all(|r| r.passed),
        suites: reports,
        artifacts: Vec::new(),
    };
    write_json(&out.join("summary.json"), &outcome, &mut artifacts)?;
    Ok(ExperimentOutcome {
        artifacts,
        ..outcome
    })
}

/// Runs one suite. Trajectory-based suites need `traj`.
pub fn run_suite(
    suite: Suite,
    spec: &ExperimentSpec,
    traj: Option<&Trajectory>,
) -> Result<SuiteReport> {
    let need =
        || traj.ok_or_else(|| invalid("suite", format!("`{}` needs a solver run", suite.name())));
    let (passed, details) = match suite {
        Suite::Diagnostics => diagnostics_suite(need()?),
        Suite::Transport => transport_suite(need()?)?,
        Suite::Smoothing => smoothing_suite(spec, need()?)?,
        Suite::Mild => {
            let t = need()?;
            let r = mild_form_residual(t, t.last().t)?;
            (r.is_finite(), json!({ "t": t.last().t, "residual": r }))
        }
        Suite::Inequality => inequality_suite(spec.seed)?,
        Suite::Operators => operators_suite()?,
    };
    Ok(SuiteReport {
        suite,
        passed,
        details,
    })
}

fn diagnostics_suite(traj: &Trajectory) -> (bool, Value) {
    let drift = traj.relative_mass_drift();
    let mono = check_monotone(traj);
    let positive_data = traj.initial().u.max() > 0.0;
    let min_after = traj
        .frames
        .iter()
        .skip(1)
        .map(|f| f.u.min())
        .fold(f64::INFINITY, f64::min);
    let positivity = !positive_data || traj.frames.len() < 2 || min_after > 0.0;
    let passed = drift <= 1e-8
        && (traj.frames.len() < 2 || mono.worst_increase() <= 1e-9)
        && mono.energy_bound_ratio <= 1.01
        && positivity;
    (
        passed,
        json!({
            "relative_mass_drift": drift,
            "monotonicity": mono,
            "min_after_first_step": if traj.frames.len() > 1 { Some(min_after) } else { None },
            "positivity": positivity,
            "newton_iterations": traj.newton_iterations,
        }),
    )
}

fn transport_suite(traj: &Trajectory) -> Result<(bool, Value)> {
    let fields: Vec<TransportField> = traj
        .frames
        .iter()
        .map(|f| to_transport(&f.u, f.t, f.shift))
        .collect::<Result<_>>()?;
    let worst = traj
        .frames
        .iter()
        .zip(&fields)
        .map(|(f, tf)| {
            let m = f.diag.mass;
            let d = (tf.mass_integral() - m).abs();
            if m > 0.0 {
                d / m
            } else {
                d
            }
        })
        .fold(0.0, f64::max);
    let h = traj.grid.h();
    let entropy = traj
        .frames
        .iter()
        .zip(&fields)
        .map(|(f, tf)| {
            let e = h * f
                .u
                .values()
                .iter()
                .map(|&s| (1.0 + s) * s.ln_1p())
                .sum::<f64>();
            let d = (tf.v_integral() - e).abs();
            if e > 0.0 {
                d / e
            } else {
                d
            }
        })
        .fold(0.0, f64::max);
    let round_trip = fields
        .iter()
        .map(|tf| tf.round_trip_error())
        .fold(0.0, f64::max);
    let residual =
        if traj.frames.windows(2).all(|w| w[1].step == w[0].step + 1) && traj.frames.len() > 2 {
            Some(transport_residual(traj)?)
        } else {
            None
        };
    let max_res = residual
        .as_ref()
        .map(|r| r.iter().map(|x| x.1).fold(0.0, f64::max));
    Ok((
        worst <= 1e-4,
        json!({
            "conservation_relative_error": worst,
            "entropy_relative_error": entropy,
            "round_trip_error": round_trip,
            "final_shift": traj.last().shift,
            "final_period": fields.last().map(|f| f.period),
            "max_residual": max_res,
            "residual": residual,
        }),
    ))
}

/// Scales of the datum used for the smoothing family; the calibration run
/// uses `SMOOTHING_CALIBRATION`. The bound-to-norm ratios fall as the
/// amplitude grows, so calibrating below the family is the conservative side.
pub const SMOOTHING_SCALES: [f64; 3] = [1.0, 2.0, 4.0];
pub const SMOOTHING_CALIBRATION: f64 = 0.5;

fn smoothing_suite(spec: &ExperimentSpec, traj: &Trajectory) -> Result<(bool, Value)> {
    let cfg = spec.run_config()?;
    let scaled = |s: f64| -> Result<Trajectory> {
        let mut c = cfg.clone();
        c.initial = cfg.initial.scaled(s)?;
        run_trajectory(&c, spec.solver.integrator)
    };
    let runs: Vec<Trajectory> = SMOOTHING_SCALES[1..]
        .par_iter()
        .chain([SMOOTHING_CALIBRATION].par_iter())
        .map(|&s| scaled(s))
        .collect::<Result<_>>()?;
    let (members_rest, cal) = runs.split_at(runs.len() - 1);
    let mut members = vec![(format!("x{}", SMOOTHING_SCALES[0]), traj)];
    for (s, t) in SMOOTHING_SCALES[1..].iter().zip(members_rest) {
        members.push((format!("x{s}"), t));
    }
    let fam = Family {
        id: spec.name.clone(),
        calibration: &cal[0],
        members,
    };
    let reports: Vec<SmoothingReport> = vec![
        check_lp_linf_smoothing(&fam, 2.0)?,
        check_lx_l2_smoothing(&fam)?,
        check_full_smoothing(&fam)?,
        check_h12_bound(&fam)?,
        check_v_smoothing(&fam)?,
    ];
    Ok((
        reports.iter().all(|r| r.passed),
        serde_json::to_value(&reports)?,
    ))
}

fn inequality_suite(seed: u64) -> Result<(bool, Value)> {
    let grid = Grid1D::new(256, 20.0)?;
    let band = SampleFamily::new(FamilyKind::BandLimited, 200, seed);
    let sv: Vec<_> = band
        .realize(grid)
        .par_iter()
        .map(|u| check_stroock_varopoulos(&u.map(f64::ln_1p)?, 2.0))
        .collect::<Result<_>>()?;
    let sv_ok = sv.iter().all(|c| c.holds);
    let witness = band
        .realize(grid)
        .iter()
        .map(|z| {
            let c = check_stroock_varopoulos_with(z, |s| s, |s| s);
            c.margin().abs() / c.scale.max(1.0)
        })
        .fold(0.0, f64::max);

    let bumps = SampleFamily::new(FamilyKind::MultiBump, 200, seed.wrapping_add(1));
    let ngn = ngn_empirical_constant(&bumps, Grid1D::new(512, 40.0)?, 1.0, 2.0, 0.5)?;
    let base = FamilyMember::Bumps {
        bumps: vec![(1.0, 0.3, 1.0), (0.5, -1.0, 0.5)],
    };
    let dg = Grid1D::new(4096, 80.0)?;
    let r0 = check_ngn(&base.sample(dg), 1.0, 2.0, 0.5)?;
    let dilation = [0.5, 2.0, 4.0]
        .iter()
        .map(|&lambda| {
            let m = FamilyMember::Dilate {
                base: Box::new(base.clone()),
                lambda,
            };
            check_ngn(&m.sample(dg), 1.0, 2.0, 0.5).map(|r| (r / r0 - 1.0).abs())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let tfam = SampleFamily::new(FamilyKind::MultiBump, 100, seed.wrapping_add(2));
    let tg = Grid1D::new(512, 40.0)?;
    let t22 = trudinger_alpha_search(&tfam, tg, 2.0, 2.0, 0.5)?;
    let t42 = trudinger_alpha_search(&tfam, tg, 4.0, 2.0, 0.5)?;

    let a: Vec<f64> = (0..1000).map(|i| 30.0 * i as f64 / 999.0).collect();
    let x: Vec<f64> = (0..1000).map(|i| 10.0 * i as f64 / 999.0).collect();
    let b1 = check_exp_square(&a, &x)?;
    let logs = check_log_inequality_suite();

    let passed = sv_ok
        && witness <= 1e-10
        && ngn.stable
        && dilation <= 0.02
        && t22.alpha > 0.0
        && t42.alpha > 0.0
        && b1.worst_margin >= -1e-12
        && logs.passed;
    Ok((
        passed,
        json!({
            "stroock_varopoulos": {
                "samples": sv.len(),
                "all_hold": sv_ok,
                "worst_relative_margin": sv.iter().map(|c| c.margin() / c.scale.max(f64::MIN_POSITIVE)).fold(f64::INFINITY, f64::min),
                "identity_witness": witness,
            },
            "ngn": ngn,
            "ngn_dilation_deviation": dilation,
            "trudinger": [t22, t42],
            "exp_square": b1,
            "log_suite": logs,
        }),
    ))
}

fn operators_suite() -> Result<(bool, Value)> {
    let grid = Grid1D::new(4096, 200.0)?;
    let p = poisson_kernel(grid, 1.0)?;
    let sup = |a: &[f64], b: &dyn Fn(f64) -> f64| {
        a.iter()
            .enumerate()
            .fold(0.0f64, |m, (j, v)| m.max((v - b(grid.x(j))).abs()))
    };
    let lap = frac_laplacian_spectral(&p, 1.0)?;
    let e_lap = sup(lap.values(), &|x| a_kernel(x, 1.0));
    let hil = hilbert_transform(&p);
    let e_hil = sup(hil.values(), &|x| {
        x / (std::f64::consts::PI * (x * x + 1.0))
    });
    let split = hilbert_transform(&spectral_derivative(&p));
    let e_split = split
        .values()
        .iter()
        .zip(lap.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let semigroup = apply(grid, p.values(), |_, xi| {
        Complex64::new((-xi.abs()).exp(), 0.0)
    });
    let e_semi = sup(&semigroup, &|x| poisson_value(x, 2.0));
    Ok((
        e_lap <= 1e-4,
        json!({
            "half_laplacian_of_poisson": e_lap,
            "hilbert_of_poisson": e_hil,
            "splitting_identity": e_split,
            "poisson_semigroup": e_semi,
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub ok: bool,
    pub error: Option<String>,
    pub final_linf: Option<f64>,
    pub mass: Option<f64>,
    pub newton_iterations: Option<usize>,
    /// Sup error against the exact solution, in linear mode only.
    pub exact_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderRow {
    pub from: f64,
    pub to: f64,
    pub error_from: f64,
    pub error_to: f64,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Observed orders: from exact errors in linear mode, otherwise from
    /// differences of consecutive points.
    pub orders: Vec<OrderRow>,
    pub smoothing: Option<SmoothingReport>,
}

impl SweepReport {
    pub fn order_table(&self) -> String {
        let mut s = format!(
            "{:>12} {:>12} {:>14} {:>14} {:>8}\n",
            "from", "to", "err(from)", "err(to)", "order"
        );
        for r in &self.orders {
            s.push_str(&format!(
                "{:>12} {:>12} {:>14.6e} {:>14.6e} {:>8.3}\n",
                r.from, r.to, r.error_from, r.error_to, r.order
            ));
        }
        s
    }
}

/// Sup distance at the nodes of the coarser of two nested grids.
fn nested_distance(a: &Field, b: &Field) -> f64 {
    let (c, f) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let k = f.len() / c.len();
    c.values()
        .iter()
        .enumerate()
        .fold(0.0, |m, (j, v)| m.max((v - f.values()[j * k]).abs()))
}

/// Runs the base spec at every value along the axis in parallel. A failing
/// point is recorded and the sweep continues.
pub fn sweep(base: &ExperimentSpec, sw: &SweepSpec) -> Result<SweepReport> {
    base.validate()?;
    base.validate_sweep(sw)?;
    let base_cfg = base.run_config()?;
    let base_mass = base_cfg.initial.mean() * base_cfg.grid().length();
    let results: Vec<(SweepPoint, Option<Trajectory>)> = sw
        .values
        .par_iter()
        .map(|&v| {
            let run = || -> Result<Trajectory> {
                let s = base.at_point(sw.axis, v)?;
                let mut cfg = s.run_config()?;
                match sw.axis {
                    SweepAxis::Amplitude => cfg.initial = cfg.initial.scaled(v)?,
                    SweepAxis::Mass => cfg.initial = cfg.initial.scaled(v / base_mass)?,
                    _ => {}
                }
                run_trajectory(&cfg, s.solver.integrator)
            };
            match run() {
                Ok(t) => {
                    let exact_error = (t.nonlinearity == Nonlinearity::Linear).then(|| {
                        let last = t.last();
                        let ex = apply(t.grid, t.initial().u.values(), |_, xi| {
                            Complex64::new((-xi.abs() * last.t).exp(), 0.0)
                        });
                        last.u
                            .values()
                            .iter()
                            .zip(&ex)
                            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                    });
                    let p = SweepPoint {
                        value: v,
                        ok: true,
                        error: None,
                        final_linf: Some(t.last().diag.lp_norms.linf),
                        mass: Some(t.last().diag.mass),
                        newton_iterations: Some(t.newton_iterations),
                        exact_error,
                    };
                    (p, Some(t))
                }
                Err(e) => {
                    log::warn!("sweep point {v} failed: {e}");
                    (
                        SweepPoint {
                            value: v,
                            ok: false,
                            error: Some(e.to_string()),
                            final_linf: None,
                            mass: None,
                            newton_iterations: None,
                            exact_error: None,
                        },
                        None,
                    )
                }
            }
        })
        .collect();

    let mut orders = Vec::new();
    if matches!(sw.axis, SweepAxis::Dt | SweepAxis::N) {
        let ratio = |a: f64, b: f64| {
            if sw.axis == SweepAxis::Dt {
                a / b
            } else {
                b / a
            }
        };
        let errs: Vec<Option<f64>> = if results.iter().all(|r| r.0.exact_error.is_some()) {
            results.iter().map(|r| r.0.exact_error).collect()
        } else {
            let mut e: Vec<Option<f64>> = results
                .windows(2)
                .map(|w| match (&w[0].1, &w[1].1) {
                    (Some(a), Some(b)) => Some(nested_distance(&a.last().u, &b.last().u)),
                    _ => None,
                })
                .collect();
            e.push(None);
            e
        };
        for i in 0..results.len().saturating_sub(1) {
            if let (Some(e0), Some(e1)) = (errs[i], errs[i + 1]) {
                let (a, b) = (results[i].0.value, results[i + 1].0.value);
                orders.push(OrderRow {
                    from: a,
                    to: b,
                    error_from: e0,
                    error_to: e1,
                    order: (e0 / e1).ln() / ratio(a, b).ln(),
                });
            }
        }
    }

    let smoothing = if matches!(sw.axis, SweepAxis::Amplitude | SweepAxis::Mass)
        && results.iter().all(|r| r.1.is_some())
    {
        // Calibrate on the smallest amplitude, where the ratios are largest.
        let cal = (0..results.len())
            .min_by(|&a, &b| results[a].0.value.total_cmp(&results[b].0.value))
            .unwrap_or(0);
        let fam = Family {
            id: format!("{}-{:?}", base.name, sw.axis).to_lowercase(),
            calibration: results[cal].1.as_ref().expect("all points ran"),
            members: results
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != cal)
                .map(|(_, r)| {
                    (
                        format!("{}", r.0.value),
                        r.1.as_ref().expect("all points ran"),
                    )
                })
                .collect(),
        };
        Some(check_lp_linf_smoothing(&fam, 2.0)?)
    } else {
        None
    };

    Ok(SweepReport {
        axis: sw.axis,
        points: results.into_iter().map(|r| r.0).collect(),
        orders,
        smoothing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "zero"
suites = ["diagnostics"]

[grid]
n = 64
L = 10.0

[initial]
kind = "gaussian"
amplitude = 0.0
width = 1.0

[time]
t_end = 0.2
schedule = { kind = "fixed", dt = 0.05 }
"#;

    fn gauss_spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::parse(MINIMAL, "test").unwrap();
        s.name = "gauss".into();
        s.initial = InitialDataSpec::Gaussian {
            amplitude: 2.0,
            width: 1.0,
            center: 0.3,
        };
        s.grid = GridSpec {
            n: 128,
            half_width: 16.0,
        };
        s
    }

    #[test]
    fn minimal_zero_spec_runs() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec::parse(MINIMAL, "test").unwrap();
        let out = run_experiment(&spec, dir.path()).unwrap();
        assert!(out.passed);
        let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,mass,l1,l2,l4,linf,lx,energy,min,max"
        );
        for line in lines {
            assert!(
                line.split(',')
                    .skip(1)
                    .all(|v| v.parse::<f64>().unwrap() == 0.0),
                "{line}"
            );
        }
    }

    #[test]
    fn json_and_toml_agree() {
        let t = ExperimentSpec::parse(MINIMAL, "t").unwrap();
        let j = ExperimentSpec::parse(&serde_json::to_string(&t).unwrap(), "j").unwrap();
        assert_eq!(t, j);
    }

    #[test]
    fn parse_errors_carry_context() {
        let bad = MINIMAL.replace("n = 64", "n = \"many\"");
        let e = ExperimentSpec::parse(&bad, "cfg.toml")
            .unwrap_err()
            .to_string();
        assert!(e.contains("cfg.toml") && e.contains("line"), "{e}");
        let bad = MINIMAL.replace("suites = [\"diagnostics\"]", "suites = [\"nope\"]");
        assert!(ExperimentSpec::parse(&bad, "x").is_err());
        let bad = MINIMAL.replace("width = 1.0", "width = 1.0\nwdith = 2.0");
        assert!(ExperimentSpec::parse(&bad, "x")
            .unwrap_err()
            .to_string()
            .contains("wdith"));
    }

    #[test]
    fn invalid_specs_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut s = ExperimentSpec::parse(MINIMAL, "t").unwrap();
        s.grid.n = 100;
        assert!(run_experiment(&s, &out).is_err());
        let mut s = ExperimentSpec::parse(MINIMAL, "t").unwrap();
        s.name = " ".into();
        assert!(run_experiment(&s, &out).is_err());
        let mut s = ExperimentSpec::parse(MINIMAL, "t").unwrap();
        s.initial = InitialDataSpec::Box {
            height: 1.0,
            halfwidth: -1.0,
        };
        assert!(run_experiment(&s, &out).is_err());
        let mut s = ExperimentSpec::parse(MINIMAL, "t").unwrap();
        s.nonlinearity = Nonlinearity::Linear;
        s.suites = vec![Suite::Transport];
        assert!(run_experiment(&s, &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn catalog_is_nonnegative() {
        let g = Grid1D::new(128, 10.0).unwrap();
        let base = Path::new(".");
        for d in [
            InitialDataSpec::Gaussian {
                amplitude: 2.0,
                width: 0.5,
                center: 1.0,
            },
            InitialDataSpec::Box {
                height: 1.5,
                halfwidth: 2.0,
            },
            InitialDataSpec::DoubleBump {
                amplitudes: [1.0, 2.0],
                centers: [-1.0, 2.0],
                widths: [0.5, 1.0],
            },
            InitialDataSpec::Poisson { t0: 0.5, mass: 2.0 },
        ] {
            let f = d.sample(g, base).unwrap();
            assert!(f.min() >= 0.0 && f.max() > 0.0, "{d:?}");
        }
        let b = InitialDataSpec::Box {
            height: 1.0,
            halfwidth: 2.0,
        }
        .sample(g, base)
        .unwrap();
        let count = b.values().iter().filter(|v| **v > 0.0).count();
        assert_eq!(count, 2 * (2.0 / g.h()) as usize + 1);
    }

    #[test]
    fn from_file_round_trip_and_grid_check() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid1D::new(64, 10.0).unwrap();
        let f = InitialDataSpec::Gaussian {
            amplitude: 1.0,
            width: 1.0,
            center: 0.0,
        }
        .sample(g, dir.path())
        .unwrap();
        f.write_csv(File::create(dir.path().join("f.csv")).unwrap())
            .unwrap();
        let spec = InitialDataSpec::FromFile {
            path: "f.csv".into(),
        };
        assert_eq!(spec.sample(g, dir.path()).unwrap(), f);
        assert!(spec
            .sample(Grid1D::new(128, 10.0).unwrap(), dir.path())
            .is_err());
        let missing = InitialDataSpec::FromFile {
            path: "none.csv".into(),
        };
        assert!(matches!(
            missing.sample(g, dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gaussian_run_with_suites_is_reproducible() {
        let mut spec = gauss_spec();
        spec.suites = vec![Suite::Diagnostics, Suite::Transport, Suite::Mild];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let oa = run_experiment(&spec, a.path()).unwrap();
        let ob = run_experiment(&spec, b.path()).unwrap();
        assert!(oa.passed, "{:#?}", oa.suites);
        assert_eq!(oa.artifacts.len(), ob.artifacts.len());
        for (pa, pb) in oa.artifacts.iter().zip(&ob.artifacts) {
            assert_eq!(pa.file_name(), pb.file_name());
            assert_eq!(
                fs::read(pa).unwrap(),
                fs::read(pb).unwrap(),
                "{}",
                pa.display()
            );
        }
        for name in [
            "spec.json",
            "diagnostics.csv",
            "snapshots.json",
            "final.csv",
            "transport_final.csv",
            "summary.json",
        ] {
            assert!(a.path().join(name).exists(), "{name}");
        }
        assert!(a.path().join("reports/transport.json").exists());
    }

    #[test]
    fn smoothing_suite_on_gaussian() {
        let mut spec = gauss_spec();
        spec.time.t_end = 1.0;
        spec.time.schedule = TimeSchedule::Fixed { dt: 0.02 };
        let cfg = spec.validate().unwrap();
        let traj = evolve(&cfg).unwrap();
        let rep = run_suite(Suite::Smoothing, &spec, Some(&traj)).unwrap();
        assert!(rep.passed, "{}", rep.details);
        assert!(run_suite(Suite::Smoothing, &spec, None).is_err());
    }

    #[test]
    fn operators_suite_passes() {
        let rep = run_suite(Suite::Operators, &gauss_spec(), None).unwrap();
        assert!(rep.passed, "{}", rep.details);
    }

    #[test]
    fn dt_sweep_linear_order_one() {
        let mut spec = gauss_spec();
        spec.nonlinearity = Nonlinearity::Linear;
        spec.time.t_end = 0.5;
        let sw = SweepSpec {
            axis: SweepAxis::Dt,
            values: vec![0.05, 0.025, 0.0125],
        };
        let rep = sweep(&spec, &sw).unwrap();
        assert_eq!(rep.orders.len(), 2);
        for r in &rep.orders {
            assert!((r.order - 1.0).abs() < 0.1, "{}", rep.order_table());
        }
    }

    #[test]
    fn n_sweep_uses_nested_differences() {
        let mut spec = gauss_spec();
        spec.time.t_end = 0.1;
        let sw = SweepSpec {
            axis: SweepAxis::N,
            values: vec![64.0, 128.0, 256.0],
        };
        let rep = sweep(&spec, &sw).unwrap();
        assert!(rep.points.iter().all(|p| p.ok));
        assert_eq!(rep.orders.len(), 1);
        assert!(rep.orders[0].error_to < rep.orders[0].error_from);
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let mut spec = gauss_spec();
        spec.solver.max_newton_iters = 1;
        spec.solver.newton_tol = 1e-14;
        let sw = SweepSpec {
            axis: SweepAxis::Amplitude,
            values: vec![0.0, 5.0],
        };
        let rep = sweep(&spec, &sw).unwrap();
        assert!(rep.points[0].ok);
        assert!(!rep.points[1].ok && rep.points[1].error.is_some());
        assert!(rep.smoothing.is_none());
    }

    #[test]
    fn amplitude_sweep_feeds_smoothing() {
        let mut spec = gauss_spec();
        spec.time.t_end = 1.0;
        spec.time.schedule = TimeSchedule::Fixed { dt: 0.02 };
        let sw = SweepSpec {
            axis: SweepAxis::Amplitude,
            values: vec![1.5, 0.5, 1.0, 2.0],
        };
        let rep = sweep(&spec, &sw).unwrap();
        let sm = rep.smoothing.unwrap();
        assert_eq!(sm.runs.len(), 3);
        assert!(sm.passed, "{}", sm.to_table());
    }
}
