//! Verifiers that turn the a-priori estimates into pass/fail checks.
//!
//! The estimates come with unspecified constants, so each check fits its
//! constant once on a calibration run, freezes it, and then verifies the
//! inequality with a safety factor on a disjoint family of runs. What is
//! tested is the scaling form.

use std::fmt::Write as _;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};
use crate::evolve::{Frame, Trajectory};
use crate::grid::{lp_norm_slice, psi_unchecked};
use crate::spectral::{derivative_slice, quarter_energy_slice};

/// Safety factor applied to every calibrated constant.
pub const SAFETY: f64 = 2.0;

/// Frames whose seam value `u(-L)` exceeds this fraction of `max u` are
/// treated as influenced by the periodic images and left out.
pub const WRAP_THRESHOLD: f64 = 1e-2;

/// Right-hand side shape of an estimate with unknown constant `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BoundShape {
    /// `lhs <= C a`
    Linear { a: f64 },
    /// `lhs <= exp(C a) - 1`
    Exponential { a: f64 },
    /// `lhs <= a + C b`
    Affine { a: f64, b: f64 },
    /// `lhs <= C max{ e^{C a} / t, b }`
    NestedExp { t: f64, a: f64, b: f64 },
}

impl BoundShape {
    /// Smallest `C >= 0` for which the bound holds.
    pub fn required(&self, lhs: f64) -> f64 {
        if lhs <= 0.0 {
            return 0.0;
        }
        match *self {
            BoundShape::Linear { a } => lhs / a,
            BoundShape::Exponential { a } => lhs.ln_1p() / a,
            BoundShape::Affine { a, b } => ((lhs - a) / b).max(0.0),
            BoundShape::NestedExp { .. } => {
                let target = lhs.ln();
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                while self.log_bound(hi) < target {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.log_bound(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * hi {
                        break;
                    }
                }
                hi
            }
        }
    }

    fn log_bound(&self, c: f64) -> f64 {
        match *self {
            BoundShape::NestedExp { t, a, b } => c.ln() + (c * a - t.ln()).max(b.ln()),
            _ => self.bound(c).ln(),
        }
    }

    pub fn bound(&self, c: f64) -> f64 {
        match *self {
            BoundShape::Linear { a } => c * a,
            BoundShape::Exponential { a } => (c * a).exp_m1(),
            BoundShape::Affine { a, b } => a + c * b,
            BoundShape::NestedExp { .. } => self.log_bound(c).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub lhs: f64,
    pub shape: BoundShape,
}

impl Sample {
    /// `lhs / bound(C)`, with `0/0 = 0`.
    pub fn ratio(&self, c: f64) -> f64 {
        if self.lhs <= 0.0 {
            return 0.0;
        }
        if matches!(self.shape, BoundShape::NestedExp { .. }) {
            return (self.lhs.ln() - self.shape.log_bound(c)).exp();
        }
        self.lhs / self.shape.bound(c)
    }
}

/// Least-squares fit of `log ‖u‖_∞` against `log t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// 95% confidence interval for the slope.
    pub ci95: (f64, f64),
    pub t_a: f64,
    pub t_b: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub label: String,
    pub frames_checked: usize,
    pub worst_ratio: f64,
    pub worst_time: f64,
    pub passed: bool,
    pub exponent: Option<ExponentFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub family: String,
    pub check: String,
    /// Constant fitted on the calibration run.
    pub constant: f64,
    pub safety: f64,
    pub calibration_frames: usize,
    pub runs: Vec<RunReport>,
    pub passed: bool,
    /// Certifies only the sampled runs, not the whole data class.
    pub note: String,
}

impl SmoothingReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} [{}]  C = {:.6e} (x{} safety, {} calibration frames)",
            self.check, self.family, self.constant, self.safety, self.calibration_frames
        );
        let _ = writeln!(
            s,
            "  {:<16} {:>7} {:>12} {:>10}  {:>8}  exponent",
            "run", "frames", "worst ratio", "at t", "status"
        );
        for r in &self.runs {
            let exp = match r.exponent {
                Some(e) => format!(
                    "{:.3} [{:.3}, {:.3}] on [{:.3}, {:.3}]",
                    e.slope, e.ci95.0, e.ci95.1, e.t_a, e.t_b
                ),
                None => "-".into(),
            };
            let _ = writeln!(
                s,
                "  {:<16} {:>7} {:>12.4e} {:>10.4} {:>8}  {}",
                r.label,
                r.frames_checked,
                r.worst_ratio,
                r.worst_time,
                if r.passed { "ok" } else { "FAIL" },
                exp
            );
        }
        s
    }
}

/// A calibration run plus the runs the frozen constant is verified on.
#[derive(Debug, Clone)]
pub struct Family<'a> {
    pub id: String,
    pub calibration: &'a Trajectory,
    pub members: Vec<(String, &'a Trajectory)>,
}

impl<'a> Family<'a> {
    fn validate(&self) -> Result<()> {
        if self
            .members
            .iter()
            .any(|(_, m)| std::ptr::eq(*m, self.calibration))
        {
            return Err(invalid(
                "family",
                "calibration and verification runs must be disjoint",
            ));
        }
        Ok(())
    }
}

/// Frames with `t > 0` before any wrap-around influence.
pub fn usable_frames(traj: &Trajectory) -> impl Iterator<Item = &Frame> {
    traj.frames
        .iter()
        .skip(1)
        .take_while(|f| f.u.boundary_ratio() <= WRAP_THRESHOLD)
}

fn run_check(
    family: &Family,
    check: &str,
    samples: impl Fn(&Trajectory) -> Vec<Sample>,
    with_exponent: bool,
) -> Result<SmoothingReport> {
    family.validate()?;
    let cal = samples(family.calibration);
    let constant = cal
        .iter()
        .map(|s| s.shape.required(s.lhs))
        .fold(0.0, f64::max);
    let c = SAFETY * constant;
    let runs: Vec<RunReport> = family
        .members
        .iter()
        .map(|(label, traj)| {
            let ss = samples(traj);
            let (worst_ratio, worst_time) = ss
                .iter()
                .map(|s| (s.ratio(c), s.t))
                .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
            RunReport {
                label: label.clone(),
                frames_checked: ss.len(),
                worst_ratio,
                worst_time,
                passed: worst_ratio <= 1.0 && !ss.is_empty() || ss.iter().all(|s| s.lhs == 0.0),
                exponent: if with_exponent {
                    fit_decay_exponent(traj)
                } else {
                    None
                },
            }
        })
        .collect();
    Ok(SmoothingReport {
        family: family.id.clone(),
        check: check.into(),
        constant,
        safety: SAFETY,
        calibration_frames: cal.len(),
        passed: runs.iter().all(|r| r.passed),
        runs,
        note: "constant certified on the sampled runs only".into(),
    })
}

fn initial_norms(traj: &Trajectory) -> (f64, f64) {
    let d = &traj.initial().diag;
    (d.lp_norms.l1, d.lx)
}

/// `‖u(t)‖_∞ <= C max{ t^{-1/(p-1)} ‖f‖_p^{p/(p-1)}, t^{-1/p} ‖f‖_p }`, with the
/// decay exponent of each run fitted over its intermediate window.
pub fn check_lp_linf_smoothing(family: &Family, p: f64) -> Result<SmoothingReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("need 1 < p < ∞, got {p}")));
    }
    run_check(
        family,
        &format!("Lp-Linf smoothing (p = {p})"),
        |traj| {
            let f = traj.initial();
            let fp = lp_norm_slice(f.u.values(), traj.grid.h(), p);
            usable_frames(traj)
                .map(|fr| Sample {
                    t: fr.t,
                    lhs: fr.diag.lp_norms.linf,
                    shape: BoundShape::Linear {
                        a: (fr.t.powf(-1.0 / (p - 1.0)) * fp.powf(p / (p - 1.0)))
                            .max(fr.t.powf(-1.0 / p) * fp),
                    },
                })
                .collect()
        },
        true,
    )
}

/// `∫u² <= exp{C (t^{-1/2} L_X^{1/2} + t^{-1/4} ‖f‖₁^{1/2} L_X^{1/4})} - 1`.
pub fn check_lx_l2_smoothing(family: &Family) -> Result<SmoothingReport> {
    run_check(
        family,
        "LX-L2 smoothing",
        |traj| {
            let (m, lx) = initial_norms(traj);
            usable_frames(traj)
                .map(|fr| Sample {
                    t: fr.t,
                    lhs: fr.diag.lp_norms.l2.powi(2),
                    shape: BoundShape::Exponential {
                        a: fr.t.powf(-0.5) * lx.sqrt()
                            + fr.t.powf(-0.25) * m.sqrt() * lx.powf(0.25),
                    },
                })
                .collect()
        },
        false,
    )
}

/// `‖u(t)‖_∞ <= C max{ t^{-1} exp(C t^{-1/2} L_X^{1/2}), t^{-3/4} ‖f‖₁^{1/2} L_X^{1/4} }`.
pub fn check_full_smoothing(family: &Family) -> Result<SmoothingReport> {
    run_check(
        family,
        "LX-Linf smoothing",
        |traj| {
            let (m, lx) = initial_norms(traj);
            usable_frames(traj)
                .map(|fr| Sample {
                    t: fr.t,
                    lhs: fr.diag.lp_norms.linf,
                    shape: BoundShape::NestedExp {
                        t: fr.t,
                        a: fr.t.powf(-0.5) * lx.sqrt(),
                        b: fr.t.powf(-0.75) * m.sqrt() * lx.powf(0.25),
                    },
                })
                .collect()
        },
        false,
    )
}

/// `‖log(1+u)‖_{H^{1/2}} <= t^{-1/2} L_X^{1/2} + c t^{-1/4} ‖f‖₁^{1/2} L_X^{1/4}`
/// with `‖w‖_{H^{1/2}} = ‖w‖₂ + ‖(-Δ)^{1/4} w‖₂`.
pub fn check_h12_bound(family: &Family) -> Result<SmoothingReport> {
    run_check(
        family,
        "H1/2 bound",
        |traj| {
            let (m, lx) = initial_norms(traj);
            let h = traj.grid.h();
            usable_frames(traj)
                .map(|fr| {
                    let w: Vec<f64> =
                        fr.u.values()
                            .iter()
                            .map(|&s| traj.nonlinearity.phi(s))
                            .collect();
                    let lhs =
                        lp_norm_slice(&w, h, 2.0) + quarter_energy_slice(traj.grid, &w).sqrt();
                    Sample {
                        t: fr.t,
                        lhs,
                        shape: BoundShape::Affine {
                            a: fr.t.powf(-0.5) * lx.sqrt(),
                            b: fr.t.powf(-0.25) * m.sqrt() * lx.powf(0.25),
                        },
                    }
                })
                .collect()
        },
        false,
    )
}

/// Tail integrals `∫_t^T ∫ |∂ₓ log(1+u)|² <= c t^{-1} (1 + ‖u(t)‖_∞) L_X(f)`
/// and `∫_t^T ∫ |∂ₓu|² <= c t^{-1} (1 + ‖u(t)‖_∞)³ L_X(f)`. The run stops at
/// `T`, so this verifies a lower bound of the infinite-horizon integral.
pub fn check_gradient_corollary(family: &Family) -> Result<(SmoothingReport, SmoothingReport)> {
    let tail = |traj: &Trajectory, cube: bool| -> Vec<Sample> {
        let last = traj.last();
        let (_, lx) = initial_norms(traj);
        usable_frames(traj)
            .filter(|fr| fr.step < last.step)
            .map(|fr| {
                let (lhs, pw) = if cube {
                    (last.cum_ux_sq - fr.cum_ux_sq, 3)
                } else {
                    (last.cum_wx_sq - fr.cum_wx_sq, 1)
                };
                Sample {
                    t: fr.t,
                    lhs,
                    shape: BoundShape::Linear {
                        a: (1.0 + fr.diag.lp_norms.linf).powi(pw) * lx / fr.t,
                    },
                }
            })
            .collect()
    };
    Ok((
        run_check(
            family,
            "gradient tail of log(1+u)",
            |t| tail(t, false),
            false,
        )?,
        run_check(family, "gradient tail of u", |t| tail(t, true), false)?,
    ))
}

/// `∫_t^T ∫ |∂ₜu|² <= c t^{-1} (1 + ‖u(t)‖_∞) L_X(f)` by difference quotients.
pub fn check_time_derivative_energy(family: &Family) -> Result<SmoothingReport> {
    run_check(
        family,
        "time-derivative energy",
        |traj| {
            let last = traj.last();
            let (_, lx) = initial_norms(traj);
            usable_frames(traj)
                .filter(|fr| fr.step < last.step)
                .map(|fr| Sample {
                    t: fr.t,
                    lhs: last.cum_ut_sq - fr.cum_ut_sq,
                    shape: BoundShape::Linear {
                        a: (1.0 + fr.diag.lp_norms.linf) * lx / fr.t,
                    },
                })
                .collect()
        },
        false,
    )
}

/// Transport-side `‖v(τ)‖_∞ <= C max{ τ^{-1/2} ‖v₀‖₁^{1/2}, τ^{-3/4} ‖v₀‖₁^{3/4} }`
/// where `‖v₀‖₁ = ∫(1+f) log(1+f) dx` and `‖v‖_∞ = log(1 + ‖u‖_∞)`.
pub fn check_v_smoothing(family: &Family) -> Result<SmoothingReport> {
    run_check(
        family,
        "transport-side L1-Linf smoothing",
        |traj| {
            let h = traj.grid.h();
            let v1: f64 = h * traj
                .initial()
                .u
                .values()
                .iter()
                .map(|&s| (1.0 + s) * s.ln_1p())
                .sum::<f64>();
            usable_frames(traj)
                .map(|fr| Sample {
                    t: fr.t,
                    lhs: fr.diag.lp_norms.linf.ln_1p(),
                    shape: BoundShape::Linear {
                        a: (fr.t.powf(-0.5) * v1.sqrt()).max(fr.t.powf(-0.75) * v1.powf(0.75)),
                    },
                })
                .collect()
        },
        false,
    )
}

/// Slope of `log ‖u‖_∞` against `log t` over `[t_a, t_b]`: `t_a` is the first
/// recorded time with `‖u‖_∞ < 0.9 ‖f‖_∞`, `t_b` the last one with
/// `‖u‖_∞ >= 1` before wrap-around. `None` when fewer than three frames fall
/// in the window.
pub fn fit_decay_exponent(traj: &Trajectory) -> Option<ExponentFit> {
    let f_inf = traj.initial().diag.lp_norms.linf;
    let pts: Vec<(f64, f64)> = usable_frames(traj)
        .skip_while(|fr| fr.diag.lp_norms.linf >= 0.9 * f_inf)
        .take_while(|fr| fr.diag.lp_norms.linf >= 1.0)
        .map(|fr| (fr.t.ln(), fr.diag.lp_norms.linf.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (sse / (nf - 2.0) / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    Some(ExponentFit {
        slope,
        intercept,
        stderr,
        ci95: (slope - q * stderr, slope + q * stderr),
        t_a: pts[0].0.exp(),
        t_b: pts[n - 1].0.exp(),
        points: n,
    })
}

/// Largest increase between consecutive recorded frames of each monotone
/// functional, and the worst `2 t E(t) / L_X(f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub l1: f64,
    pub l2: f64,
    pub l4: f64,
    pub linf: f64,
    pub lx: f64,
    pub energy: f64,
    pub energy_bound_ratio: f64,
}

impl MonotonicityReport {
    pub fn worst_increase(&self) -> f64 {
        [self.l1, self.l2, self.l4, self.linf, self.lx, self.energy]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn check_monotone(traj: &Trajectory) -> MonotonicityReport {
    let d: Vec<_> = traj.records().collect();
    let inc = |get: &dyn Fn(usize) -> f64| -> f64 {
        (1..d.len())
            .map(|k| get(k) - get(k - 1))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let lx0 = d[0].lx;
    let energy_bound_ratio = d
        .iter()
        .skip(1)
        .map(|r| {
            if lx0 > 0.0 {
                2.0 * r.t * r.energy / lx0
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    MonotonicityReport {
        l1: inc(&|k| d[k].lp_norms.l1),
        l2: inc(&|k| d[k].lp_norms.l2),
        l4: inc(&|k| d[k].lp_norms.l4),
        linf: inc(&|k| d[k].lp_norms.linf),
        lx: inc(&|k| d[k].lx),
        energy: inc(&|k| d[k].energy),
        energy_bound_ratio,
    }
}

/// `∫(u - ũ)₊` at every common recorded frame of two runs on the same grid.
pub fn contraction_profile(a: &Trajectory, b: &Trajectory) -> Result<Vec<(f64, f64)>> {
    if a.grid != b.grid || a.frames.len() != b.frames.len() {
        return Err(invalid(
            "trajectories",
            "paired runs must share grid and schedule",
        ));
    }
    let h = a.grid.h();
    Ok(a.frames
        .iter()
        .zip(&b.frames)
        .map(|(fa, fb)| {
            let s: f64 =
                fa.u.values()
                    .iter()
                    .zip(fb.u.values())
                    .map(|(x, y)| (x - y).max(0.0))
                    .sum();
            (fa.t, h * s)
        })
        .collect())
}

/// `‖∂ₓu - (1+u) ∂ₓ log(1+u)‖_∞` with spectral derivatives.
pub fn chain_rule_defect(u: &crate::grid::Field) -> f64 {
    let g = u.grid();
    let w: Vec<f64> = u.values().iter().map(|s| s.ln_1p()).collect();
    let du = derivative_slice(g, u.values());
    let dw = derivative_slice(g, &w);
    du.iter()
        .zip(&dw)
        .zip(u.values())
        .fold(0.0, |m, ((a, b), s)| m.max((a - (1.0 + s) * b).abs()))
}

/// `L_X` of a field, counting negative round-off as zero.
pub fn lx_of(values: &[f64], h: f64) -> f64 {
    h * values
        .iter()
        .map(|&s| psi_unchecked(s.max(0.0)))
        .sum::<f64>()
}
