//! Time evolution: repeated resolvent steps, an explicit RK4 reference, per-frame
//! diagnostics, and the residual of the frozen-coefficient mild representation.

use std::io::Write;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{lp_norm_slice, psi_unchecked, Field, Grid1D};
use crate::nonlinearity::Nonlinearity;
use crate::solver::{resolvent_step, StepConfig};
use crate::spectral::{
    derivative_slice, forward, half_laplacian, hilbert_slice, inverse_real, quarter_energy_slice,
};

/// Time-step schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSchedule {
    Fixed {
        dt: f64,
    },
    /// `dt_k = min(dt0 ratio^k, dt_max)`.
    Geometric {
        dt0: f64,
        ratio: f64,
        dt_max: f64,
    },
}

impl TimeSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeSchedule::Fixed { dt } => {
                if !(dt.is_finite() && dt > 0.0) {
                    return Err(invalid(
                        "dt",
                        format!("time step must be positive, got {dt}"),
                    ));
                }
            }
            TimeSchedule::Geometric { dt0, ratio, dt_max } => {
                if !(dt0.is_finite() && dt0 > 0.0 && dt_max >= dt0) {
                    return Err(invalid(
                        "dt0",
                        format!("need 0 < dt0 <= dt_max, got {dt0}, {dt_max}"),
                    ));
                }
                if !(ratio.is_finite() && ratio >= 1.0) {
                    return Err(invalid(
                        "ratio",
                        format!("geometric ratio must be >= 1, got {ratio}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn nominal(&self, k: usize) -> f64 {
        match *self {
            TimeSchedule::Fixed { dt } => dt,
            TimeSchedule::Geometric { dt0, ratio, dt_max } => {
                (dt0 * ratio.powi(k as i32)).min(dt_max)
            }
        }
    }

    /// Step times `t_1 < ... < t_N = t_end`. Fixed steps that divide `t_end`
    /// up to round-off land on `k dt` exactly.
    pub fn times(&self, t_end: f64) -> Vec<f64> {
        if let TimeSchedule::Fixed { dt } = *self {
            let steps = t_end / dt;
            if (steps - steps.round()).abs() < 1e-9 * steps.max(1.0) {
                let n = steps.round() as usize;
                return (1..=n).map(|k| k as f64 * dt).collect();
            }
        }
        let mut out = Vec::new();
        let mut t = 0.0;
        let mut k = 0;
        while t < t_end * (1.0 - 1e-12) {
            let dt = self.nominal(k).min(t_end - t);
            t = if t_end - (t + dt) < 1e-12 * t_end {
                t_end
            } else {
                t + dt
            };
            out.push(t);
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nonlinearity: Nonlinearity,
    pub initial: Field,
    pub t_end: f64,
    pub schedule: TimeSchedule,
    /// Record a frame every this many steps (the last step is always kept).
    pub record_every: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl RunConfig {
    pub fn new(
        initial: Field,
        nonlinearity: Nonlinearity,
        t_end: f64,
        schedule: TimeSchedule,
    ) -> Self {
        RunConfig {
            nonlinearity,
            initial,
            t_end,
            schedule,
            record_every: 1,
            newton_tol: 1e-11,
            max_newton_iters: 50,
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.initial.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.initial.ensure_nonnegative()?;
        self.nonlinearity.validate()?;
        self.schedule.validate()?;
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(invalid(
                "t_end",
                format!("final time must be positive, got {}", self.t_end),
            ));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "cadence must be at least 1"));
        }
        StepConfig {
            dt: 1.0,
            newton_tol: self.newton_tol,
            max_newton_iters: self.max_newton_iters,
            sigma: 1.0,
        }
        .validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpNorms {
    pub l1: f64,
    pub l2: f64,
    pub l4: f64,
    pub linf: f64,
}

impl LpNorms {
    pub fn get(&self, p: f64) -> Option<f64> {
        match p {
            p if p == 1.0 => Some(self.l1),
            p if p == 2.0 => Some(self.l2),
            p if p == 4.0 => Some(self.l4),
            p if p == f64::INFINITY => Some(self.linf),
            _ => None,
        }
    }

    pub fn as_array(&self) -> [(f64, f64); 4] {
        [
            (1.0, self.l1),
            (2.0, self.l2),
            (4.0, self.l4),
            (f64::INFINITY, self.linf),
        ]
    }
}

/// Per-frame scalar diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub lp_norms: LpNorms,
    /// `∫Ψ(u)`, with negative round-off samples counted as 0.
    pub lx: f64,
    /// `E = ½‖(-Δ)^{1/4} φ(u)‖²`.
    pub energy: f64,
    pub min_u: f64,
    pub max_u: f64,
}

impl DiagnosticsRecord {
    pub fn compute(u: &Field, nl: Nonlinearity, t: f64) -> Self {
        let grid = u.grid();
        let h = grid.h();
        let v = u.values();
        let w: Vec<f64> = v.iter().map(|&s| nl.phi(s)).collect();
        DiagnosticsRecord {
            t,
            mass: h * v.iter().sum::<f64>(),
            lp_norms: LpNorms {
                l1: lp_norm_slice(v, h, 1.0),
                l2: lp_norm_slice(v, h, 2.0),
                l4: lp_norm_slice(v, h, 4.0),
                linf: lp_norm_slice(v, h, f64::INFINITY),
            },
            lx: h * v.iter().map(|&s| psi_unchecked(s.max(0.0))).sum::<f64>(),
            energy: 0.5 * quarter_energy_slice(grid, &w),
            min_u: u.min(),
            max_u: u.max(),
        }
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "t", "mass", "l1", "l2", "l4", "linf", "lx", "energy", "min", "max",
    ];

    fn csv_row(&self) -> [f64; 10] {
        let n = &self.lp_norms;
        [
            self.t,
            self.mass,
            n.l1,
            n.l2,
            n.l4,
            n.linf,
            self.lx,
            self.energy,
            self.min_u,
            self.max_u,
        ]
    }
}

/// One recorded time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub u: Field,
    pub diag: DiagnosticsRecord,
    /// Number of steps taken so far.
    pub step: usize,
    /// Additive constant of the transport map, `c(t) = ∫₀ᵗ H(φ(u))(0, s) ds`,
    /// accumulated with the same right-endpoint rule as the time stepping.
    pub shift: f64,
    /// `Σ h Σ (Δu)² / dt` up to this frame: the discrete `∫₀ᵗ∫|∂ₜu|²`.
    pub cum_ut_sq: f64,
    /// Discrete `∫₀ᵗ∫|∂ₓφ(u)|²`.
    pub cum_wx_sq: f64,
    /// Discrete `∫₀ᵗ∫|∂ₓu|²`.
    pub cum_ux_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub nonlinearity: Nonlinearity,
    pub frames: Vec<Frame>,
    /// Total Newton iterations, zero for explicit runs.
    pub newton_iterations: usize,
}

impl Trajectory {
    pub fn initial(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn last(&self) -> &Frame {
        self.frames
            .last()
            .expect("trajectory has at least one frame")
    }

    pub fn records(&self) -> impl Iterator<Item = &DiagnosticsRecord> {
        self.frames.iter().map(|f| &f.diag)
    }

    /// Frame whose time is closest to `t`.
    pub fn frame_near(&self, t: f64) -> &Frame {
        self.frames
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory has at least one frame")
    }

    /// Largest relative mass change against the initial frame.
    pub fn relative_mass_drift(&self) -> f64 {
        let m0 = self.frames[0].diag.mass;
        if m0 == 0.0 {
            return self
                .frames
                .iter()
                .fold(0.0, |m, f| m.max(f.diag.mass.abs()));
        }
        self.frames
            .iter()
            .fold(0.0, |m, f| m.max(((f.diag.mass - m0) / m0).abs()))
    }

    pub fn write_diagnostics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(DiagnosticsRecord::CSV_HEADER)?;
        for f in &self.frames {
            wr.serialize(f.diag.csv_row())?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn snapshots(&self) -> Vec<crate::grid::Snapshot> {
        self.frames.iter().map(|f| f.u.snapshot(f.t)).collect()
    }
}

/// Accumulates frames and the step-level integrals shared by both integrators.
struct Recorder {
    nl: Nonlinearity,
    grid: Grid1D,
    every: usize,
    frames: Vec<Frame>,
    shift: f64,
    cum_ut: f64,
    cum_wx: f64,
    cum_ux: f64,
}

impl Recorder {
    fn new(f: &Field, nl: Nonlinearity, every: usize) -> Self {
        let grid = f.grid();
        let mut r = Recorder {
            nl,
            grid,
            every,
            frames: Vec::new(),
            shift: 0.0,
            cum_ut: 0.0,
            cum_wx: 0.0,
            cum_ux: 0.0,
        };
        r.push(0.0, f.clone(), 0);
        r
    }

    fn push(&mut self, t: f64, u: Field, step: usize) {
        let diag = DiagnosticsRecord::compute(&u, self.nl, t);
        self.frames.push(Frame {
            t,
            u,
            diag,
            step,
            shift: self.shift,
            cum_ut_sq: self.cum_ut,
            cum_wx_sq: self.cum_wx,
            cum_ux_sq: self.cum_ux,
        });
    }

    fn step(&mut self, prev: &[f64], u: Field, t: f64, dt: f64, step: usize, last: bool) {
        let h = self.grid.h();
        let v = u.values();
        let w: Vec<f64> = v.iter().map(|&s| self.nl.phi(s)).collect();
        self.shift += dt * hilbert_slice(self.grid, &w)[self.grid.origin_index()];
        self.cum_ut += h * v
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / dt;
        let wx = derivative_slice(self.grid, &w);
        let ux = derivative_slice(self.grid, v);
        self.cum_wx += dt * h * wx.iter().map(|x| x * x).sum::<f64>();
        self.cum_ux += dt * h * ux.iter().map(|x| x * x).sum::<f64>();
        if step % self.every == 0 || last {
            self.push(t, u, step);
        }
    }
}

/// Implicit Euler run: one [`resolvent_step`] per schedule step.
pub fn evolve(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let times = cfg.schedule.times(cfg.t_end);
    let mut rec = Recorder::new(&cfg.initial, cfg.nonlinearity, cfg.record_every);
    let mut u = cfg.initial.clone();
    let mut t = 0.0;
    let mut newton = 0;
    for (k, &tn) in times.iter().enumerate() {
        let step = StepConfig {
            dt: tn - t,
            newton_tol: cfg.newton_tol,
            max_newton_iters: cfg.max_newton_iters,
            sigma: 1.0,
        };
        let sol = resolvent_step(&u, cfg.nonlinearity, &step).map_err(|e| Error::StepFailed {
            t: tn,
            source: Box::new(e),
        })?;
        newton += sol.iterations;
        rec.step(
            u.values(),
            sol.u.clone(),
            tn,
            step.dt,
            k + 1,
            k + 1 == times.len(),
        );
        u = sol.u;
        t = tn;
    }
    Ok(Trajectory {
        grid: cfg.grid(),
        nonlinearity: cfg.nonlinearity,
        frames: rec.frames,
        newton_iterations: newton,
    })
}

/// Safety factor in the explicit stability bound `dt <= c h / max φ′(u)`.
pub const EXPLICIT_CFL: f64 = 0.5;

fn rhs(grid: Grid1D, nl: Nonlinearity, u: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = u.iter().map(|&s| nl.phi(s)).collect();
    half_laplacian(grid, &w).into_iter().map(|x| -x).collect()
}

fn rk4_step(grid: Grid1D, nl: Nonlinearity, u: &[f64], dt: f64) -> Vec<f64> {
    let axpy = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    let k1 = rhs(grid, nl, u);
    let k2 = rhs(grid, nl, &axpy(u, &k1, 0.5 * dt));
    let k3 = rhs(grid, nl, &axpy(u, &k2, 0.5 * dt));
    let k4 = rhs(grid, nl, &axpy(u, &k3, dt));
    (0..u.len())
        .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Classical RK4 on `∂ₜu = -(-Δ)^{1/2} φ(u)`.
///
/// Each schedule step is split into equal substeps obeying
/// `dt <= EXPLICIT_CFL · h / max φ′(u)`, so frames line up with an implicit
/// run on the same schedule. The run aborts with [`Error::Unstable`] when the
/// sup norm exceeds ten times its initial value.
pub fn evolve_explicit(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = cfg.grid();
    let nl = cfg.nonlinearity;
    let times = cfg.schedule.times(cfg.t_end);
    let mut rec = Recorder::new(&cfg.initial, nl, cfg.record_every);
    let limit = 10.0 * cfg.initial.max_abs();
    let mut u = cfg.initial.values().to_vec();
    let mut t = 0.0;
    for (k, &tn) in times.iter().enumerate() {
        let dt = tn - t;
        let slope = nl.max_slope(&u).max(f64::MIN_POSITIVE);
        let bound = EXPLICIT_CFL * grid.h() / slope;
        let sub = (dt / bound).ceil().max(1.0) as usize;
        let prev = u.clone();
        for _ in 0..sub {
            u = rk4_step(grid, nl, &u, dt / sub as f64);
        }
        let norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !norm.is_finite() || norm > limit {
            return Err(Error::Unstable { t: tn, norm, limit });
        }
        rec.step(
            &prev,
            Field::new(grid, u.clone())?,
            tn,
            dt,
            k + 1,
            k + 1 == times.len(),
        );
        t = tn;
    }
    Ok(Trajectory {
        grid,
        nonlinearity: nl,
        frames: rec.frames,
        newton_iterations: 0,
    })
}

/// Plain RK4 with `steps` equal steps, for oracle use in tests.
pub fn rk4_reference(f: &Field, nl: Nonlinearity, horizon: f64, steps: usize) -> Field {
    let mut u = f.values().to_vec();
    let dt = horizon / steps as f64;
    for _ in 0..steps {
        u = rk4_step(f.grid(), nl, &u, dt);
    }
    Field::from_vec_unchecked(f.grid(), u)
}

/// Sup-norm residual of the mild representation at the recorded time nearest `t`:
///
/// `u(t) = P(·, μt) * f - ∫₀ᵗ A(·, μ(t-s)) * F(u(s)) ds`,
///
/// with `μ = φ′(u₀)` frozen at the field maximum `u₀` at time `t` and
/// `F(u) = φ(u) - φ(u₀) - μ (u - u₀)`. Both kernels act as Fourier
/// multipliers; the time integral uses the exact integral of the kernel over
/// each step against the right-endpoint value of `F`, so every step up to `t`
/// must be recorded.
pub fn mild_form_residual(traj: &Trajectory, t: f64) -> Result<f64> {
    let target = traj.frame_near(t);
    let k_end = traj
        .frames
        .iter()
        .position(|f| std::ptr::eq(f, target))
        .unwrap_or(0);
    for (i, f) in traj.frames[..=k_end].iter().enumerate() {
        if f.step != i {
            return Err(invalid(
                "trajectory",
                "mild-form residual needs every step recorded (record_every = 1)",
            ));
        }
    }
    let grid = traj.grid;
    let nl = traj.nonlinearity;
    let tt = target.t;
    let u0 = target.u.max();
    let mu = nl.dphi(u0);
    let phi0 = nl.phi(u0);
    let xi: Vec<f64> = (0..grid.n()).map(|k| grid.wavenumber(k).abs()).collect();
    let fhat = forward(traj.frames[0].u.values());
    let mut acc: Vec<Complex64> = fhat
        .iter()
        .zip(&xi)
        .map(|(c, x)| c * (-mu * tt * x).exp())
        .collect();
    for k in 1..=k_end {
        let (s0, s1) = (traj.frames[k - 1].t, traj.frames[k].t);
        let fu: Vec<f64> = traj.frames[k]
            .u
            .values()
            .iter()
            .map(|&s| nl.phi(s) - phi0 - mu * (s - u0))
            .collect();
        let fh = forward(&fu);
        for (i, c) in acc.iter_mut().enumerate() {
            if i == 0 {
                continue;
            }
            // ∫_{s0}^{s1} |ξ| e^{-μ(t-s)|ξ|} ds
            let wgt = ((-mu * (tt - s1) * xi[i]).exp() - (-mu * (tt - s0) * xi[i]).exp()) / mu;
            *c -= fh[i] * wgt;
        }
    }
    let rep = inverse_real(acc);
    Ok(rep
        .iter()
        .zip(target.u.values())
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}
