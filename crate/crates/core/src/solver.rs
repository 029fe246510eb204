//! The implicit-Euler resolvent problem `β(w) + dt (-Δ)^{σ/2} w = g`.
//!
//! It is the Euler–Lagrange equation of the strictly convex functional
//! `J(w) = (dt/2)⟨w, (-Δ)^{σ/2} w⟩_h + h Σ (B(w) - g w)` with `B′ = β`.
//! [`resolvent_step`] runs a damped Newton method whose linear systems are
//! solved matrix-free by preconditioned conjugate gradients;
//! [`minimize_j`] is an independent L-BFGS minimizer used as a cross-check.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid1D};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{abs_power_table, apply_table, check_sigma};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    /// Sup-norm tolerance on the resolvent residual.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub sigma: f64,
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        StepConfig {
            dt,
            newton_tol: 1e-11,
            max_newton_iters: 50,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(
                "dt",
                format!("time step must be positive, got {}", self.dt),
            ));
        }
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            return Err(invalid(
                "newton_tol",
                format!("tolerance must be positive, got {}", self.newton_tol),
            ));
        }
        if self.max_newton_iters == 0 {
            return Err(invalid("max_newton_iters", "must be at least 1"));
        }
        check_sigma(self.sigma, true)
    }
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub u: Field,
    pub w: Field,
    pub iterations: usize,
    /// Final sup-norm residual.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Minimization {
    pub u: Field,
    pub w: Field,
    pub iterations: usize,
    pub residual: f64,
    /// `J` at every accepted iterate, starting from the initial guess.
    pub j_history: Vec<f64>,
}

/// Everything needed to evaluate `J`, its gradient and its Hessian.
pub(crate) struct Problem<'a> {
    pub grid: Grid1D,
    pub g: &'a [f64],
    pub nl: Nonlinearity,
    /// `dt |ξ|^σ`.
    pub table: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(grid: Grid1D, g: &'a [f64], nl: Nonlinearity, dt: f64, sigma: f64) -> Self {
        let table = abs_power_table(grid, sigma)
            .into_iter()
            .map(|m| dt * m)
            .collect();
        Problem { grid, g, nl, table }
    }

    /// `dt (-Δ)^{σ/2} v`.
    pub fn op(&self, v: &[f64]) -> Vec<f64> {
        apply_table(v, &self.table)
    }

    pub fn residual(&self, w: &[f64], lw: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(lw)
            .zip(self.g)
            .map(|((&w, &l), &g)| self.nl.beta(w) + l - g)
            .collect()
    }

    /// `J(w)` and a round-off scale for comparing two values of it.
    pub fn energy(&self, w: &[f64], lw: &[f64]) -> (f64, f64) {
        let h = self.grid.h();
        let mut j = 0.0;
        let mut scale = 0.0;
        for ((&w, &l), &g) in w.iter().zip(lw).zip(self.g) {
            let a = 0.5 * w * l;
            let b = self.nl.beta_primitive(w);
            let c = g * w;
            j += a + b - c;
            scale += a.abs() + b.abs() + c.abs();
        }
        (h * j, h * scale * 1e-13)
    }

    pub fn preconditioner(&self, d: &[f64]) -> Preconditioner {
        let n = d.len() as f64;
        let dbar = d.iter().sum::<f64>() / n;
        let lam_max = self.table.iter().copied().fold(0.0, f64::max);
        if lam_max <= dbar {
            // Diagonal dominates: Jacobi with the circulant's diagonal.
            let lam_diag = self.table.iter().sum::<f64>() / n;
            Preconditioner::Jacobi(d.iter().map(|x| 1.0 / (x + lam_diag)).collect())
        } else {
            Preconditioner::Spectral(self.table.iter().map(|m| 1.0 / (m + dbar)).collect())
        }
    }
}

pub(crate) enum Preconditioner {
    Jacobi(Vec<f64>),
    Spectral(Vec<f64>),
}

impl Preconditioner {
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Preconditioner::Jacobi(inv) => r.iter().zip(inv).map(|(a, b)| a * b).collect(),
            Preconditioner::Spectral(table) => apply_table(r, table),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// PCG for `(diag(d) + dt Λ) x = b`, stopped on the sup norm of the residual.
fn pcg(p: &Problem, d: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let pre = p.preconditioner(d);
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = pre.apply(&r);
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        if sup(&r) <= tol || rz <= 0.0 {
            break;
        }
        let lp = p.op(&dir);
        let ap: Vec<f64> = dir
            .iter()
            .zip(d)
            .zip(&lp)
            .map(|((v, d), l)| d * v + l)
            .collect();
        let pap = dot(&dir, &ap);
        if pap <= 0.0 {
            break;
        }
        let a = rz / pap;
        for i in 0..n {
            x[i] += a * dir[i];
            r[i] -= a * ap[i];
        }
        z = pre.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    x
}

fn validate_inputs(g: &Field, nl: Nonlinearity, cfg: &StepConfig) -> Result<()> {
    cfg.validate()?;
    nl.validate()?;
    g.ensure_nonnegative()
}

fn finish(grid: Grid1D, nl: Nonlinearity, w: Vec<f64>) -> Result<(Field, Field)> {
    let u: Vec<f64> = w.iter().map(|&x| nl.beta(x)).collect();
    Ok((Field::new(grid, u)?, Field::new(grid, w)?))
}

/// One implicit step: returns `u = β(w)` with
/// `‖β(w) + dt (-Δ)^{σ/2} w - g‖_∞ <= newton_tol`.
///
/// Newton directions are line-searched on `J`. Close to the solution the
/// decrease of `J` drops below its round-off, and a step is then accepted if
/// it reduces the residual instead.
pub fn resolvent_step(g: &Field, nl: Nonlinearity, cfg: &StepConfig) -> Result<ResolventSolution> {
    validate_inputs(g, nl, cfg)?;
    let grid = g.grid();
    let p = Problem::new(grid, g.values(), nl, cfg.dt, cfg.sigma);
    let mut w: Vec<f64> = g.values().iter().map(|&s| nl.phi(s)).collect();
    let mut lw = p.op(&w);
    let mut r = p.residual(&w, &lw);
    let mut rn = sup(&r);
    let mut iterations = 0;
    while rn > cfg.newton_tol {
        if iterations == cfg.max_newton_iters {
            return Err(Error::NotConverged {
                iterations,
                residual: rn,
            });
        }
        iterations += 1;
        let d: Vec<f64> = w.iter().map(|&x| nl.dbeta(x)).collect();
        let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
        let cg_tol = (rn.min(1e-2) * rn * 1e-2).max(1e-16);
        let delta = pcg(&p, &d, &neg_r, cg_tol, 500);
        let ldelta = p.op(&delta);
        let (j0, jscale) = p.energy(&w, &lw);
        let slope = grid.h() * dot(&r, &delta);
        let mut alpha = 1.0;
        loop {
            let wt: Vec<f64> = w.iter().zip(&delta).map(|(a, b)| a + alpha * b).collect();
            let lt: Vec<f64> = lw.iter().zip(&ldelta).map(|(a, b)| a + alpha * b).collect();
            let (jt, _) = p.energy(&wt, &lt);
            let rt = p.residual(&wt, &lt);
            let rtn = sup(&rt);
            let armijo = jt <= j0 + 1e-4 * alpha * slope;
            let flat = (jt - j0).abs() <= jscale && rtn < rn;
            if rtn.is_finite() && (armijo || flat) {
                w = wt;
                lw = lt;
                r = rt;
                rn = rtn;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(Error::NotConverged {
                    iterations,
                    residual: rn,
                });
            }
        }
    }
    // The operator kills constants, so a uniform shift removes the mean of the
    // residual, which is the per-step mass error.
    let db: f64 = w.iter().map(|&x| nl.dbeta(x)).sum();
    if iterations > 0 && db.is_finite() && db > 0.0 {
        let shift = -r.iter().sum::<f64>() / db;
        let ws: Vec<f64> = w.iter().map(|x| x + shift).collect();
        let rs = p.residual(&ws, &lw);
        let rsn = sup(&rs);
        if rsn <= cfg.newton_tol {
            w = ws;
            rn = rsn;
        }
    }
    let (u, w) = finish(grid, nl, w)?;
    Ok(ResolventSolution {
        u,
        w,
        iterations,
        residual: rn,
    })
}

/// Evaluates `J(w)` for the given data.
pub fn j_functional(w: &Field, g: &Field, nl: Nonlinearity, dt: f64, sigma: f64) -> Result<f64> {
    w.ensure_same_grid(g)?;
    check_sigma(sigma, true)?;
    let p = Problem::new(w.grid(), g.values(), nl, dt, sigma);
    let lw = p.op(w.values());
    Ok(p.energy(w.values(), &lw).0)
}

/// Sup-norm residual of the resolvent equation at `w`.
pub fn resolvent_residual(
    w: &Field,
    g: &Field,
    nl: Nonlinearity,
    dt: f64,
    sigma: f64,
) -> Result<f64> {
    w.ensure_same_grid(g)?;
    check_sigma(sigma, true)?;
    let p = Problem::new(w.grid(), g.values(), nl, dt, sigma);
    let lw = p.op(w.values());
    Ok(sup(&p.residual(w.values(), &lw)))
}

/// Minimizes `J` by L-BFGS (memory 10) with the spectral preconditioner as the
/// initial inverse Hessian and a safeguarded Newton line search on the
/// directional derivative. Stops when the gradient (divided by `h`, i.e. the
/// resolvent residual) is below `newton_tol` in sup norm.
pub fn minimize_j(g: &Field, nl: Nonlinearity, cfg: &StepConfig) -> Result<Minimization> {
    validate_inputs(g, nl, cfg)?;
    const MEMORY: usize = 10;
    let max_iter = (cfg.max_newton_iters * 40).max(2000);
    let grid = g.grid();
    let p = Problem::new(grid, g.values(), nl, cfg.dt, cfg.sigma);
    let mut w: Vec<f64> = g.values().iter().map(|&s| nl.phi(s)).collect();
    let mut lw = p.op(&w);
    let mut r = p.residual(&w, &lw);
    let (mut jw, _) = p.energy(&w, &lw);
    let mut history = vec![jw];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while sup(&r) > cfg.newton_tol {
        if iterations == max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual: sup(&r),
            });
        }
        iterations += 1;
        let dvals: Vec<f64> = w.iter().map(|&x| nl.dbeta(x)).collect();
        let dbar = dvals.iter().sum::<f64>() / dvals.len() as f64;
        let h0: Vec<f64> = p.table.iter().map(|m| 1.0 / (m + dbar)).collect();

        // two-loop recursion
        let mut q = r.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let mut dir = apply_table(&q, &h0);
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for (di, si) in dir.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }
        let mut slope0 = dot(&r, &dir);
        if slope0 >= 0.0 {
            pairs.clear();
            dir = apply_table(&r, &h0).into_iter().map(|x| -x).collect();
            slope0 = dot(&r, &dir);
        }

        // Newton on φ′(α) = ⟨R(w + α d), d⟩, kept inside a bracket.
        let ldir = p.op(&dir);
        let curv_lin = dot(&dir, &ldir);
        let eval = |alpha: f64| {
            let wt: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            let lt: Vec<f64> = lw.iter().zip(&ldir).map(|(a, b)| a + alpha * b).collect();
            let rt = p.residual(&wt, &lt);
            let slope = dot(&rt, &dir);
            let curv = curv_lin
                + wt.iter()
                    .zip(&dir)
                    .map(|(x, d)| nl.dbeta(*x) * d * d)
                    .sum::<f64>();
            (wt, lt, rt, slope, curv)
        };
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let (wt, lt, rt, slope, curv) = eval(alpha);
            let finite = rt.iter().all(|x| x.is_finite());
            if !finite {
                hi = alpha;
                alpha = 0.5 * (lo + hi);
                continue;
            }
            let (jt, jscale) = p.energy(&wt, &lt);
            if slope.abs() <= 0.1 * slope0.abs() && jt <= jw + jscale {
                accepted = Some((wt, lt, rt, jt, alpha));
                break;
            }
            if slope < 0.0 {
                lo = alpha;
            } else {
                hi = alpha;
            }
            let newton = alpha - slope / curv;
            alpha = if curv > 0.0 && newton > lo && newton < hi {
                newton
            } else if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * alpha
            };
            if hi - lo <= 1e-15 * hi.max(1.0) {
                // Bracket collapsed: accept the best point if it lowers J.
                let (wt, lt, rt, _, _) = eval(lo.max(alpha));
                let (jt, jscale) = p.energy(&wt, &lt);
                if jt <= jw + jscale {
                    accepted = Some((wt, lt, rt, jt, lo.max(alpha)));
                }
                break;
            }
        }
        let Some((wt, lt, rt, jt, alpha)) = accepted else {
            return Err(Error::NotConverged {
                iterations,
                residual: sup(&r),
            });
        };
        let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = rt.iter().zip(&r).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            if pairs.len() == MEMORY {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        w = wt;
        lw = lt;
        r = rt;
        jw = jt;
        history.push(jw);
    }
    let residual = sup(&r);
    let (u, w) = finish(grid, nl, w)?;
    Ok(Minimization {
        u,
        w,
        iterations,
        residual,
        j_history: history,
    })
}
