//! The change of variables `y = ∫₀ˣ (1+u) - c(t)`, `v = log(1+u)` that turns
//! the logarithmic diffusion into the nonlocal transport equation
//! `∂_τ v - H̃(v) ∂_y v + ∂_y H̃(v) = 0`, where `H̃` is the Hilbert transform
//! conjugated by the map.
//!
//! On the periodic grid the map is `y = (1 + ū) x + U(x) - U(0) - c` with `U`
//! the zero-mean antiderivative of `u - ū`; it carries `[-L, L)` onto a
//! period of length `P = 2L + ∫u`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::evolve::Trajectory;
use crate::grid::{Field, Grid1D};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{periodic_cell_integrals, periodic_integral, Pchip};
use crate::spectral::{
    antiderivative_slice, derivative_slice, hilbert_slice, quarter_energy_slice,
};

/// Largest grid accepted by the O(n²) direct `H̃` quadrature.
pub const DIRECT_HILBERT_MAX_N: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportField {
    pub t: f64,
    /// `c(t)`.
    pub shift: f64,
    /// `P = 2L + ∫u`.
    pub period: f64,
    /// Images of the x-nodes; strictly increasing, spanning one period.
    pub y_nodes: Vec<f64>,
    pub v_values: Vec<f64>,
    /// `H̃(v)` at the y-nodes, i.e. `H(log(1+u))` carried over from the x-grid.
    pub h_tilde: Vec<f64>,
    /// `v` on the uniform grid `[-P/2, P/2)` with as many nodes as the x-grid.
    #[serde(skip)]
    pub uniform: Field,
    #[serde(skip)]
    x_grid: Grid1D,
}

/// Maps `u` to the transport variables with additive constant `shift = c(t)`.
pub fn to_transport(u: &Field, t: f64, shift: f64) -> Result<TransportField> {
    u.ensure_nonnegative()?;
    let grid = u.grid();
    let n = grid.n();
    let vals = u.values();
    let mean = u.mean();
    let anti = antiderivative_slice(grid, vals);
    let o = grid.origin_index();
    let y_nodes: Vec<f64> = (0..n)
        .map(|j| (1.0 + mean) * grid.x(j) + anti[j] - anti[o] - shift)
        .collect();
    if let Some(j) = y_nodes.windows(2).position(|w| w[1] <= w[0]) {
        return Err(invalid(
            "u",
            format!("transport map is not increasing at node {j}; the data are under-resolved"),
        ));
    }
    let v_values: Vec<f64> = vals.iter().map(|s| s.ln_1p()).collect();
    let h_tilde = hilbert_slice(grid, &v_values);
    let period = grid.length() * (1.0 + mean);
    let ygrid = Grid1D::new(n, 0.5 * period)?;
    let mut tf = TransportField {
        t,
        shift,
        period,
        y_nodes,
        v_values,
        h_tilde,
        uniform: Field::zeros(ygrid),
        x_grid: grid,
    };
    tf.uniform = tf.resample(&tf.v_values.clone());
    Ok(tf)
}

impl TransportField {
    pub fn uniform_grid(&self) -> Grid1D {
        self.uniform.grid()
    }

    pub fn x_grid(&self) -> Grid1D {
        self.x_grid
    }

    /// Resamples node values onto the uniform y-grid by periodic monotone
    /// cubic interpolation.
    pub fn resample(&self, values: &[f64]) -> Field {
        let ygrid = Grid1D::new(self.y_nodes.len(), 0.5 * self.period).expect("period is positive");
        let p = self.period;
        let lo = -0.5 * p;
        // wrap nodes into [lo, lo + P) and sort
        let mut pairs: Vec<(f64, f64)> = self
            .y_nodes
            .iter()
            .zip(values)
            .map(|(&y, &v)| (lo + (y - lo).rem_euclid(p), v))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len();
        const GHOST: usize = 3;
        let mut xs = Vec::with_capacity(n + 2 * GHOST);
        let mut vs = Vec::with_capacity(n + 2 * GHOST);
        for &(y, v) in &pairs[n - GHOST..] {
            xs.push(y - p);
            vs.push(v);
        }
        for &(y, v) in &pairs {
            xs.push(y);
            vs.push(v);
        }
        for &(y, v) in &pairs[..GHOST] {
            xs.push(y + p);
            vs.push(v);
        }
        let interp = Pchip::new(xs, vs);
        let out = (0..n).map(|j| interp.eval(ygrid.x(j))).collect();
        Field::from_vec_unchecked(ygrid, out)
    }

    /// `∫(1 - e^{-v}) dy`, equal to `∫u dx`.
    pub fn mass_integral(&self) -> f64 {
        let q: Vec<f64> = self.v_values.iter().map(|v| -(-v).exp_m1()).collect();
        periodic_integral(&self.y_nodes, &q, self.period)
    }

    /// `∫v dy`, equal to `∫(1+u) log(1+u) dx`.
    pub fn v_integral(&self) -> f64 {
        periodic_integral(&self.y_nodes, &self.v_values, self.period)
    }

    /// `x(y) = ∫ e^{-v}` at the y-nodes, anchored so that the node carried
    /// from `x = 0` maps back to 0.
    pub fn inverse_map(&self) -> Vec<f64> {
        let q: Vec<f64> = self.v_values.iter().map(|v| (-v).exp()).collect();
        let cells = periodic_cell_integrals(&self.y_nodes, &q, self.period);
        let n = cells.len();
        let o = self.x_grid.origin_index();
        let mut x = vec![0.0; n];
        for j in o + 1..n {
            x[j] = x[j - 1] + cells[j - 1];
        }
        for j in (0..o).rev() {
            x[j] = x[j + 1] - cells[j];
        }
        x
    }

    /// Largest `|x(y(x_j)) - x_j|`.
    pub fn round_trip_error(&self) -> f64 {
        self.inverse_map()
            .iter()
            .enumerate()
            .fold(0.0, |m, (j, x)| m.max((x - self.x_grid.x(j)).abs()))
    }

    /// `‖(-Δ)^{1/4} v‖²` on the uniform y-grid (period `P`).
    pub fn flat_quarter_energy(&self) -> f64 {
        quarter_energy_slice(self.uniform.grid(), self.uniform.values())
    }

    /// `∫ v ∂_y H̃(v) dy`, the y-side form of `‖(-Δ)^{1/4} log(1+u)‖²`.
    pub fn conjugated_energy(&self) -> f64 {
        let hu = self.resample(&self.h_tilde);
        let g = self.uniform.grid();
        let dh = derivative_slice(g, hu.values());
        g.h()
            * self
                .uniform
                .values()
                .iter()
                .zip(&dh)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["y", "v"])?;
        for (y, v) in self.y_nodes.iter().zip(&self.v_values) {
            wr.serialize((y, v))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `H̃(v)` at the y-nodes via conjugation: `H(log(1+u))` on the x-grid,
/// carried node by node.
pub fn modified_hilbert(tf: &TransportField, u_side: &Field) -> Result<Vec<f64>> {
    if u_side.len() != tf.y_nodes.len() {
        return Err(Error::LengthMismatch {
            expected: tf.y_nodes.len(),
            actual: u_side.len(),
        });
    }
    let w: Vec<f64> = u_side.values().iter().map(|s| s.ln_1p()).collect();
    Ok(hilbert_slice(u_side.grid(), &w))
}

/// Direct evaluation of `H̃(v)` from y-side data alone:
///
/// `H̃(v)(y) = (1/2L) PV ∫ v(y′) e^{-v(y′)} cot(π X(y, y′) / 2L) dy′`,
/// `X(y, y′) = ∫_{y′}^{y} e^{-v}`, `2L = ∫_period e^{-v}`.
///
/// The singular part `v(y) (1/P) cot(π (y - y′)/P)`, whose principal value
/// over a period is zero, is subtracted; the diagonal term is dropped, which
/// costs O(h). Only for `n <= DIRECT_HILBERT_MAX_N`.
pub fn modified_hilbert_direct(tf: &TransportField) -> Result<Vec<f64>> {
    let n = tf.y_nodes.len();
    if n > DIRECT_HILBERT_MAX_N {
        return Err(invalid(
            "n",
            format!(
                "direct H̃ quadrature is O(n²) and limited to n <= {DIRECT_HILBERT_MAX_N}, got {n}"
            ),
        ));
    }
    let y = &tf.y_nodes;
    let v = &tf.v_values;
    let p = tf.period;
    let xr = tf.inverse_map();
    let q: Vec<f64> = v.iter().map(|v| (-v).exp()).collect();
    let two_l = periodic_integral(y, &q, p);
    let wts: Vec<f64> = (0..n)
        .map(|j| {
            let next = if j + 1 < n { y[j + 1] } else { y[0] + p };
            let prev = if j > 0 { y[j - 1] } else { y[n - 1] - p };
            0.5 * (next - prev)
        })
        .collect();
    let cot = |z: f64| 1.0 / z.tan();
    Ok((0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let x = xr[i] - xr[j];
                let k = v[j] * q[j] * cot(PI * x / two_l) / two_l;
                let sing = v[i] * cot(PI * (y[i] - y[j]) / p) / p;
                s += wts[j] * (k - sing);
            }
            s
        })
        .collect())
}

/// Transport fields for every frame of a logarithmic run, using each frame's
/// accumulated `c(t)`.
pub fn transport_frames(traj: &Trajectory) -> Result<Vec<TransportField>> {
    if traj.nonlinearity != Nonlinearity::Log1p {
        return Err(invalid(
            "nonlinearity",
            "the transport map is defined for the logarithmic mode",
        ));
    }
    traj.frames
        .iter()
        .map(|f| to_transport(&f.u, f.t, f.shift))
        .collect()
}

/// `L²` norm over a period of `∂_τ v - H̃(v) ∂_y v + ∂_y H̃(v)` at every
/// interior recorded time. `∂_τ` is a centred difference between neighbouring
/// frames on the fixed uniform y-grid; `∂_y` is spectral with period `P`.
/// Frames must be consecutive steps.
pub fn transport_residual(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    for (i, f) in traj.frames.iter().enumerate() {
        if f.step != i {
            return Err(invalid(
                "trajectory",
                "transport residual needs every step recorded (record_every = 1)",
            ));
        }
    }
    let tfs = transport_frames(traj)?;
    if tfs.len() < 3 {
        return Ok(Vec::new());
    }
    let grid = tfs[0].uniform_grid();
    let hs: Vec<Field> = tfs.iter().map(|tf| tf.resample(&tf.h_tilde)).collect();
    let mut out = Vec::with_capacity(tfs.len() - 2);
    for k in 1..tfs.len() - 1 {
        let dt = tfs[k + 1].t - tfs[k - 1].t;
        let vk = tfs[k].uniform.values();
        let hk = hs[k].values();
        let vy = derivative_slice(grid, vk);
        let hy = derivative_slice(grid, hk);
        let ss: f64 = (0..grid.n())
            .map(|i| {
                let dv = (tfs[k + 1].uniform.values()[i] - tfs[k - 1].uniform.values()[i]) / dt;
                let r = dv - hk[i] * vy[i] + hy[i];
                r * r
            })
            .sum();
        out.push((tfs[k].t, (grid.h() * ss).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{evolve, RunConfig, TimeSchedule};
    use crate::grid::integrate;
    use crate::spectral::quarter_laplacian_energy;

    fn bump(grid: Grid1D) -> Field {
        Field::from_fn(grid, |x| {
            3.0 * (-x * x).exp() + (-3.0 * (x - 2.0).powi(2)).exp()
        })
        .unwrap()
    }

    #[test]
    fn zero_field_is_identity() {
        let grid = Grid1D::new(64, 8.0).unwrap();
        let tf = to_transport(&Field::zeros(grid), 0.0, 0.0).unwrap();
        for (j, y) in tf.y_nodes.iter().enumerate() {
            assert!((y - grid.x(j)).abs() < 1e-13);
        }
        assert!(tf.v_values.iter().all(|&v| v == 0.0));
        assert!(tf.h_tilde.iter().all(|&v| v == 0.0));
        assert_eq!(tf.period, 16.0);
        assert_eq!(modified_hilbert_direct(&tf).unwrap(), vec![0.0; 64]);
    }

    #[test]
    fn map_is_monotone_with_slope_at_least_one() {
        let grid = Grid1D::new(256, 20.0).unwrap();
        let u = bump(grid);
        let tf = to_transport(&u, 0.0, 0.4).unwrap();
        for w in tf.y_nodes.windows(2) {
            assert!(w[1] - w[0] >= grid.h() * (1.0 - 1e-9));
        }
        assert!((tf.y_nodes[grid.origin_index()] + 0.4).abs() < 1e-14);
    }

    #[test]
    fn conserved_integrals_match_x_side() {
        let grid = Grid1D::new(1024, 20.0).unwrap();
        let u = bump(grid);
        let tf = to_transport(&u, 0.0, 0.3).unwrap();
        let m = integrate(&u);
        assert!((tf.mass_integral() - m).abs() < 1e-6);
        let want = integrate(&u.map(|s| (1.0 + s) * s.ln_1p()).unwrap());
        assert!((tf.v_integral() - want).abs() < 1e-6);
    }

    #[test]
    fn round_trip_inverts_map() {
        let grid = Grid1D::new(1024, 20.0).unwrap();
        let tf = to_transport(&bump(grid), 0.0, 0.3).unwrap();
        assert!(tf.round_trip_error() < 1e-8, "{}", tf.round_trip_error());
    }

    #[test]
    fn resample_preserves_range() {
        let grid = Grid1D::new(256, 20.0).unwrap();
        let u = Field::from_fn(grid, |x| {
            if x.abs() < 1.5 {
                4.0
            } else {
                0.1 * (-x * x / 50.0).exp()
            }
        })
        .unwrap();
        let tf = to_transport(&u, 0.0, 0.0).unwrap();
        let (lo, hi) = tf
            .v_values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        assert!(tf.uniform.min() >= lo - 1e-14 && tf.uniform.max() <= hi + 1e-14);
    }

    #[test]
    fn hilbert_of_even_data_is_odd() {
        let grid = Grid1D::new(256, 40.0).unwrap();
        let u = crate::poisson::poisson_kernel(grid, 1.0)
            .unwrap()
            .scaled(5.0)
            .unwrap();
        let tf = to_transport(&u, 0.0, 0.0).unwrap();
        let h = modified_hilbert(&tf, &u).unwrap();
        let o = grid.origin_index();
        assert!(h[o].abs() < 1e-14);
        for j in 1..o {
            assert!((h[o + j] + h[o - j]).abs() < 1e-12);
        }
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn direct_formula_rejects_large_grids() {
        let grid = Grid1D::new(512, 20.0).unwrap();
        let tf = to_transport(&bump(grid), 0.0, 0.0).unwrap();
        assert!(modified_hilbert_direct(&tf).is_err());
    }

    #[test]
    fn direct_formula_agrees_to_first_order() {
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let grid = Grid1D::new(n, 12.0).unwrap();
            let u = bump(grid);
            let tf = to_transport(&u, 0.0, 0.2).unwrap();
            let a = modified_hilbert(&tf, &u).unwrap();
            let b = modified_hilbert_direct(&tf).unwrap();
            let e = a
                .iter()
                .zip(&b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if n == 128 {
                assert!(e <= grid.h(), "n=128 err {e} vs h {}", grid.h());
            }
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 0.9, "{errs:?}");
        }
    }

    #[test]
    fn energy_bridges() {
        let grid = Grid1D::new(1024, 20.0).unwrap();
        let u = bump(grid);
        let tf = to_transport(&u, 0.0, 0.0).unwrap();
        let w = u.map(|s| s.ln_1p()).unwrap();
        let ex = quarter_laplacian_energy(&w);
        let conj = tf.conjugated_energy();
        assert!((conj / ex - 1.0).abs() < 1e-2, "{conj} vs {ex}");
        // ∫|∂_y v|² dy = ∫|∂ₓ log(1+u)|² / (1+u) dx
        let vy = derivative_slice(tf.uniform_grid(), tf.uniform.values());
        let lhs = tf.uniform_grid().h() * vy.iter().map(|x| x * x).sum::<f64>();
        let wx = derivative_slice(grid, w.values());
        let rhs = grid.h()
            * wx.iter()
                .zip(u.values())
                .map(|(a, s)| a * a / (1.0 + s))
                .sum::<f64>();
        assert!((lhs / rhs - 1.0).abs() < 1e-2, "{lhs} vs {rhs}");
    }

    #[test]
    fn residual_of_zero_run_vanishes_and_requires_dense_frames() {
        let grid = Grid1D::new(64, 8.0).unwrap();
        let traj = evolve(&RunConfig::new(
            Field::zeros(grid),
            Nonlinearity::Log1p,
            0.3,
            TimeSchedule::Fixed { dt: 0.1 },
        ))
        .unwrap();
        let r = transport_residual(&traj).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|&(_, v)| v == 0.0));
        let mut cfg = RunConfig::new(
            bump(grid),
            Nonlinearity::Log1p,
            0.4,
            TimeSchedule::Fixed { dt: 0.1 },
        );
        cfg.record_every = 2;
        assert!(transport_residual(&evolve(&cfg).unwrap()).is_err());
        cfg.record_every = 1;
        cfg.nonlinearity = Nonlinearity::Linear;
        assert!(transport_residual(&evolve(&cfg).unwrap()).is_err());
    }

    #[test]
    fn conservation_along_run() {
        let grid = Grid1D::new(512, 20.0).unwrap();
        let traj = evolve(&RunConfig::new(
            bump(grid),
            Nonlinearity::Log1p,
            1.0,
            TimeSchedule::Fixed { dt: 0.05 },
        ))
        .unwrap();
        let tfs = transport_frames(&traj).unwrap();
        let m0 = tfs[0].mass_integral();
        for tf in &tfs {
            assert!((tf.mass_integral() - m0).abs() < 1e-5);
        }
    }
}
