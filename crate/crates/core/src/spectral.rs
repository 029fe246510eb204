//! Fourier-multiplier operators on periodic grids.
//!
//! Conventions: `ξ_k = π k / L` in FFT order. Even multipliers (`|ξ|^σ`,
//! `e^{-|ξ| y}`) use `|ξ_{n/2}|` at the Nyquist slot; odd multipliers
//! (`-i sgn ξ`, `i ξ`) zero it, so real input stays real.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::grid::{Field, Grid1D};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// Unnormalized forward DFT of real samples.
pub fn forward(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(buf.len(), false).process(&mut buf);
    buf
}

/// Inverse DFT (with the `1/n`), real part.
pub fn inverse_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    plan(n, true).process(&mut spec);
    let s = 1.0 / n as f64;
    spec.into_iter().map(|c| c.re * s).collect()
}

/// Applies the multiplier `m(k, ξ_k)` to real samples.
pub(crate) fn apply(grid: Grid1D, values: &[f64], m: impl Fn(usize, f64) -> Complex64) -> Vec<f64> {
    let mut spec = forward(values);
    for (k, c) in spec.iter_mut().enumerate() {
        *c *= m(k, grid.wavenumber(k));
    }
    inverse_real(spec)
}

/// Applies a real even multiplier given as a table.
pub(crate) fn apply_table(values: &[f64], table: &[f64]) -> Vec<f64> {
    let mut spec = forward(values);
    for (c, m) in spec.iter_mut().zip(table) {
        *c *= *m;
    }
    inverse_real(spec)
}

/// `|ξ_k|^σ` table with the zero mode exactly 0.
pub(crate) fn abs_power_table(grid: Grid1D, sigma: f64) -> Vec<f64> {
    (0..grid.n())
        .map(|k| {
            if k == 0 {
                0.0
            } else if sigma == 1.0 {
                grid.wavenumber(k).abs()
            } else {
                grid.wavenumber(k).abs().powf(sigma)
            }
        })
        .collect()
}

/// Symbol `|ξ|^σ` of `(-Δ)^{σ/2}` sampled at the grid wavenumbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMultiplier {
    pub sigma: f64,
    pub multipliers: Vec<f64>,
}

impl SpectralMultiplier {
    pub fn new(grid: Grid1D, sigma: f64) -> Result<Self> {
        check_sigma(sigma, true)?;
        Ok(SpectralMultiplier {
            sigma,
            multipliers: abs_power_table(grid, sigma),
        })
    }

    pub fn apply(&self, f: &Field) -> Field {
        assert_eq!(
            f.len(),
            self.multipliers.len(),
            "multiplier built for another grid"
        );
        Field::from_vec_unchecked(f.grid(), apply_table(f.values(), &self.multipliers))
    }
}

pub(crate) fn check_sigma(sigma: f64, allow_two: bool) -> Result<()> {
    let ok = sigma > 0.0 && (sigma < 2.0 || (allow_two && sigma == 2.0));
    if ok {
        Ok(())
    } else {
        let range = if allow_two { "(0, 2]" } else { "(0, 2)" };
        Err(invalid(
            "sigma",
            format!("order must lie in {range}, got {sigma}"),
        ))
    }
}

/// `(-Δ)^{σ/2} f` via the multiplier `|ξ|^σ`.
pub fn frac_laplacian_spectral(f: &Field, sigma: f64) -> Result<Field> {
    Ok(SpectralMultiplier::new(f.grid(), sigma)?.apply(f))
}

/// `(-Δ)^{1/2}` on raw samples.
pub(crate) fn half_laplacian(grid: Grid1D, v: &[f64]) -> Vec<f64> {
    apply(grid, v, |k, xi| {
        Complex64::new(if k == 0 { 0.0 } else { xi.abs() }, 0.0)
    })
}

pub(crate) fn hilbert_slice(grid: Grid1D, v: &[f64]) -> Vec<f64> {
    apply(grid, v, |k, xi| {
        if k == 0 || grid.is_nyquist(k) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -xi.signum())
        }
    })
}

pub(crate) fn derivative_slice(grid: Grid1D, v: &[f64]) -> Vec<f64> {
    apply(grid, v, |k, xi| {
        if grid.is_nyquist(k) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, xi)
        }
    })
}

/// Zero-mean antiderivative: `U′ = f - mean(f)`, `mean(U) = 0`.
pub(crate) fn antiderivative_slice(grid: Grid1D, v: &[f64]) -> Vec<f64> {
    apply(grid, v, |k, xi| {
        if k == 0 || grid.is_nyquist(k) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -1.0 / xi)
        }
    })
}

/// Hilbert transform, multiplier `-i sgn ξ`.
pub fn hilbert_transform(f: &Field) -> Field {
    Field::from_vec_unchecked(f.grid(), hilbert_slice(f.grid(), f.values()))
}

/// Spectral derivative, multiplier `i ξ`.
pub fn spectral_derivative(f: &Field) -> Field {
    Field::from_vec_unchecked(f.grid(), derivative_slice(f.grid(), f.values()))
}

/// Harmonic extension `P(·, y) * g` evaluated as the multiplier `e^{-|ξ| y}`.
pub fn harmonic_extension_slice(g: &Field, y: f64) -> Result<Field> {
    if !(y.is_finite() && y > 0.0) {
        return Err(invalid(
            "y",
            format!("extension height must be positive, got {y}"),
        ));
    }
    let v = apply(g.grid(), g.values(), |_, xi| {
        Complex64::new((-xi.abs() * y).exp(), 0.0)
    });
    Ok(Field::from_vec_unchecked(g.grid(), v))
}

/// `‖(-Δ)^{1/4} f‖₂²` by Plancherel: `(h/n) Σ |ξ_k| |F_k|²`.
pub fn quarter_laplacian_energy(f: &Field) -> f64 {
    quarter_energy_slice(f.grid(), f.values())
}

pub(crate) fn quarter_energy_slice(grid: Grid1D, v: &[f64]) -> f64 {
    let spec = forward(v);
    let s: f64 = spec
        .iter()
        .enumerate()
        .map(|(k, c)| grid.wavenumber(k).abs() * c.norm_sqr())
        .sum();
    s * grid.h() / grid.n() as f64
}

/// Dirichlet energy `∫₀^∞ ∫ |∇E(f)|² dx dy` of the harmonic extension.
///
/// Each slice energy `S(y)` is computed on the grid from `∂ₓ` and
/// `∂_y = -(-Δ)^{1/2}` of the slice; the `y` integral is the trapezoid rule
/// in `log y` over `y_m = y0 2^m`, with `y0 S(y0)` covering `[0, y0]`.
/// Slices stop once `e^{-2 ξ₁ y}` is below round-off.
pub fn extension_energy(f: &Field, y0: f64) -> Result<f64> {
    if !(y0.is_finite() && y0 > 0.0) {
        return Err(invalid(
            "y0",
            format!("first slice height must be positive, got {y0}"),
        ));
    }
    let grid = f.grid();
    let xi1 = std::f64::consts::PI / grid.half_width();
    let y_max = 40.0 / xi1;
    let slice = |y: f64| -> Result<f64> {
        let e = harmonic_extension_slice(f, y)?;
        let ex = derivative_slice(grid, e.values());
        let ey = half_laplacian(grid, e.values());
        Ok(grid.h() * ex.iter().zip(&ey).map(|(a, b)| a * a + b * b).sum::<f64>())
    };
    let ln2 = std::f64::consts::LN_2;
    let mut y = y0;
    // ∫₀^{y0} S ≈ y0 S(y0), then trapezoid in s = ln y with step ln 2 on y S(y).
    let mut last = y0 * slice(y0)?;
    let mut total = last;
    while y < y_max {
        y *= 2.0;
        let cur = y * slice(y)?;
        total += 0.5 * ln2 * (last + cur);
        last = cur;
    }
    Ok(total)
}
