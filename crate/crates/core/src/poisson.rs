//! Poisson kernel of the half-plane and its image under `(-Δ)^{1/2}`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::grid::{Field, Grid1D};

/// `P(x, t) = t / (π (x² + t²))`.
pub fn poisson_value(x: f64, t: f64) -> f64 {
    t / (PI * (x * x + t * t))
}

/// `(-Δ)^{1/2} P(·, t)(x) = -∂ₜP = (t² - x²) / (π (x² + t²)²)`.
pub fn a_kernel(x: f64, t: f64) -> f64 {
    let r = x * x + t * t;
    (t * t - x * x) / (PI * r * r)
}

/// `H P(·, t)(x) = x / (π (x² + t²))`.
pub fn poisson_conjugate(x: f64, t: f64) -> f64 {
    x / (PI * (x * x + t * t))
}

/// Samples `P(·, t)` on the grid.
pub fn poisson_kernel(grid: Grid1D, t: f64) -> Result<Field> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid(
            "t",
            format!("Poisson time must be positive, got {t}"),
        ));
    }
    Field::from_fn(grid, |x| poisson_value(x, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use crate::spectral::{forward, inverse_real};

    #[test]
    fn rejects_nonpositive_time() {
        let grid = Grid1D::new(64, 10.0).unwrap();
        assert!(poisson_kernel(grid, 0.0).is_err());
        assert!(poisson_kernel(grid, -1.0).is_err());
    }

    #[test]
    fn peak_value() {
        let grid = Grid1D::new(64, 10.0).unwrap();
        for t in [0.5, 1.0, 3.0] {
            let p = poisson_kernel(grid, t).unwrap();
            assert!((p.values()[grid.origin_index()] - 1.0 / (PI * t)).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_on_wide_grid() {
        // Missing mass is (2/π) arctan(t/L) ≈ 6.4e-4 at L = 1000.
        let grid = Grid1D::new(1 << 16, 1000.0).unwrap();
        let p = poisson_kernel(grid, 1.0).unwrap();
        let m = integrate(&p);
        let tail = 2.0 / PI * (1.0f64 / 1000.0).atan();
        assert!((m - 1.0).abs() < 1e-3);
        assert!((m - (1.0 - tail)).abs() < 1e-6, "{m}");
    }

    #[test]
    fn semigroup_by_transform_convolution() {
        // Circular convolution h·(P_{t1} ⊛ P_{t2}) against P_{t1+t2}; the
        // periodization error of the heavy tails is O(t / L²).
        let grid = Grid1D::new(4096, 200.0).unwrap();
        let (t1, t2) = (0.7, 1.3);
        let a = poisson_kernel(grid, t1).unwrap();
        let b = poisson_kernel(grid, t2).unwrap();
        let fa = forward(a.values());
        let fb = forward(b.values());
        // shift so that node n/2 (x = 0) acts as the origin of the convolution
        let prod: Vec<_> = fa
            .iter()
            .zip(&fb)
            .enumerate()
            .map(|(k, (x, y))| x * y * grid.h() * if k % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let conv = inverse_real(prod);
        let want = poisson_kernel(grid, t1 + t2).unwrap();
        let err = conv
            .iter()
            .zip(want.values())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-4, "semigroup error {err}");
    }
}
