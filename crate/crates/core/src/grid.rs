//! Uniform periodic grids, sampled fields, quadrature, norms and the
//! `L log L` functional.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform periodic grid on `[-L, L)` with `n` nodes.
///
/// Node `j` sits at `x_j = -L + j h`, so node `n/2` is exactly `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid1D {
    n: usize,
    half_width: f64,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    n: usize,
    #[serde(rename = "L")]
    half_width: f64,
}

impl TryFrom<GridRepr> for Grid1D {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid1D::new(r.n, r.half_width)
    }
}

impl From<Grid1D> for GridRepr {
    fn from(g: Grid1D) -> Self {
        GridRepr {
            n: g.n,
            half_width: g.half_width,
        }
    }
}

impl Grid1D {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "node count must be a power of two >= 8, got {n}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half-width must be positive and finite, got {half_width}"
            )));
        }
        Ok(Grid1D { n, half_width })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Half-width `L`.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Period `2L`.
    pub fn length(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Index of the node at `x = 0`.
    pub fn origin_index(&self) -> usize {
        self.n / 2
    }

    /// Signed wavenumber `ξ_k = π k / L` for FFT slot `k` (numpy `fftfreq` order).
    /// The Nyquist slot carries `-π (n/2) / L`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        let n = self.n as isize;
        let k = k as isize;
        let s = if k < n / 2 { k } else { k - n };
        std::f64::consts::PI * s as f64 / self.half_width
    }

    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.n / 2
    }
}

/// Real samples on a [`Grid1D`]. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.n()],
        }
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.n()],
        }
    }

    /// Samples `f` at the grid nodes. Non-finite samples are an error.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Field::new(grid, (0..grid.n()).map(|j| f(grid.x(j))).collect())
    }

    pub(crate) fn from_vec_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Field { grid, values }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise map; the result is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<Field> {
        self.map(|v| c * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn ensure_nonnegative(&self) -> Result<()> {
        match self.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            Some((index, &value)) => Err(Error::Negative { index, value }),
            None => Ok(()),
        }
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid(format!(
                "fields live on different grids: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// `|f(-L)| / max |f|`, the relative size of the field at the periodic seam.
    /// Zero for the zero field.
    pub fn boundary_ratio(&self) -> f64 {
        let m = self.max_abs();
        if m == 0.0 {
            0.0
        } else {
            self.values[0].abs() / m
        }
    }

    /// Writes `x,value` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "value"])?;
        for (j, v) in self.values.iter().enumerate() {
            wr.serialize((self.grid.x(j), v))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `x,value` rows. The grid is inferred from the node count and the
    /// first abscissa, which must be `-L`.
    pub fn read_csv<R: Read>(r: R) -> Result<Field> {
        let mut rd = csv::Reader::from_reader(r);
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for rec in rd.deserialize() {
            let (x, v): (f64, f64) = rec?;
            xs.push(x);
            vs.push(v);
        }
        let first = *xs
            .first()
            .ok_or_else(|| Error::Config("empty field file".into()))?;
        let grid = Grid1D::new(xs.len(), -first)?;
        let h = grid.h();
        for (j, &x) in xs.iter().enumerate() {
            if (x - grid.x(j)).abs() > 1e-9 * (1.0 + grid.half_width()) {
                return Err(Error::InvalidGrid(format!(
                    "abscissa {x} at row {j} is not on the uniform grid with spacing {h}"
                )));
            }
        }
        Field::new(grid, vs)
    }

    pub fn snapshot(&self, t: f64) -> Snapshot {
        Snapshot {
            grid: self.grid,
            t,
            values: self.values.clone(),
        }
    }
}

/// JSON snapshot `{grid:{n,L}, t, values:[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub grid: Grid1D,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn into_field(self) -> Result<Field> {
        Field::new(self.grid, self.values)
    }
}

/// Periodic rectangle rule `h Σ f_j`.
pub fn integrate(f: &Field) -> f64 {
    f.grid.h() * f.values.iter().sum::<f64>()
}

/// `(h Σ |f_j|^p)^{1/p}`, or `max |f_j|` for `p = ∞`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(invalid("p", format!("norm exponent must be >= 1, got {p}")));
    }
    Ok(lp_norm_slice(f.values(), f.grid.h(), p))
}

pub(crate) fn lp_norm_slice(v: &[f64], h: f64, p: f64) -> f64 {
    if p == f64::INFINITY {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        h * v.iter().map(|x| x.abs()).sum::<f64>()
    } else if p == 2.0 {
        (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
    } else {
        (h * v.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// `Ψ(s) = (1+s) log(1+s) - s` for `s >= 0`.
pub fn psi(s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(invalid("s", format!("Ψ is defined for s >= 0, got {s}")));
    }
    Ok(psi_unchecked(s))
}

pub(crate) fn psi_unchecked(s: f64) -> f64 {
    if s < 0.05 {
        // Ψ(s) = Σ_{k>=2} (-1)^k s^k / (k (k-1)); the closed form cancels badly here.
        let mut term = -s;
        let mut sum = 0.0;
        for k in 2..40 {
            term *= -s;
            let add = term / (k as f64 * (k as f64 - 1.0));
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (1.0 + s) * s.ln_1p() - s
    }
}

/// `L_X(f) = ∫ Ψ(f)`; requires `f >= 0`.
pub fn lx_functional(f: &Field) -> Result<f64> {
    f.ensure_nonnegative()?;
    Ok(f.grid.h() * f.values.iter().map(|&s| psi_unchecked(s)).sum::<f64>())
}
