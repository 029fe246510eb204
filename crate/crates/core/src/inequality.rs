//! Numerical checks of the functional inequalities behind the estimates:
//! Stroock–Varopoulos, a Nash–Gagliardo–Nirenberg bound, a Trudinger-type
//! Orlicz embedding and an elementary exponential inequality.
//!
//! All checks are deterministic for a fixed seed. A single counterexample in a
//! family is decisive; passing certifies only the sampled members.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{lp_norm_slice, psi_unchecked, Field, Grid1D};
use crate::quadrature::integrate_adaptive;
use crate::spectral::{abs_power_table, apply_table, half_laplacian, quarter_energy_slice};

/// Regularization level used for `1 < p < 3/2`.
pub const SV_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    GaussianBumps,
    MultiBump,
    BandLimited,
    Dilates,
}

/// One analytic, nonnegative test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyMember {
    /// `Σ aᵢ exp(-(x - cᵢ)² / (2 sᵢ²))`
    Bumps { bumps: Vec<(f64, f64, f64)> },
    /// `exp(-x² / (2 W²)) (Σ aₖ cos(k x + θₖ))²`
    BandLimited {
        envelope: f64,
        modes: Vec<(f64, f64)>,
    },
    /// `φ(λ x)`
    Dilate {
        base: Box<FamilyMember>,
        lambda: f64,
    },
}

impl FamilyMember {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FamilyMember::Bumps { bumps } => bumps
                .iter()
                .map(|&(a, c, s)| a * (-(x - c).powi(2) / (2.0 * s * s)).exp())
                .sum(),
            FamilyMember::BandLimited { envelope, modes } => {
                let s: f64 = modes
                    .iter()
                    .enumerate()
                    .map(|(k, &(a, th))| a * ((k + 1) as f64 * x + th).cos())
                    .sum();
                (-x * x / (2.0 * envelope * envelope)).exp() * s * s
            }
            FamilyMember::Dilate { base, lambda } => base.eval(lambda * x),
        }
    }

    pub fn sample(&self, grid: Grid1D) -> Field {
        Field::from_fn(grid, |x| self.eval(x)).expect("family members are finite")
    }
}

/// Seeded generator of test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleFamily {
    pub kind: FamilyKind,
    pub count: usize,
    pub seed: u64,
}

impl SampleFamily {
    pub fn new(kind: FamilyKind, count: usize, seed: u64) -> Self {
        SampleFamily { kind, count, seed }
    }

    pub fn members(&self) -> Vec<FamilyMember> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count).map(|_| draw(self.kind, &mut rng)).collect()
    }

    pub fn realize(&self, grid: Grid1D) -> Vec<Field> {
        self.members().iter().map(|m| m.sample(grid)).collect()
    }
}

fn bump(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    (
        rng.random_range(0.1..5.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(0.3..3.0),
    )
}

fn draw(kind: FamilyKind, rng: &mut ChaCha8Rng) -> FamilyMember {
    match kind {
        FamilyKind::GaussianBumps => FamilyMember::Bumps {
            bumps: vec![bump(rng)],
        },
        FamilyKind::MultiBump => {
            let k = rng.random_range(2..=5);
            FamilyMember::Bumps {
                bumps: (0..k).map(|_| bump(rng)).collect(),
            }
        }
        FamilyKind::BandLimited => {
            let k = rng.random_range(1..=4);
            FamilyMember::BandLimited {
                envelope: rng.random_range(1.0..3.0),
                modes: (0..k)
                    .map(|_| {
                        (
                            rng.random_range(-1.0..1.0),
                            rng.random_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect(),
            }
        }
        FamilyKind::Dilates => FamilyMember::Dilate {
            base: Box::new(FamilyMember::Bumps {
                bumps: vec![bump(rng)],
            }),
            lambda: rng.random_range(-0.7f64..0.7).exp(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvCheck {
    /// `∫ A(z) (-Δ)^{1/2} z`
    pub lhs: f64,
    /// `‖(-Δ)^{1/4} B(z)‖₂²`
    pub rhs: f64,
    pub scale: f64,
    pub holds: bool,
}

impl SvCheck {
    pub fn margin(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// `∫ A(z) (-Δ)^{1/2} z >= ‖(-Δ)^{1/4} B(z)‖²` for arbitrary `A`, `B` given
/// pointwise, with tolerance `1e-8` relative to `∫|A(z)| |(-Δ)^{1/2} z| + rhs`.
pub fn check_stroock_varopoulos_with(
    z: &Field,
    a: impl Fn(f64) -> f64,
    b: impl Fn(f64) -> f64,
) -> SvCheck {
    let grid = z.grid();
    let h = grid.h();
    let lz = half_laplacian(grid, z.values());
    let av: Vec<f64> = z.values().iter().map(|&v| a(v)).collect();
    let bv: Vec<f64> = z.values().iter().map(|&v| b(v)).collect();
    let lhs = h * av.iter().zip(&lz).map(|(x, y)| x * y).sum::<f64>();
    let rhs = quarter_energy_slice(grid, &bv);
    let scale = h * av.iter().zip(&lz).map(|(x, y)| (x * y).abs()).sum::<f64>() + rhs;
    SvCheck {
        lhs,
        rhs,
        scale,
        holds: lhs >= rhs - 1e-8 * scale,
    }
}

/// Instance `A(z) = u^{p-1}`, `B(z) = ∫₀^u √((p-1) s^{p-2} / (1+s)) ds` with
/// `z = log(1+u)`. For `1 < p < 3/2` the regularized pair `A_ε`, `B_ε` with
/// `ε = SV_EPSILON` is used.
pub fn check_stroock_varopoulos(z: &Field, p: f64) -> Result<SvCheck> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("need 1 < p < ∞, got {p}")));
    }
    z.ensure_nonnegative()?;
    let eps = if p < 1.5 { SV_EPSILON } else { 0.0 };
    let u: Vec<f64> = z.values().iter().map(|v| v.exp_m1()).collect();
    let g = sv_primitive(&u, p, eps);
    let a = |s: f64| {
        if s >= eps {
            s.powf(p - 1.0)
        } else {
            eps.powf(p - 2.0) * s
        }
    };
    let grid = z.grid();
    let h = grid.h();
    let lz = half_laplacian(grid, z.values());
    let lhs = h * u.iter().zip(&lz).map(|(&s, y)| a(s) * y).sum::<f64>();
    let rhs = quarter_energy_slice(grid, &g);
    let scale = h * u
        .iter()
        .zip(&lz)
        .map(|(&s, y)| (a(s) * y).abs())
        .sum::<f64>()
        + rhs;
    Ok(SvCheck {
        lhs,
        rhs,
        scale,
        holds: lhs >= rhs - 1e-8 * scale,
    })
}

/// `B` at each value of `u`, integrating between sorted values so each piece
/// of the quadrature is done once. Uses `s = σ²` to remove the `s^{p-2}`
/// endpoint singularity.
fn sv_primitive(u: &[f64], p: f64, eps: f64) -> Vec<f64> {
    let c = (p - 1.0).sqrt();
    let dens = move |sig: f64| {
        let s = sig * sig;
        let b = if s >= eps {
            c * sig.powf(p - 2.0) / (1.0 + s).sqrt()
        } else {
            (eps.powf(p - 2.0) / (1.0 + s)).sqrt()
        };
        2.0 * sig * b
    };
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&i, &j| u[i].total_cmp(&u[j]));
    let mut out = vec![0.0; u.len()];
    let (mut prev_sig, mut acc) = (0.0f64, 0.0f64);
    let kink = eps.sqrt();
    for &i in &order {
        let sig = u[i].max(0.0).sqrt();
        if sig > prev_sig {
            if prev_sig < kink && kink < sig {
                acc += integrate_adaptive(dens, prev_sig, kink, 1e-14, 1e-10);
                acc += integrate_adaptive(dens, kink, sig, 1e-14, 1e-10);
            } else {
                acc += integrate_adaptive(dens, prev_sig, sig, 1e-14, 1e-10);
            }
            prev_sig = sig;
        }
        out[i] = acc;
    }
    out
}

/// `‖φ‖_{p+q'}^{p+q'} / (p^{q'} ‖(-Δ)^{γ/2} φ‖_q^{q'} ‖φ‖_p^p)` with
/// `q = 1/γ` in one dimension; `0` for `φ = 0`.
pub fn check_ngn(phi: &Field, p: f64, q: f64, gamma: f64) -> Result<f64> {
    validate_ngn(p, q, gamma)?;
    let qp = q / (q - 1.0);
    let grid = phi.grid();
    let h = grid.h();
    let v = phi.values();
    let lhs = lp_norm_slice(v, h, p + qp).powf(p + qp);
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let d = apply_table(v, &abs_power_table(grid, gamma));
    let rhs = p.powf(qp) * lp_norm_slice(&d, h, q).powf(qp) * lp_norm_slice(v, h, p).powf(p);
    Ok(lhs / rhs)
}

fn validate_ngn(p: f64, q: f64, gamma: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("need p >= 1, got {p}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("need 0 < γ < 1, got {gamma}")));
    }
    if !(q > 1.0) || (q * gamma - 1.0).abs() > 1e-12 {
        return Err(invalid(
            "q",
            format!("need q = 1/γ = {}, got {q}", 1.0 / gamma),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NgnReport {
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub samples: usize,
    /// Supremum of the ratio over the family on the coarse grid.
    pub empirical_c: f64,
    /// Same supremum on the grid with twice the points.
    pub empirical_c_fine: f64,
    /// Within ±20% across the two grids and finite.
    pub stable: bool,
}

/// Empirical NGN constant of a family on `grid` and on the refined grid.
pub fn ngn_empirical_constant(
    family: &SampleFamily,
    grid: Grid1D,
    p: f64,
    q: f64,
    gamma: f64,
) -> Result<NgnReport> {
    validate_ngn(p, q, gamma)?;
    let fine = Grid1D::new(2 * grid.n(), grid.half_width())?;
    let members = family.members();
    let sup = |g: Grid1D| -> Result<f64> {
        let r: Result<Vec<f64>> = members
            .par_iter()
            .map(|m| check_ngn(&m.sample(g), p, q, gamma))
            .collect();
        Ok(r?.into_iter().fold(0.0, f64::max))
    };
    let c0 = sup(grid)?;
    let c1 = sup(fine)?;
    Ok(NgnReport {
        p,
        q,
        gamma,
        samples: members.len(),
        empirical_c: c0,
        empirical_c_fine: c1,
        stable: c0.is_finite() && c1.is_finite() && (c1 / c0 - 1.0).abs() <= 0.2,
    })
}

/// `Σ_{j>=k} s^j / j!` without forming `e^s - head` for small `s`.
pub fn exp_tail(s: f64, k: u32) -> f64 {
    if s > 2.0 {
        let mut head = 0.0;
        let mut term = 1.0;
        for j in 0..k {
            if j > 0 {
                term *= s / j as f64;
            }
            head += term;
        }
        return s.exp() - head;
    }
    let mut term = 1.0;
    for j in 1..=k {
        term *= s / j as f64;
    }
    if k == 0 {
        term = 1.0;
    }
    let mut sum = 0.0;
    let mut j = k;
    loop {
        sum += term;
        j += 1;
        term *= s / j as f64;
        if term <= 1e-17 * sum || term == 0.0 {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrudingerReport {
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub r_prime: f64,
    /// Number of subtracted Taylor terms.
    pub k: u32,
    pub samples: usize,
    pub rescaled: usize,
    pub alpha: f64,
    /// No member violated the bound even at the top of the search bracket.
    pub unbounded: bool,
}

/// Upper end of the α bracket. The bracket is fixed so that the result only
/// depends on the family through the bound itself, which makes α monotone
/// under enlarging the family.
pub const ALPHA_MAX: f64 = 1_048_576.0;

/// Largest α (to within `1e-3`) with
/// `∫ (e^{α|φ|^{r'}} - Σ_{j<k} (α|φ|^{r'})^j / j!) <= 1` for every member,
/// after scaling members to `‖φ‖_p + ‖(-Δ)^{γ/2}φ‖_q <= 1`.
pub fn trudinger_alpha_search(
    family: &SampleFamily,
    grid: Grid1D,
    p: f64,
    q: f64,
    gamma: f64,
) -> Result<TrudingerReport> {
    validate_ngn(p, q, gamma)?;
    let r = p.max(q);
    let rp = r / (r - 1.0);
    let k = (p / rp - 1e-12).ceil().max(1.0) as u32;
    let h = grid.h();
    let table = abs_power_table(grid, gamma);
    let members = family.members();
    let powered: Vec<(Vec<f64>, bool)> = members
        .par_iter()
        .map(|m| {
            let f = m.sample(grid);
            let d = apply_table(f.values(), &table);
            let norm = lp_norm_slice(f.values(), h, p) + lp_norm_slice(&d, h, q);
            let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
            let w = f
                .values()
                .iter()
                .map(|v| (scale * v.abs()).powf(rp))
                .collect();
            (w, norm > 1.0)
        })
        .collect();
    let ok = |alpha: f64| {
        powered
            .par_iter()
            .all(|(w, _)| h * w.iter().map(|&s| exp_tail(alpha * s, k)).sum::<f64>() <= 1.0)
    };
    let (mut lo, mut hi) = (0.0, ALPHA_MAX);
    let unbounded = ok(hi);
    if unbounded {
        lo = hi;
    } else {
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(TrudingerReport {
        p,
        q,
        gamma,
        r_prime: rp,
        k,
        samples: members.len(),
        rescaled: powered.iter().filter(|x| x.1).count(),
        alpha: lo,
        unbounded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpSquareReport {
    /// Smallest `(rhs - lhs) / max(rhs, lhs)` over the grid.
    pub worst_margin: f64,
    pub worst_a: f64,
    pub worst_x: f64,
    pub points: usize,
}

/// `ln(e^y - 1)` for `y >= 0` without overflow.
fn ln_expm1(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

/// `(e^{ax} - 1)² <= (e^a - 1)(e^{ax²} - 1)` over `a_grid × x_grid`, compared
/// in log space.
pub fn check_exp_square(a_grid: &[f64], x_grid: &[f64]) -> Result<ExpSquareReport> {
    if let Some(v) = a_grid
        .iter()
        .chain(x_grid)
        .find(|v| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(invalid(
            "grid",
            format!("values must be finite and nonnegative, got {v}"),
        ));
    }
    let worst = a_grid
        .par_iter()
        .map(|&a| {
            x_grid.iter().fold((f64::INFINITY, a, 0.0), |best, &x| {
                let m = if a == 0.0 || x == 0.0 {
                    0.0
                } else {
                    let ll = 2.0 * ln_expm1(a * x);
                    let lr = ln_expm1(a) + ln_expm1(a * x * x);
                    if lr >= ll {
                        -(ll - lr).exp_m1()
                    } else {
                        (lr - ll).exp_m1()
                    }
                };
                if m < best.0 {
                    (m, a, x)
                } else {
                    best
                }
            })
        })
        .reduce(
            || (f64::INFINITY, 0.0, 0.0),
            |a, b| if b.0 < a.0 { b } else { a },
        );
    Ok(ExpSquareReport {
        worst_margin: worst.0,
        worst_a: worst.1,
        worst_x: worst.2,
        points: a_grid.len() * x_grid.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogSuiteReport {
    /// `min (u - log(1+u))` over sampled `u ∈ (0, 10³)`.
    pub log_margin: f64,
    pub log_equality_at_zero: bool,
    /// `0 <= j_ε(z) <= |z|` for the primitives of the clipped sign.
    pub sign_primitive_ok: bool,
    /// `max |Ψ'(s) - log(1+s)|` by central differences.
    pub psi_derivative_error: f64,
    pub passed: bool,
}

/// `j_ε(z) = ∫₀^z clamp(s/ε, -1, 1) ds`.
pub fn sign_primitive(z: f64, eps: f64) -> f64 {
    let a = z.abs();
    if a < eps {
        a * a / (2.0 * eps)
    } else {
        a - 0.5 * eps
    }
}

pub fn check_log_inequality_suite() -> LogSuiteReport {
    let us: Vec<f64> = (1..=4000)
        .map(|k| 10f64.powf(-6.0 + 9.0 * k as f64 / 4000.0))
        .collect();
    let log_margin = us
        .iter()
        .map(|&u| u - u.ln_1p())
        .fold(f64::INFINITY, f64::min);
    let sign_primitive_ok = [1e-3, 0.1, 1.0].iter().all(|&eps| {
        (-2000..=2000).all(|k| {
            let z = k as f64 * 1e-3;
            let j = sign_primitive(z, eps);
            (0.0..=z.abs()).contains(&j)
        })
    });
    let psi_derivative_error = us
        .iter()
        .filter(|&&s| s >= 1e-3)
        .map(|&s| {
            let d = 1e-5 * s.max(1.0);
            let fd = (psi_unchecked(s + d) - psi_unchecked(s - d)) / (2.0 * d);
            (fd - s.ln_1p()).abs()
        })
        .fold(0.0, f64::max);
    let log_equality_at_zero = 0f64.ln_1p() == 0.0;
    LogSuiteReport {
        log_margin,
        log_equality_at_zero,
        sign_primitive_ok,
        psi_derivative_error,
        passed: log_margin > 0.0
            && log_equality_at_zero
            && sign_primitive_ok
            && psi_derivative_error <= 1e-8,
    }
}
