//! One-dimensional quadrature: adaptive Gauss–Kronrod, fixed Gauss–Legendre,
//! monotone cubic interpolation and high-order rules on non-uniform periodic
//! nodes.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// 7-point Gauss weights at `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - r * XGK[i]) + f(c + r * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * r, (k - g).abs() * r)
}

/// Adaptive G7–K15 with interval bisection. The tolerance is
/// `max(abs_tol, rel_tol |I|)` per panel.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: (f64, f64),
        tol: f64,
        rel: f64,
        depth: u32,
    ) -> f64 {
        let (val, err) = whole;
        if err <= tol.max(rel * val.abs()) || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        let left = kronrod(f, a, m);
        let right = kronrod(f, m, b);
        rec(f, a, m, left, 0.5 * tol, rel, depth - 1)
            + rec(f, m, b, right, 0.5 * tol, rel, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let whole = kronrod(&f, a, b);
    rec(&f, a, b, whole, abs_tol, rel_tol, 40)
}

/// 5-point Gauss–Legendre nodes and weights on `[-1, 1]`; exact to degree 9.
pub const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Local-Lagrange stencil half width: cells use the 8 nodes `i-3 ..= i+4`.
const HALF: usize = 4;

/// Integrals of `q` over each periodic cell `[y_i, y_{i+1}]` (the last cell
/// ends at `y_0 + period`), using the degree-7 interpolant through the eight
/// surrounding nodes.
pub fn periodic_cell_integrals(y: &[f64], q: &[f64], period: f64) -> Vec<f64> {
    let n = y.len();
    assert_eq!(n, q.len());
    assert!(n >= 2 * HALF, "need at least {} nodes", 2 * HALF);
    let node = |k: isize| -> (f64, f64) {
        let nn = n as isize;
        let wraps = k.div_euclid(nn);
        let j = k.rem_euclid(nn) as usize;
        (y[j] + wraps as f64 * period, q[j])
    };
    (0..n)
        .map(|i| {
            let i = i as isize;
            let pts: Vec<(f64, f64)> = (i - HALF as isize + 1..=i + HALF as isize)
                .map(node)
                .collect();
            let (a, _) = node(i);
            let (b, _) = node(i + 1);
            let c = 0.5 * (a + b);
            let r = 0.5 * (b - a);
            let mut s = 0.0;
            for &(t, w) in GL5.iter() {
                s += w * lagrange(&pts, c + r * t);
            }
            s * r
        })
        .collect()
}

fn lagrange(pts: &[(f64, f64)], x: f64) -> f64 {
    let mut s = 0.0;
    for (m, &(xm, fm)) in pts.iter().enumerate() {
        let mut l = 1.0;
        for (k, &(xk, _)) in pts.iter().enumerate() {
            if k != m {
                l *= (x - xk) / (xm - xk);
            }
        }
        s += fm * l;
    }
    s
}

/// Integral over one period on non-uniform nodes.
pub fn periodic_integral(y: &[f64], q: &[f64], period: f64) -> f64 {
    periodic_cell_integrals(y, q, period).iter().sum()
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes with
/// the weighted harmonic mean). Never overshoots the data between nodes.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(
            h.iter().all(|&h| h > 0.0),
            "abscissae must increase strictly"
        );
        let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
            return Pchip { x, y, d };
        }
        for k in 1..n - 1 {
            if del[k - 1] * del[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        d[0] = end_slope(h[0], h[1], del[0], del[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        Pchip { x, y, d }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kronrod_polynomials_and_smooth() {
        let v = integrate_adaptive(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-14, 1e-14);
        assert!((v - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-13);
        let v = integrate_adaptive(|x| x.sin(), 0.0, PI, 1e-14, 1e-14);
        assert!((v - 2.0).abs() < 1e-14);
        let v = integrate_adaptive(|x| x.sqrt(), 0.0, 1.0, 1e-12, 1e-12);
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
        assert_eq!(integrate_adaptive(|x| x, 1.0, 1.0, 1e-12, 1e-12), 0.0);
    }

    #[test]
    fn gauss_legendre_exact_degree_nine() {
        let s: f64 = GL5.iter().map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_rule_on_warped_nodes() {
        // Nodes y = s + 0.3 sin s on a 2π period; integrate cos² + sin(2y)/2 over y.
        let p = 2.0 * PI;
        let err = |n: usize| {
            let y: Vec<f64> = (0..n)
                .map(|j| {
                    let s = -PI + p * j as f64 / n as f64;
                    s + 0.3 * s.sin()
                })
                .collect();
            let q: Vec<f64> = y
                .iter()
                .map(|v| v.cos().powi(2) + 0.5 * (2.0 * v).sin())
                .collect();
            (periodic_integral(&y, &q, p) - PI).abs()
        };
        let (e64, e128) = (err(64), err(128));
        assert!(e128 < 1e-10, "{e64} {e128}");
        assert!((e64 / e128).log2() >= 6.0, "{e64} {e128}");
    }

    #[test]
    fn pchip_interpolates_and_is_monotone() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v < 3.0 { 0.0 } else { 1.0 + 0.01 * v })
            .collect();
        let p = Pchip::new(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.eval(*xi) - yi).abs() < 1e-15);
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=630 {
            let v = p.eval(k as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            assert!((-1e-15..=1.07).contains(&v));
            prev = v;
        }
        // cubic accuracy on smooth data
        let x: Vec<f64> = (0..41).map(|i| i as f64 * 0.05).collect();
        let p = Pchip::new(x.clone(), x.iter().map(|v| v.exp()).collect());
        assert!((p.eval(1.0123) - 1.0123f64.exp()).abs() < 1e-4);
    }
}
