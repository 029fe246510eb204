//! Hurwitz zeta by Euler–Maclaurin summation.

/// `B_{2j} / (2j)!` for `j = 1..=8`.
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
];

/// `ζ(s, a) = Σ_{k>=0} (a+k)^{-s}` for `a > 0`, `s != 1`, continued
/// analytically for `s < 1`.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(a > 0.0, "hurwitz_zeta needs a > 0");
    assert!(s != 1.0, "hurwitz_zeta has a pole at s = 1");
    const N: usize = 12;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (a + k as f64).powf(-s);
    }
    let b = a + N as f64;
    sum += b.powf(1.0 - s) / (s - 1.0) + 0.5 * b.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) times b^{-s-2j+1}
    let mut rising = s;
    let mut pw = b.powf(-s - 1.0);
    for (j, c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        if j > 0 {
            let m = 2.0 * j as f64;
            rising *= (s + m - 1.0) * (s + m);
            pw /= b * b;
        }
        sum += c * rising * pw;
    }
    sum
}

/// Riemann zeta `ζ(s) = ζ(s, 1)`.
pub fn riemann_zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}
