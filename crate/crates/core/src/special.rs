//! Special functions not covered by `statrs`: Hurwitz/Riemann zeta on the
//! real line, the Dirichlet beta function and sphere areas.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

/// B_{2j} / (2j)! for j = 1..=12.
const BERNOULLI_OVER_FACTORIAL: [f64; 12] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
    1.0 / 74_724_249_600.0,
    -3617.0 / 10_670_622_842_880_000.0,
    43_867.0 / 5_109_094_217_170_944_000.0,
    -174_611.0 / 802_857_662_698_291_200_000.0,
    77_683.0 / 14_101_100_039_391_805_440_000.0,
    -236_364_091.0 / 1_693_824_136_731_743_669_452_800_000.0,
];

const EM_TERMS: usize = 25;

/// Hurwitz zeta `sum_{n>=0} (n+q)^{-s}` by Euler-Maclaurin summation.
///
/// Valid for real `s > -1/2`, `s != 1`, and `q > 0`; for `s < 1` the value is
/// the analytic continuation.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    debug_assert!(q > 0.0);
    debug_assert!(s != 1.0);
    let mut sum = 0.0;
    for n in 0..EM_TERMS {
        sum += (q + n as f64).powf(-s);
    }
    let x = q + EM_TERMS as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) times x^{-s-2j+1}
    let mut rising = s;
    let mut xpow = x.powf(-s - 1.0);
    let x2 = x * x;
    for (j, coeff) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        let term = coeff * rising * xpow;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        let m = 2.0 * j as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        xpow /= x2;
    }
    sum
}

/// Riemann zeta on the real line (analytic continuation, `s != 1`).
pub fn zeta(s: f64) -> f64 {
    if s > -0.5 {
        return hurwitz_zeta(s, 1.0);
    }
    // functional equation
    let one_minus = 1.0 - s;
    2f64.powf(s) * PI.powf(s - 1.0) * (0.5 * PI * s).sin() * gamma(one_minus) * zeta(one_minus)
}

/// Dirichlet beta `sum_{n>=0} (-1)^n (2n+1)^{-s}`, `s > 0`.
pub fn dirichlet_beta(s: f64) -> f64 {
    4f64.powf(-s) * (hurwitz_zeta(s, 0.25) - hurwitz_zeta(s, 0.75))
}

/// Surface area of the unit sphere `S^{d-1}` in `R^d`; `d = 1` gives the
/// counting measure of `{-1, +1}`, i.e. 2.
pub fn sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * PI.powf(half) / gamma(half)
}

/// Harmonic number `H_n`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-15);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-15);
        assert!((zeta(0.0) + 0.5).abs() < 1e-15);
        assert!((zeta(-1.0) + 1.0 / 12.0).abs() < 1e-15);
        assert!(zeta(-2.0).abs() < 1e-15);
        assert!((zeta(-3.0) - 1.0 / 120.0).abs() < 1e-15);
        // zeta(1/2) = -1.4603545088095868
        assert!((zeta(0.5) + 1.460_354_508_809_586_8).abs() < 1e-14);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-14);
    }

    #[test]
    fn hurwitz_matches_direct_sum_shift() {
        // zeta(s, q) - zeta(s, q + 1) = q^{-s}
        for &s in &[1.5, 2.5, 4.0] {
            for &q in &[0.25, 0.75, 3.0] {
                let lhs = hurwitz_zeta(s, q) - hurwitz_zeta(s, q + 1.0);
                assert!((lhs - q.powf(-s)).abs() < 1e-14 * q.powf(-s), "s={s} q={q}");
            }
        }
    }

    #[test]
    fn dirichlet_beta_known_values() {
        // beta(1) = pi/4 is the s -> 1 limit; beta(2) = Catalan's constant
        assert!((dirichlet_beta(2.0) - 0.915_965_594_177_219).abs() < 1e-14);
        assert!((dirichlet_beta(3.0) - PI.powi(3) / 32.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }
}
