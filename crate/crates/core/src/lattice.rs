//! Infinite-lattice sums over `Z^d \ {0}` of power-law weights, evaluated
//! through the Jacobi theta representation
//! `|y|^{-2s} = pi^s / Gamma(s) * int_0^inf e^{-pi |y|^2 u} u^{s-1} du`
//! with the small-`u` half mapped to large `u` by Poisson summation. The
//! remaining integrals decay like `e^{-pi u / 4}` and are done by Gauss-Legendre.

use std::f64::consts::PI;

use statrs::function::gamma::{digamma, gamma};

use crate::error::{Result, ZrpError};
use crate::quadrature::GaussLegendre;

/// Terms with `pi m^2 u` beyond this are below 1e-20 and dropped.
const EXP_CUTOFF: f64 = 46.0;

/// `sum_n e^{-pi n^2 u} - 1`, u >= 1.
pub(crate) fn theta0_minus_one(u: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 1.0f64;
    loop {
        let e = PI * n * n * u;
        if e > EXP_CUTOFF {
            break;
        }
        sum += 2.0 * (-e).exp();
        n += 1.0;
    }
    sum
}

/// Gauss-Legendre nodes on `[1, upper]` with panels of width `panel`.
pub(crate) fn unit_tail_nodes(upper: f64, panel: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(20);
    let panels = ((upper - 1.0) / panel).ceil().max(1.0) as usize;
    rule.composite_points(1.0, 1.0 + panels as f64 * panel, panels)
}

/// Upper limit where `e^{-rate u} u^{power} * scale < 1e-20`.
pub(crate) fn tail_limit(rate: f64, power: f64, scale: f64) -> f64 {
    let mut u = 4.0;
    while (-rate * u + power.max(0.0) * u.ln()).exp() * scale > 1e-20 {
        u += 2.0;
    }
    u
}

/// Epstein zeta `sum_{y in Z^d, y != 0} |y|_2^{-sigma}` for `sigma > d`.
pub fn epstein_zeta(d: usize, sigma: f64) -> Result<f64> {
    let df = d as f64;
    if !(sigma > df) {
        return Err(ZrpError::Divergent { alpha: sigma - df });
    }
    let s = 0.5 * sigma;
    let upper = tail_limit(PI, s - 1.0, 4.0 * df);
    let (us, ws) = unit_tail_nodes(upper, 2.0);
    let mut integral = 0.0;
    for (&u, &w) in us.iter().zip(&ws) {
        let theta_d_minus_one = (df * theta0_minus_one(u).ln_1p()).exp_m1();
        integral += w * theta_d_minus_one * (u.powf(s - 1.0) + u.powf(0.5 * df - s - 1.0));
    }
    let bracket = integral + 1.0 / (s - 0.5 * df) - 1.0 / s;
    Ok(PI.powf(s) / gamma(s) * bracket)
}

/// `int_1^inf u^{-nu-1} (1 - e^{-a u}) du` in closed form (a >= 0, nu > 0).
pub(crate) fn power_tail_integral(a: f64, nu: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let n = nu.round();
    let integer = (nu - n).abs() < 1e-12 && n >= 1.0;
    let mut series = 0.0;
    let mut term_pow = 1.0; // a^j / j!
    for j in 1..200 {
        let jf = j as f64;
        term_pow *= a / jf;
        if integer && j == n as usize {
            continue;
        }
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * term_pow / (jf - nu);
        series += term;
        if term_pow < 1e-18 * series.abs().max(1e-300) && jf > a {
            break;
        }
    }
    if integer {
        let ni = n as i32;
        let sign = if ni % 2 == 0 { 1.0 } else { -1.0 };
        let fact: f64 = (1..=ni).map(f64::from).product();
        sign * a.powi(ni) / fact * (a.ln() - digamma(n + 1.0)) - series
    } else {
        -a.powf(nu) * gamma(-nu) - series
    }
}
