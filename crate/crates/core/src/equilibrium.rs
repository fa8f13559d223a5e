//! Product invariant measures: partition function, fugacity/density map,
//! the marginal pmf and its moments, and exact equilibrium sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};
use crate::kmc::Configuration;
use crate::model::{ModelSpec, RateFamily};

/// Default relative tolerance for series truncation.
pub const SERIES_TOL: f64 = 1e-15;

/// Truncated marginal table `p_k`, k = 0..=K, of the measure with fugacity `beta`.
struct Series {
    pmf: Vec<f64>,
    log_z: f64,
}

/// Sums `beta^k / c(k)!` until the tail bound (ratio domination
/// `beta / c(k+1) <= beta / ((k+1) c^-)`) on `sum k^2 t_k` drops below `tol`
/// relative to the partial sum.
fn series(beta: f64, family: &RateFamily, tol: f64) -> Result<Series> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(ZrpError::Domain(format!("fugacity must be positive and finite, got {beta}")));
    }
    let (c_minus, _) = family.increment_bounds();
    if !(c_minus > 0.0) {
        return Err(ZrpError::NonConvergence(format!("increment infimum {c_minus} is not positive")));
    }
    // log t_k, relative to t_0 = 1
    let mut log_terms = vec![0.0f64];
    let mut log_t = 0.0;
    let mut max_log = 0.0f64;
    let mut k: u32 = 0;
    loop {
        let next = family.rate(k + 1);
        log_t += beta.ln() - next.ln();
        k += 1;
        log_terms.push(log_t);
        max_log = max_log.max(log_t);
        let r = beta / ((f64::from(k) + 1.0) * c_minus);
        if r < 0.5 {
            let kf = f64::from(k);
            let q = 1.0 - r;
            let moment_tail = kf * kf * r / q + 2.0 * kf * r / (q * q) + r * (1.0 + r) / (q * q * q);
            let partial: f64 = log_terms.iter().map(|l| (l - max_log).exp()).sum();
            if (log_t - max_log).exp() * moment_tail.max(r / q) < tol * partial {
                break;
            }
        }
        if k > 10_000_000 {
            return Err(ZrpError::NonConvergence("partition series exceeded 1e7 terms".into()));
        }
    }
    let weights: Vec<f64> = log_terms.iter().map(|l| (l - max_log).exp()).collect();
    let total: f64 = weights.iter().sum();
    let pmf = weights.iter().map(|w| w / total).collect();
    Ok(Series { pmf, log_z: max_log + total.ln() })
}

/// `Z(beta) = sum_k beta^k / c(k)!`, truncated once the remainder is below `tol` (relative).
pub fn partition_function(beta: f64, family: &RateFamily, tol: f64) -> Result<f64> {
    Ok(series(beta, family, tol)?.log_z.exp())
}

/// `ln Z(beta)`; finite where `Z` itself overflows.
pub fn log_partition_function(beta: f64, family: &RateFamily, tol: f64) -> Result<f64> {
    Ok(series(beta, family, tol)?.log_z)
}

/// Mean occupancy `gamma(beta)`.
pub fn mean_occupancy(beta: f64, family: &RateFamily) -> Result<f64> {
    let s = series(beta, family, SERIES_TOL)?;
    Ok(first_moment(&s.pmf))
}

fn first_moment(pmf: &[f64]) -> f64 {
    pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Marginal law of `nu_gamma` with the quantities derived from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumProfile {
    pub family: RateFamily,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub var_occ: f64,
    pub beta_prime: f64,
    #[serde(rename = "K_trunc")]
    pub k_trunc: usize,
    pub pmf: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl EquilibriumProfile {
    /// Profile of the measure with fugacity `beta`.
    pub fn at_fugacity(beta: f64, family: &RateFamily, tol: f64) -> Result<Self> {
        let s = series(beta, family, tol)?;
        let gamma = first_moment(&s.pmf);
        let var_occ: f64 = s.pmf.iter().enumerate().map(|(k, p)| (k as f64 - gamma).powi(2) * p).sum();
        let mut cdf = Vec::with_capacity(s.pmf.len());
        let mut acc = 0.0;
        for p in &s.pmf {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("pmf is nonempty") = 1.0;
        Ok(Self {
            family: *family,
            beta,
            gamma,
            z: s.log_z.exp(),
            var_occ,
            beta_prime: beta / var_occ,
            k_trunc: s.pmf.len() - 1,
            pmf: s.pmf,
            cdf,
        })
    }

    /// Cumulative distribution over `0..=K_trunc`; the last entry is exactly 1.
    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pmf_at(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    /// `E c(eta(0))`, which equals `beta`.
    pub fn mean_rate(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| self.family.rate(k as u32) * p).sum()
    }

    /// Restores the sampling table after deserialization.
    pub fn rebuild_cdf(&mut self) {
        let mut acc = 0.0;
        self.cdf = self
            .pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = self.cdf.last_mut() {
            *last = 1.0;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Solves `gamma(beta) = gamma` by bisection on `ln beta`.
pub fn fugacity_of_density(gamma: f64, family: &RateFamily, tol: f64) -> Result<EquilibriumProfile> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(ZrpError::Bracket { gamma });
    }
    let mean = |b: f64| mean_occupancy(b, family);
    let (_, c_plus) = family.increment_bounds();
    let mut hi = gamma * c_plus.max(1.0);
    let mut lo = hi;
    for _ in 0..200 {
        if mean(hi)? >= gamma {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..2000 {
        if mean(lo)? <= gamma {
            break;
        }
        lo *= 0.5;
    }
    let (m_lo, m_hi) = (mean(lo)?, mean(hi)?);
    if !(m_lo <= gamma && gamma <= m_hi) {
        return Err(ZrpError::Bracket { gamma });
    }
    let mut best = if (m_lo - gamma).abs() < (m_hi - gamma).abs() { lo } else { hi };
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let m = mean(mid)?;
        if (m - gamma).abs() < (mean(best)? - gamma).abs() {
            best = mid;
        }
        if (m - gamma).abs() <= tol || hi - lo <= 4.0 * f64::EPSILON * hi {
            best = mid;
            break;
        }
        if m < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut profile = EquilibriumProfile::at_fugacity(best, family, SERIES_TOL)?;
    // Newton polish, d gamma / d beta = var / beta
    for _ in 0..3 {
        let miss = profile.gamma - gamma;
        if miss == 0.0 {
            break;
        }
        let next = profile.beta - miss * profile.beta / profile.var_occ;
        if !(next > 0.0) {
            break;
        }
        let candidate = EquilibriumProfile::at_fugacity(next, family, SERIES_TOL)?;
        if (candidate.gamma - gamma).abs() >= miss.abs() {
            break;
        }
        profile = candidate;
    }
    if (profile.gamma - gamma).abs() > tol.max(64.0 * f64::EPSILON * gamma) {
        return Err(ZrpError::NonConvergence(format!(
            "fugacity bisection reached density {} for target {gamma}",
            profile.gamma
        )));
    }
    profile.gamma = gamma;
    Ok(profile)
}

/// Occupancy variance from the series, `sum k^2 p_k - gamma^2`.
pub fn occupancy_variance(profile: &EquilibriumProfile) -> f64 {
    profile.var_occ
}

/// `beta'(gamma)` by a central difference of [`fugacity_of_density`] with step `1e-4 gamma`.
pub fn beta_prime_finite_difference(gamma: f64, family: &RateFamily) -> Result<f64> {
    let h = 1e-4 * gamma;
    let up = fugacity_of_density(gamma + h, family, 1e-14)?.beta;
    let down = fugacity_of_density(gamma - h, family, 1e-14)?.beta;
    Ok((up - down) / (2.0 * h))
}

/// One draw from the marginal pmf by inverse CDF.
#[inline]
pub fn sample_marginal<R: Rng + ?Sized>(rng: &mut R, profile: &EquilibriumProfile) -> u32 {
    let u: f64 = rng.random();
    profile.cdf.partition_point(|&c| c <= u).min(profile.k_trunc) as u32
}

/// Configuration with i.i.d. marginals drawn from `profile`.
pub fn sample_configuration<R: Rng + ?Sized>(rng: &mut R, spec: &ModelSpec, profile: &EquilibriumProfile) -> Configuration {
    let n = spec.geometry().n_sites();
    let occupancy: Vec<u32> = (0..n).map(|_| sample_marginal(rng, profile)).collect();
    Configuration::new(spec, occupancy)
}

/// Configuration drawn from the product measure conditioned on holding
/// exactly `round(gamma L^d)` particles (rejection on the total).
pub fn sample_canonical_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &ModelSpec,
    profile: &EquilibriumProfile,
) -> Result<Configuration> {
    let n = spec.geometry().n_sites();
    let target = (spec.gamma * n as f64).round() as u64;
    let mut occupancy = vec![0u32; n];
    for _ in 0..1_000_000 {
        let mut total = 0u64;
        for v in occupancy.iter_mut() {
            *v = sample_marginal(rng, profile);
            total += u64::from(*v);
        }
        if total == target {
            return Ok(Configuration::new(spec, occupancy));
        }
    }
    Err(ZrpError::Domain(format!("no configuration with {target} particles after 1e6 product draws")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LIN: RateFamily = RateFamily::Linear { a: 1.0 };
    const AFF: RateFamily = RateFamily::Affine { a: 1.0, b: 0.5 };

    /// brute-force partial sums with c(k)! built by products
    fn brute(beta: f64, fam: &RateFamily, kmax: u32) -> (f64, f64, f64) {
        let mut z = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut t = 1.0;
        for k in 0..=kmax {
            if k > 0 {
                t *= beta / fam.rate(k);
            }
            z += t;
            m1 += f64::from(k) * t;
            m2 += f64::from(k * k) * t;
        }
        (z, m1 / z, m2 / z - (m1 / z).powi(2))
    }

    #[test]
    fn partition_examples() {
        let z = partition_function(2.0, &LIN, 1e-15).unwrap();
        assert!((z - 2f64.exp()).abs() < 1e-14 * z);
        assert!((partition_function(1e-12, &AFF, 1e-15).unwrap() - 1.0).abs() < 1e-11);
        let (zb, _, _) = brute(1.0, &AFF, 200);
        assert!((partition_function(1.0, &AFF, 1e-15).unwrap() - zb).abs() < 1e-14 * zb);
    }

    #[test]
    fn mean_examples() {
        assert!((mean_occupancy(2.0, &LIN).unwrap() - 2.0).abs() < 1e-13);
        assert!((mean_occupancy(2.0, &RateFamily::Linear { a: 2.0 }).unwrap() - 1.0).abs() < 1e-13);
        let (_, mb, _) = brute(1.0, &AFF, 200);
        assert!((mean_occupancy(1.0, &AFF).unwrap() - mb).abs() < 1e-13);
    }

    #[test]
    fn fugacity_examples() {
        let p = fugacity_of_density(1.5, &LIN, 1e-12).unwrap();
        assert!((p.beta - 1.5).abs() < 1e-11);
        let p = fugacity_of_density(1.0, &RateFamily::Linear { a: 3.0 }, 1e-12).unwrap();
        assert!((p.beta - 3.0).abs() < 1e-11);
        let p = fugacity_of_density(1.0, &AFF, 1e-12).unwrap();
        let (_, mb, vb) = brute(p.beta, &AFF, 300);
        assert!((mb - 1.0).abs() < 1e-11);
        assert!((p.var_occ - vb).abs() < 1e-12);
    }

    #[test]
    fn profile_invariants() {
        for fam in [LIN, AFF] {
            for gamma in [0.5, 1.0, 2.0] {
                let p = fugacity_of_density(gamma, &fam, 1e-12).unwrap();
                let mass: f64 = p.pmf.iter().sum();
                assert!(mass <= 1.0 + 1e-15 && mass >= 1.0 - 1e-12);
                assert!((first_moment(&p.pmf) - gamma).abs() < 1e-10);
                assert!((p.mean_rate() - p.beta).abs() < 1e-10);
                for k in 1..p.k_trunc {
                    for l in 0..p.k_trunc {
                        let lhs = p.pmf[k] * p.pmf[l] * fam.rate(k as u32);
                        let rhs = p.pmf[k - 1] * p.pmf[l + 1] * fam.rate(l as u32 + 1);
                        if lhs > 0.0 {
                            assert!((lhs - rhs).abs() <= 1e-12 * lhs, "k={k} l={l}");
                        }
                    }
                }
                let fd = beta_prime_finite_difference(gamma, &fam).unwrap();
                assert!((p.beta / fd - occupancy_variance(&p)).abs() < 1e-5 * p.var_occ);
            }
        }
    }

    #[test]
    fn density_strictly_increasing_in_fugacity() {
        let mut prev = 0.0;
        for i in 1..40 {
            let g = mean_occupancy(0.1 * f64::from(i), &AFF).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn poisson_variance_and_beta_prime() {
        let p = fugacity_of_density(2.0, &LIN, 1e-12).unwrap();
        assert!((occupancy_variance(&p) - 2.0).abs() < 1e-12);
        assert!((p.beta_prime - 1.0).abs() < 1e-11);
    }

    #[test]
    fn sampler_mean_and_cdf_end() {
        let p = fugacity_of_density(1.0, &LIN, 1e-12).unwrap();
        assert_eq!(*p.cdf().last().unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let s: u64 = (0..n).map(|_| u64::from(sample_marginal(&mut rng, &p))).sum();
        let mean = s as f64 / n as f64;
        assert!((mean - 1.0).abs() < 4e-3, "{mean}");
    }

    #[test]
    fn json_roundtrip() {
        let p = fugacity_of_density(1.0, &AFF, 1e-12).unwrap();
        let text = p.to_json().unwrap();
        assert!(text.contains("\"K_trunc\"") && text.contains("\"Z\""));
        let mut back: EquilibriumProfile = serde_json::from_str(&text).unwrap();
        back.rebuild_cdf();
        assert_eq!(back.pmf, p.pmf);
        assert_eq!(back.cdf(), p.cdf());
    }
}
