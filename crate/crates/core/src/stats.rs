//! Estimators and tests that turn simulated functionals into verdicts:
//! autocovariances, integrated autocovariance, variance scaling fits, KS and
//! chi-square tests, and the finite-dimensional limit-law check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Result, ZrpError};
use crate::functional::FunctionalPath;
use crate::stable::{fbm_covariance, LimitLaw};

/// Batches used for batch-means standard errors of a single series.
pub const DEFAULT_BATCHES: usize = 32;
/// Two-sided normal quantile of the reported slope interval (99%).
pub const SLOPE_CI_Z: f64 = 2.575_829_303_548_901;
/// Moment checks pass within this many standard errors.
pub const MOMENT_TOLERANCE_SE: f64 = 4.0;
/// Family-wise level of the per-time KS tests in a law check.
pub const KS_LEVEL: f64 = 0.01;

/// Functional paths of independent replicas on a common grid.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReplicaEnsemble {
    pub grid: Vec<f64>,
    pub master_seed: u64,
    /// replica index -> `A(t)` on the grid
    pub replicas: BTreeMap<u64, Vec<f64>>,
}

impl ReplicaEnsemble {
    pub fn new(grid: Vec<f64>, master_seed: u64) -> Self {
        Self { grid, master_seed, replicas: BTreeMap::new() }
    }

    pub fn insert(&mut self, index: u64, path: &FunctionalPath) -> Result<()> {
        if path.grid != self.grid {
            return Err(ZrpError::Stats("path grid differs from the ensemble grid".into()));
        }
        self.insert_values(index, path.values.clone())
    }

    pub fn insert_values(&mut self, index: u64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(ZrpError::Stats("path length differs from the grid".into()));
        }
        if self.replicas.insert(index, values).is_some() {
            return Err(ZrpError::Stats(format!("replica {index} inserted twice")));
        }
        Ok(())
    }

    /// Union of two disjoint partitions of the same ensemble.
    pub fn merge(mut self, other: Self) -> Result<Self> {
        if self.grid != other.grid || self.master_seed != other.master_seed {
            return Err(ZrpError::Stats("cannot merge ensembles with different grids or seeds".into()));
        }
        for (k, v) in other.replicas {
            self.insert_values(k, v)?;
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    /// Values at grid point `j` across replicas, in replica order.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.replicas.values().map(|v| v[j]).collect()
    }

    /// Index of the grid point equal to `t` (within 1e-9 relative).
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// How the series is centred before products are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Centering {
    /// subtract a known mean (0 for a centred observable)
    Known(f64),
    /// subtract the pooled sample mean
    Sample,
}

/// `C(l dt)` for `l = 0..=max_lag`, pooled over blocks, with block-level SEs.
#[derive(Debug, Clone, Serialize)]
pub struct Autocovariance {
    pub dt: f64,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    /// per-block estimates (independent replicas, or batches of one series)
    #[serde(skip)]
    pub blocks: Vec<Vec<f64>>,
    pub samples: usize,
}

fn block_products(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag).map(|l| x[..x.len() - l].iter().zip(&x[l..]).map(|(a, b)| a * b).sum()).collect()
}

fn mean_and_se(blocks: &[Vec<f64>], lag: usize) -> (f64, f64) {
    let b = blocks.len() as f64;
    let mean = blocks.iter().map(|v| v[lag]).sum::<f64>() / b;
    let var = blocks.iter().map(|v| (v[lag] - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

/// Biased (divide by the full length) autocovariance of one stationary
/// series sampled every `dt`, with batch-means standard errors.
pub fn autocovariance(series: &[f64], dt: f64, max_lag: usize, centering: Centering) -> Result<Autocovariance> {
    autocovariance_batched(series, dt, max_lag, centering, DEFAULT_BATCHES)
}

pub fn autocovariance_batched(
    series: &[f64],
    dt: f64,
    max_lag: usize,
    centering: Centering,
    batches: usize,
) -> Result<Autocovariance> {
    let n = series.len();
    if n < 2 * max_lag.max(1) {
        return Err(ZrpError::Stats(format!("series of length {n} is shorter than 2 x max_lag ({max_lag})")));
    }
    if batches < 2 || n / batches <= max_lag {
        return Err(ZrpError::Stats(format!("{batches} batches of a length-{n} series cannot hold lag {max_lag}")));
    }
    let mu = match centering {
        Centering::Known(m) => m,
        Centering::Sample => series.iter().sum::<f64>() / n as f64,
    };
    let x: Vec<f64> = series.iter().map(|v| v - mu).collect();
    let values: Vec<f64> = block_products(&x, max_lag).into_iter().map(|s| s / n as f64).collect();

    // batch b holds products whose first index lies in its range
    let size = n / batches;
    let blocks: Vec<Vec<f64>> = (0..batches)
        .map(|b| {
            let lo = b * size;
            let hi = if b + 1 == batches { n } else { lo + size };
            (0..=max_lag)
                .map(|l| {
                    let end = hi.min(n - l);
                    if end <= lo {
                        return 0.0;
                    }
                    let s: f64 = (lo..end).map(|i| x[i] * x[i + l]).sum();
                    s / (end - lo) as f64 * (n - l) as f64 / n as f64
                })
                .collect()
        })
        .collect();
    let se = (0..=max_lag).map(|l| mean_and_se(&blocks, l).1).collect();
    Ok(Autocovariance { dt, values, se, blocks, samples: n })
}

/// Autocovariance pooled over independent replica series; SEs come from the
/// spread of per-replica estimates.
pub fn autocovariance_replicas(
    series: &[Vec<f64>],
    dt: f64,
    max_lag: usize,
    centering: Centering,
) -> Result<Autocovariance> {
    if series.len() < 2 {
        return Err(ZrpError::Stats("need at least two replica series".into()));
    }
    if let Some(short) = series.iter().find(|s| s.len() < 2 * max_lag.max(1)) {
        return Err(ZrpError::Stats(format!(
            "series of length {} is shorter than 2 x max_lag ({max_lag})",
            short.len()
        )));
    }
    let total: usize = series.iter().map(Vec::len).sum();
    let mu = match centering {
        Centering::Known(m) => m,
        Centering::Sample => series.iter().flatten().sum::<f64>() / total as f64,
    };
    let mut pooled = vec![0.0; max_lag + 1];
    let blocks: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            let x: Vec<f64> = s.iter().map(|v| v - mu).collect();
            let sums = block_products(&x, max_lag);
            for (p, v) in pooled.iter_mut().zip(&sums) {
                *p += v;
            }
            sums.into_iter().map(|v| v / x.len() as f64).collect()
        })
        .collect();
    let values = pooled.into_iter().map(|v| v / total as f64).collect();
    let se = (0..=max_lag).map(|l| mean_and_se(&blocks, l).1).collect();
    Ok(Autocovariance { dt, values, se, blocks, samples: total })
}

/// `sigma^2 = 2 int_0^inf C(s) ds` estimate.
#[derive(Debug, Clone, Serialize)]
pub struct IntegratedAutocovariance {
    pub sigma2: f64,
    pub se: f64,
    /// last lag included in the trapezoid
    pub cutoff_lag: usize,
}

/// Whether `sigma_gamma(V)` is finite for `(d, alpha)`.
pub fn sigma_is_finite(d: usize, alpha: f64) -> bool {
    match d {
        1 => alpha < 1.0,
        2 => alpha < 2.0,
        _ => true,
    }
}

fn trapezoid(values: &[f64], dt: f64, upto: usize) -> f64 {
    if upto == 0 {
        return 0.0;
    }
    let inner: f64 = values[1..upto].iter().sum();
    dt * (0.5 * values[0] + inner + 0.5 * values[upto])
}

/// Twice the trapezoidal integral of `C` up to the first lag where `C < 2 SE`.
/// Refuses regimes where `sigma_gamma(V)` diverges.
pub fn integrated_autocovariance(acf: &Autocovariance, d: usize, alpha: f64) -> Result<IntegratedAutocovariance> {
    if !sigma_is_finite(d, alpha) {
        return Err(ZrpError::DivergentSigma { d, alpha });
    }
    integrated_autocovariance_unchecked(acf)
}

/// As [`integrated_autocovariance`] without the regime check (synthetic data).
pub fn integrated_autocovariance_unchecked(acf: &Autocovariance) -> Result<IntegratedAutocovariance> {
    let max_lag = acf.values.len() - 1;
    let cutoff = (1..=max_lag)
        .find(|&l| acf.values[l] < 2.0 * acf.se[l])
        .ok_or_else(|| ZrpError::Stats(format!("autocovariance still significant at max lag {max_lag}")))?;
    let sigma2 = 2.0 * trapezoid(&acf.values, acf.dt, cutoff);
    let per_block: Vec<Vec<f64>> = acf.blocks.iter().map(|b| vec![2.0 * trapezoid(b, acf.dt, cutoff)]).collect();
    let (_, se) = mean_and_se(&per_block, 0);
    Ok(IntegratedAutocovariance { sigma2, se, cutoff_lag: cutoff })
}

/// Sample mean and unbiased sample variance.
pub fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Unbiased sample variance and its delete-one jackknife standard error.
pub fn variance_with_jackknife(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let nf = n as f64;
    let (_, var) = mean_variance(x);
    let s1: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    let leave_out: Vec<f64> = x
        .iter()
        .map(|v| {
            let m = nf - 1.0;
            let a = s1 - v;
            let b = s2 - v * v;
            (b - a * a / m) / (m - 1.0)
        })
        .collect();
    let mean_loo = leave_out.iter().sum::<f64>() / nf;
    let jk = (nf - 1.0) / nf * leave_out.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>();
    (var, jk.sqrt())
}

/// Weighted least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// weighted residual sum of squares
    pub chi2: f64,
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], se: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != se.len() || x.len() < 2 {
        return Err(ZrpError::Stats("line fit needs matching x, y, se with at least 2 points".into()));
    }
    if se.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(ZrpError::Stats("line fit needs positive finite standard errors".into()));
    }
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ZrpError::Stats("line fit needs at least two distinct x".into()));
    }
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (y - intercept - slope * x).powi(2)).sum();
    Ok(LineFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        intercept_se: (1.0 / sw + xm * xm / sxx).sqrt(),
        chi2,
    })
}

/// Variance of `A(tN)` against `N` on log-log axes.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub t: f64,
    pub n: Vec<f64>,
    pub variance: Vec<f64>,
    pub variance_se: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 99% interval for the slope
    pub slope_ci: (f64, f64),
    pub replicas: Vec<usize>,
}

/// Unbiased variance of all values pooled over `groups`, with a jackknife
/// standard error that deletes one whole group at a time (groups are
/// independent; values inside a group may be correlated).
pub fn variance_with_group_jackknife(groups: &[Vec<f64>]) -> (f64, f64) {
    let m: usize = groups.iter().map(Vec::len).sum();
    let s1: f64 = groups.iter().flatten().sum();
    let s2: f64 = groups.iter().flatten().map(|v| v * v).sum();
    let var_of = |n: f64, a: f64, b: f64| (b - a * a / n) / (n - 1.0);
    let var = var_of(m as f64, s1, s2);
    let g = groups.len() as f64;
    let leave_out: Vec<f64> = groups
        .iter()
        .map(|grp| {
            let a: f64 = grp.iter().sum();
            let b: f64 = grp.iter().map(|v| v * v).sum();
            var_of((m - grp.len()) as f64, s1 - a, s2 - b)
        })
        .collect();
    let mean_loo = leave_out.iter().sum::<f64>() / g;
    let jk = (g - 1.0) / g * leave_out.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>();
    (var, jk.sqrt())
}

/// Fits `log Var A(tN) = intercept + slope log N`. `samples[i]` holds the
/// replica values of `A(t n[i])`.
pub fn variance_scaling(n: &[f64], samples: &[Vec<f64>], t: f64) -> Result<ScalingFit> {
    let groups: Vec<Vec<Vec<f64>>> = samples.iter().map(|s| s.iter().map(|&v| vec![v]).collect()).collect();
    variance_scaling_grouped(n, &groups, t)
}

/// As [`variance_scaling`], with `groups[i][r]` holding the values of
/// replica `r` at several translated origins.
pub fn variance_scaling_grouped(n: &[f64], groups: &[Vec<Vec<f64>>], t: f64) -> Result<ScalingFit> {
    if n.len() != groups.len() {
        return Err(ZrpError::Stats("one sample set per N is required".into()));
    }
    if n.len() < 4 {
        return Err(ZrpError::Stats(format!("variance scaling needs at least 4 values of N, got {}", n.len())));
    }
    if let Some(s) = groups.iter().find(|s| s.len() < 100) {
        return Err(ZrpError::Stats(format!("variance scaling needs at least 100 replicas per N, got {}", s.len())));
    }
    let mut variance = Vec::with_capacity(n.len());
    let mut variance_se = Vec::with_capacity(n.len());
    for (ni, g) in n.iter().zip(groups) {
        let (v, se) = variance_with_group_jackknife(g);
        if !(v > 0.0) || !(se > 0.0) {
            return Err(ZrpError::Stats(format!("degenerate variance {v} at N={ni}")));
        }
        variance.push(v);
        variance_se.push(se);
    }
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = variance.iter().map(|v| v.ln()).collect();
    let sy: Vec<f64> = variance.iter().zip(&variance_se).map(|(v, s)| s / v).collect();
    let fit = weighted_line_fit(&x, &y, &sy)?;
    Ok(ScalingFit {
        t,
        n: n.to_vec(),
        variance,
        variance_se,
        slope: fit.slope,
        intercept: fit.intercept,
        slope_se: fit.slope_se,
        slope_ci: (fit.slope - SLOPE_CI_Z * fit.slope_se, fit.slope + SLOPE_CI_Z * fit.slope_se),
        replicas: groups.iter().map(Vec::len).collect(),
    })
}

/// Statistic and p-value of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// degrees of freedom (chi-square) or sample size (KS)
    pub dof: usize,
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // theta-transformed series, fast for small lambda
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|j: i32| (c * f64::from((2 * j - 1).pow(2))).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = f64::from(j);
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestOutcome> {
    let n = samples.len();
    if n < 50 {
        return Err(ZrpError::Stats(format!("KS test needs at least 50 samples, got {n}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(ZrpError::Stats("KS test received a non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sq = nf.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok(TestOutcome { statistic: d, p_value: kolmogorov_survival(lambda), dof: n })
}

/// CDF of `N(0, variance)`.
pub fn normal_cdf(x: f64, variance: f64) -> f64 {
    0.5 * erfc(-x / (2.0 * variance).sqrt())
}

/// Pearson chi-square of `counts` (index = value) against `pmf`. Bins are
/// merged left to right until each expects at least 5; the mass missing from
/// `pmf` and any counts past its end form the upper tail.
pub fn chi_square(counts: &[u64], pmf: &[f64]) -> Result<TestOutcome> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(ZrpError::Stats("chi-square needs at least one observation".into()));
    }
    let nf = n as f64;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (k, &p) in pmf.iter().enumerate() {
        obs += counts.get(k).copied().unwrap_or(0) as f64;
        exp += nf * p;
        if exp >= 5.0 {
            merged.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    let tail_mass = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    obs += counts.iter().skip(pmf.len()).sum::<u64>() as f64;
    exp += nf * tail_mass;
    if obs > 0.0 || exp > 0.0 {
        match merged.last_mut() {
            Some(last) if exp < 5.0 => {
                last.0 += obs;
                last.1 += exp;
            }
            _ => merged.push((obs, exp)),
        }
    }
    if merged.len() < 2 || merged.iter().any(|&(_, e)| e < 5.0) {
        return Err(ZrpError::Stats(format!("bin merging left {} usable bins", merged.len())));
    }
    let statistic: f64 = merged.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = merged.len() - 1;
    Ok(TestOutcome { statistic, p_value: gamma_ur(0.5 * dof as f64, 0.5 * statistic), dof })
}

/// One line of a verdict report.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    pub target: f64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    /// `|estimate - target| <= k se`.
    pub fn within_se(check: impl Into<String>, target: f64, estimate: f64, se: f64, k: f64) -> Self {
        Self { check: check.into(), target, estimate, se: Some(se), tolerance: k * se, pass: (estimate - target).abs() <= k * se }
    }

    /// `|estimate - target| <= tolerance`.
    pub fn within(check: impl Into<String>, target: f64, estimate: f64, tolerance: f64) -> Self {
        Self { check: check.into(), target, estimate, se: None, tolerance, pass: (estimate - target).abs() <= tolerance }
    }

    /// `p > level`; `target` and `tolerance` both hold the level.
    pub fn p_value(check: impl Into<String>, p: f64, level: f64) -> Self {
        Self { check: check.into(), target: level, estimate: p, se: None, tolerance: level, pass: p > level }
    }
}

/// All verdicts of a law check and their conjunction.
#[derive(Debug, Clone, Serialize)]
pub struct LawReport {
    pub hurst: f64,
    pub sigma: f64,
    pub normalizer: f64,
    pub replicas: usize,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

/// Checks the finite-dimensional law of `A(t_j N) / Lambda(N)` against
/// `sigma B^theta`: a KS test per time (Bonferroni over the times at
/// [`KS_LEVEL`]) and every covariance `(t_i, t_j)`, `i <= j`, within 4 SE.
/// `sigma_estimate` supplies `sigma` when the law says "measured".
pub fn hurst_and_law_check(
    ensemble: &ReplicaEnsemble,
    law: &LimitLaw,
    normalizer: f64,
    times: &[f64],
    sigma_estimate: Option<f64>,
) -> Result<LawReport> {
    if ensemble.len() < 100 {
        return Err(ZrpError::Stats(format!("law check needs at least 100 replicas, got {}", ensemble.len())));
    }
    if times.is_empty() || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ZrpError::Stats("law check times must be increasing and nonempty".into()));
    }
    let sigma = law.sigma().or(sigma_estimate).ok_or_else(|| {
        ZrpError::Stats("limit scale is \"measured\" and no estimate was supplied".into())
    })?;
    if !(normalizer > 0.0) {
        return Err(ZrpError::Stats(format!("normalizer must be positive, got {normalizer}")));
    }
    let theta = law.hurst;
    let columns: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            ensemble
                .grid_index(t)
                .map(|j| ensemble.column(j).into_iter().map(|a| a / normalizer).collect())
                .ok_or_else(|| ZrpError::Stats(format!("time {t} is not on the ensemble grid")))
        })
        .collect::<Result<_>>()?;

    let mut verdicts = Vec::new();
    let level = KS_LEVEL / times.len() as f64;
    for (&t, col) in times.iter().zip(&columns) {
        let var = sigma * sigma * t.powf(2.0 * theta);
        let ks = ks_test(col, |x| normal_cdf(x, var))?;
        verdicts.push(Verdict::p_value(format!("ks t={t}"), ks.p_value, level));
    }
    let r = ensemble.len() as f64;
    for i in 0..times.len() {
        for j in i..times.len() {
            let prods: Vec<f64> = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).collect();
            let (mean, var) = mean_variance(&prods);
            let target = sigma * sigma * fbm_covariance(theta, times[i], times[j]);
            verdicts.push(Verdict::within_se(
                format!("cov t={},{}", times[i], times[j]),
                target,
                mean,
                (var / r).sqrt(),
                MOMENT_TOLERANCE_SE,
            ));
        }
    }
    let pass = verdicts.iter().all(|v| v.pass);
    Ok(LawReport { hurst: theta, sigma, normalizer, replicas: ensemble.len(), verdicts, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};
    use rand::Rng;
    use rand_distr::{Distribution, Poisson, StandardNormal};

    #[test]
    fn lag_zero_is_the_sample_variance() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let acf = autocovariance(&x, 1.0, 10, Centering::Sample).unwrap();
        let (_, var) = mean_variance(&x);
        let biased = var * 999.0 / 1000.0;
        assert!((acf.values[0] - biased).abs() < 1e-14);
        assert!(autocovariance(&x, 1.0, 600, Centering::Sample).is_err());
    }

    #[test]
    fn white_noise_autocovariance() {
        let mut rng = stream(1, tag::SYNTHETIC, 0);
        let x: Vec<f64> = (0..100_000).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let acf = autocovariance(&x, 0.5, 20, Centering::Known(0.0)).unwrap();
        assert_eq!(acf.values[0], 1.0);
        for l in 1..=20 {
            assert!(acf.values[l].abs() < 4.0 * acf.se[l], "lag {l}: {} se {}", acf.values[l], acf.se[l]);
        }
        // sigma^2 of white noise sampled every dt is dt
        let ia = integrated_autocovariance_unchecked(&acf).unwrap();
        assert!((ia.sigma2 - 0.5).abs() < 4.0 * ia.se.max(0.01), "{ia:?}");
    }

    #[test]
    fn ar1_autocorrelation() {
        let rho: f64 = 0.8;
        let mut rng = stream(2, tag::SYNTHETIC, 0);
        let mut x = vec![0.0; 200_000];
        let innov = (1.0 - rho * rho).sqrt();
        x[0] = rng.sample::<f64, _>(StandardNormal);
        for i in 1..x.len() {
            x[i] = rho * x[i - 1] + innov * rng.sample::<f64, _>(StandardNormal);
        }
        let acf = autocovariance(&x, 1.0, 15, Centering::Known(0.0)).unwrap();
        for l in 0..=15 {
            assert!((acf.values[l] - rho.powi(l as i32)).abs() < 4.0 * acf.se[l], "lag {l}");
        }
        // 2 sum_{l} rho^l with trapezoid weights: (1 + rho) / (1 - rho)
        let acf = autocovariance(&x, 1.0, 80, Centering::Known(0.0)).unwrap();
        let ia = integrated_autocovariance_unchecked(&acf).unwrap();
        let exact = (1.0 + rho) / (1.0 - rho);
        assert!(ia.sigma2 < exact && ia.sigma2 > 0.8 * exact, "{ia:?}");
    }

    #[test]
    fn divergent_regimes_are_refused() {
        let x: Vec<f64> = (0..64).map(|i| if i % 3 == 0 { 1.0 } else { -0.5 }).collect();
        let acf = autocovariance_batched(&x, 1.0, 2, Centering::Known(0.0), 4).unwrap();
        assert!(matches!(integrated_autocovariance(&acf, 1, 1.5), Err(ZrpError::DivergentSigma { .. })));
        assert!(matches!(integrated_autocovariance(&acf, 2, 2.0), Err(ZrpError::DivergentSigma { .. })));
        assert!(sigma_is_finite(1, 0.5) && sigma_is_finite(2, 1.5) && sigma_is_finite(3, 7.0));
    }

    #[test]
    fn replica_pooling_matches_single_series_at_lag_zero() {
        let a = vec![1.0, 2.0, -1.0, 0.5, -0.5, 3.0];
        let b = vec![0.0, -2.0, 1.0, 1.5, 0.5, -1.0];
        let acf = autocovariance_replicas(&[a.clone(), b.clone()], 1.0, 2, Centering::Known(0.0)).unwrap();
        let all: f64 = a.iter().chain(&b).map(|v| v * v).sum::<f64>() / 12.0;
        assert!((acf.values[0] - all).abs() < 1e-15);
    }

    #[test]
    fn jackknife_variance_se() {
        let mut rng = stream(3, tag::SYNTHETIC, 0);
        let x: Vec<f64> = (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (v, se) = variance_with_jackknife(&x);
        // normal data: SE(var) ~ sqrt(2 / (n - 1))
        assert!((se - (2.0f64 / 1999.0).sqrt() * v).abs() < 0.1 * se);
    }

    #[test]
    fn group_jackknife_reduces_to_plain_jackknife() {
        let x: Vec<f64> = (0..150).map(|i| ((i * 7919 % 173) as f64).cos()).collect();
        let singles: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let (v1, s1) = variance_with_jackknife(&x);
        let (v2, s2) = variance_with_group_jackknife(&singles);
        assert!((v1 - v2).abs() < 1e-13 && (s1 - s2).abs() < 1e-12);
        // duplicated values inside a group carry no extra information
        let doubled: Vec<Vec<f64>> = x.iter().map(|&v| vec![v, v]).collect();
        let (_, s3) = variance_with_group_jackknife(&doubled);
        assert!((s3 - s1).abs() < 0.02 * s1);
    }

    #[test]
    fn weighted_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = weighted_line_fit(&x, &y, &[0.1, 0.2, 0.1, 0.3]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.chi2 < 1e-20);
    }

    #[test]
    fn manufactured_diffusive_scaling() {
        let n = [250.0, 500.0, 1000.0, 2000.0];
        let mut rng = stream(4, tag::SYNTHETIC, 0);
        let samples: Vec<Vec<f64>> =
            n.iter().map(|&ni: &f64| (0..400).map(|_| ni.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let fit = variance_scaling(&n, &samples, 1.0).unwrap();
        assert!(fit.slope_ci.0 < 1.0 && 1.0 < fit.slope_ci.1, "{fit:?}");
        assert!(variance_scaling(&n[..3], &samples[..3], 1.0).is_err());
        let zeros = vec![vec![0.0; 100]; 4];
        assert!(variance_scaling(&n, &zeros, 1.0).is_err());
    }

    #[test]
    fn kolmogorov_survival_values() {
        // reference values of the Kolmogorov distribution
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 2e-4);
        assert!((kolmogorov_survival(1.0) - 0.2700).abs() < 2e-4);
        assert!((kolmogorov_survival(0.5) - 0.9639).abs() < 2e-4);
        // both series agree where they meet
        let lo = kolmogorov_survival(1.0 - 1e-12);
        let hi = kolmogorov_survival(1.0);
        assert!((lo - hi).abs() < 1e-10);
    }

    #[test]
    fn ks_null_calibration_and_power() {
        let mut rng = stream(5, tag::SYNTHETIC, 0);
        let mut rejections = 0;
        for _ in 0..200 {
            let x: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            if ks_test(&x, |v| normal_cdf(v, 1.0)).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let frac = rejections as f64 / 200.0;
        assert!((frac - 0.05).abs() <= 0.04, "{frac}");
        let x: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(ks_test(&x, |v| normal_cdf(v, 4.0)).unwrap().p_value < 1e-6);
        assert!(ks_test(&x[..10], |v| normal_cdf(v, 1.0)).is_err());
    }

    #[test]
    fn chi_square_poisson() {
        let mut rng = stream(6, tag::SYNTHETIC, 0);
        let pois = Poisson::new(1.0).unwrap();
        let mut counts = vec![0u64; 20];
        for _ in 0..100_000 {
            let k = pois.sample(&mut rng) as usize;
            counts[k.min(19)] += 1;
        }
        let mut pmf = Vec::new();
        let mut p = (-1.0f64).exp();
        for k in 0..12 {
            pmf.push(p);
            p /= (k + 1) as f64;
        }
        let out = chi_square(&counts, &pmf).unwrap();
        assert!(out.p_value > 0.001, "{out:?}");
        // a shifted law is rejected
        let mut shifted = vec![0u64; 20];
        for (k, c) in counts.iter().enumerate().take(19) {
            shifted[k + 1] += c;
        }
        assert!(chi_square(&shifted, &pmf).unwrap().p_value < 1e-10);
        assert!(chi_square(&[3, 1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn ensemble_merge_is_order_free() {
        let grid = vec![1.0, 2.0];
        let mut a = ReplicaEnsemble::new(grid.clone(), 9);
        let mut b = ReplicaEnsemble::new(grid.clone(), 9);
        a.insert_values(0, vec![1.0, 2.0]).unwrap();
        b.insert_values(1, vec![3.0, 4.0]).unwrap();
        let ab = a.clone().merge(b.clone()).unwrap();
        let ba = b.merge(a.clone()).unwrap();
        assert_eq!(ab.replicas, ba.replicas);
        assert_eq!(ab.column(1), vec![2.0, 4.0]);
        assert!(ab.merge(a).is_err());
    }
}
