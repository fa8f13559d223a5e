//! Experiment plans, replica orchestration, result bundles and verification.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{fugacity_of_density, sample_canonical_configuration, sample_configuration, EquilibriumProfile};
use crate::error::{Result, ZrpError};
use crate::functional::{MultiIntegrator, ObservableKind, ObservableSpec, Probe};
use crate::kmc::{advance_until, Configuration, DisplacementSampler};
use crate::model::ModelSpec;
use crate::rng::{replica_rng, stream, tag};
use crate::spectral::{lclt_discrepancy, normalizer, scaling_h, LcltReport, WalkSymbol};
use crate::stable::{relaxation_constant, theorem_coefficient, LimitLaw, Scale, StableDensity};
use crate::stats::{
    autocovariance, autocovariance_replicas, chi_square, hurst_and_law_check, integrated_autocovariance,
    sigma_is_finite, variance_scaling_grouped, weighted_line_fit, Autocovariance, Centering, IntegratedAutocovariance,
    LawReport, ReplicaEnsemble, ScalingFit, TestOutcome, Verdict,
};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Significance level of per-run distributional tests.
pub const RUN_LEVEL: f64 = 0.01;
/// Relative tolerance of `Var A(N) / N` against the integrated autocovariance.
pub const KV_TOLERANCE: f64 = 0.15;
/// Relaxation checks pass within this many standard errors.
pub const RELAXATION_TOLERANCE_SE: f64 = 3.0;
/// Tolerance on the fitted decay exponent of the autocovariance.
pub const DECAY_TOLERANCE: f64 = 0.1;
/// Tolerance on `h^d p_s(0,0) / f_1(0) - 1` at the largest s.
pub const LCLT_ORIGIN_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Stationarity,
    Autocov,
    Scaling,
    FddLaw,
    Lclt,
    Constants,
}

/// Law of the starting configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// product measure `nu_gamma`
    #[default]
    GrandCanonical,
    /// product measure conditioned on `round(gamma L^d)` particles
    Canonical,
}

fn default_observable() -> ObservableKind {
    ObservableKind::Occupation
}
fn default_t_grid() -> Vec<f64> {
    vec![1.0]
}
fn default_replicas() -> usize {
    100
}
fn default_one() -> usize {
    1
}
fn default_outputs() -> PathBuf {
    PathBuf::from("results")
}
fn default_max_lag() -> usize {
    100
}
fn default_s_grid() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}
fn default_window() -> u32 {
    4
}
fn default_slope_tolerance() -> f64 {
    0.1
}

/// Everything an experiment needs, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub experiment: ExperimentKind,
    pub model: ModelSpec,
    #[serde(default = "default_observable")]
    pub observable: ObservableKind,
    #[serde(default)]
    pub n_grid: Vec<f64>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub master_seed: u64,
    #[serde(default = "default_one")]
    pub workers: usize,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub initial: InitialCondition,
    /// independent ensembles of `replicas` paths (fdd-law)
    #[serde(default = "default_one")]
    pub ensembles: usize,
    /// spacing of the recorded `V` series (autocov; sigma estimate elsewhere)
    #[serde(default)]
    pub sample_dt: Option<f64>,
    /// run length (autocov, stationarity)
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// times `t` at which `C(2t) h(t)^d` is compared with the relaxation constant
    #[serde(default)]
    pub lag_times: Vec<f64>,
    /// time window of the autocovariance decay fit
    #[serde(default)]
    pub fit_range: Option<[f64; 2]>,
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: u32,
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
    /// origins per replica, spaced `L / sites` apart along the first axis
    #[serde(default = "default_one")]
    pub sites: usize,
}

fn plan_error(msg: impl Into<String>) -> ZrpError {
    ZrpError::Plan(msg.into())
}

fn check_times(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|t| !(t.is_finite() && *t > 0.0)) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(plan_error(format!("{name} must be positive and strictly increasing, got {v:?}")));
    }
    Ok(())
}

impl ExperimentPlan {
    /// Parses a plan; errors name the offending field and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let plan: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            plan_error(format!("field `{path}`: {}", e.into_inner()))
        })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| plan_error(format!("model: {e}")))?;
        check_times("t_grid", &self.t_grid)?;
        check_times("n_grid", &self.n_grid)?;
        check_times("s_grid", &self.s_grid)?;
        if self.workers == 0 {
            return Err(plan_error("workers must be at least 1"));
        }
        if self.sites == 0 || self.sites > 64 || self.sites > self.model.side {
            return Err(plan_error(format!("sites must lie in 1..=min(64, L), got {}", self.sites)));
        }
        if self.replicas == 0 || self.ensembles == 0 {
            return Err(plan_error("replicas and ensembles must be at least 1"));
        }
        if let Some(dt) = self.sample_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(plan_error(format!("sample_dt must be positive, got {dt}")));
            }
        }
        let (d, alpha) = (self.model.d, self.model.alpha);
        match self.experiment {
            ExperimentKind::Scaling | ExperimentKind::FddLaw => {
                if self.replicas < 100 {
                    return Err(plan_error(format!("law checks need replicas >= 100, got {}", self.replicas)));
                }
                if self.experiment == ExperimentKind::Scaling && self.n_grid.len() < 4 {
                    return Err(plan_error(format!("scaling needs at least 4 values in n_grid, got {}", self.n_grid.len())));
                }
                if self.experiment == ExperimentKind::FddLaw && self.n_grid.len() != 1 {
                    return Err(plan_error("fdd-law takes exactly one value in n_grid"));
                }
                if !sigma_is_finite(d, alpha) {
                    self.check_side(self.max_n() * self.max_t())?;
                }
            }
            ExperimentKind::Autocov => {
                let dt = self.sample_dt.ok_or_else(|| plan_error("autocov needs sample_dt"))?;
                let horizon = self.horizon.ok_or_else(|| plan_error("autocov needs horizon"))?;
                if horizon < 2.0 * self.max_lag as f64 * dt {
                    return Err(plan_error(format!(
                        "horizon {horizon} is shorter than 2 x max_lag x sample_dt = {}",
                        2.0 * self.max_lag as f64 * dt
                    )));
                }
                check_times("lag_times", &self.lag_times)?;
                if let Some(&t) = self.lag_times.last() {
                    if (2.0 * t / dt).round() as usize > self.max_lag {
                        return Err(plan_error(format!("lag 2 x {t} exceeds max_lag x sample_dt")));
                    }
                }
                if let Some([lo, hi]) = self.fit_range {
                    if !(lo > 0.0 && hi > lo && hi <= self.max_lag as f64 * dt) {
                        return Err(plan_error(format!("fit_range must satisfy 0 < lo < hi <= max_lag x sample_dt, got [{lo}, {hi}]")));
                    }
                }
                self.check_side(self.max_lag as f64 * dt)?;
            }
            ExperimentKind::Stationarity => {
                let horizon = self.horizon.ok_or_else(|| plan_error("stationarity needs horizon"))?;
                if !(horizon > 0.0) {
                    return Err(plan_error("horizon must be positive"));
                }
            }
            ExperimentKind::Lclt => {
                if self.window == 0 {
                    return Err(plan_error("window must be at least 1"));
                }
            }
            ExperimentKind::Constants => {}
        }
        Ok(())
    }

    fn max_n(&self) -> f64 {
        self.n_grid.last().copied().unwrap_or(1.0)
    }

    fn max_t(&self) -> f64 {
        self.t_grid.last().copied().unwrap_or(1.0)
    }

    /// `L >= 8 h_alpha(time)`.
    fn check_side(&self, time: f64) -> Result<()> {
        let h = scaling_h(time, self.model.alpha).unwrap_or(0.0);
        let need = 8.0 * h;
        if (self.model.side as f64) < need {
            return Err(plan_error(format!(
                "L = {} is below 8 h_alpha({time}) = {need:.1} for alpha = {}; use L >= {}",
                self.model.side,
                self.model.alpha,
                ((need / 2.0).ceil() as usize) * 2
            )));
        }
        Ok(())
    }

    /// Grid of recording times `t N`, sorted and deduplicated.
    pub fn record_times(&self) -> Vec<(f64, f64, f64)> {
        let ns: Vec<f64> = if self.n_grid.is_empty() { vec![1.0] } else { self.n_grid.clone() };
        let mut out: Vec<(f64, f64, f64)> =
            ns.iter().flat_map(|&n| self.t_grid.iter().map(move |&t| (n, t, n * t))).collect();
        out.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.total_cmp(&b.0)));
        out
    }
}

/// Reads and validates a plan file.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path)?;
    ExperimentPlan::from_json(&text).map_err(|e| match e {
        ZrpError::Plan(m) => ZrpError::Plan(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Model, profile, observable and the derived samplers for one plan.
pub struct Setup {
    pub spec: ModelSpec,
    pub profile: EquilibriumProfile,
    pub observable: ObservableSpec,
    pub sampler: DisplacementSampler,
    /// probe 0 sits at the origin
    pub probes: Vec<Probe>,
    pub initial: InitialCondition,
}

impl Setup {
    pub fn new(plan: &ExperimentPlan) -> Result<Self> {
        let spec = plan.model.clone();
        let profile = fugacity_of_density(spec.gamma, &spec.rate, 1e-14)?;
        let observable = ObservableSpec::new(plan.observable.clone(), &profile)?;
        let sampler = DisplacementSampler::for_spec(&spec)?;
        let geometry = spec.geometry();
        let spacing = spec.side / plan.sites;
        let probes = (0..plan.sites)
            .map(|j| {
                let mut coords = vec![0; spec.d];
                coords[0] = j * spacing;
                observable.probe_at(&geometry, geometry.site(&coords))
            })
            .collect();
        Ok(Self { spec, profile, observable, sampler, probes, initial: plan.initial })
    }

    pub fn initial_configuration(&self, master_seed: u64, index: u64) -> Result<Configuration> {
        let mut rng = stream(master_seed, tag::INITIAL, index);
        match self.initial {
            InitialCondition::GrandCanonical => Ok(sample_configuration(&mut rng, &self.spec, &self.profile)),
            InitialCondition::Canonical => sample_canonical_configuration(&mut rng, &self.spec, &self.profile),
        }
    }

    /// One replica: `A` at `times` for every probe and, optionally, `V` at
    /// the origin every `dt` for `n` samples starting at 0.
    pub fn run_replica(
        &self,
        master_seed: u64,
        index: u64,
        times: &[f64],
        series: Option<(f64, usize)>,
    ) -> Result<ReplicaRecord> {
        let mut config = self.initial_configuration(master_seed, index)?;
        let mut rng = replica_rng(master_seed, index);
        let mut integ = MultiIntegrator::new(&self.probes, &config)?;
        let (dt, n_series) = series.unwrap_or((0.0, 0));
        let mut values = vec![Vec::with_capacity(times.len()); self.probes.len()];
        let mut samples = Vec::with_capacity(n_series);
        let (mut i, mut j) = (0, 0);
        let mut events = 0;
        while i < times.len() || j < n_series {
            let tg = times.get(i).copied().unwrap_or(f64::INFINITY);
            let ts = if j < n_series { j as f64 * dt } else { f64::INFINITY };
            let target = tg.min(ts);
            events += advance_until(&mut config, &self.sampler, target, &mut integ, &mut rng)?.events;
            integ.take_error()?;
            if tg == target {
                for (k, v) in values.iter_mut().enumerate() {
                    v.push(integ.area_at(k, target));
                }
                i += 1;
            }
            if ts == target {
                samples.push(integ.current(0));
                j += 1;
            }
        }
        Ok(ReplicaRecord { index, values, series: samples, events })
    }

    /// Replicas `indices`, run on `workers` threads; output order follows
    /// `indices` whatever the scheduling.
    pub fn run_replicas(
        &self,
        master_seed: u64,
        indices: std::ops::Range<u64>,
        times: &[f64],
        series: Option<(f64, usize)>,
        workers: usize,
    ) -> Result<Vec<ReplicaRecord>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ZrpError::Plan(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| {
            indices
                .into_par_iter()
                .map(|r| self.run_replica(master_seed, r, times, series))
                .collect::<Result<Vec<_>>>()
        })
    }

    pub fn limit_law(&self) -> Result<LimitLaw> {
        theorem_coefficient(self.spec.d, self.spec.alpha, &self.profile, &self.observable)
    }
}

#[derive(Debug, Clone)]
pub struct ReplicaRecord {
    pub index: u64,
    /// `values[probe][time]`
    pub values: Vec<Vec<f64>>,
    pub series: Vec<f64>,
    pub events: u64,
}

/// One line of `paths.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub replica: u64,
    pub site: u32,
    #[serde(rename = "N")]
    pub n: f64,
    pub t: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

/// One line of `series.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub replica: u64,
    pub time: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

/// One line of `histogram.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub replica: u64,
    pub k: u32,
    pub count: u64,
}

/// One line of `lclt.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcltRow {
    pub s: f64,
    pub sup_discrepancy: f64,
    pub origin_scaled: f64,
    pub origin_limit: f64,
}

/// Contents of `constants.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub d: usize,
    pub alpha: f64,
    pub theta: f64,
    pub sigma: Scale,
    pub lambda_rule: &'static str,
    pub regime: String,
    pub relaxation_constant: Option<f64>,
}

pub fn constants_report(setup: &Setup) -> Result<ConstantsReport> {
    let law = setup.limit_law()?;
    let relax = relaxation_constant(setup.spec.d, setup.spec.alpha, &setup.profile, &setup.observable).ok();
    Ok(ConstantsReport {
        d: law.d,
        alpha: law.alpha,
        theta: law.hurst,
        sigma: law.scale,
        lambda_rule: law.lambda_rule,
        regime: law.regime.to_string(),
        relaxation_constant: relax,
    })
}

/// `Var A(N) / N` pooled over the N grid against the integrated autocovariance.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusiveCheck {
    pub sigma2: IntegratedAutocovariance,
    /// `Var A(N) / N` per N
    pub var_over_n: Vec<f64>,
    pub pooled: f64,
    pub pooled_se: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub replica: u64,
    #[serde(flatten)]
    pub test: TestOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxationRow {
    pub t: f64,
    pub lag: usize,
    pub autocovariance: f64,
    pub se: f64,
    /// `C(2t) h(t)^d`
    pub scaled: f64,
    pub scaled_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub range: [f64; 2],
    pub exponent: f64,
    pub se: f64,
    pub expected: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Summary {
    Stationarity {
        horizon: f64,
        runs: Vec<RunOutcome>,
        passes: usize,
        level: f64,
    },
    Autocov {
        dt: f64,
        samples: usize,
        max_lag: usize,
        integrated: Option<IntegratedAutocovariance>,
        integrated_note: Option<String>,
        relaxation_constant: Option<f64>,
        relaxation: Vec<RelaxationRow>,
        decay: Option<DecayFit>,
    },
    Scaling {
        expected_slope: f64,
        fits: Vec<ScalingFit>,
        diffusive: Option<DiffusiveCheck>,
        events: u64,
    },
    FddLaw {
        n: f64,
        normalizer: f64,
        law: LimitLaw,
        sigma_estimate: Option<IntegratedAutocovariance>,
        reports: Vec<LawReport>,
        passes: usize,
        events: u64,
    },
    Lclt {
        window: u32,
        reports: Vec<LcltReport>,
    },
    Constants,
}

/// Everything `run_plan` produces, before it is written out.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub plan: ExperimentPlan,
    pub summary: Summary,
    pub constants: ConstantsReport,
    pub paths: Vec<PathRow>,
    pub series: Vec<SeriesRow>,
    pub histogram: Vec<HistogramRow>,
    pub lclt: Vec<LcltRow>,
}

/// Fitted slope of `log Lambda(N)^2` over the N grid (exactly `2 theta` for
/// pure power laws).
pub fn expected_slope(d: usize, alpha: f64, n_grid: &[f64]) -> Result<f64> {
    let x: Vec<f64> = n_grid.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = n_grid.iter().map(|&n| Ok(2.0 * normalizer(n, d, alpha)?.ln())).collect::<Result<_>>()?;
    Ok(weighted_line_fit(&x, &y, &vec![1.0; x.len()])?.slope)
}

/// `(N, t) -> replica -> values over sites`.
fn groups_by_time(paths: &[PathRow]) -> BTreeMap<(u64, u64), BTreeMap<u64, Vec<f64>>> {
    let mut out: BTreeMap<(u64, u64), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for row in paths {
        out.entry((row.n.to_bits(), row.t.to_bits())).or_default().entry(row.replica).or_default().push(row.a);
    }
    out
}

fn scaling_fits(plan: &ExperimentPlan, paths: &[PathRow]) -> Result<Vec<ScalingFit>> {
    let by = groups_by_time(paths);
    plan.t_grid
        .iter()
        .map(|&t| {
            let groups: Vec<Vec<Vec<f64>>> = plan
                .n_grid
                .iter()
                .map(|&n| by.get(&(n.to_bits(), t.to_bits())).map(|g| g.values().cloned().collect()).unwrap_or_default())
                .collect();
            variance_scaling_grouped(&plan.n_grid, &groups, t)
        })
        .collect()
}

fn diffusive_check(fit: &ScalingFit, sigma2: IntegratedAutocovariance) -> DiffusiveCheck {
    let var_over_n: Vec<f64> = fit.variance.iter().zip(&fit.n).map(|(v, n)| v / (n * fit.t)).collect();
    let se: Vec<f64> = fit.variance_se.iter().zip(&fit.n).map(|(s, n)| s / (n * fit.t)).collect();
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let pooled = w.iter().zip(&var_over_n).map(|(w, v)| w * v).sum::<f64>() / sw;
    DiffusiveCheck {
        relative_error: pooled / sigma2.sigma2 - 1.0,
        sigma2,
        var_over_n,
        pooled,
        pooled_se: (1.0 / sw).sqrt(),
    }
}

fn pooled_sigma2(records: &[ReplicaRecord], dt: f64, max_lag: usize, d: usize, alpha: f64) -> Result<IntegratedAutocovariance> {
    let series: Vec<Vec<f64>> = records.iter().map(|r| r.series.clone()).collect();
    let acf = autocovariance_replicas(&series, dt, max_lag, Centering::Known(0.0))?;
    integrated_autocovariance(&acf, d, alpha)
}

fn law_ensembles(plan: &ExperimentPlan, paths: &[PathRow]) -> Result<Vec<ReplicaEnsemble>> {
    let n = plan.n_grid[0];
    let grid: Vec<f64> = plan.t_grid.clone();
    let mut per_replica: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for row in paths.iter().filter(|r| r.site == 0) {
        per_replica.entry(row.replica).or_insert_with(|| vec![f64::NAN; grid.len()]);
        if let Some(j) = grid.iter().position(|&t| t == row.t) {
            if row.n == n {
                per_replica.get_mut(&row.replica).expect("inserted")[j] = row.a;
            }
        }
    }
    let mut ensembles: Vec<ReplicaEnsemble> =
        (0..plan.ensembles).map(|_| ReplicaEnsemble::new(grid.clone(), plan.master_seed)).collect();
    for (r, values) in per_replica {
        let e = (r as usize) / plan.replicas;
        if e >= plan.ensembles || values.iter().any(|v| v.is_nan()) {
            return Err(ZrpError::Stats(format!("replica {r} has missing or stray paths")));
        }
        ensembles[e].insert_values(r, values)?;
    }
    Ok(ensembles)
}

fn law_reports(
    plan: &ExperimentPlan,
    law: &LimitLaw,
    paths: &[PathRow],
    sigma_estimate: Option<f64>,
) -> Result<Vec<LawReport>> {
    let n = plan.n_grid[0];
    let lambda = law.normalizer(n)?;
    law_ensembles(plan, paths)?
        .iter()
        .map(|e| hurst_and_law_check(e, law, lambda, &plan.t_grid, sigma_estimate))
        .collect()
}

fn stationarity_outcomes(plan: &ExperimentPlan, profile: &EquilibriumProfile, hist: &[HistogramRow]) -> Result<Vec<RunOutcome>> {
    let mut by: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for row in hist {
        let v = by.entry(row.replica).or_default();
        if v.len() <= row.k as usize {
            v.resize(row.k as usize + 1, 0);
        }
        v[row.k as usize] += row.count;
    }
    if by.len() != plan.replicas {
        return Err(ZrpError::Stats(format!("expected {} runs in the histogram, found {}", plan.replicas, by.len())));
    }
    by.into_iter()
        .map(|(replica, counts)| Ok(RunOutcome { replica, test: chi_square(&counts, &profile.pmf)? }))
        .collect()
}

fn autocov_of(plan: &ExperimentPlan, series: &[SeriesRow]) -> Result<Autocovariance> {
    let dt = plan.sample_dt.unwrap_or(1.0);
    let mut by: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for row in series {
        by.entry(row.replica).or_default().push(row.v);
    }
    let all: Vec<Vec<f64>> = by.into_values().collect();
    match all.len() {
        0 => Err(ZrpError::Stats("no series recorded".into())),
        1 => autocovariance(&all[0], dt, plan.max_lag, Centering::Known(0.0)),
        _ => autocovariance_replicas(&all, dt, plan.max_lag, Centering::Known(0.0)),
    }
}

fn relaxation_rows(plan: &ExperimentPlan, acf: &Autocovariance) -> Result<Vec<RelaxationRow>> {
    let d = plan.model.d as i32;
    plan.lag_times
        .iter()
        .map(|&t| {
            let lag = (2.0 * t / acf.dt).round() as usize;
            let h = scaling_h(t, plan.model.alpha)?.powi(d);
            Ok(RelaxationRow {
                t,
                lag,
                autocovariance: acf.values[lag],
                se: acf.se[lag],
                scaled: acf.values[lag] * h,
                scaled_se: acf.se[lag] * h,
            })
        })
        .collect()
}

/// Power-law fit of `C(t)` on log-spaced lags inside `range`.
fn decay_fit(plan: &ExperimentPlan, acf: &Autocovariance, range: [f64; 2]) -> Result<DecayFit> {
    let lo = (range[0] / acf.dt).ceil().max(1.0) as usize;
    let hi = ((range[1] / acf.dt).floor() as usize).min(acf.values.len() - 1);
    let mut lags: Vec<usize> = (0..=24)
        .map(|i| (lo as f64 * (hi as f64 / lo as f64).powf(f64::from(i) / 24.0)).round() as usize)
        .collect();
    lags.dedup();
    let (mut x, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for l in lags {
        let c = acf.values[l];
        if c > 0.0 {
            x.push((l as f64 * acf.dt).ln());
            y.push(c.ln());
            s.push((acf.se[l] / c).max(1e-12));
        }
    }
    let fit = weighted_line_fit(&x, &y, &s)?;
    Ok(DecayFit {
        range,
        exponent: fit.slope,
        se: fit.slope_se,
        expected: -(plan.model.d as f64) / plan.model.alpha.min(2.0),
    })
}

/// Runs the experiment in memory.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultBundle> {
    plan.validate()?;
    let setup = Setup::new(plan)?;
    let constants = constants_report(&setup)?;
    let (d, alpha) = (plan.model.d, plan.model.alpha);
    let mut bundle = ResultBundle {
        plan: plan.clone(),
        summary: Summary::Constants,
        constants,
        paths: Vec::new(),
        series: Vec::new(),
        histogram: Vec::new(),
        lclt: Vec::new(),
    };
    match plan.experiment {
        ExperimentKind::Constants => {}
        ExperimentKind::Stationarity => {
            let horizon = plan.horizon.expect("validated");
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(plan.workers)
                .build()
                .map_err(|e| ZrpError::Plan(e.to_string()))?;
            let hists: Vec<Vec<u64>> = pool.install(|| {
                (0..plan.replicas as u64)
                    .into_par_iter()
                    .map(|r| {
                        let mut config = setup.initial_configuration(plan.master_seed, r)?;
                        let mut rng = replica_rng(plan.master_seed, r);
                        advance_until(&mut config, &setup.sampler, horizon, &mut (), &mut rng)?;
                        let mut counts = Vec::new();
                        for &k in config.occupancy() {
                            if counts.len() <= k as usize {
                                counts.resize(k as usize + 1, 0u64);
                            }
                            counts[k as usize] += 1;
                        }
                        Ok(counts)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            for (r, counts) in hists.iter().enumerate() {
                for (k, &c) in counts.iter().enumerate() {
                    if c > 0 {
                        bundle.histogram.push(HistogramRow { replica: r as u64, k: k as u32, count: c });
                    }
                }
            }
            let runs = stationarity_outcomes(plan, &setup.profile, &bundle.histogram)?;
            let passes = runs.iter().filter(|r| r.test.p_value > RUN_LEVEL).count();
            bundle.summary = Summary::Stationarity { horizon, runs, passes, level: RUN_LEVEL };
        }
        ExperimentKind::Autocov => {
            let dt = plan.sample_dt.expect("validated");
            let horizon = plan.horizon.expect("validated");
            let n = (horizon / dt).floor() as usize + 1;
            let records = setup.run_replicas(plan.master_seed, 0..plan.replicas as u64, &[], Some((dt, n)), plan.workers)?;
            for rec in &records {
                bundle.series.extend(rec.series.iter().enumerate().map(|(j, &v)| SeriesRow {
                    replica: rec.index,
                    time: j as f64 * dt,
                    v,
                }));
            }
            let acf = autocov_of(plan, &bundle.series)?;
            let (integrated, integrated_note) = match integrated_autocovariance(&acf, d, alpha) {
                Ok(ia) => (Some(ia), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let relaxation = relaxation_rows(plan, &acf)?;
            let decay = plan.fit_range.map(|r| decay_fit(plan, &acf, r)).transpose()?;
            bundle.summary = Summary::Autocov {
                dt,
                samples: acf.samples,
                max_lag: plan.max_lag,
                integrated,
                integrated_note,
                relaxation_constant: bundle.constants.relaxation_constant,
                relaxation,
                decay,
            };
        }
        ExperimentKind::Scaling => {
            let times = plan.record_times();
            let grid: Vec<f64> = dedup_times(&times);
            let series = plan.sample_dt.map(|dt| (dt, (grid[grid.len() - 1] / dt).floor() as usize + 1));
            let records = setup.run_replicas(plan.master_seed, 0..plan.replicas as u64, &grid, series, plan.workers)?;
            bundle.paths = path_rows(&records, &times, &grid);
            let fits = scaling_fits(plan, &bundle.paths)?;
            let diffusive = match plan.sample_dt {
                Some(dt) if sigma_is_finite(d, alpha) => {
                    let s2 = pooled_sigma2(&records, dt, plan.max_lag, d, alpha)?;
                    Some(diffusive_check(fits.last().expect("nonempty t_grid"), s2))
                }
                _ => None,
            };
            bundle.summary = Summary::Scaling {
                expected_slope: expected_slope(d, alpha, &plan.n_grid)?,
                fits,
                diffusive,
                events: records.iter().map(|r| r.events).sum(),
            };
        }
        ExperimentKind::FddLaw => {
            let law = setup.limit_law()?;
            let times = plan.record_times();
            let grid = dedup_times(&times);
            let total = (plan.replicas * plan.ensembles) as u64;
            let series = match (law.scale, plan.sample_dt) {
                (Scale::Measured, Some(dt)) => Some((dt, (grid[grid.len() - 1] / dt).floor() as usize + 1)),
                (Scale::Measured, None) => {
                    return Err(plan_error("the limit scale is measured here; set sample_dt to estimate it"));
                }
                _ => None,
            };
            let records = setup.run_replicas(plan.master_seed, 0..total, &grid, series, plan.workers)?;
            bundle.paths = path_rows(&records, &times, &grid);
            let sigma_estimate = match series {
                Some((dt, _)) => Some(pooled_sigma2(&records, dt, plan.max_lag, d, alpha)?),
                None => None,
            };
            let reports = law_reports(plan, &law, &bundle.paths, sigma_estimate.as_ref().map(|s| s.sigma2.sqrt()))?;
            let passes = reports.iter().filter(|r| r.pass).count();
            bundle.summary = Summary::FddLaw {
                n: plan.n_grid[0],
                normalizer: law.normalizer(plan.n_grid[0])?,
                law,
                sigma_estimate,
                reports,
                passes,
                events: records.iter().map(|r| r.events).sum(),
            };
        }
        ExperimentKind::Lclt => {
            let symbol = WalkSymbol::new(d, alpha)?;
            let density = StableDensity::new(d, alpha)?;
            let reports: Vec<LcltReport> = plan
                .s_grid
                .iter()
                .map(|&s| lclt_discrepancy(&symbol, &density, 1.0, s, plan.window))
                .collect::<Result<_>>()?;
            bundle.lclt = reports
                .iter()
                .map(|r| LcltRow {
                    s: r.s,
                    sup_discrepancy: r.sup_discrepancy,
                    origin_scaled: r.origin_scaled,
                    origin_limit: r.origin_limit,
                })
                .collect();
            bundle.summary = Summary::Lclt { window: plan.window, reports };
        }
    }
    Ok(bundle)
}

/// Paths of `plan.replicas` replicas on the plan's `t N` grid, no statistics.
pub fn simulate_paths(plan: &ExperimentPlan) -> Result<Vec<PathRow>> {
    plan.model.validate()?;
    let setup = Setup::new(plan)?;
    let times = plan.record_times();
    let grid = dedup_times(&times);
    let records = setup.run_replicas(plan.master_seed, 0..plan.replicas as u64, &grid, None, plan.workers)?;
    Ok(path_rows(&records, &times, &grid))
}

/// One line of an equilibrium snapshot histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub k: u32,
    pub count: u64,
    pub expected: f64,
}

/// Profile of the plan's model and the occupancy histogram of one sampled
/// configuration against `L^d pmf`.
pub fn sample_equilibrium(plan: &ExperimentPlan) -> Result<(EquilibriumProfile, Vec<SnapshotRow>)> {
    let setup = Setup::new(plan)?;
    let config = setup.initial_configuration(plan.master_seed, 0)?;
    let sites = config.n_sites() as f64;
    let kmax = config.occupancy().iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; kmax.max(setup.profile.k_trunc) + 1];
    for &k in config.occupancy() {
        counts[k as usize] += 1;
    }
    let rows = counts
        .iter()
        .enumerate()
        .map(|(k, &count)| SnapshotRow { k: k as u32, count, expected: sites * setup.profile.pmf_at(k) })
        .take_while(|r| r.count > 0 || r.expected >= 1e-12)
        .collect();
    Ok((setup.profile, rows))
}

fn dedup_times(times: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut grid: Vec<f64> = times.iter().map(|x| x.2).collect();
    grid.dedup();
    grid
}

fn path_rows(records: &[ReplicaRecord], times: &[(f64, f64, f64)], grid: &[f64]) -> Vec<PathRow> {
    let mut rows = Vec::new();
    for rec in records {
        for (site, vals) in rec.values.iter().enumerate() {
            for &(n, t, tn) in times {
                let j = grid.iter().position(|&g| g == tn).expect("time on grid");
                rows.push(PathRow { replica: rec.index, site: site as u32, n, t, a: vals[j] });
            }
        }
    }
    rows
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub plan: ExperimentPlan,
    pub operations: Vec<String>,
    pub files: Vec<String>,
    pub wall_seconds: f64,
    pub complete: bool,
    pub error: Option<String>,
}

fn operations(kind: ExperimentKind) -> Vec<String> {
    let ops: &[&str] = match kind {
        ExperimentKind::Stationarity => &["sample_configuration", "advance_until", "chi_square"],
        ExperimentKind::Autocov => &["sample_configuration", "advance_until", "autocovariance", "integrated_autocovariance", "relaxation_constant"],
        ExperimentKind::Scaling => &["sample_configuration", "record_functional", "variance_scaling", "integrated_autocovariance"],
        ExperimentKind::FddLaw => &["sample_configuration", "record_functional", "theorem_coefficient", "hurst_and_law_check"],
        ExperimentKind::Lclt => &["transition_probability", "stable_density_at_origin", "lclt_discrepancy"],
        ExperimentKind::Constants => &[],
    };
    ops.iter().chain(&["theorem_coefficient", "relaxation_constant"]).map(|s| s.to_string()).collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> ZrpError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => ZrpError::Io(io),
            _ => unreachable!(),
        }
    } else {
        ZrpError::Plan(format!("csv: {e}"))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes the bundle's files into `dir` and returns their names.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["summary.json".to_string(), "constants.json".to_string()];
    write_json(&dir.join("summary.json"), &bundle.summary)?;
    write_json(&dir.join("constants.json"), &bundle.constants)?;
    if !bundle.paths.is_empty() {
        write_csv(&dir.join("paths.csv"), &bundle.paths)?;
        files.push("paths.csv".into());
    }
    if !bundle.series.is_empty() {
        write_csv(&dir.join("series.csv"), &bundle.series)?;
        files.push("series.csv".into());
    }
    if !bundle.histogram.is_empty() {
        write_csv(&dir.join("histogram.csv"), &bundle.histogram)?;
        files.push("histogram.csv".into());
    }
    if !bundle.lclt.is_empty() {
        write_csv(&dir.join("lclt.csv"), &bundle.lclt)?;
        files.push("lclt.csv".into());
    }
    Ok(files)
}

/// `run_plan` + `write_bundle` + `manifest.json`; on failure the manifest is
/// written with `complete: false`.
pub fn execute(plan: &ExperimentPlan, dir: &Path) -> Result<ResultBundle> {
    let start = Instant::now();
    let outcome = run_plan(plan).and_then(|b| write_bundle(&b, dir).map(|files| (b, files)));
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        artifact_version: ARTIFACT_VERSION.into(),
        plan: plan.clone(),
        operations: operations(plan.experiment),
        files: Vec::new(),
        wall_seconds: 0.0,
        complete: false,
        error: None,
    };
    let result = match outcome {
        Ok((bundle, files)) => {
            manifest.files = files;
            manifest.complete = true;
            Ok(bundle)
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            Err(e)
        }
    };
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    write_json(&dir.join("manifest.json"), &manifest)?;
    result
}

/// Verdicts of `verify`.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub experiment: ExperimentKind,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl VerifyReport {
    fn new(experiment: ExperimentKind, verdicts: Vec<Verdict>) -> Self {
        let pass = verdicts.iter().all(|v| v.pass);
        Self { experiment, verdicts, pass }
    }

    /// Fixed-width verdict table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<34} {:>14} {:>14} {:>12} {:>12}  result\n", "check", "target", "estimate", "se", "tolerance");
        for v in &self.verdicts {
            let se = v.se.map_or("-".to_string(), |s| format!("{s:.6}"));
            out.push_str(&format!(
                "{:<34} {:>14.6} {:>14.6} {:>12} {:>12.6}  {}\n",
                v.check,
                v.target,
                v.estimate,
                se,
                v.tolerance,
                if v.pass { "PASS" } else { "FAIL" }
            ));
        }
        out.push_str(if self.pass { "overall: PASS\n" } else { "overall: FAIL\n" });
        out
    }
}

fn at_least(check: &str, required: usize, got: usize) -> Verdict {
    Verdict {
        check: check.into(),
        target: required as f64,
        estimate: got as f64,
        se: None,
        tolerance: 0.0,
        pass: got >= required,
    }
}

fn required_passes(total: usize, fraction: f64) -> usize {
    (fraction * total as f64 - 1e-9).ceil() as usize
}

fn read_summary(dir: &Path) -> Result<serde_json::Value> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?)
}

fn need(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(ZrpError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("missing {}", path.display()))))
    }
}

/// Recomputes the plan's acceptance checks from the files in `dir`.
/// Errors mean the results are missing or unreadable.
pub fn verify(plan: &ExperimentPlan, dir: &Path) -> Result<VerifyReport> {
    plan.validate()?;
    let setup = Setup::new(plan)?;
    let (d, alpha) = (plan.model.d, plan.model.alpha);
    let mut verdicts = Vec::new();
    match plan.experiment {
        ExperimentKind::Constants => {
            let c: serde_json::Value = serde_json::from_str(&fs::read_to_string(need(dir.join("constants.json"))?)?)?;
            let theta = c.get("theta").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
            let law = setup.limit_law()?;
            verdicts.push(Verdict::within("theta", law.hurst, theta, 1e-12));
        }
        ExperimentKind::Stationarity => {
            let hist: Vec<HistogramRow> = read_csv(&need(dir.join("histogram.csv"))?)?;
            let runs = stationarity_outcomes(plan, &setup.profile, &hist)?;
            let passes = runs.iter().filter(|r| r.test.p_value > RUN_LEVEL).count();
            verdicts.push(at_least("runs with p > 0.01", required_passes(plan.replicas, 0.9), passes));
        }
        ExperimentKind::Autocov => {
            let series: Vec<SeriesRow> = read_csv(&need(dir.join("series.csv"))?)?;
            let acf = autocov_of(plan, &series)?;
            let relax = relaxation_constant(d, alpha, &setup.profile, &setup.observable)?;
            for row in relaxation_rows(plan, &acf)? {
                verdicts.push(Verdict::within_se(
                    format!("C(2t) h(t)^d at t={}", row.t),
                    relax,
                    row.scaled,
                    row.scaled_se,
                    RELAXATION_TOLERANCE_SE,
                ));
            }
            if let Some(range) = plan.fit_range {
                let fit = decay_fit(plan, &acf, range)?;
                verdicts.push(Verdict::within("decay exponent", fit.expected, fit.exponent, DECAY_TOLERANCE));
            }
        }
        ExperimentKind::Scaling => {
            let paths: Vec<PathRow> = read_csv(&need(dir.join("paths.csv"))?)?;
            let target = expected_slope(d, alpha, &plan.n_grid)?;
            let fits = scaling_fits(plan, &paths)?;
            for fit in &fits {
                verdicts.push(Verdict::within(format!("slope t={}", fit.t), target, fit.slope, plan.slope_tolerance));
            }
            if plan.sample_dt.is_some() && sigma_is_finite(d, alpha) {
                let summary = read_summary(dir)?;
                let s2 = summary
                    .pointer("/diffusive/sigma2")
                    .cloned()
                    .ok_or_else(|| ZrpError::Plan("summary.json lacks diffusive.sigma2".into()))?;
                let ia = IntegratedAutocovariance {
                    sigma2: s2.get("sigma2").and_then(|v| v.as_f64()).unwrap_or(f64::NAN),
                    se: s2.get("se").and_then(|v| v.as_f64()).unwrap_or(f64::NAN),
                    cutoff_lag: s2.get("cutoff_lag").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
                };
                let check = diffusive_check(fits.last().expect("nonempty t_grid"), ia);
                verdicts.push(Verdict::within(
                    "Var A(N)/N vs sigma^2",
                    check.sigma2.sigma2,
                    check.pooled,
                    KV_TOLERANCE * check.sigma2.sigma2,
                ));
            }
        }
        ExperimentKind::FddLaw => {
            let paths: Vec<PathRow> = read_csv(&need(dir.join("paths.csv"))?)?;
            let law = setup.limit_law()?;
            let sigma = match law.scale {
                Scale::Value(_) => None,
                Scale::Measured => {
                    let summary = read_summary(dir)?;
                    summary.pointer("/sigma_estimate/sigma2").and_then(|v| v.as_f64()).map(f64::sqrt)
                }
            };
            let reports = law_reports(plan, &law, &paths, sigma)?;
            if plan.ensembles == 1 {
                verdicts.extend(reports[0].verdicts.iter().cloned());
            } else {
                let passes = reports.iter().filter(|r| r.pass).count();
                verdicts.push(at_least("ensembles passing", required_passes(plan.ensembles, 0.8), passes));
            }
        }
        ExperimentKind::Lclt => {
            let rows: Vec<LcltRow> = read_csv(&need(dir.join("lclt.csv"))?)?;
            if rows.len() != plan.s_grid.len() {
                return Err(ZrpError::Plan("lclt.csv does not match s_grid".into()));
            }
            let decreasing = rows.windows(2).all(|w| w[1].sup_discrepancy < w[0].sup_discrepancy);
            verdicts.push(Verdict {
                check: "sup discrepancy decreasing".into(),
                target: 1.0,
                estimate: if decreasing { 1.0 } else { 0.0 },
                se: None,
                tolerance: 0.0,
                pass: decreasing,
            });
            let last = rows.last().expect("nonempty s_grid");
            verdicts.push(Verdict::within(
                format!("h^d p_s(0,0) / f_1(0) at s={}", last.s),
                1.0,
                last.origin_scaled / last.origin_limit,
                LCLT_ORIGIN_TOLERANCE,
            ));
        }
    }
    Ok(VerifyReport::new(plan.experiment, verdicts))
}
