//! Local observables and exact additive functionals `A(t) = int_0^t V(eta_s) ds`
//! along piecewise-constant trajectories.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{fugacity_of_density, sample_configuration, EquilibriumProfile};
use crate::error::{Result, ZrpError};
use crate::kmc::{advance_until, Configuration, DisplacementSampler, Event, Observer};
use crate::model::{ModelSpec, RateFamily, TorusGeometry};

/// Compensated (Kahan-Babuska) running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Value table of a user observable over occupancy tuples `(k_1, .., k_m)`,
/// `k_i <= cap`, stored row-major with the last site fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTable {
    /// site offsets from the origin
    pub sites: Vec<Vec<i64>>,
    pub cap: u32,
    /// exponent `k` of the polynomial bound
    pub degree: f64,
    pub values: Vec<f64>,
}

impl CustomTable {
    pub fn from_fn<F: Fn(&[u32]) -> f64>(sites: Vec<Vec<i64>>, cap: u32, degree: f64, f: F) -> Self {
        let m = sites.len();
        let size = (cap as usize + 1).pow(m as u32);
        let mut values = Vec::with_capacity(size);
        let mut tuple = vec![0u32; m];
        for idx in 0..size {
            let mut rest = idx;
            for slot in tuple.iter_mut().rev() {
                *slot = (rest % (cap as usize + 1)) as u32;
                rest /= cap as usize + 1;
            }
            values.push(f(&tuple));
        }
        Self { sites, cap, degree, values }
    }

    fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(ZrpError::InvalidModel("custom observable needs at least one site".into()));
        }
        let expected = (self.cap as usize + 1).checked_pow(self.sites.len() as u32);
        if expected != Some(self.values.len()) {
            return Err(ZrpError::InvalidModel(format!(
                "custom observable table has {} values, expected (cap+1)^{} = {:?}",
                self.values.len(),
                self.sites.len(),
                expected
            )));
        }
        if !(self.degree > 0.0) {
            return Err(ZrpError::InvalidModel("polynomial bound degree must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    fn index(&self, tuple: impl Iterator<Item = u32>) -> Result<usize> {
        let base = self.cap as usize + 1;
        let mut idx = 0;
        for k in tuple {
            if k > self.cap {
                return Err(ZrpError::CapExceeded { cap: self.cap, occupancy: k });
            }
            idx = idx * base + k as usize;
        }
        Ok(idx)
    }

    /// `E V` under the product measure with marginal `pmf`, over tuples up to the cap.
    fn product_mean(&self, pmf: &[f64]) -> f64 {
        let base = self.cap as usize + 1;
        let m = self.sites.len();
        let mut total = CompensatedSum::default();
        for (idx, v) in self.values.iter().enumerate() {
            let mut rest = idx;
            let mut w = 1.0;
            for _ in 0..m {
                w *= pmf.get(rest % base).copied().unwrap_or(0.0);
                rest /= base;
            }
            total.add(v * w);
        }
        total.value()
    }
}

/// Which local function is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    /// `eta(0) - gamma`
    Occupation,
    /// `c(eta(0)) - beta`
    RateCentered,
    /// table value minus its mean under the product measure
    WindowCustom(CustomTable),
}

/// A centered local observable resolved against an equilibrium profile.
#[derive(Debug, Clone, Serialize)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    /// `M_V`: every site the value depends on is within this distance of the origin
    pub window_radius: f64,
    /// mean of the centered observable (zero up to rounding)
    pub vbar: f64,
    pub vbar_prime: f64,
    /// the constant subtracted from the raw value
    pub center: f64,
    /// `|V| <= bound_constant * (1 + sum_window eta)^degree`
    pub degree: f64,
    pub bound_constant: f64,
    #[serde(skip)]
    family: RateFamily,
}

impl ObservableSpec {
    pub fn new(kind: ObservableKind, profile: &EquilibriumProfile) -> Result<Self> {
        let family = profile.family;
        let (_, c_plus) = family.increment_bounds();
        let (radius, center, degree, bound_constant) = match &kind {
            ObservableKind::Occupation => (0.0, profile.gamma, 1.0, profile.gamma.max(1.0)),
            ObservableKind::RateCentered => {
                let offset = match family {
                    RateFamily::Linear { .. } => 0.0,
                    RateFamily::Affine { b, .. } => b.abs(),
                };
                (0.0, profile.beta, 1.0, c_plus + offset + profile.beta)
            }
            ObservableKind::WindowCustom(table) => {
                table.validate()?;
                let radius = table
                    .sites
                    .iter()
                    .map(|s| s.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                let center = table.product_mean(&profile.pmf);
                let base = table.cap as usize + 1;
                let mut bound: f64 = 0.0;
                for (idx, v) in table.values.iter().enumerate() {
                    let mut rest = idx;
                    let mut occupied = 0usize;
                    for _ in 0..table.sites.len() {
                        occupied += rest % base;
                        rest /= base;
                    }
                    bound = bound.max((v - center).abs() / (1.0 + occupied as f64).powf(table.degree));
                }
                (radius, center, table.degree, bound)
            }
        };
        let mut spec = Self {
            kind,
            window_radius: radius,
            vbar: 0.0,
            vbar_prime: 0.0,
            center,
            degree,
            bound_constant,
            family,
        };
        spec.vbar = spec.mean_under(profile) - center;
        spec.vbar_prime = vbar_prime_of(&spec, profile)?;
        Ok(spec)
    }

    /// Mean of the raw (uncentered) observable under the product measure of `profile`.
    fn mean_under(&self, profile: &EquilibriumProfile) -> f64 {
        match &self.kind {
            ObservableKind::Occupation => profile.gamma,
            ObservableKind::RateCentered => profile.mean_rate(),
            ObservableKind::WindowCustom(t) => t.product_mean(&profile.pmf),
        }
    }

    /// Centered value given the occupancies of the window sites, in the order
    /// of [`ObservableSpec::window_offsets`].
    pub fn evaluate(&self, window: &[u32]) -> Result<f64> {
        let needed = self.window_offsets().len();
        if window.len() < needed {
            return Err(ZrpError::WindowTooSmall { needed, got: window.len() });
        }
        let raw = match &self.kind {
            ObservableKind::Occupation => f64::from(window[0]),
            ObservableKind::RateCentered => self.family.rate(window[0]),
            ObservableKind::WindowCustom(t) => t.values[t.index(window.iter().copied().take(needed))?],
        };
        Ok(raw - self.center)
    }

    pub fn window_offsets(&self) -> Vec<Vec<i64>> {
        match &self.kind {
            ObservableKind::WindowCustom(t) => t.sites.clone(),
            _ => vec![vec![]],
        }
    }

    /// Binds the observable to the sites of a torus (origin at site 0).
    pub fn probe(&self, geometry: &TorusGeometry) -> Probe {
        self.probe_at(geometry, 0)
    }

    /// Binds the observable with its origin translated to `origin`.
    pub fn probe_at(&self, geometry: &TorusGeometry, origin: usize) -> Probe {
        let sites: Vec<usize> = self
            .window_offsets()
            .iter()
            .map(|off| if off.is_empty() { origin } else { geometry.shift(origin, off) })
            .collect();
        let mut mask = vec![false; geometry.n_sites()];
        for &s in &sites {
            mask[s] = true;
        }
        Probe { spec: self.clone(), sites, mask }
    }
}

/// `V'(gamma)` for a centered observable.
pub fn vbar_prime_of(obs: &ObservableSpec, profile: &EquilibriumProfile) -> Result<f64> {
    Ok(match &obs.kind {
        ObservableKind::Occupation => 1.0,
        ObservableKind::RateCentered => profile.beta_prime,
        ObservableKind::WindowCustom(t) => {
            let h = 1e-4 * profile.gamma;
            let up = fugacity_of_density(profile.gamma + h, &profile.family, 1e-14)?;
            let down = fugacity_of_density(profile.gamma - h, &profile.family, 1e-14)?;
            (t.product_mean(&up.pmf) - t.product_mean(&down.pmf)) / (2.0 * h)
        }
    })
}

/// Centered observable `obs` evaluated on `window` (spec-level entry point).
pub fn evaluate_observable(obs: &ObservableSpec, window: &[u32]) -> Result<f64> {
    obs.evaluate(window)
}

/// An observable bound to torus sites.
#[derive(Debug, Clone)]
pub struct Probe {
    spec: ObservableSpec,
    sites: Vec<usize>,
    mask: Vec<bool>,
}

impl Probe {
    pub fn spec(&self) -> &ObservableSpec {
        &self.spec
    }

    #[inline]
    pub fn touches(&self, event: &Event) -> bool {
        self.mask[event.source] || self.mask[event.destination]
    }

    #[inline]
    pub fn value(&self, config: &Configuration) -> Result<f64> {
        match &self.spec.kind {
            ObservableKind::Occupation => Ok(f64::from(config.at(self.sites[0])) - self.spec.center),
            ObservableKind::RateCentered => Ok(self.spec.family.rate(config.at(self.sites[0])) - self.spec.center),
            ObservableKind::WindowCustom(t) => {
                let idx = t.index(self.sites.iter().map(|&s| config.at(s)))?;
                Ok(t.values[idx] - self.spec.center)
            }
        }
    }

    /// Raw window occupancies, in the order of the observable's offsets.
    pub fn window(&self, config: &Configuration) -> Vec<u32> {
        self.sites.iter().map(|&s| config.at(s)).collect()
    }
}

/// `A` sampled on an increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalPath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub exact: bool,
}

/// Running `A(t)` of a step function with grid crossings split exactly.
#[derive(Debug, Clone)]
pub struct PathAccumulator {
    grid: Vec<f64>,
    next: usize,
    time: CompensatedSum,
    area: CompensatedSum,
    values: Vec<f64>,
}

impl PathAccumulator {
    pub fn new(grid: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        let mut acc = Self { grid, next: 0, time: CompensatedSum::default(), area: CompensatedSum::default(), values: vec![] };
        acc.record_due();
        Ok(acc)
    }

    fn record_due(&mut self) {
        while self.next < self.grid.len() && self.grid[self.next] <= self.time.value() {
            self.values.push(self.area.value());
            self.next += 1;
        }
    }

    /// Adds a piece of constant value `v` lasting `dt`.
    pub fn accumulate(&mut self, v: f64, dt: f64) {
        debug_assert!(dt >= 0.0);
        let mut remaining = dt;
        while self.next < self.grid.len() {
            let to_grid = self.grid[self.next] - self.time.value();
            if to_grid > remaining {
                break;
            }
            self.area.add(v * to_grid);
            self.time.add(to_grid);
            remaining -= to_grid;
            self.values.push(self.area.value());
            self.next += 1;
        }
        self.area.add(v * remaining);
        self.time.add(remaining);
    }

    pub fn area(&self) -> f64 {
        self.area.value()
    }

    pub fn finish(self) -> FunctionalPath {
        let exact = self.values.len() == self.grid.len();
        FunctionalPath { grid: self.grid, values: self.values, exact }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ZrpError::Domain("time grid must be finite, nonnegative and strictly increasing".into()));
    }
    Ok(())
}

/// Whether V is recomputed on every event or only when the window is touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    #[default]
    OnWindowTouch,
    EveryEvent,
}

/// Observer that integrates `V` along the trajectory.
pub struct Integrator<'a> {
    probe: &'a Probe,
    mode: Evaluation,
    current: f64,
    area: CompensatedSum,
    error: Option<ZrpError>,
}

impl<'a> Integrator<'a> {
    pub fn new(probe: &'a Probe, config: &Configuration, mode: Evaluation) -> Result<Self> {
        Ok(Self { probe, mode, current: probe.value(config)?, area: CompensatedSum::default(), error: None })
    }

    pub fn area(&self) -> f64 {
        self.area.value()
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn take_error(&mut self) -> Result<()> {
        match self.error.take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl Observer for Integrator<'_> {
    #[inline]
    fn on_interval(&mut self, _: &Configuration, dt: f64) {
        self.area.add(self.current * dt);
    }

    #[inline]
    fn on_event(&mut self, config: &Configuration, event: &Event) {
        if self.mode == Evaluation::EveryEvent || self.probe.touches(event) {
            match self.probe.value(config) {
                Ok(v) => self.current = v,
                Err(e) => {
                    if self.error.is_none() {
                        self.error = Some(e);
                    }
                }
            }
        }
    }
}

/// Integrates `V` at up to 64 probes at once. An area is brought up to date
/// only when its window is touched, so the cost per event does not grow with
/// the number of probes.
pub struct MultiIntegrator<'a> {
    probes: &'a [Probe],
    touch: Vec<u64>,
    current: Vec<f64>,
    since: Vec<f64>,
    area: Vec<CompensatedSum>,
    error: Option<ZrpError>,
}

impl<'a> MultiIntegrator<'a> {
    pub fn new(probes: &'a [Probe], config: &Configuration) -> Result<Self> {
        if probes.is_empty() || probes.len() > 64 {
            return Err(ZrpError::Domain(format!("1..=64 probes are supported, got {}", probes.len())));
        }
        let mut touch = vec![0u64; config.n_sites()];
        for (j, p) in probes.iter().enumerate() {
            for &s in &p.sites {
                touch[s] |= 1 << j;
            }
        }
        let current = probes.iter().map(|p| p.value(config)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            probes,
            touch,
            current,
            since: vec![config.sim_time(); probes.len()],
            area: vec![CompensatedSum::default(); probes.len()],
            error: None,
        })
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    /// `A` of probe `j` at time `t` (not before its last update).
    pub fn area_at(&self, j: usize, t: f64) -> f64 {
        self.area[j].value() + self.current[j] * (t - self.since[j])
    }

    pub fn current(&self, j: usize) -> f64 {
        self.current[j]
    }

    pub fn take_error(&mut self) -> Result<()> {
        match self.error.take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl Observer for MultiIntegrator<'_> {
    #[inline]
    fn on_interval(&mut self, _: &Configuration, _: f64) {}

    #[inline]
    fn on_event(&mut self, config: &Configuration, event: &Event) {
        let mut hit = self.touch[event.source] | self.touch[event.destination];
        if hit == 0 {
            return;
        }
        let now = config.sim_time();
        while hit != 0 {
            let j = hit.trailing_zeros() as usize;
            hit &= hit - 1;
            match self.probes[j].value(config) {
                Ok(v) => {
                    self.area[j].add(self.current[j] * (now - self.since[j]));
                    self.since[j] = now;
                    self.current[j] = v;
                }
                Err(e) => {
                    if self.error.is_none() {
                        self.error = Some(e);
                    }
                }
            }
        }
    }
}

/// Runs from `config` and returns `A` at each grid time (times relative to the
/// configuration's current clock).
pub fn record_from<R: Rng + ?Sized>(
    config: &mut Configuration,
    sampler: &DisplacementSampler,
    probe: &Probe,
    grid: &[f64],
    mode: Evaluation,
    rng: &mut R,
) -> Result<FunctionalPath> {
    check_grid(grid)?;
    let start = config.sim_time();
    let mut integrator = Integrator::new(probe, config, mode)?;
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        advance_until(config, sampler, start + t, &mut integrator, rng)?;
        integrator.take_error()?;
        values.push(integrator.area());
    }
    Ok(FunctionalPath { grid: grid.to_vec(), values, exact: true })
}

/// Samples an equilibrium start and records `A` on `grid`.
pub fn record_functional<R: Rng + ?Sized>(
    spec: &ModelSpec,
    profile: &EquilibriumProfile,
    obs: &ObservableSpec,
    grid: &[f64],
    rng: &mut R,
) -> Result<FunctionalPath> {
    let sampler = DisplacementSampler::for_spec(spec)?;
    let probe = obs.probe(&spec.geometry());
    let mut config = sample_configuration(rng, spec, profile);
    record_from(&mut config, &sampler, &probe, grid, Evaluation::OnWindowTouch, rng)
}

/// `V(eta_t)` at `t = 0, dt, 2 dt, ..` (n samples) from the current configuration.
pub fn sample_series<R: Rng + ?Sized>(
    config: &mut Configuration,
    sampler: &DisplacementSampler,
    probe: &Probe,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let start = config.sim_time();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if j > 0 {
            advance_until(config, sampler, start + j as f64 * dt, &mut (), rng)?;
        }
        out.push(probe.value(config)?);
    }
    Ok(out)
}
