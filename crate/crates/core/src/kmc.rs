//! Exact event-driven simulation of the long-range zero-range dynamics on a torus.
//!
//! The total rate factorizes as `S * sum_x c(eta(x))` because the kernel is the
//! same at every site, so an event is: exponential clock, source site drawn
//! proportionally to `c(eta(x))` from a sum tree, displacement drawn from an
//! alias table over all nonzero torus displacements.

use std::io::{Read, Write};

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Exp1;

use crate::error::{Result, ZrpError};
use crate::model::{kernel_mass, kernel_weight, ModelSpec, RateFamily, TorusGeometry};

const FANOUT: usize = 8;

/// Inclusive prefix sums of eight weights, evaluated as a depth-3 tree; the
/// sequence is nondecreasing under rounding.
#[inline]
fn prefix_sums(c: &[f64]) -> [f64; FANOUT] {
    let p01 = c[0] + c[1];
    let p23 = c[2] + c[3];
    let p45 = c[4] + c[5];
    let p67 = c[6] + c[7];
    let p03 = p01 + p23;
    let p47 = p45 + p67;
    [c[0], p01, p01 + c[2], p03, p03 + c[4], p03 + p45, p03 + (p45 + c[6]), p03 + p47]
}

/// Sum tree with fanout 8 over per-site weights. Every node keeps the inclusive
/// prefix sums of its eight children, so descending is a compare-and-count per
/// level. Nodes are always recomputed from their children, so cached totals
/// never drift.
#[derive(Debug, Clone)]
pub struct RateIndex {
    weights: Vec<f64>,
    /// `prefix[l]`: children prefix sums of the nodes at height `l + 1`
    prefix: Vec<Vec<f64>>,
    /// `sums[l]`: subtree totals at height `l + 1` (the inputs of `prefix[l + 1]`)
    sums: Vec<Vec<f64>>,
    len: usize,
}

impl RateIndex {
    pub fn new(weights: &[f64]) -> Self {
        let len = weights.len();
        let mut height = 1;
        while FANOUT.pow(height as u32) < len.max(1) {
            height += 1;
        }
        let mut padded = vec![0.0; FANOUT.pow(height as u32)];
        padded[..len].copy_from_slice(weights);
        let mut prefix = Vec::with_capacity(height);
        let mut sums = Vec::with_capacity(height);
        for l in 0..height {
            let nodes = FANOUT.pow((height - l - 1) as u32);
            prefix.push(vec![0.0; nodes * FANOUT]);
            sums.push(vec![0.0; nodes]);
        }
        let mut index = Self { weights: padded, prefix, sums, len };
        for l in 0..height {
            for node in 0..index.sums[l].len() {
                index.recompute(l, node);
            }
        }
        index
    }

    #[inline]
    fn recompute(&mut self, level: usize, node: usize) {
        let children = if level == 0 { &self.weights } else { &self.sums[level - 1] };
        let p = prefix_sums(&children[FANOUT * node..FANOUT * node + FANOUT]);
        self.prefix[level][FANOUT * node..FANOUT * node + FANOUT].copy_from_slice(&p);
        self.sums[level][node] = p[FANOUT - 1];
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sums[self.sums.len() - 1][0]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, w: f64) {
        self.weights[i] = w;
        let mut node = i;
        for l in 0..self.prefix.len() {
            node /= FANOUT;
            self.recompute(l, node);
        }
    }

    /// Leaf `i` with probability `weight(i) / total()`, given `u` uniform on [0, 1).
    #[inline]
    pub fn find(&self, u: f64) -> usize {
        let mut target = u * self.total();
        let mut node = 0;
        for level in self.prefix.iter().rev() {
            let cum = &level[FANOUT * node..FANOUT * node + FANOUT];
            let mut chosen = 0;
            for &p in cum {
                chosen += usize::from(p <= target);
            }
            if chosen == FANOUT {
                // rounding put the target at the node total: take the last positive child
                chosen = (0..FANOUT).rev().find(|&j| cum[j] > if j == 0 { 0.0 } else { cum[j - 1] }).unwrap_or(0);
                target = if chosen == 0 { 0.0 } else { cum[chosen - 1] };
            }
            if chosen > 0 {
                target -= cum[chosen - 1];
            }
            node = FANOUT * node + chosen;
        }
        node
    }
}

/// Alias table over every nonzero minimal-image displacement of the torus.
#[derive(Debug, Clone)]
pub struct DisplacementSampler {
    side: usize,
    d: usize,
    /// per-axis offsets reduced to `[0, L)`, `d` entries per displacement
    offsets: Vec<u32>,
    displacements: Vec<i64>,
    weights: Vec<f64>,
    mass: f64,
    alias: WeightedAliasIndex<f64>,
}

impl DisplacementSampler {
    pub fn new(geometry: &TorusGeometry, alpha: f64) -> Result<Self> {
        let d = geometry.dim();
        let side = geometry.side();
        let all = geometry.displacements();
        let mut offsets = Vec::with_capacity(all.len() * d);
        let mut displacements = Vec::with_capacity(all.len() * d);
        let mut weights = Vec::with_capacity(all.len());
        for dx in &all {
            weights.push(kernel_weight(dx, alpha));
            for &c in dx {
                displacements.push(c);
                offsets.push(c.rem_euclid(side as i64) as u32);
            }
        }
        let mass = kernel_mass(geometry, alpha);
        let alias = WeightedAliasIndex::new(weights.clone())
            .map_err(|e| ZrpError::InvalidModel(format!("displacement table: {e}")))?;
        Ok(Self { side, d, offsets, displacements, weights, mass, alias })
    }

    pub fn for_spec(spec: &ModelSpec) -> Result<Self> {
        Self::new(&spec.geometry(), spec.alpha)
    }

    /// Torus kernel mass `S`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Probability of displacement `index`.
    pub fn probability(&self, index: usize) -> f64 {
        self.weights[index] / self.mass
    }

    pub fn displacement(&self, index: usize) -> &[i64] {
        &self.displacements[index * self.d..(index + 1) * self.d]
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// Site reached from `source` by displacement `index`.
    #[inline]
    pub fn destination(&self, source: usize, index: usize) -> usize {
        if self.d == 1 {
            let dest = source + self.offsets[index] as usize;
            return if dest >= self.side { dest - self.side } else { dest };
        }
        let offs = &self.offsets[index * self.d..(index + 1) * self.d];
        let mut rest = source;
        let mut out = 0;
        let mut stride = 1;
        for axis in (0..self.d).rev() {
            let c = rest % self.side;
            rest /= self.side;
            let mut m = c + offs[axis] as usize;
            if m >= self.side {
                m -= self.side;
            }
            out += m * stride;
            stride *= self.side;
        }
        out
    }
}

/// How the source site of the next jump is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectorKind {
    /// particle list for linear rates, sum tree otherwise
    #[default]
    Auto,
    /// sum tree over `c(eta(x))` regardless of the family
    Tree,
}

/// Source selection state. With linear rates `c(eta(x)) / sum c` is the
/// fraction of particles sitting at `x`, so a uniformly chosen particle's
/// site has exactly the right law and costs O(1).
#[derive(Debug, Clone)]
enum SourceSelector {
    Tree(RateIndex),
    Particles { sites: Vec<u32>, rate_sum: f64 },
}

/// Occupancy field with cached per-site rates and the Kahan-compensated clock.
#[derive(Debug, Clone)]
pub struct Configuration {
    occupancy: Vec<u32>,
    selector: SourceSelector,
    family: RateFamily,
    kernel_mass: f64,
    total_particles: u64,
    time: f64,
    time_carry: f64,
}

impl Configuration {
    pub fn new(spec: &ModelSpec, occupancy: Vec<u32>) -> Self {
        Self::with_geometry(&spec.geometry(), spec.alpha, spec.rate, occupancy)
    }

    pub fn with_geometry(geometry: &TorusGeometry, alpha: f64, family: RateFamily, occupancy: Vec<u32>) -> Self {
        Self::with_selector(geometry, alpha, family, occupancy, SelectorKind::Auto)
    }

    pub fn with_selector(
        geometry: &TorusGeometry,
        alpha: f64,
        family: RateFamily,
        occupancy: Vec<u32>,
        kind: SelectorKind,
    ) -> Self {
        assert_eq!(occupancy.len(), geometry.n_sites(), "occupancy length must match the torus");
        let total_particles: u64 = occupancy.iter().map(|&k| u64::from(k)).sum();
        let selector = match (family, kind) {
            (RateFamily::Linear { a }, SelectorKind::Auto) => {
                let mut sites = Vec::with_capacity(total_particles as usize);
                for (x, &k) in occupancy.iter().enumerate() {
                    sites.extend(std::iter::repeat_n(x as u32, k as usize));
                }
                SourceSelector::Particles { sites, rate_sum: a * total_particles as f64 }
            }
            _ => {
                let weights: Vec<f64> = occupancy.iter().map(|&k| family.rate(k)).collect();
                SourceSelector::Tree(RateIndex::new(&weights))
            }
        };
        Self {
            selector,
            occupancy,
            family,
            kernel_mass: kernel_mass(geometry, alpha),
            total_particles,
            time: 0.0,
            time_carry: 0.0,
        }
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    #[inline]
    pub fn at(&self, site: usize) -> u32 {
        self.occupancy[site]
    }

    pub fn n_sites(&self) -> usize {
        self.occupancy.len()
    }

    pub fn total_particles(&self) -> u64 {
        self.total_particles
    }

    pub fn family(&self) -> &RateFamily {
        &self.family
    }

    pub fn kernel_mass(&self) -> f64 {
        self.kernel_mass
    }

    pub fn sim_time(&self) -> f64 {
        self.time
    }

    /// The sum tree, when the tree selector is in use.
    pub fn rate_index(&self) -> Option<&RateIndex> {
        match &self.selector {
            SourceSelector::Tree(t) => Some(t),
            SourceSelector::Particles { .. } => None,
        }
    }

    /// Cached `sum_x c(eta(x))`.
    #[inline]
    pub fn rate_sum(&self) -> f64 {
        match &self.selector {
            SourceSelector::Tree(t) => t.total(),
            SourceSelector::Particles { rate_sum, .. } => *rate_sum,
        }
    }

    /// Resets the clock (the occupancy is untouched).
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
        self.time_carry = 0.0;
    }

    #[inline]
    fn add_time(&mut self, dt: f64) {
        let y = dt - self.time_carry;
        let t = self.time + y;
        self.time_carry = (t - self.time) - y;
        self.time = t;
    }

    /// Sum of `c(eta(x))` recomputed from the occupancies, and the cached value.
    pub fn audit(&self) -> (f64, f64) {
        let fresh: f64 = self.occupancy.iter().map(|&k| self.family.rate(k)).sum();
        (fresh, self.rate_sum())
    }

    /// True if the selector state matches the occupancies: every tree leaf
    /// equals `c(eta(x))`, or the particle list has `eta(x)` entries at `x`.
    pub fn leaves_consistent(&self) -> bool {
        match &self.selector {
            SourceSelector::Tree(t) => {
                self.occupancy.iter().enumerate().all(|(x, &k)| t.weight(x) == self.family.rate(k))
            }
            SourceSelector::Particles { sites, .. } => {
                let mut counts = vec![0u32; self.occupancy.len()];
                for &x in sites {
                    counts[x as usize] += 1;
                }
                counts == self.occupancy
            }
        }
    }

    #[inline]
    fn choose_source<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        match &self.selector {
            SourceSelector::Tree(t) => (t.find(rng.random()), 0),
            SourceSelector::Particles { sites, .. } => {
                let slot = rng.random_range(0..sites.len());
                (sites[slot] as usize, slot)
            }
        }
    }

    #[inline]
    fn move_particle(&mut self, source: usize, dest: usize, slot: usize) {
        let k = self.occupancy[source] - 1;
        self.occupancy[source] = k;
        let m = self.occupancy[dest] + 1;
        self.occupancy[dest] = m;
        match &mut self.selector {
            SourceSelector::Tree(t) => {
                t.set(source, self.family.rate(k));
                t.set(dest, self.family.rate(m));
            }
            SourceSelector::Particles { sites, .. } => sites[slot] = dest as u32,
        }
    }

    /// Binary checkpoint: version byte, f64 LE time, u64 LE site count, u32 LE occupancies.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&[CHECKPOINT_VERSION])?;
        out.write_all(&self.time.to_le_bytes())?;
        out.write_all(&(self.occupancy.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * self.occupancy.len());
        for k in &self.occupancy {
            buf.extend_from_slice(&k.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R, spec: &ModelSpec) -> Result<Self> {
        let mut version = [0u8; 1];
        input.read_exact(&mut version)?;
        if version[0] != CHECKPOINT_VERSION {
            return Err(ZrpError::Checkpoint(format!("unsupported version {}", version[0])));
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let time = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let expected = spec.geometry().n_sites();
        if n != expected {
            return Err(ZrpError::Checkpoint(format!("checkpoint has {n} sites, model has {expected}")));
        }
        let mut raw = vec![0u8; 4 * n];
        input.read_exact(&mut raw)?;
        let occupancy = raw.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let mut config = Self::new(spec, occupancy);
        config.set_time(time);
        Ok(config)
    }
}

pub const CHECKPOINT_VERSION: u8 = 1;

/// `S * sum_x c(eta(x))`.
#[inline]
pub fn total_rate(config: &Configuration) -> f64 {
    config.kernel_mass * config.rate_sum()
}

/// One fired jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time_increment: f64,
    pub source: usize,
    pub destination: usize,
    /// index into the sampler's displacement table
    pub displacement: usize,
}

/// Next event plus the particle slot it moves (particle selector only).
#[inline]
fn draw<R: Rng + ?Sized>(config: &Configuration, sampler: &DisplacementSampler, rng: &mut R) -> Result<(Event, usize)> {
    let rate = total_rate(config);
    if !(rate > 0.0) {
        return Err(ZrpError::Stall);
    }
    let e: f64 = rng.sample(Exp1);
    let time_increment = e / rate;
    let (source, slot) = config.choose_source(rng);
    let displacement = sampler.sample(rng);
    let destination = sampler.destination(source, displacement);
    Ok((Event { time_increment, source, destination, displacement }, slot))
}

/// Draws and applies one event.
pub fn step<R: Rng + ?Sized>(config: &mut Configuration, sampler: &DisplacementSampler, rng: &mut R) -> Result<Event> {
    let (event, slot) = draw(config, sampler, rng)?;
    config.add_time(event.time_increment);
    config.move_particle(event.source, event.destination, slot);
    Ok(event)
}

/// Callbacks along a trajectory.
pub trait Observer {
    /// The configuration held for `dt` time units starting at `config.sim_time()`.
    fn on_interval(&mut self, config: &Configuration, dt: f64);

    /// Called after `event` has been applied.
    fn on_event(&mut self, _config: &Configuration, _event: &Event) {}
}

impl Observer for () {
    #[inline]
    fn on_interval(&mut self, _: &Configuration, _: f64) {}
}

impl<T: Observer + ?Sized> Observer for &mut T {
    #[inline]
    fn on_interval(&mut self, config: &Configuration, dt: f64) {
        (**self).on_interval(config, dt);
    }

    #[inline]
    fn on_event(&mut self, config: &Configuration, event: &Event) {
        (**self).on_event(config, event);
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    #[inline]
    fn on_interval(&mut self, config: &Configuration, dt: f64) {
        self.0.on_interval(config, dt);
        self.1.on_interval(config, dt);
    }

    #[inline]
    fn on_event(&mut self, config: &Configuration, event: &Event) {
        self.0.on_event(config, event);
        self.1.on_event(config, event);
    }
}

impl Observer for [&mut dyn Observer] {
    fn on_interval(&mut self, config: &Configuration, dt: f64) {
        for o in self.iter_mut() {
            o.on_interval(config, dt);
        }
    }

    fn on_event(&mut self, config: &Configuration, event: &Event) {
        for o in self.iter_mut() {
            o.on_event(config, event);
        }
    }
}

/// Counts events and records the intervals seen.
#[derive(Debug, Default, Clone)]
pub struct EventCounter {
    pub events: u64,
    pub intervals: u64,
    pub elapsed: f64,
}

impl Observer for EventCounter {
    fn on_interval(&mut self, _: &Configuration, dt: f64) {
        self.intervals += 1;
        self.elapsed += dt;
    }

    fn on_event(&mut self, _: &Configuration, _: &Event) {
        self.events += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    pub sim_time: f64,
}

/// Fires events until the next one would land after `t_end`; the clock is
/// then set to `t_end` (the overshoot is discarded, which is exact for
/// exponential clocks).
pub fn advance_until<R, O>(
    config: &mut Configuration,
    sampler: &DisplacementSampler,
    t_end: f64,
    observer: &mut O,
    rng: &mut R,
) -> Result<RunSummary>
where
    R: Rng + ?Sized,
    O: Observer + ?Sized,
{
    if t_end < config.time {
        return Err(ZrpError::Domain(format!("t_end {t_end} is before the current time {}", config.time)));
    }
    let mut events = 0;
    if t_end > config.time {
        loop {
            let (event, slot) = draw(config, sampler, rng)?;
            if config.time + event.time_increment > t_end {
                break;
            }
            observer.on_interval(config, event.time_increment);
            config.add_time(event.time_increment);
            config.move_particle(event.source, event.destination, slot);
            observer.on_event(config, &event);
            events += 1;
        }
    }
    observer.on_interval(config, t_end - config.time);
    config.set_time(t_end);
    Ok(RunSummary { events, sim_time: t_end })
}
