//! The single long-range random walk on `Z^d`: its Fourier symbol, transition
//! probabilities by spectral inversion, the scale functions `h_alpha` and
//! `Lambda_{d,alpha}`, and the local limit discrepancy.
//!
//! The symbol `phi(k) = sum_{y != 0} (1 - cos k.y) |y|^{-(d+alpha)}` is summed
//! over the whole lattice with the same theta-function splitting used for the
//! lattice constants: the large-`u` half converges like `e^{-pi u}`, the
//! small-`u` half is Poisson-resummed and its non-decaying part
//! `1 - e^{-pi |k|^2 v / 4pi^2}` is integrated in closed form.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Result, ZrpError};
use crate::lattice::{power_tail_integral, tail_limit, unit_tail_nodes};
use crate::model::ModelSpec;
use crate::quadrature::{graded_oscillatory_points, GaussLegendre};
use crate::stable::StableDensity;

const EXP_CUTOFF: f64 = 46.0;
/// `e^{-pi v / 4}` is below 1e-20 here, the slowest Poisson-side decay.
const POISSON_UPPER: f64 = 60.0;

/// Agreement required between successive refinements of the inversion.
pub const INVERSION_TOL: f64 = 1e-10;
const MAX_REFINE: u32 = 7;
/// Frequencies where `t phi(k)` exceeds this contribute below `e^{-60}`.
const CUTOFF_EXPONENT: f64 = 60.0;
/// Budget for per-chunk partial sums in a contraction, in `f64`s.
const PARTIAL_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone)]
struct ThetaNode {
    /// quadrature weight times `u^{s-1}`
    weight: f64,
    theta0: f64,
    /// `e^{-pi n^2 u}` for `n = 1, 2, ...`
    decay: Vec<f64>,
}

#[derive(Debug, Clone)]
struct PoissonNode {
    /// quadrature weight times `v^{-nu-1}`
    weight: f64,
    v: f64,
    /// `e^{-pi m^2 v}` for `m = 1, 2, ...`
    gauss: Vec<f64>,
    /// `S(v, 0)^d - 1`
    excess: f64,
}

/// Fourier symbol of the walk with jump rates `|y|^{-(d+alpha)}`.
#[derive(Debug, Clone)]
pub struct WalkSymbol {
    d: usize,
    alpha: f64,
    nu: f64,
    prefactor: f64,
    harmonics: usize,
    theta: Vec<ThetaNode>,
    poisson: Vec<PoissonNode>,
}

impl WalkSymbol {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        if d == 0 {
            return Err(ZrpError::InvalidModel("dimension must be at least 1".into()));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(ZrpError::Divergent { alpha });
        }
        let df = d as f64;
        let s = 0.5 * (df + alpha);
        let nu = 0.5 * alpha;

        let upper = tail_limit(PI, s - 1.0, 4.0 * df);
        let (us, ws) = unit_tail_nodes(upper, 2.0);
        let theta: Vec<ThetaNode> = us
            .iter()
            .zip(&ws)
            .map(|(&u, &w)| {
                let decay: Vec<f64> = (1..)
                    .map(|n: i32| PI * f64::from(n * n) * u)
                    .take_while(|&e| e <= EXP_CUTOFF)
                    .map(|e| (-e).exp())
                    .collect();
                let theta0 = 1.0 + 2.0 * decay.iter().sum::<f64>();
                ThetaNode { weight: w * u.powf(s - 1.0), theta0, decay }
            })
            .collect();
        let harmonics = theta.iter().map(|n| n.decay.len()).max().unwrap_or(0);

        let (vs, ws) = poisson_nodes();
        let poisson = vs
            .iter()
            .zip(&ws)
            .map(|(&v, &w)| {
                // keep every m whose shifted exponent pi (m^2 - m) v can still be small
                let gauss: Vec<f64> = (1..)
                    .map(f64::from)
                    .take_while(|&m: &f64| PI * (m * m - m) * v <= EXP_CUTOFF)
                    .map(|m| (-PI * m * m * v).exp())
                    .collect();
                let excess = (df * (2.0 * gauss.iter().sum::<f64>()).ln_1p()).exp_m1();
                PoissonNode { weight: w * v.powf(-nu - 1.0), v, gauss, excess }
            })
            .collect();

        Ok(Self { d, alpha, nu, prefactor: PI.powf(s) / gamma(s), harmonics, theta, poisson })
    }

    pub fn for_spec(spec: &ModelSpec) -> Result<Self> {
        Self::new(spec.d, spec.alpha)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `phi(k)`; `k` is reduced to the Brillouin zone first.
    pub fn eval(&self, k: &[f64]) -> f64 {
        assert_eq!(k.len(), self.d, "wave vector has the wrong dimension");
        let reduced: Vec<f64> = k.iter().map(|&x| x - TAU * (x / TAU).round()).collect();
        if reduced.iter().all(|&x| x == 0.0) {
            return 0.0;
        }
        let h = self.harmonics;
        let mut sines = vec![0.0; self.d * h];
        for (j, &kj) in reduced.iter().enumerate() {
            for n in 0..h {
                let s = (0.5 * kj * (n + 1) as f64).sin();
                sines[j * h + n] = s * s;
            }
        }

        // theta0^d - prod theta(u, k_j), telescoped so no large terms cancel
        let mut large_u = 0.0;
        for node in &self.theta {
            let a = node.theta0;
            let mut prefix = 1.0;
            let mut acc = 0.0;
            for j in 0..self.d {
                let row = &sines[j * h..j * h + node.decay.len()];
                let gap = 4.0 * row.iter().zip(&node.decay).map(|(s, e)| s * e).sum::<f64>();
                acc += prefix * gap * a.powi((self.d - j - 1) as i32);
                prefix *= a - gap;
            }
            large_u += node.weight * acc;
        }

        let delta: Vec<f64> = reduced.iter().map(|&x| x / TAU).collect();
        let a2 = PI * delta.iter().map(|x| x * x).sum::<f64>();
        let dmax = delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let v_max = (1.0 + EXP_CUTOFF / (PI * (1.0 - dmax).powi(2))).min(POISSON_UPPER);
        let mut small_u = 0.0;
        for node in &self.poisson {
            if node.v > v_max {
                break;
            }
            // absolute, not relative, accuracy is needed here
            let prod: f64 = delta.iter().map(|&dl| 1.0 + shifted_excess(node, dl)).product();
            let shifted = (-a2 * node.v).exp() * (prod - 1.0);
            small_u += node.weight * (node.excess - shifted);
        }
        self.prefactor * (large_u + small_u + power_tail_integral(a2, self.nu))
    }
}

/// Gauss-Legendre nodes on `[1, POISSON_UPPER]`, narrow near 1 where the
/// `m >= 2` terms still matter and wide once only `m = 1` survives.
fn poisson_nodes() -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(20);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for (lo, hi, width) in [(1.0, 3.0, 1.0), (3.0, 7.0, 2.0), (7.0, 15.0, 4.0), (15.0, POISSON_UPPER + 3.0, 8.0)] {
        let (x, w) = rule.composite_points(lo, hi, ((hi - lo) / width) as usize);
        xs.extend(x);
        ws.extend(w);
    }
    (xs, ws)
}

/// `sum_{m != 0} e^{-pi (m^2 + 2 m delta) v}` for `|delta| <= 1/2`; even in `delta`.
fn shifted_excess(node: &PoissonNode, delta: f64) -> f64 {
    if delta == 0.0 {
        return 2.0 * node.gauss.iter().sum::<f64>();
    }
    let q = (TAU * delta.abs() * node.v).exp();
    let inv = 1.0 / q;
    let mut up = 1.0;
    let mut down = 1.0;
    let mut sum = 0.0;
    for g in &node.gauss {
        up *= q;
        down *= inv;
        sum += g * (up + down);
    }
    sum
}

/// `phi(k)` for the walk of `spec`.
pub fn symbol(k: &[f64], spec: &ModelSpec) -> Result<f64> {
    Ok(WalkSymbol::for_spec(spec)?.eval(k))
}

/// `p_t(0, x)` for every `x` whose coordinates are drawn from `targets`.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    pub d: usize,
    pub t: f64,
    pub targets: Vec<u64>,
    /// row-major over `targets^d`, first coordinate slowest
    pub values: Vec<f64>,
    pub nodes_per_axis: usize,
    /// max difference between the last two refinements
    pub achieved: f64,
}

impl TransitionTable {
    /// Value at the coordinate indices `idx` into `targets`.
    pub fn at_indices(&self, idx: &[usize]) -> f64 {
        let m = self.targets.len();
        let flat = idx.iter().fold(0usize, |acc, &i| acc * m + i);
        self.values[flat]
    }

    /// `p_t(0, x)`, if every `|x_i|` is among the targets.
    pub fn get(&self, x: &[i64]) -> Option<f64> {
        let idx: Option<Vec<usize>> = x
            .iter()
            .map(|c| self.targets.iter().position(|&t| t == c.unsigned_abs()))
            .collect();
        idx.map(|i| self.at_indices(&i))
    }
}

/// Largest frequency worth integrating: `t phi(k* e_1) = 60`, capped at `pi`.
fn frequency_cutoff(symbol: &WalkSymbol, t: f64) -> f64 {
    let along = |k: f64| {
        let mut v = vec![0.0; symbol.d];
        v[0] = k;
        symbol.eval(&v)
    };
    if t * along(PI) <= CUTOFF_EXPONENT {
        return PI;
    }
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if t * along(mid) > CUTOFF_EXPONENT {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Geometric levels needed near `k = 0` so the `|k|^alpha` cusp costs < 1e-13.
fn grading_levels(alpha: f64, upper: f64) -> usize {
    ((6e14 * upper).log2() / (1.0 + alpha)).ceil().clamp(6.0, 60.0) as usize
}

fn cos_row(k: f64, targets: &[u64], contiguous: bool, row: &mut [f64]) {
    if contiguous {
        let c1 = k.cos();
        let two_c1 = 2.0 * c1;
        let mut prev = 1.0;
        let mut cur = c1;
        for (j, slot) in row.iter_mut().enumerate() {
            match j {
                0 => *slot = 1.0,
                1 => *slot = c1,
                _ => {
                    let next = two_c1 * cur - prev;
                    prev = cur;
                    cur = next;
                    *slot = next;
                }
            }
        }
    } else {
        for (slot, &x) in row.iter_mut().zip(targets) {
            *slot = (k * x as f64).cos();
        }
    }
}

/// Contracts the leading axis (length `ks.len()`) of `tensor` against
/// `cos(k x)`, appending the target axis at the end.
fn contract(tensor: &[f64], ks: &[f64], targets: &[u64], contiguous: bool) -> Vec<f64> {
    let n = ks.len();
    let rest = tensor.len() / n;
    let m = targets.len();
    let chunks = (PARTIAL_BUDGET / (rest * m).max(1)).clamp(1, 64).min(n);
    let size = n.div_ceil(chunks);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut out = vec![0.0; rest * m];
            let mut row = vec![0.0; m];
            for i in c * size..((c + 1) * size).min(n) {
                cos_row(ks[i], targets, contiguous, &mut row);
                for r in 0..rest {
                    let a = tensor[i * rest + r];
                    if a == 0.0 {
                        continue;
                    }
                    for (o, &cv) in out[r * m..(r + 1) * m].iter_mut().zip(&row) {
                        *o += a * cv;
                    }
                }
            }
            out
        })
        .collect();
    let mut total = vec![0.0; rest * m];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

fn invert_once(symbol: &WalkSymbol, t: f64, targets: &[u64], upper: f64, refine: u32) -> Result<(Vec<f64>, usize)> {
    let rule = GaussLegendre::new(20);
    let xmax = targets.iter().copied().max().unwrap_or(0) as f64;
    let (ks, ws) = graded_oscillatory_points(&rule, upper, grading_levels(symbol.alpha, upper), xmax, refine);
    let n = ks.len();
    let d = symbol.d;
    let total = n.checked_pow(d as u32).filter(|&t| t <= 1 << 28).ok_or_else(|| {
        ZrpError::Domain(format!("{n}^{d} quadrature nodes exceed the inversion budget"))
    })?;
    let tensor: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rest = flat;
            let mut k = vec![0.0; d];
            let mut w = 1.0;
            for axis in (0..d).rev() {
                let i = rest % n;
                rest /= n;
                k[axis] = ks[i];
                w *= ws[i];
            }
            w * (-t * symbol.eval(&k)).exp()
        })
        .collect();
    let contiguous = targets.iter().enumerate().all(|(i, &x)| x == i as u64);
    let mut cur = tensor;
    for _ in 0..d {
        cur = contract(&cur, &ks, targets, contiguous);
    }
    let scale = PI.powi(-(d as i32));
    cur.iter_mut().for_each(|v| *v *= scale);
    Ok((cur, n))
}

/// Transition probabilities on `targets^d` by
/// `p_t(0, x) = pi^{-d} int_{[0, pi]^d} e^{-t phi(k)} prod cos(k_i x_i) dk`,
/// refining the node count until two refinements agree to [`INVERSION_TOL`].
pub fn transition_table(symbol: &WalkSymbol, t: f64, targets: &[u64]) -> Result<TransitionTable> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(ZrpError::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    let d = symbol.d;
    let m = targets.len();
    if t == 0.0 {
        let mut values = vec![0.0; m.pow(d as u32)];
        for (flat, v) in values.iter_mut().enumerate() {
            let mut rest = flat;
            let mut origin = true;
            for _ in 0..d {
                origin &= targets[rest % m] == 0;
                rest /= m;
            }
            *v = if origin { 1.0 } else { 0.0 };
        }
        return Ok(TransitionTable { d, t, targets: targets.to_vec(), values, nodes_per_axis: 0, achieved: 0.0 });
    }
    let upper = frequency_cutoff(symbol, t);
    let (mut prev, _) = invert_once(symbol, t, targets, upper, 0)?;
    let mut achieved = f64::INFINITY;
    for refine in 1..=MAX_REFINE {
        let (next, n) = invert_once(symbol, t, targets, upper, refine)?;
        achieved = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if achieved <= INVERSION_TOL {
            return Ok(TransitionTable { d, t, targets: targets.to_vec(), values: next, nodes_per_axis: n, achieved });
        }
        prev = next;
    }
    Err(ZrpError::Quadrature { achieved, target: INVERSION_TOL })
}

/// `p_t(0, x)` for a single site.
pub fn transition_probability(symbol: &WalkSymbol, t: f64, x: &[i64]) -> Result<f64> {
    if x.len() != symbol.d {
        return Err(ZrpError::Domain(format!("site has {} coordinates, walk has d={}", x.len(), symbol.d)));
    }
    let mut targets: Vec<u64> = x.iter().map(|c| c.unsigned_abs()).collect();
    targets.sort_unstable();
    targets.dedup();
    let table = transition_table(symbol, t, &targets)?;
    Ok(table.get(x).expect("every coordinate is a target"))
}

/// `p_t(0, x)` for `x = 0..=radius` in one dimension.
pub fn transition_row(symbol: &WalkSymbol, t: f64, radius: u64) -> Result<Vec<f64>> {
    if symbol.d != 1 {
        return Err(ZrpError::Domain("transition_row is one-dimensional".into()));
    }
    let targets: Vec<u64> = (0..=radius).collect();
    Ok(transition_table(symbol, t, &targets)?.values)
}

/// Which case of the scaling tables applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    D1AlphaBelowOne,
    D1AlphaOne,
    D1AlphaBetweenOneAndTwo,
    D1AlphaTwo,
    D1AlphaAboveTwo,
    D2AlphaBelowTwo,
    D2AlphaTwo,
    D2AlphaAboveTwo,
    D3Plus,
}

impl Regime {
    pub fn of(d: usize, alpha: f64) -> Self {
        match d {
            1 if alpha < 1.0 => Self::D1AlphaBelowOne,
            1 if alpha == 1.0 => Self::D1AlphaOne,
            1 if alpha < 2.0 => Self::D1AlphaBetweenOneAndTwo,
            1 if alpha == 2.0 => Self::D1AlphaTwo,
            1 => Self::D1AlphaAboveTwo,
            2 if alpha < 2.0 => Self::D2AlphaBelowTwo,
            2 if alpha == 2.0 => Self::D2AlphaTwo,
            2 => Self::D2AlphaAboveTwo,
            _ => Self::D3Plus,
        }
    }

    /// The normalizer `Lambda_{d,alpha}(N)` as a formula.
    pub fn lambda_rule(self) -> &'static str {
        match self {
            Self::D1AlphaBelowOne | Self::D2AlphaBelowTwo | Self::D3Plus => "sqrt(N)",
            Self::D1AlphaOne => "sqrt(N log N)",
            Self::D1AlphaBetweenOneAndTwo => "N^(1-1/(2 alpha))",
            Self::D1AlphaTwo => "N^(3/4) (log N)^(-1/4)",
            Self::D1AlphaAboveTwo => "N^(3/4)",
            Self::D2AlphaTwo => "sqrt(N log log N)",
            Self::D2AlphaAboveTwo => "sqrt(N log N)",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Self::D1AlphaBelowOne => "d=1, alpha<1",
            Self::D1AlphaOne => "d=1, alpha=1",
            Self::D1AlphaBetweenOneAndTwo => "d=1, 1<alpha<2",
            Self::D1AlphaTwo => "d=1, alpha=2",
            Self::D1AlphaAboveTwo => "d=1, alpha>2",
            Self::D2AlphaBelowTwo => "d=2, alpha<2",
            Self::D2AlphaTwo => "d=2, alpha=2",
            Self::D2AlphaAboveTwo => "d=2, alpha>2",
            Self::D3Plus => "d>=3",
        };
        f.write_str(text)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(ZrpError::Domain(format!("alpha must be positive, got {alpha}")))
    }
}

fn log_arg(x: f64, what: &str) -> Result<f64> {
    if x > 1.0 {
        Ok(x.ln())
    } else {
        Err(ZrpError::Domain(format!("{what} needs an argument > 1, got {x}")))
    }
}

/// Spatial scale of the walk at time `s`.
pub fn scaling_h(s: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(s >= 0.0) {
        return Err(ZrpError::Domain(format!("time must be nonnegative, got {s}")));
    }
    Ok(if alpha < 2.0 {
        s.powf(1.0 / alpha)
    } else if alpha == 2.0 {
        (s * log_arg(s, "h_2")?).sqrt()
    } else {
        s.sqrt()
    })
}

/// Normalizer `Lambda_{d,alpha}(N)` of the additive functional.
pub fn normalizer(n: f64, d: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if d == 0 {
        return Err(ZrpError::Domain("dimension must be at least 1".into()));
    }
    if !(n >= 0.0) {
        return Err(ZrpError::Domain(format!("N must be nonnegative, got {n}")));
    }
    Ok(match Regime::of(d, alpha) {
        Regime::D1AlphaBelowOne | Regime::D2AlphaBelowTwo | Regime::D3Plus => n.sqrt(),
        Regime::D1AlphaOne => (n * log_arg(n, "sqrt(N log N)")?).sqrt(),
        Regime::D1AlphaBetweenOneAndTwo => n.powf(1.0 - 0.5 / alpha),
        Regime::D1AlphaTwo => n.powf(0.75) * log_arg(n, "N^(3/4)(log N)^(-1/4)")?.powf(-0.25),
        Regime::D1AlphaAboveTwo => n.powf(0.75),
        Regime::D2AlphaTwo => {
            let inner = log_arg(n, "sqrt(N log log N)")?;
            (n * log_arg(inner, "sqrt(N log log N)")?).sqrt()
        }
        Regime::D2AlphaAboveTwo => (n * log_arg(n, "sqrt(N log N)")?).sqrt(),
    })
}

/// `h_alpha` and `Lambda_{d,alpha}` bound to one `(d, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingLaws {
    pub d: usize,
    pub alpha: f64,
}

impl ScalingLaws {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if d == 0 {
            return Err(ZrpError::Domain("dimension must be at least 1".into()));
        }
        Ok(Self { d, alpha })
    }

    pub fn h(&self, s: f64) -> Result<f64> {
        scaling_h(s, self.alpha)
    }

    pub fn normalizer(&self, n: f64) -> Result<f64> {
        normalizer(n, self.d, self.alpha)
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.d, self.alpha)
    }
}

/// Outcome of one local-limit comparison.
#[derive(Debug, Clone, Serialize)]
pub struct LcltReport {
    pub t: f64,
    pub s: f64,
    pub h: f64,
    pub radius: f64,
    /// `sup_x |h^d p_{ts}(0, x) - f_t(x / h)|` over `|x| <= radius`
    pub sup_discrepancy: f64,
    pub argmax: Vec<i64>,
    /// `h^d p_{ts}(0, 0)`
    pub origin_scaled: f64,
    /// `f_t(0)`
    pub origin_limit: f64,
}

/// Local-limit discrepancy over `|x| <= window * h_alpha(s)`.
pub fn lclt_discrepancy(
    symbol: &WalkSymbol,
    density: &StableDensity,
    t: f64,
    s: f64,
    window: u32,
) -> Result<LcltReport> {
    if density.d != symbol.d || density.alpha != symbol.alpha {
        return Err(ZrpError::Domain("symbol and density belong to different walks".into()));
    }
    if !(t > 0.0) || !(s > 0.0) {
        return Err(ZrpError::Domain(format!("t and s must be positive, got t={t}, s={s}")));
    }
    let d = symbol.d;
    let h = scaling_h(s, symbol.alpha)?;
    let radius = f64::from(window) * h;
    let targets: Vec<u64> = (0..=radius.floor() as u64).collect();
    let table = transition_table(symbol, t * s, &targets)?;
    let hd = h.powi(d as i32);
    let m = targets.len();

    let mut limits: BTreeMap<u64, f64> = BTreeMap::new();
    let mut sup = 0.0;
    let mut argmax = vec![0i64; d];
    for (flat, &p) in table.values.iter().enumerate() {
        let mut rest = flat;
        let mut x = vec![0i64; d];
        for axis in (0..d).rev() {
            x[axis] = targets[rest % m] as i64;
            rest /= m;
        }
        let norm2: u64 = x.iter().map(|&c| (c * c) as u64).sum();
        if norm2 as f64 > radius * radius {
            continue;
        }
        let limit = match limits.get(&norm2) {
            Some(&v) => v,
            None => {
                let mut u = vec![0.0; d];
                u[0] = (norm2 as f64).sqrt() / h;
                let v = density.density(t, &u)?;
                limits.insert(norm2, v);
                v
            }
        };
        let diff = (hd * p - limit).abs();
        if diff > sup {
            sup = diff;
            argmax = x;
        }
    }
    Ok(LcltReport {
        t,
        s,
        h,
        radius,
        sup_discrepancy: sup,
        argmax,
        origin_scaled: hd * table.values[0],
        origin_limit: density.at_origin(t),
    })
}
