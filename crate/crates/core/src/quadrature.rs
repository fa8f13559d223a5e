//! Quadrature rules: Gauss-Legendre (plain and graded composite) and the
//! double-exponential tanh-sinh / exp-sinh schemes for endpoint singularities
//! and half-infinite ranges.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Result, ZrpError};

/// An n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Composite rule with `panels` equal panels on [a, b].
    pub fn composite<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, panels: usize) -> f64 {
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * width;
                self.integrate(&mut f, lo, lo + width)
            })
            .sum()
    }

    /// Nodes and weights of the composite rule on [a, b].
    pub fn composite_points(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let width = (b - a) / panels as f64;
        let half = 0.5 * width;
        let mut xs = Vec::with_capacity(panels * self.nodes.len());
        let mut ws = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(mid + half * x);
                ws.push(half * w);
            }
        }
        (xs, ws)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes/weights on [0, upper] graded geometrically towards 0: panels
/// `[upper 2^{-j-1}, upper 2^{-j}]` for `j < levels`, plus `[0, upper 2^{-levels}]`,
/// each split into `2^refine` equal sub-panels. Resolves algebraic cusps at 0.
pub fn graded_points(rule: &GaussLegendre, upper: f64, levels: usize, refine: u32) -> (Vec<f64>, Vec<f64>) {
    let sub = 1usize << refine;
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut hi = upper;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        let (x, w) = rule.composite_points(lo, hi, sub);
        xs.extend(x);
        ws.extend(w);
        hi = lo;
    }
    let (x, w) = rule.composite_points(0.0, hi, 1);
    xs.extend(x);
    ws.extend(w);
    (xs, ws)
}

/// Radians of `cos(k x)` a single Gauss-Legendre panel is allowed to span.
const PHASE_PER_PANEL: f64 = 6.0;

/// Like [`graded_points`], but every sub-panel is also short enough that
/// `cos(k x)` for `|x| <= xmax` spans at most a few radians on it.
pub fn graded_oscillatory_points(
    rule: &GaussLegendre,
    upper: f64,
    levels: usize,
    xmax: f64,
    refine: u32,
) -> (Vec<f64>, Vec<f64>) {
    let split = |width: f64| ((width * xmax / PHASE_PER_PANEL).ceil().max(1.0) as usize) << refine;
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut hi = upper;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        let (x, w) = rule.composite_points(lo, hi, split(hi - lo));
        xs.extend(x);
        ws.extend(w);
        hi = lo;
    }
    let (x, w) = rule.composite_points(0.0, hi, split(hi));
    xs.extend(x);
    ws.extend(w);
    (xs, ws)
}

/// tanh-sinh quadrature on a finite interval. `f` receives `(x, dist_lo, dist_hi)`
/// so integrands singular at an endpoint can use the exact distance.
pub fn tanh_sinh<F: FnMut(f64, f64, f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let half = 0.5 * (b - a);
    let mut eval = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let du = FRAC_PI_2 * t.cosh();
        let cosh_u = u.cosh();
        let w = du / (cosh_u * cosh_u);
        // distance of the node from the nearer endpoint, computed without cancellation
        let off = half * 2.0 / (1.0 + (2.0 * u.abs()).exp());
        if off <= 0.0 || w == 0.0 {
            return 0.0;
        }
        let (x, dlo, dhi) = if t < 0.0 {
            (a + off, off, (b - a) - off)
        } else {
            (b - off, (b - a) - off, off)
        };
        half * w * f(x, dlo, dhi)
    };
    let t_max = 6.5;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        let mut add = 0.0;
        while k as f64 * h <= t_max {
            let t = k as f64 * h;
            add += eval(t) + eval(-t);
            k += 2;
        }
        sum += add;
        let next = sum * h;
        let err = (next - estimate).abs();
        estimate = next;
        if err <= tol * estimate.abs().max(1e-300) || err < 1e-300 {
            return Ok(estimate);
        }
    }
    Err(ZrpError::Quadrature { achieved: f64::NAN, target: tol })
}

/// exp-sinh quadrature on `[a, inf)`. `f` receives `(x, x - a)`.
pub fn exp_sinh<F: FnMut(f64, f64) -> f64>(mut f: F, a: f64, tol: f64) -> Result<f64> {
    let mut eval = |t: f64| -> f64 {
        let e = (FRAC_PI_2 * t.sinh()).exp();
        let w = FRAC_PI_2 * t.cosh() * e;
        if e == 0.0 || !e.is_finite() || !w.is_finite() {
            return 0.0;
        }
        w * f(a + e, e)
    };
    let t_lo = -6.0;
    let t_hi = 6.0;
    let mut h = 0.5;
    let collect = |h: f64, start: i64, step: i64, eval: &mut dyn FnMut(f64) -> f64| -> f64 {
        let mut s = 0.0;
        let mut k = start;
        while (k as f64) * h <= t_hi {
            let t = k as f64 * h;
            if t >= t_lo {
                let v = eval(t);
                if v.is_finite() {
                    s += v;
                }
            }
            k += step;
        }
        s
    };
    let first = (t_lo / h).floor() as i64;
    let mut sum = collect(h, first, 1, &mut eval);
    let mut estimate = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        let first = (t_lo / h).floor() as i64;
        let start = if first % 2 == 0 { first + 1 } else { first };
        sum += collect(h, start, 2, &mut eval);
        let next = sum * h;
        let err = (next - estimate).abs();
        estimate = next;
        if err <= tol * estimate.abs().max(1e-300) || err < 1e-300 {
            return Ok(estimate);
        }
    }
    Err(ZrpError::Quadrature { achieved: f64::NAN, target: tol })
}
