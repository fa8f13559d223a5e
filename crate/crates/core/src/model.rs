//! Lattice geometry, the heavy-tailed jump kernel and the rate families.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};
use crate::lattice::epstein_zeta;

/// Occupancy-dependent jump rate `c(k)`, with `c(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RateFamily {
    /// `c(k) = a k`: independent walkers.
    Linear { a: f64 },
    /// `c(k) = a k + b 1{k >= 1}`.
    Affine { a: f64, b: f64 },
}

impl RateFamily {
    #[inline]
    pub fn rate(&self, k: u32) -> f64 {
        match *self {
            RateFamily::Linear { a } => a * f64::from(k),
            RateFamily::Affine { a, b } => {
                if k == 0 {
                    0.0
                } else {
                    a * f64::from(k) + b
                }
            }
        }
    }

    /// `(c^-, c^+)`: the infimum and supremum of `c(k+1) - c(k)` over all k.
    pub fn increment_bounds(&self) -> (f64, f64) {
        match *self {
            RateFamily::Linear { a } => (a, a),
            RateFamily::Affine { a, b } => ((a + b).min(a), (a + b).max(a)),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, RateFamily::Linear { .. })
    }
}

/// Outcome of [`validate_rate_family`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateValidation {
    pub inf_increment: f64,
    pub sup_increment: f64,
    pub argmin_k: u32,
    pub argmax_k: u32,
}

/// Checks that every increment `c(k+1) - c(k)`, `k <= k_max`, is positive.
pub fn validate_rate_family(family: &RateFamily, k_max: u32) -> Result<RateValidation> {
    if k_max < 1 {
        return Err(ZrpError::InvalidModel("k_max must be at least 1".into()));
    }
    let mut report = RateValidation {
        inf_increment: f64::INFINITY,
        sup_increment: f64::NEG_INFINITY,
        argmin_k: 0,
        argmax_k: 0,
    };
    for k in 0..=k_max {
        let inc = family.rate(k + 1) - family.rate(k);
        if !(inc > 0.0) || !inc.is_finite() {
            return Err(ZrpError::RateFamilyRejected { k, increment: inc });
        }
        if inc < report.inf_increment {
            report.inf_increment = inc;
            report.argmin_k = k;
        }
        if inc > report.sup_increment {
            report.sup_increment = inc;
            report.argmax_k = k;
        }
    }
    Ok(report)
}

/// The periodic box `{0..L-1}^d`, sites linearised row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusGeometry {
    d: usize,
    side: usize,
    n_sites: usize,
}

impl TorusGeometry {
    pub fn new(d: usize, side: usize) -> Result<Self> {
        if d == 0 {
            return Err(ZrpError::InvalidModel("dimension must be positive".into()));
        }
        if side < 2 || side % 2 != 0 {
            return Err(ZrpError::InvalidModel(format!("torus side must be even and >= 2, got {side}")));
        }
        let n_sites = side
            .checked_pow(d as u32)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| ZrpError::InvalidModel(format!("torus {side}^{d} too large")))?;
        Ok(Self { d, side, n_sites })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// The origin is site 0.
    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut c = vec![0; self.d];
        let mut rest = site;
        for axis in (0..self.d).rev() {
            c[axis] = rest % self.side;
            rest /= self.side;
        }
        c
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.side + c % self.side)
    }

    /// Minimal-image representative of a coordinate difference, in `(-L/2, L/2]`.
    #[inline]
    pub fn wrap(&self, delta: i64) -> i64 {
        let l = self.side as i64;
        let r = delta.rem_euclid(l);
        if r > l / 2 {
            r - l
        } else {
            r
        }
    }

    /// Minimal-image displacement from `from` to `to`.
    pub fn displacement(&self, from: usize, to: usize) -> Vec<i64> {
        let a = self.coords(from);
        let b = self.coords(to);
        a.iter().zip(&b).map(|(&x, &y)| self.wrap(y as i64 - x as i64)).collect()
    }

    /// Site reached from `site` by displacement `dx`.
    pub fn shift(&self, site: usize, dx: &[i64]) -> usize {
        let l = self.side as i64;
        let mut rest = site;
        let mut out = 0usize;
        let mut stride = 1usize;
        for axis in (0..self.d).rev() {
            let c = (rest % self.side) as i64;
            rest /= self.side;
            let moved = (c + dx[axis]).rem_euclid(l) as usize;
            out += moved * stride;
            stride *= self.side;
        }
        out
    }

    /// Every nonzero minimal-image displacement, in site order.
    pub fn displacements(&self) -> Vec<Vec<i64>> {
        (1..self.n_sites).map(|s| self.displacement(0, s)).collect()
    }

    /// Sites within Euclidean (minimal-image) distance `radius` of `center`.
    pub fn ball(&self, center: usize, radius: f64) -> Vec<usize> {
        (0..self.n_sites)
            .filter(|&s| {
                let dx = self.displacement(center, s);
                let r2: i64 = dx.iter().map(|v| v * v).sum();
                (r2 as f64) <= radius * radius + 1e-12
            })
            .collect()
    }
}

/// Dynamics definition: dimension, tail exponent, torus side, rates, density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub alpha: f64,
    #[serde(rename = "L")]
    pub side: usize,
    pub rate: RateFamily,
    pub gamma: f64,
}

/// Increments are checked up to this occupancy when a spec is validated.
pub const DEFAULT_K_MAX: u32 = 4096;

impl ModelSpec {
    pub fn new(d: usize, alpha: f64, side: usize, rate: RateFamily, gamma: f64) -> Result<Self> {
        let spec = Self { d, alpha, side, rate, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(ZrpError::InvalidModel("d must be positive".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(ZrpError::InvalidModel(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.side < 4 || self.side % 2 != 0 {
            return Err(ZrpError::InvalidModel(format!("L must be even and >= 4, got {}", self.side)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(ZrpError::InvalidModel(format!("gamma must be > 0, got {}", self.gamma)));
        }
        validate_rate_family(&self.rate, DEFAULT_K_MAX)?;
        TorusGeometry::new(self.d, self.side)?;
        Ok(())
    }

    pub fn geometry(&self) -> TorusGeometry {
        TorusGeometry::new(self.d, self.side).expect("validated spec")
    }
}

/// `|dx|_2^{-(d+alpha)}`, zero for `dx = 0`.
#[inline]
pub fn kernel_weight(dx: &[i64], alpha: f64) -> f64 {
    let r2: i64 = dx.iter().map(|v| v * v).sum();
    if r2 == 0 {
        return 0.0;
    }
    (r2 as f64).powf(-0.5 * (dx.len() as f64 + alpha))
}

/// Total kernel weight `S` over all nonzero minimal-image torus displacements.
pub fn kernel_mass(geometry: &TorusGeometry, alpha: f64) -> f64 {
    geometry.displacements().iter().map(|dx| kernel_weight(dx, alpha)).sum()
}

/// `sum_{y != 0} |y|^{-(d+alpha)}` over the whole lattice `Z^d`.
pub fn kernel_mass_infinite(d: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(ZrpError::Divergent { alpha });
    }
    epstein_zeta(d, d as f64 + alpha)
}
