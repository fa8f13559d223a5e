//! Limit objects: stable densities `f_t^{d,alpha}`, fractional Brownian
//! motion, and the explicit constants of the limit theorems.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Serialize, Serializer};

use crate::equilibrium::EquilibriumProfile;
use crate::error::{Result, ZrpError};
use crate::functional::ObservableSpec;
use crate::lattice::epstein_zeta;
use crate::quadrature::{exp_sinh, graded_oscillatory_points, tanh_sinh, GaussLegendre};
use crate::spectral::{normalizer, Regime};
use crate::special::sphere_area;

const QUAD_TOL: f64 = 1e-14;
/// `e^{-60}` bounds the dropped tail of a density integral.
const DENSITY_CUTOFF: f64 = 60.0;
const DENSITY_TOL: f64 = 1e-13;
const MAX_FBM_GRID: usize = 2048;

/// `int_0^inf (1 - cos u) u^{-1-alpha} du`, `0 < alpha < 2`.
///
/// `[0, 1]` by tanh-sinh; on `[1, inf)` the cosine part is rotated onto
/// `u = 1 + i y`, where it decays like `e^{-y}`.
pub fn cosine_kernel_integral(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(ZrpError::Domain(format!("cosine kernel integral needs 0 < alpha < 2, got {alpha}")));
    }
    let head = tanh_sinh(
        |u, _, _| {
            let ratio = (0.5 * u).sin() / u;
            2.0 * ratio * ratio * u.powf(1.0 - alpha)
        },
        0.0,
        1.0,
        QUAD_TOL,
    )?;
    let p = 1.0 + alpha;
    let rotated = exp_sinh(
        |y, _| (-y).exp() * (1.0 + y * y).powf(-0.5 * p) * (p * y.atan() - 1.0).sin(),
        0.0,
        QUAD_TOL,
    )?;
    Ok(head + 1.0 / alpha - rotated)
}

/// `int_{S^{d-1}} |w_1|^p dS`; in `d = 1` the sphere is `{-1, +1}`.
pub fn sphere_moment(d: usize, p: f64) -> Result<f64> {
    match d {
        0 => Err(ZrpError::Domain("dimension must be at least 1".into())),
        1 => Ok(2.0),
        _ => {
            let polar = tanh_sinh(
                |theta, _, dhi| dhi.sin().powf(p) * theta.sin().powi(d as i32 - 2),
                0.0,
                FRAC_PI_2,
                QUAD_TOL,
            )?;
            Ok(2.0 * sphere_area(d - 1) * polar)
        }
    }
}

/// `c_{d,alpha}` with `int_{R^d} (1 - cos k.v) |v|^{-(d+alpha)} dv = c |k|^alpha`.
pub fn continuum_constant(d: usize, alpha: f64) -> Result<f64> {
    Ok(sphere_moment(d, alpha)? * cosine_kernel_integral(alpha)?)
}

/// Which limit the walk has and the coefficient that pins it down.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "branch", rename_all = "lowercase")]
pub enum Branch {
    /// `alpha < 2`: symbol `c |k|^alpha`
    Jump { c: f64 },
    /// `alpha = 2`: generator `(1/2) sum K_ij d_i d_j`, row-major `K`
    Boundary { k: Vec<f64> },
    /// `alpha > 2`: generator `(1/2) sum A_ij d_i d_j`, row-major `A`
    Gaussian { a: Vec<f64> },
}

/// The stable process `X^{d,alpha}` and its densities.
#[derive(Debug, Clone, Serialize)]
pub struct StableDensity {
    pub d: usize,
    pub alpha: f64,
    pub branch: Branch,
    /// `f_1(0)`
    pub unit_origin: f64,
}

fn diagonal(d: usize, value: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = value;
    }
    m
}

impl StableDensity {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        if d == 0 {
            return Err(ZrpError::Domain("dimension must be at least 1".into()));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(ZrpError::Domain(format!("alpha must be positive, got {alpha}")));
        }
        let df = d as f64;
        let branch = if alpha < 2.0 {
            Branch::Jump { c: continuum_constant(d, alpha)? }
        } else if alpha == 2.0 {
            // K_ij = (1/2) int_{S} v_i v_j dS; off-diagonal entries vanish under v_i -> -v_i
            Branch::Boundary { k: diagonal(d, 0.5 * sphere_moment(d, 2.0)?) }
        } else {
            // A_ij = sum_y y_i y_j |y|^{-(d+alpha)}; by symmetry A = (1/d) Z(d+alpha-2) I
            Branch::Gaussian { a: diagonal(d, epstein_zeta(d, df + alpha - 2.0)? / df) }
        };
        let unit_origin = match &branch {
            Branch::Jump { c } => {
                let radial = exp_sinh(|r, _| (-c * r.powf(alpha)).exp() * r.powi(d as i32 - 1), 0.0, QUAD_TOL)?;
                sphere_area(d) * radial / (2.0 * PI).powi(d as i32)
            }
            Branch::Boundary { k: m } | Branch::Gaussian { a: m } => {
                let det: f64 = (0..d).map(|i| m[i * d + i]).product();
                (2.0 * PI).powf(-0.5 * df) / det.sqrt()
            }
        };
        Ok(Self { d, alpha, branch, unit_origin })
    }

    /// Exponent in `f_t(0) = t^{-exponent} f_1(0)`.
    pub fn self_similarity_exponent(&self) -> f64 {
        self.d as f64 / self.alpha.min(2.0)
    }

    /// `f_t(0)`.
    pub fn at_origin(&self, t: f64) -> f64 {
        t.powf(-self.self_similarity_exponent()) * self.unit_origin
    }

    /// `f_t(u)`.
    pub fn density(&self, t: f64, u: &[f64]) -> Result<f64> {
        if u.len() != self.d {
            return Err(ZrpError::Domain(format!("point has {} coordinates, d={}", u.len(), self.d)));
        }
        if !(t > 0.0) {
            return Err(ZrpError::Domain(format!("t must be positive, got {t}")));
        }
        let r = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            return Ok(self.at_origin(t));
        }
        match &self.branch {
            Branch::Boundary { k: m } | Branch::Gaussian { a: m } => {
                let d = self.d;
                let mut v = 1.0;
                for (i, &x) in u.iter().enumerate() {
                    let var = t * m[i * d + i];
                    v *= (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt();
                }
                Ok(v)
            }
            Branch::Jump { c } => self.radial_density(t * c, r),
        }
    }

    /// `(2pi)^{-d} |S^{d-1}| int_0^inf e^{-tc k^alpha} k^{d-1} <cos(k r w_1)>_S dk`.
    fn radial_density(&self, tc: f64, r: f64) -> Result<f64> {
        let d = self.d;
        let alpha = self.alpha;
        let upper = (DENSITY_CUTOFF / tc).powf(1.0 / alpha);
        let rule = GaussLegendre::new(20);
        let levels = ((6e14 * upper).log2() / (1.0 + alpha)).ceil().clamp(6.0, 60.0) as usize;
        let scale = sphere_area(d) / (2.0 * PI).powi(d as i32);
        let reference = self.at_origin(tc / self.continuum_c());
        let eval = |refine: u32| -> f64 {
            let (ks, ws) = graded_oscillatory_points(&rule, upper, levels, r, refine);
            ks.iter()
                .zip(&ws)
                .map(|(&k, &w)| w * (-tc * k.powf(alpha)).exp() * k.powi(d as i32 - 1) * angular_cosine(d, k * r))
                .sum::<f64>()
                * scale
        };
        let mut prev = eval(0);
        let mut achieved = f64::INFINITY;
        for refine in 1..=6 {
            let next = eval(refine);
            achieved = (next - prev).abs();
            if achieved <= DENSITY_TOL * reference {
                return Ok(next);
            }
            prev = next;
        }
        Err(ZrpError::Quadrature { achieved, target: DENSITY_TOL * reference })
    }

    fn continuum_c(&self) -> f64 {
        match self.branch {
            Branch::Jump { c } => c,
            _ => 1.0,
        }
    }
}

/// Average of `cos(x w_1)` over the unit sphere `S^{d-1}`.
fn angular_cosine(d: usize, x: f64) -> f64 {
    match d {
        1 => x.cos(),
        3 => {
            if x.abs() < 1e-4 {
                1.0 - x * x / 6.0
            } else {
                x.sin() / x
            }
        }
        _ => {
            // int_0^pi sin^{d-2} th cos(x cos th) dth / int_0^pi sin^{d-2} th dth
            let rule = GaussLegendre::new(20);
            let panels = (x.abs() / 3.0).ceil().max(1.0) as usize;
            let pow = d as i32 - 2;
            let num = rule.composite(|th| th.sin().powi(pow) * (x * th.cos()).cos(), 0.0, PI, panels);
            let den = rule.composite(|th| th.sin().powi(pow), 0.0, PI, panels);
            num / den
        }
    }
}

/// `f_t^{d,alpha}(0)`.
pub fn stable_density_at_origin(t: f64, d: usize, alpha: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(ZrpError::Domain(format!("t must be positive, got {t}")));
    }
    Ok(StableDensity::new(d, alpha)?.at_origin(t))
}

/// `Cov(B_t, B_s)` for fractional Brownian motion with Hurst parameter `theta`.
pub fn fbm_covariance(theta: f64, t: f64, s: f64) -> f64 {
    let h2 = 2.0 * theta;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// Draws `(B_{t_1}, ..., B_{t_n})` exactly from a Cholesky factor of the
/// covariance matrix.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    pub theta: f64,
    pub grid: Vec<f64>,
    factor: DMatrix<f64>,
}

impl FbmSampler {
    pub fn new(theta: f64, grid: &[f64]) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(ZrpError::Domain(format!("Hurst parameter must lie in (0, 1), got {theta}")));
        }
        if grid.is_empty() || grid.len() > MAX_FBM_GRID {
            return Err(ZrpError::Domain(format!("fBm grid size must be 1..={MAX_FBM_GRID}, got {}", grid.len())));
        }
        if grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(ZrpError::Domain("fBm grid times must be finite and nonnegative".into()));
        }
        let n = grid.len();
        let cov = DMatrix::from_fn(n, n, |i, j| fbm_covariance(theta, grid[i], grid[j]));
        let factor = match Cholesky::new(cov.clone()) {
            Some(ch) => ch.l(),
            None => {
                let jitter = DMatrix::identity(n, n) * 1e-12;
                Cholesky::new(cov + jitter)
                    .ok_or_else(|| ZrpError::Stats("fBm covariance is not positive semidefinite".into()))?
                    .l()
            }
        };
        Ok(Self { theta, grid: grid.to_vec(), factor })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.len();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * z).iter().copied().collect()
    }
}

/// One fBm path on `grid`.
pub fn sample_fbm<R: Rng + ?Sized>(rng: &mut R, theta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    Ok(FbmSampler::new(theta, grid)?.sample(rng))
}

/// Scale of the limit: a number, or `measured` when it is `sigma_gamma(V)`
/// and has to be estimated from the autocovariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Value(f64),
    Measured,
}

impl Serialize for Scale {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => serializer.serialize_f64(*v),
            Self::Measured => serializer.serialize_str("measured"),
        }
    }
}

/// Limit law `sigma B^theta` of `A(tN) / Lambda(N)`.
#[derive(Debug, Clone, Serialize)]
pub struct LimitLaw {
    pub d: usize,
    pub alpha: f64,
    pub hurst: f64,
    pub scale: Scale,
    pub regime: Regime,
    pub lambda_rule: &'static str,
}

impl LimitLaw {
    pub fn sigma(&self) -> Option<f64> {
        match self.scale {
            Scale::Value(v) => Some(v),
            Scale::Measured => None,
        }
    }

    pub fn sigma_squared(&self) -> Option<f64> {
        self.sigma().map(|s| s * s)
    }

    /// `Var(sigma B^theta_t) = sigma^2 t^{2 theta}`.
    pub fn variance_at(&self, t: f64) -> Option<f64> {
        self.sigma_squared().map(|s2| s2 * t.powf(2.0 * self.hurst))
    }

    /// `sigma^2 Cov(B^theta_t, B^theta_s)`.
    pub fn covariance(&self, t: f64, s: f64) -> Option<f64> {
        self.sigma_squared().map(|s2| s2 * fbm_covariance(self.hurst, t, s))
    }

    pub fn normalizer(&self, n: f64) -> Result<f64> {
        normalizer(n, self.d, self.alpha)
    }
}

fn check_consistent(profile: &EquilibriumProfile, obs: &ObservableSpec) -> Result<()> {
    if !(profile.beta > 0.0 && profile.beta_prime > 0.0) {
        return Err(ZrpError::Domain("profile needs positive beta and beta'".into()));
    }
    if !obs.vbar.is_finite() || obs.vbar.abs() > 1e-8 * (1.0 + obs.center.abs()) {
        return Err(ZrpError::Domain(format!("observable is not centered (mean {})", obs.vbar)));
    }
    Ok(())
}

/// Hurst parameter and scale of the limit for `(d, alpha)`.
pub fn theorem_coefficient(
    d: usize,
    alpha: f64,
    profile: &EquilibriumProfile,
    obs: &ObservableSpec,
) -> Result<LimitLaw> {
    check_consistent(profile, obs)?;
    let regime = Regime::of(d, alpha);
    let beta = profile.beta;
    let bp = profile.beta_prime;
    let vp = obs.vbar_prime;
    let f1 = || stable_density_at_origin(1.0, d, alpha);
    let (hurst, scale) = match regime {
        Regime::D1AlphaBelowOne | Regime::D2AlphaBelowTwo | Regime::D3Plus => (0.5, Scale::Measured),
        Regime::D1AlphaOne | Regime::D2AlphaTwo | Regime::D2AlphaAboveTwo => {
            (0.5, Scale::Value((2.0 * f1()? * (vp / bp).powi(2) * beta).sqrt()))
        }
        Regime::D1AlphaBetweenOneAndTwo => {
            let coeff = 2.0 * alpha * alpha / ((alpha - 1.0) * (2.0 * alpha - 1.0));
            let s2 = coeff * vp * vp * beta / bp.powf(1.0 + 1.0 / alpha) * f1()?;
            (1.0 - 0.5 / alpha, Scale::Value(s2.sqrt()))
        }
        Regime::D1AlphaTwo | Regime::D1AlphaAboveTwo => {
            let s2 = 8.0 / 3.0 * vp * vp * beta * bp.powf(-1.5) * f1()?;
            (0.75, Scale::Value(s2.sqrt()))
        }
    };
    Ok(LimitLaw { d, alpha, hurst, scale, regime, lambda_rule: regime.lambda_rule() })
}

/// `lim_t h(t)^d Var(E_eta V(eta_t))`.
pub fn relaxation_constant(d: usize, alpha: f64, profile: &EquilibriumProfile, obs: &ObservableSpec) -> Result<f64> {
    check_consistent(profile, obs)?;
    let f1 = stable_density_at_origin(1.0, d, alpha)?;
    let exponent = d as f64 / alpha.min(2.0);
    Ok(obs.vbar_prime.powi(2) * profile.var_occ * f1 / (2.0 * profile.beta_prime).powf(exponent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::fugacity_of_density;
    use crate::functional::ObservableKind;
    use crate::model::RateFamily;
    use crate::rng::stream;
    use crate::special::{dirichlet_beta, zeta};
    use statrs::function::gamma::gamma;

    fn closed_c(d: usize, alpha: f64) -> f64 {
        let df = d as f64;
        PI.powf(0.5 * df) * gamma(1.0 - 0.5 * alpha) / (alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (df + alpha)))
    }

    fn closed_f1(d: usize, alpha: f64) -> f64 {
        let df = d as f64;
        let c = closed_c(d, alpha);
        sphere_area(d) * gamma(df / alpha) / (alpha * c.powf(df / alpha)) / (2.0 * PI).powf(df)
    }

    #[test]
    fn continuum_constant_matches_gamma_form() {
        for d in 1..=3 {
            for &alpha in &[0.5, 1.0, 1.5, 1.9] {
                let q = continuum_constant(d, alpha).unwrap();
                let c = closed_c(d, alpha);
                assert!(((q - c) / c).abs() < 1e-11, "d={d} alpha={alpha}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn origin_density_jump_branch() {
        for d in 1..=2 {
            for &alpha in &[0.5, 1.0, 1.5] {
                let f = stable_density_at_origin(1.0, d, alpha).unwrap();
                let c = closed_f1(d, alpha);
                assert!(((f - c) / c).abs() < 1e-10, "d={d} alpha={alpha}: {f} vs {c}");
            }
        }
        // Cauchy: c = pi, f_1(0) = 1 / pi^2
        let f = stable_density_at_origin(1.0, 1, 1.0).unwrap();
        assert!((f - 1.0 / (PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn origin_density_gaussian_and_boundary() {
        let f = stable_density_at_origin(1.0, 1, 3.0).unwrap();
        let oracle = (2.0 * PI * 2.0 * zeta(2.0)).powf(-0.5);
        assert!((f - oracle).abs() < 1e-12 * oracle);
        assert!((f - 0.219_948).abs() < 1e-6);
        let f = stable_density_at_origin(1.0, 1, 2.0).unwrap();
        assert!((f - (2.0 * PI).powf(-0.5)).abs() < 1e-14);
        // d = 2, alpha = 3: A = Z_2(3) / 2 = 2 zeta(3/2) beta(3/2)
        let f = stable_density_at_origin(1.0, 2, 3.0).unwrap();
        let a = 2.0 * zeta(1.5) * dirichlet_beta(1.5);
        assert!(((f - 1.0 / (2.0 * PI * a)) * 2.0 * PI * a).abs() < 1e-11);
        // d = 2, alpha = 2: K = pi / 2
        let f = stable_density_at_origin(1.0, 2, 2.0).unwrap();
        assert!((f - 1.0 / (2.0 * PI * FRAC_PI_2)).abs() < 1e-12);
    }

    #[test]
    fn self_similarity() {
        let dens = StableDensity::new(1, 1.5).unwrap();
        assert_eq!(dens.at_origin(4.0) / dens.at_origin(1.0), 4f64.powf(-1.0 / 1.5));
        assert!(stable_density_at_origin(1.0, 1, 0.0).is_err());
        assert!(stable_density_at_origin(0.0, 1, 1.0).is_err());
    }

    #[test]
    fn off_origin_density() {
        // Cauchy with scale pi: f(u) = 1 / (pi^2 (1 + (u/pi)^2))
        let dens = StableDensity::new(1, 1.0).unwrap();
        for &u in &[0.3, 2.0, 10.0, 60.0] {
            let f = dens.density(1.0, &[u]).unwrap();
            let oracle = 1.0 / (PI * PI * (1.0 + (u / PI).powi(2)));
            assert!((f - oracle).abs() < 1e-12, "u={u}: {f} vs {oracle}");
        }
        // 2-d Cauchy-type (alpha = 1) density (c/2pi) (c^2 + r^2)^{-3/2}
        let dens = StableDensity::new(2, 1.0).unwrap();
        let c = closed_c(2, 1.0);
        for &r in &[0.5, 3.0, 12.0] {
            let f = dens.density(1.0, &[r * 0.6, r * 0.8]).unwrap();
            let oracle = c / (2.0 * PI) * (c * c + r * r).powf(-1.5);
            assert!((f - oracle).abs() < 1e-12, "r={r}: {f} vs {oracle}");
        }
        let dens = StableDensity::new(1, 3.0).unwrap();
        let a = 2.0 * zeta(2.0);
        let f = dens.density(2.0, &[1.7]).unwrap();
        let oracle = (-1.7f64 * 1.7 / (4.0 * a)).exp() / (4.0 * PI * a).sqrt();
        assert!((f - oracle).abs() < 1e-15);
    }

    #[test]
    fn fbm_covariance_values() {
        assert_eq!(fbm_covariance(0.75, 1.0, 1.0), 1.0);
        assert_eq!(fbm_covariance(0.5, 1.0, 2.0), 1.0);
        assert!((fbm_covariance(2.0 / 3.0, 1.0, 2.0) - 2f64.powf(1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn fbm_covariance_is_psd() {
        let grid: Vec<f64> = (1..=64).map(|i| i as f64 * 0.37).collect();
        for &theta in &[0.1, 0.5, 2.0 / 3.0, 0.75, 0.95] {
            let m = DMatrix::from_fn(64, 64, |i, j| fbm_covariance(theta, grid[i], grid[j]));
            let min = m.symmetric_eigenvalues().min();
            assert!(min >= -1e-10, "theta={theta}: {min}");
        }
    }

    #[test]
    fn fbm_sampler_moments() {
        let n = 100_000;
        let mut rng = stream(11, crate::rng::tag::SYNTHETIC, 0);
        let s = FbmSampler::new(0.75, &[1.0, 2.0]).unwrap();
        let (mut c12, mut v1, mut vinc) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let p = s.sample(&mut rng);
            c12 += p[0] * p[1];
            v1 += p[0] * p[0];
            vinc += (p[1] - p[0]).powi(2);
        }
        let nf = n as f64;
        let (c12, v1, vinc) = (c12 / nf, v1 / nf, vinc / nf);
        // Var of x y with Cov as above is ~ (Var x Var y + Cov^2) ~ 4.8
        assert!((c12 - 2f64.sqrt()).abs() < 4.0 * (4.83 / nf).sqrt(), "{c12}");
        assert!((v1 - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!((vinc - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!(FbmSampler::new(1.0, &[1.0]).is_err());
        assert!(FbmSampler::new(0.5, &[0.0, 1.0]).is_ok());
    }

    fn ehrenfest(gamma: f64) -> (EquilibriumProfile, ObservableSpec) {
        let profile = fugacity_of_density(gamma, &RateFamily::Linear { a: 1.0 }, 1e-13).unwrap();
        let obs = ObservableSpec::new(ObservableKind::Occupation, &profile).unwrap();
        (profile, obs)
    }

    #[test]
    fn theorem_coefficients() {
        let (p, o) = ehrenfest(1.0);
        let law = theorem_coefficient(1, 1.5, &p, &o).unwrap();
        assert!((law.hurst - 2.0 / 3.0).abs() < 1e-15);
        let f1 = stable_density_at_origin(1.0, 1, 1.5).unwrap();
        assert!((law.sigma_squared().unwrap() - 4.5 * f1).abs() < 1e-12);
        assert!((law.variance_at(2.0).unwrap() - 4.5 * f1 * 2f64.powf(2.0 - 1.0 / 1.5)).abs() < 1e-12);

        let law = theorem_coefficient(1, 0.5, &p, &o).unwrap();
        assert_eq!((law.hurst, law.scale), (0.5, Scale::Measured));
        let law = theorem_coefficient(3, 2.5, &p, &o).unwrap();
        assert_eq!((law.hurst, law.scale), (0.5, Scale::Measured));
        assert_eq!(law.normalizer(1e4).unwrap(), 100.0);
        let json = serde_json::to_string(&law).unwrap();
        assert!(json.contains("\"scale\":\"measured\""), "{json}");

        let law = theorem_coefficient(1, 3.0, &p, &o).unwrap();
        let f1 = stable_density_at_origin(1.0, 1, 3.0).unwrap();
        assert_eq!(law.hurst, 0.75);
        assert!((law.sigma_squared().unwrap() - 8.0 / 3.0 * f1).abs() < 1e-12);
        let law = theorem_coefficient(2, 2.0, &p, &o).unwrap();
        let f1 = stable_density_at_origin(1.0, 2, 2.0).unwrap();
        assert!((law.sigma_squared().unwrap() - 2.0 * f1).abs() < 1e-12);
    }

    #[test]
    fn relaxation_constants() {
        let (p, o) = ehrenfest(1.0);
        let r = relaxation_constant(1, 3.0, &p, &o).unwrap();
        let f1 = (2.0 * PI * PI * PI / 3.0).powf(-0.5);
        assert!((r - f1 / 2f64.sqrt()).abs() < 1e-12, "{r}");
        // independent walkers: Var(eta) p_{2 c0 t}(0,0) scaled, c0 = a = 2
        let family = RateFamily::Linear { a: 2.0 };
        let profile = fugacity_of_density(0.7, &family, 1e-13).unwrap();
        let obs = ObservableSpec::new(ObservableKind::Occupation, &profile).unwrap();
        for &alpha in &[0.8, 1.5, 3.0] {
            let r = relaxation_constant(1, alpha, &profile, &obs).unwrap();
            let walk = 0.7 * StableDensity::new(1, alpha).unwrap().at_origin(2.0 * 2.0);
            assert!((r - walk).abs() < 1e-10 * walk, "alpha={alpha}: {r} vs {walk}");
        }
    }
}
