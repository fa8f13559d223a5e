//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;
use zrp_core::equilibrium::{beta_prime_finite_difference, occupancy_variance};
use zrp_core::experiment::{execute, verify, ExperimentKind, ExperimentPlan, InitialCondition, Summary};
use zrp_core::functional::ObservableKind;
use zrp_core::kmc::{step, Configuration, DisplacementSampler};
use zrp_core::model::{kernel_weight, ModelSpec, RateFamily};
use zrp_core::rng::{stream, tag};
use zrp_core::spectral::Regime;
use zrp_core::stable::{sample_fbm, stable_density_at_origin, LimitLaw, Scale};
use zrp_core::stats::{hurst_and_law_check, ReplicaEnsemble};
use zrp_core::{fugacity_of_density, sample_configuration};

const SEED: u64 = 20261016;
const LINEAR: RateFamily = RateFamily::Linear { a: 1.0 };
const AFFINE: RateFamily = RateFamily::Affine { a: 1.0, b: 0.5 };

type Outcome = Result<(bool, String), String>;

fn plan(experiment: ExperimentKind, d: usize, alpha: f64, side: usize, rate: RateFamily) -> ExperimentPlan {
    ExperimentPlan {
        experiment,
        model: ModelSpec::new(d, alpha, side, rate, 1.0).expect("model"),
        observable: ObservableKind::Occupation,
        n_grid: Vec::new(),
        t_grid: vec![1.0],
        replicas: 200,
        master_seed: SEED,
        workers: 1,
        outputs: "results".into(),
        initial: InitialCondition::GrandCanonical,
        ensembles: 1,
        sample_dt: None,
        horizon: None,
        max_lag: 100,
        lag_times: Vec::new(),
        fit_range: None,
        s_grid: vec![1e2, 1e3, 1e4],
        window: 4,
        slope_tolerance: 0.1,
        sites: 1,
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn equilibrium_identities() -> Outcome {
    let (mut mean_rate, mut variance, mut balance) = (0.0f64, 0.0f64, 0.0f64);
    for family in [LINEAR, AFFINE] {
        for gamma in [0.5, 1.0, 2.0] {
            let p = fugacity_of_density(gamma, &family, 1e-14).map_err(err)?;
            let ec: f64 = p.pmf.iter().enumerate().map(|(k, q)| family.rate(k as u32) * q).sum();
            mean_rate = mean_rate.max((ec - p.beta).abs());
            let bp = beta_prime_finite_difference(gamma, &family).map_err(err)?;
            variance = variance.max(rel(occupancy_variance(&p), p.beta / bp));
            for k in 1..p.pmf.len() {
                let lhs = p.pmf[k] * family.rate(k as u32);
                let rhs = p.beta * p.pmf[k - 1];
                if rhs > 1e-250 {
                    balance = balance.max(rel(lhs, rhs));
                }
            }
        }
    }
    let pass = mean_rate <= 1e-10 && variance <= 1e-5 && balance <= 1e-12;
    Ok((pass, format!("|E c - beta| = {mean_rate:.1e}, variance rel {variance:.1e}, balance rel {balance:.1e}")))
}

fn conservation() -> Result<(bool, String), String> {
    let spec = ModelSpec::new(1, 1.5, 256, AFFINE, 1.0).map_err(err)?;
    let profile = fugacity_of_density(1.0, &AFFINE, 1e-14).map_err(err)?;
    let sampler = DisplacementSampler::for_spec(&spec).map_err(err)?;
    let mut rng = stream(SEED, tag::DYNAMICS, 900);
    let mut config = sample_configuration(&mut stream(SEED, tag::INITIAL, 900), &spec, &profile);
    let before = config.total_particles();
    for _ in 0..10_000_000 {
        step(&mut config, &sampler, &mut rng).map_err(err)?;
    }
    let after = config.total_particles();
    let summed: u64 = config.occupancy().iter().map(|&k| u64::from(k)).sum();
    let pass = before == after && summed == before && config.leaves_consistent();
    Ok((pass, format!("{before} particles before, {after} after 1e7 events")))
}

fn stationarity() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, family) in [("linear", LINEAR), ("affine", AFFINE)] {
        let mut p = plan(ExperimentKind::Stationarity, 1, 1.5, 256, family);
        p.replicas = 20;
        p.horizon = Some(1e3);
        let dir = tempfile::tempdir().map_err(err)?;
        let bundle = execute(&p, dir.path()).map_err(err)?;
        let Summary::Stationarity { passes, .. } = bundle.summary else { return Err("wrong summary".into()) };
        let report = verify(&p, dir.path()).map_err(err)?;
        pass &= passes >= 18 && report.pass;
        parts.push(format!("{name} {passes}/20 runs p > 0.01"));
    }
    Ok((pass, parts.join(", ")))
}

/// Two particles on a 4-site ring: exact generator against simulated
/// state frequencies.
fn rate_matrix_frequencies() -> Outcome {
    let alpha = 0.5;
    let spec = ModelSpec::new(1, alpha, 4, AFFINE, 0.5).map_err(err)?;
    let mut states: Vec<[u32; 4]> = Vec::new();
    for a in 0..4 {
        for b in a..4 {
            let mut s = [0u32; 4];
            s[a] += 1;
            s[b] += 1;
            states.push(s);
        }
    }
    let index: HashMap<[u32; 4], usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let n = states.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (i, s) in states.iter().enumerate() {
        for x in 0..4 {
            if s[x] == 0 {
                continue;
            }
            for y in [-1i64, 1, 2] {
                let mut t = *s;
                t[x] -= 1;
                t[(x as i64 + y).rem_euclid(4) as usize] += 1;
                let r = AFFINE.rate(s[x]) * kernel_weight(&[y], alpha);
                let j = index[&t];
                q[(i, j)] += r;
                q[(i, i)] -= r;
            }
        }
    }
    // pi Q = 0 with sum pi = 1
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or("singular generator")?;
    let exit: Vec<f64> = (0..n).map(|i| -q[(i, i)]).collect();
    let norm: f64 = (0..n).map(|i| pi[i] * exit[i]).sum();
    let visits_exact: Vec<f64> = (0..n).map(|i| pi[i] * exit[i] / norm).collect();

    let sampler = DisplacementSampler::for_spec(&spec).map_err(err)?;
    let mut config = Configuration::new(&spec, vec![2, 0, 0, 0]);
    let mut rng = stream(SEED, tag::DYNAMICS, 901);
    let events = 1_000_000;
    let mut time = vec![0.0; n];
    let mut visits = vec![0u64; n];
    for _ in 0..events {
        let s: [u32; 4] = config.occupancy().try_into().map_err(|_| "state size")?;
        let i = index[&s];
        visits[i] += 1;
        let e = step(&mut config, &sampler, &mut rng).map_err(err)?;
        time[i] += e.time_increment;
    }
    let total: f64 = time.iter().sum();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        worst = worst.max(rel(time[i] / total, pi[i]));
        worst = worst.max(rel(visits[i] as f64 / events as f64, visits_exact[i]));
    }
    Ok((worst < 0.02, format!("max rel error {:.2}% over {n} states (time and visit fractions)", 100.0 * worst)))
}

fn lclt() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for alpha in [1.5, 3.0] {
        let p = plan(ExperimentKind::Lclt, 1, alpha, 64, LINEAR);
        let dir = tempfile::tempdir().map_err(err)?;
        let bundle = execute(&p, dir.path()).map_err(err)?;
        let report = verify(&p, dir.path()).map_err(err)?;
        pass &= report.pass;
        let sups: Vec<String> = bundle.lclt.iter().map(|r| format!("{:.2e}", r.sup_discrepancy)).collect();
        let last = bundle.lclt.last().ok_or("no rows")?;
        parts.push(format!(
            "alpha={alpha}: sup {}, origin ratio {:+.2}%",
            sups.join(" > "),
            100.0 * (last.origin_scaled / last.origin_limit - 1.0)
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn relaxation() -> Outcome {
    let mut p = plan(ExperimentKind::Autocov, 1, 3.0, 4096, LINEAR);
    p.replicas = 1;
    p.sample_dt = Some(1.0);
    p.horizon = Some(1e5);
    p.max_lag = 500;
    p.lag_times = vec![50.0, 100.0, 200.0];
    p.fit_range = Some([10.0, 400.0]);
    let dir = tempfile::tempdir().map_err(err)?;
    let bundle = execute(&p, dir.path()).map_err(err)?;
    let report = verify(&p, dir.path()).map_err(err)?;
    let Summary::Autocov { relaxation, decay, relaxation_constant, .. } = bundle.summary else {
        return Err("wrong summary".into());
    };
    let rows: Vec<String> =
        relaxation.iter().map(|r| format!("t={}: {:.4} +- {:.4}", r.t, r.scaled, r.scaled_se)).collect();
    let decay = decay.ok_or("no decay fit")?;
    Ok((
        report.pass,
        format!(
            "constant {:.6}; {}; decay exponent {:.3}",
            relaxation_constant.unwrap_or(f64::NAN),
            rows.join(", "),
            decay.exponent
        ),
    ))
}

fn diffusive() -> Outcome {
    let mut p = plan(ExperimentKind::Scaling, 1, 0.5, 2048, LINEAR);
    p.n_grid = vec![250.0, 500.0, 1000.0, 2000.0];
    p.initial = InitialCondition::Canonical;
    p.sample_dt = Some(0.05);
    p.max_lag = 2000;
    p.sites = 16;
    let dir = tempfile::tempdir().map_err(err)?;
    let bundle = execute(&p, dir.path()).map_err(err)?;
    let report = verify(&p, dir.path()).map_err(err)?;
    let Summary::Scaling { fits, diffusive, .. } = bundle.summary else { return Err("wrong summary".into()) };
    let kv = diffusive.ok_or("no diffusive check")?;
    Ok((
        report.pass,
        format!(
            "slope {:.3} +- {:.3}; Var A(N)/N = {:.4} vs sigma^2 = {:.4} ({:+.1}%)",
            fits[0].slope,
            fits[0].slope_se,
            kv.pooled,
            kv.sigma2.sigma2,
            100.0 * kv.relative_error
        ),
    ))
}

fn fractional() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;

    let mut p = plan(ExperimentKind::Scaling, 1, 1.5, 2048, LINEAR);
    p.n_grid = vec![250.0, 500.0, 1000.0, 2000.0];
    p.sites = 16;
    let dir = tempfile::tempdir().map_err(err)?;
    let bundle = execute(&p, dir.path()).map_err(err)?;
    let report = verify(&p, dir.path()).map_err(err)?;
    let Summary::Scaling { fits, .. } = &bundle.summary else { return Err("wrong summary".into()) };
    pass &= report.pass;
    lines.push(format!("(a) slope {:.3} [{}]", fits[0].slope, if report.pass { "ok" } else { "out" }));

    let mut p = plan(ExperimentKind::FddLaw, 1, 1.5, 2048, LINEAR);
    p.n_grid = vec![2000.0];
    p.t_grid = vec![0.5, 1.0];
    p.ensembles = 5;
    p.master_seed = SEED + 1;
    let dir = tempfile::tempdir().map_err(err)?;
    let bundle = execute(&p, dir.path()).map_err(err)?;
    let Summary::FddLaw { reports, law, .. } = &bundle.summary else { return Err("wrong summary".into()) };
    let ks_ok = reports
        .iter()
        .filter(|r| r.verdicts.iter().any(|v| v.check == "ks t=1" && v.estimate > 0.01))
        .count();
    let cov_total = reports.iter().flat_map(|r| &r.verdicts).filter(|v| v.check.starts_with("cov")).count();
    let cov_ok = reports.iter().flat_map(|r| &r.verdicts).filter(|v| v.check.starts_with("cov") && v.pass).count();
    pass &= ks_ok >= 4 && cov_ok == cov_total;
    lines.push(format!(
        "(b) KS p > 0.01 in {ks_ok}/5 (sigma^2 = {:.4}); (c) {cov_ok}/{cov_total} covariances within 4 SE",
        law.sigma_squared().unwrap_or(f64::NAN)
    ));

    let mut p = plan(ExperimentKind::Scaling, 1, 1.5, 2048, AFFINE);
    p.n_grid = vec![250.0, 500.0, 1000.0, 2000.0];
    p.sites = 16;
    p.slope_tolerance = 0.12;
    p.master_seed = SEED + 2;
    let dir = tempfile::tempdir().map_err(err)?;
    let bundle = execute(&p, dir.path()).map_err(err)?;
    let report = verify(&p, dir.path()).map_err(err)?;
    let Summary::Scaling { fits, .. } = &bundle.summary else { return Err("wrong summary".into()) };
    pass &= report.pass;
    lines.push(format!("affine slope {:.3} [{}]", fits[0].slope, if report.pass { "ok" } else { "out" }));
    Ok((pass, lines.join("; ")))
}

fn gaussian_constants() -> Outcome {
    // zeta(3/2), Dirichlet beta(3/2)
    const ZETA_3_2: f64 = 2.612_375_348_685_488;
    const BETA_3_2: f64 = 0.864_502_653_461_202_1;
    let sphere = |d: usize| if d == 1 { 2.0 } else { 2.0 * PI };
    let closed = |d: usize, alpha: f64| -> f64 {
        let df = d as f64;
        if alpha < 2.0 {
            let c = PI.powf(0.5 * df) * gamma(1.0 - 0.5 * alpha) / (alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (df + alpha)));
            sphere(d) * gamma(df / alpha) / (alpha * c.powf(df / alpha)) / (2.0 * PI).powf(df)
        } else if alpha == 2.0 {
            let k = if d == 1 { 1.0 } else { PI / 2.0 };
            (2.0 * PI * k).powf(-0.5 * df)
        } else {
            let a = if d == 1 { PI * PI / 3.0 } else { 2.0 * ZETA_3_2 * BETA_3_2 };
            (2.0 * PI * a).powf(-0.5 * df)
        }
    };
    let mut worst: f64 = 0.0;
    for d in [1, 2] {
        for alpha in [0.5, 1.5, 2.0, 3.0] {
            let f = stable_density_at_origin(1.0, d, alpha).map_err(err)?;
            worst = worst.max(rel(f, closed(d, alpha)));
        }
    }
    Ok((worst < 1e-8, format!("max rel difference {worst:.1e} over alpha in {{0.5, 1.5, 2, 3}}, d in {{1, 2}}")))
}

fn synthetic_law(theta: f64) -> LimitLaw {
    LimitLaw {
        d: 1,
        alpha: 1.5,
        hurst: theta,
        scale: Scale::Value(1.0),
        regime: Regime::D1AlphaBetweenOneAndTwo,
        lambda_rule: "synthetic",
    }
}

fn harness_self_tests() -> Outcome {
    let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
    let thetas = [0.5, 2.0 / 3.0, 0.75];
    // data theta -> mismatched law theta
    let mismatch = [0.75, 0.5, 0.5];
    let reps = 200;
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, (&theta, &wrong)) in thetas.iter().zip(&mismatch).enumerate() {
        let (mut false_fail, mut false_pass) = (0, 0);
        for rep in 0..reps {
            let mut rng = stream(SEED, tag::SYNTHETIC, (k * reps + rep) as u64);
            let mut ens = ReplicaEnsemble::new(grid.to_vec(), SEED);
            for r in 0..200 {
                ens.insert_values(r, sample_fbm(&mut rng, theta, &grid).map_err(err)?).map_err(err)?;
            }
            let right = hurst_and_law_check(&ens, &synthetic_law(theta), 1.0, &grid, None).map_err(err)?;
            let off = hurst_and_law_check(&ens, &synthetic_law(wrong), 1.0, &grid, None).map_err(err)?;
            false_fail += usize::from(!right.pass);
            false_pass += usize::from(off.pass);
        }
        let ff = false_fail as f64 / reps as f64;
        let fp = false_pass as f64 / reps as f64;
        pass &= ff < 0.05 && fp < 0.05;
        lines.push(format!("theta={theta:.3}: false-fail {:.1}%, false-pass vs {wrong} {:.1}%", 100.0 * ff, 100.0 * fp));
    }
    Ok((pass, lines.join("; ")))
}

fn log_regimes() -> Outcome {
    let mut p = plan(ExperimentKind::Scaling, 1, 2.0, 1024, LINEAR);
    p.n_grid = vec![250.0, 500.0, 1000.0, 2000.0];
    p.replicas = 100;
    p.sites = 16;
    let dir = tempfile::tempdir().map_err(err)?;
    let bundle = execute(&p, dir.path()).map_err(err)?;
    let Summary::Scaling { fits, expected_slope, .. } = &bundle.summary else { return Err("wrong summary".into()) };
    let slope = fits[0].slope;
    Ok((
        slope > 1.0 && slope < 1.6,
        format!(
            "d=1 alpha=2 slope {slope:.3} in (1.0, 1.6) (log-corrected local slope {expected_slope:.3}); \
             log factors of d=1 alpha in {{1, 2}} and d=2 alpha >= 2 are not tested quantitatively"
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 equilibrium identities", equilibrium_identities),
        ("2a particle conservation", conservation),
        ("2b stationarity chi-square", stationarity),
        ("2c rate-matrix frequencies", rate_matrix_frequencies),
        ("3 local limit theorem", lclt),
        ("4 relaxation constant", relaxation),
        ("5 diffusive regime", diffusive),
        ("6 fractional regime", fractional),
        ("7 gaussian-branch constants", gaussian_constants),
        ("8 harness self-tests", harness_self_tests),
        ("9 log regimes (qualitative)", log_regimes),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok((pass, detail)) => (pass, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {name}: {} ({detail}) [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
