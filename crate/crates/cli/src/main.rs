use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use zrp_core::experiment::{
    execute, load_plan, sample_equilibrium, simulate_paths, verify, write_csv, write_json, ExperimentKind,
    ExperimentPlan, Manifest, ResultBundle, ARTIFACT_VERSION,
};
use zrp_core::ZrpError;

#[derive(Parser)]
#[command(name = "zrp", version, about = "Long-range zero-range process simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Equilibrium profile and one sampled configuration
    SampleEquilibrium(Common),
    /// Record functional paths only
    Simulate(Common),
    /// Stationary autocovariance and relaxation checks
    Autocov(Common),
    /// Variance scaling of the additive functional
    Scaling(Common),
    /// Finite-dimensional law check
    FddLaw(Common),
    /// Local limit theorem discrepancies
    Lclt(Common),
    /// Limit-theorem constants
    Constants(Common),
    /// Recompute the acceptance checks from a results directory
    Verify(Common),
    /// Equilibrium snapshot chi-square over independent runs
    Stationarity(Common),
}

#[derive(clap::Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; ZRP_SEED overrides the config seed
    #[arg(long, env = "ZRP_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn plan_for(common: &Common, kind: Option<ExperimentKind>) -> zrp_core::Result<(ExperimentPlan, PathBuf)> {
    let config = common.config.as_ref().ok_or_else(|| ZrpError::Plan("--config <file> is required".into()))?;
    let mut plan = load_plan(config)?;
    if let Some(kind) = kind {
        plan.experiment = kind;
    }
    if let Some(seed) = common.seed {
        plan.master_seed = seed;
    }
    if let Some(w) = common.workers {
        plan.workers = w;
    }
    plan.validate()?;
    let out = common.out.clone().unwrap_or_else(|| plan.outputs.clone());
    Ok((plan, out))
}

fn print_bundle(bundle: &ResultBundle, format: Format) -> zrp_core::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&bundle.summary)?)?,
        Format::Csv => {
            if !bundle.lclt.is_empty() {
                writeln!(out, "s,sup_discrepancy")?;
                for r in &bundle.lclt {
                    writeln!(out, "{},{}", r.s, r.sup_discrepancy)?;
                }
            } else if !bundle.paths.is_empty() {
                writeln!(out, "replica,site,N,t,A")?;
                for r in &bundle.paths {
                    writeln!(out, "{},{},{},{},{}", r.replica, r.site, r.n, r.t, r.a)?;
                }
            } else {
                let c = &bundle.constants;
                writeln!(out, "key,value")?;
                writeln!(out, "d,{}", c.d)?;
                writeln!(out, "alpha,{}", c.alpha)?;
                writeln!(out, "theta,{}", c.theta)?;
                writeln!(out, "sigma,{}", serde_json::to_string(&c.sigma)?.trim_matches('"'))?;
                writeln!(out, "lambda_rule,\"{}\"", c.lambda_rule)?;
                if let Some(r) = c.relaxation_constant {
                    writeln!(out, "relaxation_constant,{r}")?;
                }
            }
        }
    }
    Ok(())
}

fn run(command: Command) -> zrp_core::Result<ExitCode> {
    let (common, kind) = match &command {
        Command::SampleEquilibrium(c) | Command::Simulate(c) | Command::Verify(c) => (c, None),
        Command::Autocov(c) => (c, Some(ExperimentKind::Autocov)),
        Command::Scaling(c) => (c, Some(ExperimentKind::Scaling)),
        Command::FddLaw(c) => (c, Some(ExperimentKind::FddLaw)),
        Command::Lclt(c) => (c, Some(ExperimentKind::Lclt)),
        Command::Constants(c) => (c, Some(ExperimentKind::Constants)),
        Command::Stationarity(c) => (c, Some(ExperimentKind::Stationarity)),
    };
    let (plan, out) = plan_for(common, kind)?;
    match command {
        Command::Verify(_) => {
            let report = verify(&plan, &out)?;
            print!("{}", report.table());
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::SampleEquilibrium(_) => {
            let (profile, rows) = sample_equilibrium(&plan)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("equilibrium.json"), profile.to_json()? + "\n")?;
            write_csv(&out.join("histogram.csv"), &rows)?;
            match common.format {
                Format::Json => println!("{}", profile.to_json()?),
                Format::Csv => {
                    println!("k,count,expected");
                    for r in &rows {
                        println!("{},{},{}", r.k, r.count, r.expected);
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(_) => {
            let start = std::time::Instant::now();
            let result = simulate_paths(&plan);
            std::fs::create_dir_all(&out)?;
            let mut manifest = Manifest {
                artifact_version: ARTIFACT_VERSION.into(),
                plan: plan.clone(),
                operations: vec!["sample_configuration".into(), "record_functional".into()],
                files: Vec::new(),
                wall_seconds: 0.0,
                complete: false,
                error: None,
            };
            let rows = match result {
                Ok(rows) => {
                    write_csv(&out.join("paths.csv"), &rows)?;
                    manifest.files.push("paths.csv".into());
                    manifest.complete = true;
                    Ok(rows)
                }
                Err(e) => {
                    manifest.error = Some(e.to_string());
                    Err(e)
                }
            };
            manifest.wall_seconds = start.elapsed().as_secs_f64();
            write_json(&out.join("manifest.json"), &manifest)?;
            let rows = rows?;
            if common.format == Format::Csv {
                println!("replica,site,N,t,A");
                for r in &rows {
                    println!("{},{},{},{},{}", r.replica, r.site, r.n, r.t, r.a);
                }
            } else {
                println!("{}", serde_json::json!({"paths": rows.len(), "out": out}));
            }
            Ok(ExitCode::SUCCESS)
        }
        _ => {
            let bundle = execute(&plan, &out)?;
            print_bundle(&bundle, common.format)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
