use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use treeem::csv_io::{read_matrix, write_matrix};
use treeem::experiment::{emit_results, results_csv, run_sweep, ExperimentConfig};
use treeem::{chow_liu, run_em, CovMatrix, EmConfig, Error, LinearModel, ObservationSet};

#[derive(Parser)]
#[command(
    name = "treeem",
    version,
    about = "Tree-structured latent covariance learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a randomized sweep over observation dimensions
    Sweep(SweepArgs),
    /// Chow-Liu tree of a CSV covariance
    Chowliu(ChowLiuArgs),
    /// EM tree estimate from CSV model and observations
    Em(EmArgs),
}

/// Every config key is also a flag of the same name.
#[derive(Args)]
struct SweepArgs {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long = "m_values")]
    m_values: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long = "snr_db")]
    snr_db: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long = "l_max")]
    l_max: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    perturbation: Option<String>,
    #[arg(long = "identity_mixing")]
    identity_mixing: Option<String>,
    #[arg(long = "sigma_path")]
    sigma_path: Option<String>,
    #[arg(long = "sigma0_path")]
    sigma0_path: Option<String>,
    /// Output stem; writes `<output>.json` and `<output>.csv`
    #[arg(long)]
    output: Option<String>,
}

impl SweepArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 14] {
        [
            ("p", &self.p),
            ("m_values", &self.m_values),
            ("r", &self.r),
            ("snr_db", &self.snr_db),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("epsilon", &self.epsilon),
            ("l_max", &self.l_max),
            ("alpha", &self.alpha),
            ("perturbation", &self.perturbation),
            ("identity_mixing", &self.identity_mixing),
            ("sigma_path", &self.sigma_path),
            ("sigma0_path", &self.sigma0_path),
            ("output", &self.output),
        ]
    }
}

#[derive(Args)]
struct ChowLiuArgs {
    /// Covariance CSV
    #[arg(long)]
    input: PathBuf,
    /// Tree edges CSV (`u,v` per line, 0-based)
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Tree covariance CSV
    #[arg(long)]
    cov: Option<PathBuf>,
}

#[derive(Args)]
struct EmArgs {
    #[arg(long)]
    sigma0: PathBuf,
    #[arg(long)]
    h: PathBuf,
    #[arg(long)]
    d: PathBuf,
    /// Observations, one sample per row
    #[arg(long)]
    obs: PathBuf,
    /// Ground-truth covariance for latent KL diagnostics
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = treeem::em::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long = "l_max", default_value_t = treeem::em::DEFAULT_L_MAX)]
    l_max: usize,
    /// Final tree covariance CSV
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration trace (JSON)
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse { .. } => 1,
        Error::Io { .. } => 3,
        _ => 2,
    }
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for (key, value) in args.overrides() {
        if let Some(value) = value {
            config.set(key, value)?;
        }
    }
    config.validate()?;
    let result = run_sweep(&config)?;
    for s in &result.summaries {
        info!(
            "m={} kl_em={:.6} kl_prior={:.6} kl_oracle={:.6} iterations={:.2} failed={}",
            s.m, s.kl_em.mean, s.kl_prior.mean, s.kl_oracle.mean, s.iterations.mean, s.failed
        );
    }
    match &config.output {
        Some(stem) => {
            let (json, csv) = emit_results(&result, stem)?;
            println!("{}\n{}", json.display(), csv.display());
        }
        None => print!("{}", results_csv(&result)),
    }
    Ok(())
}

fn chowliu(args: ChowLiuArgs) -> Result<(), Error> {
    let sigma = CovMatrix::new(read_matrix(&args.input)?)?;
    let fit = chow_liu(&sigma)?;
    let edges: String = fit
        .tree
        .edges()
        .iter()
        .map(|(u, v)| format!("{u},{v}\n"))
        .collect();
    match &args.edges {
        Some(path) => fs::write(path, &edges).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None => print!("{edges}"),
    }
    if let Some(path) = &args.cov {
        write_matrix(path, fit.cov.as_matrix())?;
    }
    println!("kl = {}", fit.kl);
    Ok(())
}

fn em(args: EmArgs) -> Result<(), Error> {
    let sigma0 = CovMatrix::new(read_matrix(&args.sigma0)?)?;
    let model = LinearModel::new(
        read_matrix(&args.h)?,
        CovMatrix::new(read_matrix(&args.d)?)?,
    )?;
    let obs = ObservationSet::from_samples(read_matrix(&args.obs)?)?;
    let truth = args
        .truth
        .as_ref()
        .map(|p| read_matrix(p).and_then(CovMatrix::new))
        .transpose()?;
    let config = EmConfig::new(sigma0, args.epsilon, args.l_max)?;
    let trace = run_em(&config, &model, &obs, truth.as_ref())?;
    let last = trace.final_iterate();
    write_matrix(&args.out, last.sigma_tree.as_matrix())?;
    if let Some(path) = &args.trace {
        let iterations: Vec<_> = trace
            .iterations
            .iter()
            .map(|it| {
                json!({
                    "index": it.index,
                    "edges": it.tree.edges(),
                    "obs_kl": it.obs_kl,
                    "latent_kl": it.latent_kl,
                    "step_kl": it.step_kl,
                })
            })
            .collect();
        let doc = json!({
            "stop_reason": trace.stop_reason,
            "monotonicity_violations": trace.monotonicity_violations,
            "best_latent_index": trace.best_latent_index(),
            "iterations": iterations,
        });
        let text = serde_json::to_string_pretty(&doc).expect("trace serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    println!(
        "iterations = {}\nstop_reason = {}\nobs_kl = {}",
        trace.len(),
        trace.stop_reason,
        last.obs_kl
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep(args) => sweep(args),
        Command::Chowliu(args) => chowliu(args),
        Command::Em(args) => em(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
