//! `faprec` — finite-alphabet precoding simulator.
//!
//! Subcommands: `train` (fit IDE2-Net parameters), `eval` (single-point BER),
//! `sweep` (BER vs SNR / layers / CSI error), `oracle` (exhaustive-search
//! comparison at tiny sizes), `plot` (gnuplot script for a sweep CSV).
//!
//! Configuration comes from a TOML file (`--config`), with every field
//! defaulted to the standard experiment (N=128, K=16, 16-QAM, one-bit DACs,
//! SNR 14 dB); command-line flags override file values. Every run writes a
//! JSON manifest capturing the merged configuration and seed, sufficient to
//! reproduce the outputs byte-for-byte.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use faprec::channel::{derive_rng, precoding_factor_beta, sample_channel, SystemConfig};
use faprec::harness::{ber_sweep, brute_force_precode, full_precision, render_csv, SweepKind};
use faprec::linalg::norm_sqr;
use faprec::precoders::{ide2, Ide2Config};
use faprec::unfolded::{train, Ide2NetParams, ParamsFile};
use rand::Rng;

use config::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "faprec", version, about = "Finite-alphabet precoding simulator for the massive MU-MIMO downlink")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train IDE2-Net parameters and write them to a parameter file.
    Train(TrainArgs),
    /// Evaluate one precoder at a single operating point.
    Eval(EvalArgs),
    /// Run a BER sweep and write plot-ready CSV.
    Sweep(SweepArgs),
    /// Compare IDE2 against the exhaustive-search optimum at tiny sizes.
    Oracle(OracleArgs),
    /// Emit a gnuplot script for a sweep CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Number of unfolded layers T.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Training SNR tag (defaults to the system SNR).
    #[arg(long)]
    snr_db: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// zf | zf-quant | ide2 | pgd | ide2-net
    #[arg(long)]
    precoder: Option<String>,
    /// Parameter file for ide2-net.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    snr_db: Option<f64>,
    /// Iteration count for ide2/pgd.
    #[arg(long)]
    layers: Option<usize>,
    /// CSI error in [0, 1].
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// snr | layers | epsilon
    #[arg(long)]
    kind: Option<String>,
    /// Comma-separated sweep values, e.g. 1,2,5,10,20,50.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    precoder: Option<String>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Iteration count for ide2/pgd (fixed-T sweeps).
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    /// Trials per sweep point (default: enough for 1e5 bits).
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance count.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV produced by `sweep` or `eval`.
    #[arg(long)]
    csv: PathBuf,
    /// Sweep axis for labels: snr | layers | epsilon.
    #[arg(long, default_value = "snr")]
    kind: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: String,
    config: &'a RunConfig,
}

fn write_manifest(cfg: &RunConfig, command: &str, path: &Path) -> CliResult<()> {
    let manifest = Manifest {
        tool: "faprec",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config: cfg,
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Usage(format!("manifest serialization failed: {}", e)))?;
    std::fs::write(path, body + "\n")?;
    Ok(())
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn cmd_train(mut cfg: RunConfig, args: &TrainArgs) -> CliResult<()> {
    if let Some(layers) = args.layers {
        cfg.train.layers = layers;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(snr) = args.snr_db {
        cfg.train.snr_db_train = Some(snr);
    }
    let out_dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    write_manifest(&cfg, "train", &out_dir.join("train_manifest.json"))?;

    let sys = cfg.system()?;
    let cons = cfg.constellation()?;
    let alphabet = cfg.alphabet()?;
    let tc = cfg.train_config();
    let init = Ide2NetParams::warm_start(cfg.train.layers);

    let result = train(&tc, &sys, &alphabet, &cons, &init)?;

    let mut log_csv = String::from("epoch,train_loss,val_loss,lr\n");
    for row in &result.log {
        log_csv.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch,
            full_precision(row.train_loss),
            full_precision(row.val_loss),
            full_precision(row.lr)
        ));
    }
    std::fs::write(out_dir.join("train_log.csv"), log_csv)?;

    let params_path = out_dir.join("ide2net_params.json");
    ParamsFile {
        params: result.params,
        system: sys,
        train_seed: tc.seed,
    }
    .save(&params_path)?;

    println!(
        "trained {} layers: validation loss {:.6e} -> {:.6e} (best at epoch {}); parameters written to {}",
        cfg.train.layers,
        result.initial_val_loss,
        result.best_val_loss,
        result.best_epoch,
        params_path.display()
    );
    Ok(())
}

fn cmd_eval(mut cfg: RunConfig, args: &EvalArgs) -> CliResult<()> {
    if let Some(name) = &args.precoder {
        cfg.precoder.name = name.clone();
    }
    if let Some(params) = &args.params {
        cfg.precoder.params = Some(params.clone());
    }
    if let Some(snr) = args.snr_db {
        cfg.system.snr_db = snr;
    }
    if let Some(layers) = args.layers {
        cfg.precoder.t_max = layers;
    }
    if let Some(eps) = args.epsilon {
        cfg.eval.epsilon = eps;
    }
    if let Some(trials) = args.trials {
        cfg.eval.trials = trials;
    }
    let out_dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    write_manifest(&cfg, "eval", &out_dir.join("eval_manifest.json"))?;

    let mut spec = cfg.sweep_spec()?;
    if cfg.eval.epsilon > 0.0 {
        spec.kind = SweepKind::Epsilon;
        spec.values = vec![cfg.eval.epsilon];
    } else {
        spec.kind = SweepKind::Snr;
        spec.values = vec![cfg.system.snr_db];
    }
    if cfg.eval.trials > 0 {
        spec.trials_per_point = cfg.eval.trials;
    }

    let results = ber_sweep(&spec)?;
    let csv_path = out_dir.join("eval.csv");
    std::fs::write(&csv_path, render_csv(&results))?;
    let r = &results[0];
    println!(
        "{} @ snr {} dB, epsilon {}: ber {:.6e} (stderr {:.2e}, {} bits, {} trials discarded) -> {}",
        spec.precoder.name(),
        cfg.system.snr_db,
        cfg.eval.epsilon,
        r.ber,
        r.stderr,
        r.bits_total,
        r.trials_discarded,
        csv_path.display()
    );
    Ok(())
}

fn cmd_sweep(mut cfg: RunConfig, args: &SweepArgs) -> CliResult<()> {
    if let Some(kind) = &args.kind {
        cfg.sweep.kind = kind.clone();
    }
    if let Some(values) = &args.values {
        cfg.sweep.values = values.clone();
    }
    if let Some(name) = &args.precoder {
        cfg.precoder.name = name.clone();
    }
    if let Some(params) = &args.params {
        cfg.precoder.params = Some(params.clone());
    }
    if let Some(layers) = args.layers {
        cfg.precoder.t_max = layers;
    }
    if let Some(snr) = args.snr_db {
        cfg.system.snr_db = snr;
    }
    if let Some(trials) = args.trials {
        cfg.sweep.trials_per_point = trials;
    }
    let out_dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&out_dir)?;

    let stem = format!("sweep_{}_{}", cfg.sweep.kind, cfg.precoder.name);
    write_manifest(&cfg, "sweep", &out_dir.join(format!("{}_manifest.json", stem)))?;

    let spec = cfg.sweep_spec()?;
    let results = ber_sweep(&spec)?;
    let csv_path = out_dir.join(format!("{}.csv", stem));
    std::fs::write(&csv_path, render_csv(&results))?;
    println!(
        "{} rows ({} trials per point) -> {}",
        results.len(),
        spec.trials_per_point,
        csv_path.display()
    );
    Ok(())
}

fn cmd_oracle(mut cfg: RunConfig, args: &OracleArgs) -> CliResult<()> {
    if let Some(trials) = args.trials {
        cfg.oracle.instances = trials;
    }
    let out_dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    write_manifest(&cfg, "oracle", &out_dir.join("oracle_manifest.json"))?;

    let o = &cfg.oracle;
    let sys = SystemConfig::new(o.n_antennas, o.n_users, cfg.system.p_t, cfg.system.snr_db)?;
    let cons = cfg.constellation()?;
    let alphabet = cfg.alphabet()?;
    let ide2_cfg = Ide2Config {
        t_max: o.t_max,
        alpha: cfg.precoder.alpha,
        gamma: cfg.precoder.gamma,
    };

    let mut csv = String::from("instance,residual_opt,residual_ide2,ratio\n");
    let mut within_2x = 0usize;
    let mut completed = 0usize;
    for instance in 0..o.instances {
        let mut rng = derive_rng(cfg.seed, instance as u64);
        let h = sample_channel(&sys, &mut rng);
        let bits: Vec<u8> = (0..sys.n_users * cons.bits_per_symbol())
            .map(|_| rng.random::<bool>() as u8)
            .collect();
        let s = cons.modulate(&bits)?;
        let beta = match precoding_factor_beta(&h, sys.p_t) {
            Ok(b) => b,
            Err(faprec::Error::Numerical(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let (_, best_sq) = brute_force_precode(&h, &s, sys.p_t, &alphabet)?;
        let h_tilde = h.matrix().scaled(beta);
        let res = ide2(&h_tilde, &s, &alphabet, &ide2_cfg, beta)?;
        let delta: Vec<_> = s
            .iter()
            .zip(&h_tilde.matvec(&res.x)?)
            .map(|(sv, hv)| sv - hv)
            .collect();
        let resid = norm_sqr(&delta).sqrt();
        let best = best_sq.sqrt();
        let ratio = resid / best;
        if ratio <= 2.0 {
            within_2x += 1;
        }
        completed += 1;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            instance,
            full_precision(best),
            full_precision(resid),
            full_precision(ratio)
        ));
    }
    let csv_path = out_dir.join("oracle.csv");
    std::fs::write(&csv_path, csv)?;
    println!(
        "{} instances at N={}, K={} ({}^{} = {} candidates each): IDE2(T={}) within 2x of the optimum on {:.1}% -> {}",
        completed,
        o.n_antennas,
        o.n_users,
        alphabet.len(),
        o.n_antennas,
        (alphabet.len() as u64).pow(o.n_antennas as u32),
        o.t_max,
        100.0 * within_2x as f64 / completed.max(1) as f64,
        csv_path.display()
    );
    Ok(())
}

fn cmd_plot(cfg: RunConfig, args: &PlotArgs) -> CliResult<()> {
    let xlabel = match args.kind.as_str() {
        "snr" => "SNR (dB)",
        "layers" => "iterations / layers T",
        "epsilon" => "CSI error epsilon",
        other => {
            return Err(CliError::Usage(format!(
                "unknown plot kind '{}'; expected snr, layers, or epsilon",
                other
            )))
        }
    };
    let out_dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let stem = args
        .csv
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sweep");
    let gp_path = out_dir.join(format!("{}.gp", stem));
    let script = format!(
        "set datafile separator ','\n\
         set logscale y\n\
         set grid\n\
         set xlabel '{}'\n\
         set ylabel 'BER'\n\
         set key top left\n\
         plot '{}' skip 1 using 1:2:3 with yerrorlines title '{}'\n",
        xlabel,
        args.csv.display(),
        stem
    );
    std::fs::write(&gp_path, script)?;
    println!("gnuplot script -> {}", gp_path.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool setup failed: {}", e)))?;
    }
    match &cli.command {
        Command::Train(args) => cmd_train(cfg, args),
        Command::Eval(args) => cmd_eval(cfg, args),
        Command::Sweep(args) => cmd_sweep(cfg, args),
        Command::Oracle(args) => cmd_oracle(cfg, args),
        Command::Plot(args) => cmd_plot(cfg, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version print to stdout and exit 0
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
    }
}
