use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsdcap::pipeline::{self, format_comparison, presets, EvalInputs, PipelineConfig};
use fsdcap::Error;

#[derive(Parser)]
#[command(name = "fsdcap", version, about = "Graph feature imputation with fractional subgraph diffusion and class-aware propagation")]
struct Cli {
    /// Worker threads for channel-parallel diffusion (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a missing-feature mask.
    Mask {
        #[command(flatten)]
        run: RunArgs,
        /// Mask shape rows; skips loading a dataset when given with --cols.
        #[arg(long, requires = "cols")]
        rows: Option<usize>,
        #[arg(long, requires = "rows")]
        cols: Option<usize>,
    },
    /// Mask a dataset and impute the hidden entries.
    Impute {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score an imputed matrix against ground truth.
    Eval(EvalArgs),
    /// Mask, impute and evaluate in one go.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Run zero, fp, fsd and fsd-cap on the same mask and tabulate.
        #[arg(long)]
        compare: bool,
        /// Use the built-in block model instead of input files. Implies
        /// `--preset synthetic` unless another preset is given.
        #[arg(long)]
        synthetic: bool,
    },
    /// List named hyperparameter presets.
    Presets {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay the config echoed in an earlier report.json.
    #[arg(long, conflicts_with = "config")]
    from_report: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Extra `key=value` overrides; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Existing mask file instead of generating one.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// structural or uniform.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    mr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// zero, fp, fsd or fsd-cap.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(short = 'K', long = "iterations")]
    k: Option<usize>,
    #[arg(short = 'T', long)]
    temperature: Option<f64>,
    #[arg(long)]
    add_self_loops: bool,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    imputed: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Edge list in the same node order; enables distance and energy sections.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// `node,class` pairs; enables the similarity section.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    add_self_loops: bool,
    #[arg(long, default_value_t = fsdcap::metrics::DEFAULT_SAMPLE_CAP)]
    sample_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out = Vec::new();
        if let Some(p) = &self.preset {
            out.push(("preset".into(), p.clone()));
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let pairs = [
            ("graph", path(&self.graph)),
            ("features", path(&self.features)),
            ("labels", path(&self.labels)),
            ("train_labels", path(&self.train_labels)),
            ("scores", path(&self.scores)),
            ("mask", path(&self.mask)),
            ("mask_mode", self.mode.clone()),
            ("mr", self.mr.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("method", self.method.clone()),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("temperature", self.temperature.map(|v| v.to_string())),
            ("add_self_loops", self.add_self_loops.then(|| "true".to_string())),
            ("output_dir", path(&self.output_dir)),
        ];
        out.extend(pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Param(format!("--set expects key=value, got {s:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn config(&self, extra: &[(String, String)]) -> Result<PipelineConfig, Error> {
        let mut overrides = extra.to_vec();
        overrides.extend(self.overrides()?);
        match &self.from_report {
            Some(report) => {
                let mut cfg = PipelineConfig::from_report(report)?;
                for (k, v) in &overrides {
                    cfg.set(k, v)?;
                }
                Ok(cfg)
            }
            None => PipelineConfig::load(self.config.as_deref(), &overrides),
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    // a closed pipe (e.g. `| head`) is not a failure
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    fsdcap::configure_threads(cli.threads)?;
    match cli.command {
        Command::Mask { run, rows, cols } => {
            let cfg = run.config(&[])?;
            let summary = pipeline::cmd_mask(&cfg, rows.zip(cols))?;
            println!(
                "mask {}x{}: {} observed, {} masked entries, {} rows with an observed entry -> {}",
                summary.rows,
                summary.cols,
                summary.observed_entries,
                summary.masked_entries,
                summary.rows_with_observed,
                cfg.output_dir.join("mask.fmsk").display()
            );
        }
        Command::Impute { run } => {
            let cfg = run.config(&[])?;
            let out = pipeline::cmd_impute(&cfg)?;
            for w in &out.report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} -> {}", cfg.method, cfg.output_dir.join(&out.report.methods[0].output).display());
        }
        Command::Eval(args) => {
            let inputs = EvalInputs {
                imputed: args.imputed,
                truth: args.truth,
                mask: args.mask,
                graph: args.graph,
                labels: args.labels,
                add_self_loops: args.add_self_loops,
                sample_cap: args.sample_cap,
                seed: args.seed,
            };
            let eval = pipeline::cmd_eval(&inputs)?;
            match args.output {
                Some(p) => pipeline::report::write_json(&p, &eval)?,
                None => print_json(&eval)?,
            }
        }
        Command::Run { run, compare, synthetic } => {
            let mut extra = Vec::new();
            if synthetic {
                let key = if run.preset.is_none() { "preset" } else { "source" };
                extra.push((key.to_string(), "synthetic".to_string()));
            }
            if compare {
                extra.push(("compare".to_string(), "true".to_string()));
            }
            let cfg = run.config(&extra)?;
            let out = pipeline::cmd_run(&cfg)?;
            for w in &out.report.warnings {
                eprintln!("warning: {w}");
            }
            match &out.report.comparison {
                Some(rows) => print!("{}", format_comparison(rows)),
                None => {
                    let m = &out.report.methods[0];
                    let rmse = m.evaluation.as_ref().and_then(|e| e.reconstruction).map(|r| r.rmse);
                    let ratio = m.evaluation.as_ref().and_then(|e| e.similarity.as_ref()).and_then(|s| s.ratio);
                    println!("{}: rmse {rmse:?}, similarity ratio {ratio:?}", m.method);
                }
            }
            println!("report -> {}", cfg.output_dir.join("report.json").display());
        }
        Command::Presets { json } => {
            let all = presets();
            if json {
                print_json(&all)?;
            } else {
                println!("{:<26} {:>6} {:>6} {:>8}", "name", "gamma", "lambda", "T");
                for p in all {
                    println!("{:<26} {:>6} {:>6} {:>8}", p.name, p.gamma, p.lambda, p.temperature);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
