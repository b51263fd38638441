use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eqprop::data::{Dataset, Split};
use eqprop::harness::train::free_config;
use eqprop::harness::{
    evaluate, load_checkpoint, load_datasets, oracle_check, run_to_dir, sweep, Algorithm, Experiment,
    RunConfig, TrainOnly,
};
use eqprop::Error;
use serde_json::{json, Map, Value};

/// Environment variable that overrides the configured MNIST directory.
const DATA_DIR_ENV: &str = "EQPROP_DATA_DIR";

#[derive(Parser)]
#[command(name = "eqprop", version, about = "Equilibrium propagation experiments on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write metrics, checkpoint and manifest.
    Train(RunArgs),
    /// Test accuracy of a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train `repetitions` seeds and report mean and standard deviation.
    Sweep(RunArgs),
    /// Compare the learners with the exact gradient on random small nets.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        beta: f64,
        #[arg(long, default_value_t = 8)]
        max_neurons: usize,
        /// Fail when the AEP or dyadic relative error exceeds this.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON file with any subset of the run configuration; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<Experiment>,
    #[arg(long)]
    method: Option<Algorithm>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    r_str: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_free: Option<usize>,
    #[arg(long)]
    n_nudge: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_input_hidden: Option<f64>,
    #[arg(long)]
    lr_hidden_output: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_only: Option<TrainOnly>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    train_subset: Option<usize>,
    #[arg(long)]
    test_subset: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
}

impl RunArgs {
    fn flags(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_owned(), v);
            }
        };
        put("experiment", self.experiment.map(|v| json!(v)));
        put("method", self.method.map(|v| json!(v)));
        put("hidden_size", self.hidden_size.map(|v| json!(v)));
        put("r_str", self.r_str.map(|v| json!(v)));
        put("beta", self.beta.map(|v| json!(v)));
        put("dt", self.dt.map(|v| json!(v)));
        put("n_free", self.n_free.map(|v| json!(v)));
        put("n_nudge", self.n_nudge.map(|v| json!(v)));
        put("epochs", self.epochs.map(|v| json!(v)));
        put("batch_size", self.batch_size.map(|v| json!(v)));
        put("lr_input_hidden", self.lr_input_hidden.map(|v| json!(v)));
        put("lr_hidden_output", self.lr_hidden_output.map(|v| json!(v)));
        put("seed", self.seed.map(|v| json!(v)));
        put("train_only", self.train_only.map(|v| json!(v)));
        put("data_dir", self.data_dir.as_ref().map(|v| json!(v)));
        put("output_dir", self.output_dir.as_ref().map(|v| json!(v)));
        put("train_subset", self.train_subset.map(|v| json!(v)));
        put("test_subset", self.test_subset.map(|v| json!(v)));
        put("repetitions", self.repetitions.map(|v| json!(v)));
        m
    }

    /// Experiment defaults, then the config file, then the environment
    /// override for the data directory, then flags.
    fn resolve(&self) -> eqprop::Result<RunConfig> {
        let file = match &self.config {
            Some(path) => read_config_file(path)?,
            None => Map::new(),
        };
        let flags = self.flags();
        let experiment = match flags.get("experiment").or_else(|| file.get("experiment")) {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Config(format!("experiment: {e}")))?,
            None => Experiment::SymmetricInit,
        };
        let Value::Object(mut merged) = json!(RunConfig::defaults(experiment)) else {
            unreachable!("config serializes to an object")
        };
        merged.extend(file);
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            merged.insert("data_dir".into(), json!(PathBuf::from(dir)));
        }
        merged.extend(flags);
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_config_file(path: &Path) -> eqprop::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::Config(format!("{}: expected a JSON object", path.display()))),
        Err(e) => Err(Error::Config(format!("{}: {e}", path.display()))),
    }
}

fn print_json(v: Value) -> eqprop::Result<()> {
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn run(cli: Cli) -> eqprop::Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let (train, test) = load_datasets(&cfg)?;
            let (outcome, paths) = run_to_dir(&cfg, &train, &test)?;
            print_json(json!({
                "test_accuracy": outcome.final_accuracy,
                "cumulative_loss": outcome.cumulative_loss,
                "metrics": paths.metrics,
                "checkpoint": paths.checkpoint,
                "manifest": paths.manifest,
            }))?;
        }
        Command::Eval { checkpoint, run } => {
            let cfg = run.resolve()?;
            let model = load_checkpoint(&checkpoint)?;
            let mut test = Dataset::load(&cfg.data_dir, Split::Test)?;
            if let Some(n) = cfg.test_subset {
                test = test.head(n);
            }
            let accuracy = evaluate(&model, &test, &free_config(&cfg), cfg.seed);
            print_json(json!({
                "test_accuracy": accuracy,
                "r_str": model.r_str().ok(),
                "samples": test.len(),
            }))?;
        }
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            let (train, test) = load_datasets(&cfg)?;
            let summary = sweep(&cfg, &train, &test, &mut |seed, out| {
                eprintln!("seed {seed}: accuracy {:.4}", out.final_accuracy);
            })?;
            print_json(serde_json::to_value(&summary)?)?;
        }
        Command::OracleCheck {
            count,
            seed,
            beta,
            max_neurons,
            tolerance,
        } => {
            let report = oracle_check(count, seed, beta, max_neurons)?;
            print_json(json!({
                "beta": report.beta,
                "nets": report.rows.len(),
                "max_aep_error": report.max_aep,
                "max_dyadic_error": report.max_dyadic,
                "max_vf_error": report.rows.iter().map(|r| r.vf).fold(0.0, f64::max),
            }))?;
            if report.max_aep > tolerance || report.max_dyadic > tolerance {
                eprintln!("error above tolerance {tolerance:e}");
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Serde(_) => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("eqprop: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
