//! Command-line front end.
//!
//! Every subcommand resolves one [`ExperimentConfig`] (file first, then flag
//! overrides), validates it before doing any work, writes its artifacts to
//! the output directory and prints a JSON summary on stdout. Failures print
//! a JSON error object on stderr and map to the exit codes of
//! [`Error::exit_code`].

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, PredictorKind, TrafficSource};
use crate::error::{Error, Result};
use crate::eval::{compare_csv, compare_svg, evaluate, sweep_csv, sweep_l, EvalReport, EvalSpec, Predictor, SweepSpec};
use crate::finetune::{build_pairs, finetune, FinetuneOutcome};
use crate::markov::MarkovModel;
use crate::mlp::{build_nn_pairs, train as train_mlp, MlpModel};
use crate::statespace::Variant;
use crate::traffic::{generate_synthetic, load_trace, SyntheticSpec, Trace, TraceFormat};

pub const MARKOV_FILE: &str = "model.markov";
pub const FINETUNED_FILE: &str = "model_ft.markov";
pub const MLP_FILE: &str = "model.mlp";

#[derive(Debug, Parser)]
#[command(name = "specpred", version, about = "High-order Markov channel-occupancy prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic block-periodic trace.
    Gen(GenArgs),
    /// Convert a measured trace (binary or energy CSV) into a binary trace.
    Ingest(IngestArgs),
    /// Train the configured predictor on the training trace.
    Train(ExperimentArgs),
    /// Fine-tune a saved (or freshly estimated) Markov model.
    Finetune(FinetuneArgs),
    /// Evaluate a saved model on the test trace.
    Eval(EvalArgs),
    /// Sweep the smart-table size cap and report mean success.
    SweepL(SweepArgs),
    /// Overlay several evaluation reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Block length `B`.
    #[arg(long = "block", visible_alias = "block-size")]
    pub block_size: usize,
    #[arg(long)]
    pub slots: usize,
    #[arg(long, default_value_t = 1)]
    pub start: u8,
    /// Per-slot flip probability.
    #[arg(long = "outlier", visible_alias = "outlier-rate", default_value_t = 0.0)]
    pub outlier_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output trace file (binary-lines). Required.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    BinaryLines,
    CsvEnergy,
}

fn trace_format(format: FormatArg, threshold: Option<f64>) -> Result<TraceFormat> {
    match (format, threshold) {
        (FormatArg::BinaryLines, None) => Ok(TraceFormat::BinaryLines),
        (FormatArg::BinaryLines, Some(_)) => Err(Error::invalid(
            "--threshold applies to the csv-energy format only",
        )),
        (FormatArg::CsvEnergy, Some(threshold)) => Ok(TraceFormat::CsvEnergy { threshold }),
        (FormatArg::CsvEnergy, None) => Err(Error::invalid("csv-energy traces need --threshold")),
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "binary-lines")]
    pub format: FormatArg,
    /// Energy threshold; a slot is active iff its level is strictly above.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by the experiment subcommands. Each flag overrides the
/// corresponding config value.
#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training trace file (replaces `train` in the config).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test trace file (replaces `test` in the config).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Format of `--train` / `--test` files.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Markov order `M'`.
    #[arg(long)]
    pub order: Option<usize>,
    /// Smart-table cap `L_max`.
    #[arg(long)]
    pub max_states: Option<usize>,
    /// Sensing length `M`.
    #[arg(long)]
    pub sensing: Option<usize>,
    #[arg(long)]
    pub predictor: Option<PredictorKind>,
    /// Training horizon for fine-tuning and the network.
    #[arg(long)]
    pub t_train: Option<usize>,
    /// Epochs for the configured predictor's training.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate for the configured predictor's training.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_horizon: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Output directory (default: config, then $SPECPRED_OUT_DIR, then `out`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Permit evaluating on the training trace.
    #[arg(long)]
    pub allow_same_trace: bool,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Markov model to fine-tune (default: estimate one from the training trace).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Saved model (default: the config's `model`, then the one `train` wrote).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Label used in the report.
    #[arg(long)]
    pub label: Option<String>,
    /// Also write an SVG plot of success rate against horizon.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated caps; `inf` means no cap.
    #[arg(long, value_delimiter = ',', default_value = "inf")]
    pub caps: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reports as `label=path` (split at the last `=`) or just `path`, labelled by file stem.
    #[arg(long = "report", required = true)]
    pub reports: Vec<String>,
    /// Output CSV (default: `<out dir>/compare.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG overlay.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long, default_value = "Success rate vs. horizon")]
    pub title: String,
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

/// Load the config file (if any), apply the flag overrides and validate.
/// Returns the config together with the directory relative trace paths
/// resolve against.
pub fn resolve_config(args: &ExperimentArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let (mut cfg, base) = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            let base = absolute(path)?
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default();
            (cfg, base)
        }
        None => (ExperimentConfig::default(), absolute(Path::new("."))?),
    };

    let format = match args.format {
        Some(f) => Some(trace_format(f, args.threshold)?),
        None if args.threshold.is_some() => {
            Some(trace_format(FormatArg::CsvEnergy, args.threshold)?)
        }
        None => None,
    };
    let file_source = |path: &Path| -> Result<TrafficSource> {
        Ok(TrafficSource::File {
            path: absolute(path)?,
            format: format.unwrap_or(TraceFormat::BinaryLines),
        })
    };
    if let Some(p) = &args.train {
        cfg.train = Some(file_source(p)?);
    }
    if let Some(p) = &args.test {
        cfg.test = Some(file_source(p)?);
    }
    if let Some(v) = args.variant {
        cfg.state_space.variant = v;
    }
    if let Some(v) = args.order {
        cfg.state_space.order = v;
    }
    if let Some(v) = args.max_states {
        cfg.state_space.max_states = Some(v);
    }
    if let Some(v) = args.sensing {
        cfg.sensing = Some(v);
    }
    if let Some(v) = args.predictor {
        cfg.predictor = v;
    }
    if let Some(v) = args.t_train {
        cfg.finetune.t_train = v;
        cfg.mlp.t_train = Some(v);
    }
    if let Some(v) = args.epochs {
        match cfg.predictor {
            PredictorKind::Mlp => cfg.mlp.epochs = v,
            _ => cfg.finetune.epochs = v,
        }
    }
    if let Some(v) = args.lr {
        match cfg.predictor {
            PredictorKind::Mlp => cfg.mlp.learning_rate = v,
            _ => cfg.finetune.learning_rate = v,
        }
    }
    if let Some(v) = args.max_horizon {
        cfg.max_horizon = v;
    }
    if let Some(v) = args.stride {
        cfg.stride = v;
    }
    if let Some(v) = &args.out_dir {
        cfg.output_dir = Some(v.clone());
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.allow_same_trace {
        cfg.allow_same_trace = true;
    }
    cfg.validate()?;
    Ok((cfg, base))
}

fn require<'a>(source: &'a Option<TrafficSource>, what: &str) -> Result<&'a TrafficSource> {
    source
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("no {what} trace: set `{what}` in the config or pass --{what}")))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_summary(dir: &Path, name: &str, summary: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    write(&dir.join(format!("{name}.json")), &(text + "\n"))
}

fn trace_summary(trace: &Trace) -> Value {
    json!({
        "name": trace.name(),
        "slots": trace.len(),
        "activation_fraction": trace.activation_fraction(),
    })
}

fn gen(args: &GenArgs) -> Result<Value> {
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| Error::invalid("gen needs --out"))?;
    let spec = SyntheticSpec {
        block_size: args.block_size,
        n_slots: args.slots,
        start_state: args.start,
        outlier_rate: args.outlier_rate,
        rng_seed: args.seed,
    };
    let trace = generate_synthetic(&spec)?;
    trace.save(out)?;
    Ok(json!({
        "command": "gen",
        "spec": spec,
        "trace": trace_summary(&trace),
        "out": out,
    }))
}

fn ingest(args: &IngestArgs) -> Result<Value> {
    let format = trace_format(args.format, args.threshold)?;
    let trace = load_trace(&args.input, format)?;
    trace.save(&args.out)?;
    Ok(json!({
        "command": "ingest",
        "format": format,
        "trace": trace_summary(&trace),
        "out": args.out,
    }))
}

fn estimate_markov(cfg: &ExperimentConfig, train: &Trace) -> Result<MarkovModel> {
    let space = cfg.state_space.build(train)?;
    let mut model = MarkovModel::estimate(space, train)?;
    model.meta_mut().max_states = cfg.state_space.max_states;
    Ok(model)
}

fn run_finetune(cfg: &ExperimentConfig, model: &MarkovModel, train: &Trace) -> Result<FinetuneOutcome> {
    let pairs = build_pairs(model.space(), train, cfg.finetune.t_train)?;
    finetune(model, &pairs, &cfg.finetune)
}

fn markov_summary(model: &MarkovModel) -> Value {
    json!({
        "variant": model.space().variant(),
        "order": model.space().order(),
        "states": model.space().size(),
        "visited_states": model.visited().iter().filter(|&&v| v).count(),
        "storage": if model.matrix().is_dense() { "dense" } else { "sparse" },
        "finetuned": model.meta().finetuned,
    })
}

fn train(args: &ExperimentArgs) -> Result<Value> {
    let (cfg, base) = resolve_config(args)?;
    let train = require(&cfg.train, "train")?.load(&base)?;
    let dir = out_dir(&cfg)?;
    let started = Instant::now();
    let (model_path, model_info, loss) = match cfg.predictor {
        PredictorKind::Markov => {
            let model = estimate_markov(&cfg, &train)?;
            let path = dir.join(MARKOV_FILE);
            model.save(&path)?;
            (path, markov_summary(&model), None)
        }
        PredictorKind::FtMarkov => {
            let initial = estimate_markov(&cfg, &train)?;
            let outcome = run_finetune(&cfg, &initial, &train)?;
            write(&dir.join("finetune_loss.csv"), &outcome.loss_csv())?;
            let path = dir.join(FINETUNED_FILE);
            outcome.model.save(&path)?;
            let last = *outcome.loss_trace.last().expect("initial loss recorded");
            (
                path,
                markov_summary(&outcome.model),
                Some(json!({
                    "initial": outcome.loss_trace[0],
                    "final": last,
                    "epochs": outcome.loss_trace.len() - 1,
                })),
            )
        }
        PredictorKind::Mlp => {
            let pairs = build_nn_pairs(&train, cfg.sensing(), cfg.mlp_t_train())?;
            let outcome = train_mlp(&cfg.mlp_config(), &pairs)?;
            write(&dir.join("mlp_loss.csv"), &outcome.loss_csv())?;
            let path = dir.join(MLP_FILE);
            outcome.model.save(&path)?;
            let info = json!({
                "layers": outcome.model.layers().iter().map(|l| [l.inputs, l.outputs]).collect::<Vec<_>>(),
                "t_train": outcome.model.t_train(),
            });
            let best = outcome
                .validation_loss
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            (
                path,
                info,
                Some(json!({
                    "final_train": outcome.train_loss.last(),
                    "best_validation": best.is_finite().then_some(best),
                    "epochs": outcome.train_loss.len(),
                })),
            )
        }
    };
    let summary = json!({
        "command": "train",
        "config": cfg.to_json(),
        "train_trace": trace_summary(&train),
        "model": model_path,
        "model_info": model_info,
        "loss": loss,
        "training_time_s": started.elapsed().as_secs_f64(),
    });
    write_summary(&dir, "train", &summary)?;
    Ok(summary)
}

fn finetune_cmd(args: &FinetuneArgs) -> Result<Value> {
    let (cfg, base) = resolve_config(&args.experiment)?;
    let train = require(&cfg.train, "train")?.load(&base)?;
    let dir = out_dir(&cfg)?;
    let initial = match &args.model {
        Some(path) => MarkovModel::load(path)?,
        None => estimate_markov(&cfg, &train)?,
    };
    let started = Instant::now();
    let outcome = run_finetune(&cfg, &initial, &train)?;
    write(&dir.join("finetune_loss.csv"), &outcome.loss_csv())?;
    let path = dir.join(FINETUNED_FILE);
    outcome.model.save(&path)?;
    let summary = json!({
        "command": "finetune",
        "config": cfg.to_json(),
        "train_trace": trace_summary(&train),
        "model": path,
        "model_info": markov_summary(&outcome.model),
        "loss": {
            "initial": outcome.loss_trace[0],
            "final": outcome.loss_trace.last(),
            "epochs": outcome.loss_trace.len() - 1,
        },
        "training_time_s": started.elapsed().as_secs_f64(),
    });
    write_summary(&dir, "finetune", &summary)?;
    Ok(summary)
}

/// A model file of either kind, told apart by its first line.
pub enum LoadedModel {
    Markov(MarkovModel),
    Mlp(MlpModel),
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let magic = text.lines().next().unwrap_or("");
        if magic.starts_with("specpred-markov") {
            MarkovModel::load(path).map(LoadedModel::Markov)
        } else if magic.starts_with("specpred-mlp") {
            MlpModel::load(path).map(LoadedModel::Mlp)
        } else {
            Err(Error::Format(format!(
                "{}: not a specpred model file",
                path.display()
            )))
        }
    }

    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            LoadedModel::Markov(m) => m,
            LoadedModel::Mlp(m) => m,
        }
    }
}

fn default_model_path(cfg: &ExperimentConfig, dir: &Path) -> PathBuf {
    dir.join(match cfg.predictor {
        PredictorKind::Markov => MARKOV_FILE,
        PredictorKind::FtMarkov => FINETUNED_FILE,
        PredictorKind::Mlp => MLP_FILE,
    })
}

fn eval_cmd(args: &EvalArgs) -> Result<Value> {
    let (cfg, base) = resolve_config(&args.experiment)?;
    let test_source = require(&cfg.test, "test")?;
    let dir = out_dir(&cfg)?;
    let model_path = args
        .model
        .clone()
        .or_else(|| cfg.model.as_ref().map(|p| if p.is_relative() { base.join(p) } else { p.clone() }))
        .unwrap_or_else(|| default_model_path(&cfg, &dir));
    let model = LoadedModel::load(&model_path)?;
    let test = test_source.load(&base)?;
    let train = cfg.train.as_ref().map(|s| s.load(&base)).transpose()?;

    let label = args.label.clone().unwrap_or_else(|| {
        serde_json::to_value(cfg.predictor)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    });
    let mut spec = EvalSpec::new(label, cfg.sensing(), cfg.max_horizon, &test).with_stride(cfg.stride);
    spec.allow_same_trace = cfg.allow_same_trace;
    if let Some(train) = &train {
        spec = spec.trained_on(train);
    }
    let started = Instant::now();
    let report = evaluate(&spec, model.predictor())?;
    let elapsed = started.elapsed().as_secs_f64();
    write(&dir.join("report.csv"), &report.to_csv())?;
    let plot = if args.plot {
        let path = dir.join("report.svg");
        write(&path, &compare_svg(std::slice::from_ref(&report), &report.label)?)?;
        Some(path)
    } else {
        None
    };
    let summary = json!({
        "command": "eval",
        "config": cfg.to_json(),
        "model": model_path,
        "test_trace": trace_summary(&test),
        "report": report,
        "mean_success": report.mean_success_all(),
        "plot": plot,
        "eval_time_s": elapsed,
    });
    write_summary(&dir, "eval", &summary)?;
    Ok(summary)
}

fn parse_caps(caps: &[String]) -> Result<Vec<Option<usize>>> {
    caps.iter()
        .map(|c| match c.trim() {
            "inf" => Ok(None),
            s => match s.parse::<usize>() {
                Ok(0) | Err(_) => Err(Error::invalid(format!(
                    "cap {s:?} must be a positive integer or inf"
                ))),
                Ok(v) => Ok(Some(v)),
            },
        })
        .collect()
}

fn sweep_cmd(args: &SweepArgs) -> Result<Value> {
    let (cfg, base) = resolve_config(&args.experiment)?;
    let caps = parse_caps(&args.caps)?;
    if cfg.state_space.variant != Variant::Smart {
        return Err(Error::invalid("sweep-l needs the smart state space"));
    }
    let train_src = require(&cfg.train, "train")?;
    let test_src = require(&cfg.test, "test")?;
    let dir = out_dir(&cfg)?;
    let train = train_src.load(&base)?;
    let test = test_src.load(&base)?;
    let spec = SweepSpec {
        train: &train,
        test: &test,
        order: cfg.state_space.order,
        sensing: cfg.sensing(),
        max_horizon: cfg.max_horizon,
        stride: cfg.stride,
    };
    let rows = sweep_l(&spec, &caps)?;
    write(&dir.join("sweep.csv"), &sweep_csv(&rows))?;
    let summary = json!({
        "command": "sweep-l",
        "config": cfg.to_json(),
        "rows": rows,
    });
    write_summary(&dir, "sweep", &summary)?;
    Ok(summary)
}

fn compare_cmd(args: &CompareArgs) -> Result<Value> {
    let reports = args
        .reports
        .iter()
        .map(|spec| {
            let (label, path) = match spec.rsplit_once('=') {
                Some((l, p)) => (l.to_string(), PathBuf::from(p)),
                None => {
                    let p = PathBuf::from(spec);
                    let l = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| spec.clone());
                    (l, p)
                }
            };
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            EvalReport::from_csv(label, &path.display().to_string(), &text)
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = compare_csv(&reports)?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => {
            let dir = out_dir(&ExperimentConfig::default())?;
            dir.join("compare.csv")
        }
    };
    write(&out, &csv)?;
    if let Some(plot) = &args.plot {
        write(plot, &compare_svg(&reports, &args.title)?)?;
    }
    Ok(json!({
        "command": "compare",
        "out": out,
        "plot": args.plot,
        "mean_success": reports
            .iter()
            .map(|r| (r.label.clone(), json!(r.mean_success_all())))
            .collect::<serde_json::Map<_, _>>(),
    }))
}

pub fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::SweepL(a) => sweep_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

/// JSON error object printed on stderr.
pub fn error_json(err: &Error) -> Value {
    json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
            "exit_code": err.exit_code(),
        }
    })
}

/// Parse arguments, run, print; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            use std::io::Write;
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // a closed pipe downstream is not a failure of the command
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            0
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            err.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn caps_parse() {
        let caps = parse_caps(&["inf".into(), "40".into(), " 3".into()]).unwrap();
        assert_eq!(caps, vec![None, Some(40), Some(3)]);
        assert!(parse_caps(&["0".into()]).is_err());
        assert!(parse_caps(&["x".into()]).is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = std::env::temp_dir().join(format!("specpred-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let cfg_path = dir.join("cfg.json");
        fs::write(
            &cfg_path,
            r#"{"state_space": {"variant": "full", "order": 3}, "predictor": "ft-markov",
                "finetune": {"learning_rate": 0.2}, "train": {"file": {"path": "a.txt"}}}"#,
        )
        .unwrap();
        let args = ExperimentArgs {
            config: Some(cfg_path),
            order: Some(4),
            lr: Some(0.05),
            ..Default::default()
        };
        let (cfg, base) = resolve_config(&args).unwrap();
        assert_eq!(cfg.state_space.order, 4);
        assert_eq!(cfg.finetune.learning_rate, 0.05);
        assert_eq!(base, absolute(&dir).unwrap());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn threshold_requires_energy_format() {
        assert!(trace_format(FormatArg::BinaryLines, Some(1.0)).is_err());
        assert!(trace_format(FormatArg::CsvEnergy, None).is_err());
    }
}
