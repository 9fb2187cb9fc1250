use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tna_core::harness::{algorithm1_harness, EvalMode, HarnessConfig, MetricsJson, Summary};
use tna_core::ingest::{load_graph, Granularity};
use tna_core::rollout::{rollout_csv, rollout_experiment, Binarize, RolloutStep};
use tna_core::train::TrainConfig;
use tna_core::{ModelConfig, TemporalGraph};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NewEdges,
    FullGraph,
    Rollout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Threshold,
    TopK,
}

#[derive(Args)]
pub struct RunArgs {
    /// Snapshot file or edge list, or a name looked up in `--data-dir`.
    #[arg(long)]
    dataset: String,

    #[arg(long, env = "TNA_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Bucketing for raw edge lists.
    #[arg(long, default_value = "week")]
    granularity: String,

    /// Architecture, e.g. `TTV/LN/SC`, `ttv_ln_sc`, `GGG`.
    #[arg(long, visible_alias = "ablation")]
    config: Option<String>,

    #[arg(long, value_enum)]
    mode: Option<Mode>,

    /// Share of the targets evaluated, from the start of the sequence.
    #[arg(long)]
    fraction: Option<f64>,

    /// Share of the history trained on before a rollout.
    #[arg(long)]
    train_fraction: Option<f64>,

    #[arg(long)]
    horizon: Option<usize>,

    /// How predicted graphs are binarized during a rollout.
    #[arg(long, value_enum)]
    binarize: Option<Rule>,

    #[arg(long)]
    threshold: Option<f64>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    lr: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    workers: Option<usize>,

    /// TOML file with any of the settings above; flags take precedence.
    #[arg(long)]
    config_file: Option<PathBuf>,

    /// Save the trained models as JSON checkpoints.
    #[arg(long)]
    checkpoint: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    config: Option<String>,
    dims: Option<Vec<usize>>,
    mode: Option<Mode>,
    fraction: Option<f64>,
    workers: Option<usize>,
    full_graph_cap: Option<usize>,
    checkpoint: Option<bool>,
    train: Option<TrainConfig>,
    rollout: RolloutFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RolloutFile {
    train_fraction: Option<f64>,
    horizon: Option<usize>,
    binarize: Option<Rule>,
    threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RolloutSettings {
    train_fraction: f64,
    horizon: usize,
    rule: Binarize,
}

/// Fully resolved settings, written next to the results.
#[derive(Debug, Serialize)]
struct Experiment {
    dataset: String,
    dataset_path: PathBuf,
    mode: Mode,
    harness: HarnessConfig,
    rollout: Option<RolloutSettings>,
    checkpoint: bool,
}

#[derive(Serialize)]
struct HarnessSummary<'a> {
    dataset: &'a str,
    config: String,
    mode: Mode,
    seed: u64,
    parameter_count: usize,
    #[serde(flatten)]
    summary: Summary,
    skipped: &'a [usize],
    targets: Vec<MetricsJson>,
}

#[derive(Serialize)]
struct RolloutSummary<'a> {
    dataset: &'a str,
    config: String,
    seed: u64,
    parameter_count: usize,
    training_cut: usize,
    rule: Binarize,
    steps: &'a [RolloutStep],
}

fn resolve_dataset(name: &str, data_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    if let Some(dir) = data_dir {
        let candidates = [
            name.to_string(),
            format!("{name}.snap"),
            format!("{name}.txt"),
            format!("{name}.tsv"),
            format!("{name}.csv"),
            format!("out.{name}"),
        ];
        if let Some(found) = candidates.iter().map(|c| dir.join(c)).find(|p| p.is_file()) {
            return Ok(found);
        }
    }
    Err(CliError::Usage(match data_dir {
        Some(dir) => format!(
            "dataset {name:?} is neither a file nor present in {}",
            dir.display()
        ),
        None => format!(
            "dataset {name:?} is not a file (set --data-dir or TNA_DATA_DIR to look it up by name)"
        ),
    }))
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    crate::error::require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn build_experiment(args: &RunArgs) -> Result<Experiment, CliError> {
    let file = match &args.config_file {
        Some(p) => read_file_config(p)?,
        None => FileConfig::default(),
    };
    let dataset_path = resolve_dataset(&args.dataset, args.data_dir.as_deref())?;
    let dataset = dataset_path.file_stem().map_or_else(
        || args.dataset.clone(),
        |s| s.to_string_lossy().trim_start_matches("out.").to_string(),
    );

    let spec = args
        .config
        .clone()
        .or(file.config)
        .unwrap_or_else(|| "TTV/LN/SC".into());
    let mut model: ModelConfig = spec.parse()?;
    if let Some(dims) = file.dims {
        model = model.with_dims(dims)?;
    }
    let mut train = file.train.unwrap_or_default();
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    if let Some(lr) = args.lr {
        train.learning_rate = lr;
    }
    if let Some(seed) = args.seed {
        train.seed = seed;
    }

    let mode = args.mode.or(file.mode).unwrap_or(Mode::NewEdges);
    let mut harness = HarnessConfig::new(model, train);
    harness.mode = if mode == Mode::FullGraph {
        EvalMode::FullGraph
    } else {
        EvalMode::NewEdges
    };
    harness.fraction = args.fraction.or(file.fraction).unwrap_or(1.0);
    harness.workers = args.workers.or(file.workers).unwrap_or(1);
    if let Some(cap) = file.full_graph_cap {
        harness.full_graph_cap = cap;
    }
    let checkpoint = args.checkpoint || file.checkpoint.unwrap_or(false);
    harness.keep_models = checkpoint;
    harness.validate()?;

    let rollout = (mode == Mode::Rollout).then(|| {
        let rule = match args
            .binarize
            .or(file.rollout.binarize)
            .unwrap_or(Rule::Threshold)
        {
            Rule::Threshold => {
                Binarize::Threshold(args.threshold.or(file.rollout.threshold).unwrap_or(0.5))
            }
            Rule::TopK => Binarize::TopK,
        };
        RolloutSettings {
            train_fraction: args
                .train_fraction
                .or(file.rollout.train_fraction)
                .unwrap_or(0.7),
            horizon: args.horizon.or(file.rollout.horizon).unwrap_or(5),
            rule,
        }
    });
    if let Some(Binarize::Threshold(tau)) = rollout.as_ref().map(|r| r.rule) {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(CliError::Usage(format!("threshold {tau} outside (0, 1)")));
        }
    }
    Ok(Experiment {
        dataset,
        dataset_path,
        mode,
        harness,
        rollout,
        checkpoint,
    })
}

fn run_dir(out_dir: &Path, exp: &Experiment) -> PathBuf {
    let slug = exp
        .harness
        .model
        .to_string()
        .to_ascii_lowercase()
        .replace('/', "_");
    let mode = match exp.mode {
        Mode::NewEdges => "new-edges",
        Mode::FullGraph => "full-graph",
        Mode::Rollout => "rollout",
    };
    out_dir.join(format!(
        "{}_{slug}_{mode}_s{}",
        exp.dataset, exp.harness.train.seed
    ))
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serialises");
    s.push('\n');
    s
}

pub fn execute(args: RunArgs, out_dir: &Path) -> Result<(), CliError> {
    let exp = build_experiment(&args)?;
    let granularity: Granularity = args.granularity.parse()?;
    let g = load_graph(&exp.dataset_path, granularity)?;
    if let Some(r) = &exp.rollout {
        // fail before any training
        tna_core::rollout::training_cut(g.len(), r.train_fraction, r.horizon)?;
    } else {
        tna_core::harness::target_range(g.len(), exp.harness.fraction)?;
    }

    let dir = run_dir(out_dir, &exp);
    crate::write_file(&dir.join("config.json"), &json(&exp))?;
    match &exp.rollout {
        None => run_harness(&g, &exp, &dir),
        Some(settings) => run_rollout(&g, &exp, settings, &dir),
    }?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn run_harness(g: &TemporalGraph, exp: &Experiment, dir: &Path) -> Result<(), CliError> {
    let result = algorithm1_harness(g, &exp.dataset, &exp.harness)?;
    crate::write_file(&dir.join("metrics.csv"), &result.to_csv())?;
    for r in &result.targets {
        crate::write_file(
            &dir.join(format!("train/t{:03}.csv", r.t)),
            &r.train_log.to_csv(),
        )?;
        if let Some(model) = &r.model {
            let path = dir.join(format!("checkpoints/t{:03}.json", r.t));
            crate::write_file(&path, &json(&model.to_checkpoint()))?;
        }
    }
    let summary = result.summary();
    crate::write_file(
        &dir.join("summary.json"),
        &json(&HarnessSummary {
            dataset: &exp.dataset,
            config: result.config.clone(),
            mode: exp.mode,
            seed: exp.harness.train.seed,
            parameter_count: result.parameter_count,
            summary,
            skipped: &result.skipped,
            targets: result.metrics_json(),
        }),
    )?;

    println!(
        "{} on {}: {} parameters",
        result.config, exp.dataset, result.parameter_count
    );
    println!(
        "AUC {:.4} ± {:.4}   AP {:.4} ± {:.4}   ({} targets, {} skipped)",
        summary.auc_mean,
        summary.auc_std,
        summary.ap_mean,
        summary.ap_std,
        summary.evaluated,
        result.skipped.len()
    );
    Ok(())
}

fn run_rollout(
    g: &TemporalGraph,
    exp: &Experiment,
    settings: &RolloutSettings,
    dir: &Path,
) -> Result<(), CliError> {
    let run = rollout_experiment(
        g,
        &exp.harness,
        settings.train_fraction,
        settings.horizon,
        settings.rule,
    )?;
    let parameter_count = run.model.count_parameters();
    crate::write_file(&dir.join("rollout.csv"), &rollout_csv(&run.steps))?;
    crate::write_file(&dir.join("train.csv"), &run.train_log.to_csv())?;
    if exp.checkpoint {
        crate::write_file(
            &dir.join("checkpoint.json"),
            &json(&run.model.to_checkpoint()),
        )?;
    }
    crate::write_file(
        &dir.join("summary.json"),
        &json(&RolloutSummary {
            dataset: &exp.dataset,
            config: exp.harness.model.to_string(),
            seed: exp.harness.train.seed,
            parameter_count,
            training_cut: run.cut,
            rule: settings.rule,
            steps: &run.steps,
        }),
    )?;

    println!(
        "{} on {}: {} parameters, trained on G_1..G_{}",
        exp.harness.model, exp.dataset, parameter_count, run.cut
    );
    for s in &run.steps {
        match &s.metrics {
            Some(m) => println!("h={} t={}  AUC {:.4}  AP {:.4}", s.step, s.t, m.auc, m.ap),
            None => println!("h={} t={}  no new edges", s.step, s.t),
        }
    }
    Ok(())
}
