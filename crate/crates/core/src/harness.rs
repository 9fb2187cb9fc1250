//! Rolling next-snapshot evaluation: for every target `t ≥ 3`, a fresh model
//! is trained on `G_1..G_{t-1}` and its embedding of `G_{t-1}` scores the
//! pairs of `G_t`.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};
use crate::evalset::{
    build_full_graph_evalset, build_new_edge_evalset, score_evalset, FULL_GRAPH_CAP,
};
use crate::graph::TemporalGraph;
use crate::metrics::{mean_std, MetricsRecord};
use crate::model::{Model, ModelConfig};
use crate::rng::{derive, Stream};
use crate::train::{train_on_sequence, TrainConfig, TrainLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Edges of `G_t` absent from `G_{t-1}` against never-seen pairs.
    NewEdges,
    /// A balanced sample of all edges and non-edges of `G_t`.
    FullGraph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mode: EvalMode,
    /// Share of the targets `3..=T` evaluated, counted from the start.
    pub fraction: f64,
    pub workers: usize,
    pub full_graph_cap: usize,
    /// Keep every trained model in the result.
    pub keep_models: bool,
}

impl HarnessConfig {
    pub fn new(model: ModelConfig, train: TrainConfig) -> Self {
        HarnessConfig {
            model,
            train,
            mode: EvalMode::NewEdges,
            fraction: 1.0,
            workers: 1,
            full_graph_cap: FULL_GRAPH_CAP,
            keep_models: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(TnaError::Config(format!(
                "fraction {} outside (0, 1]",
                self.fraction
            )));
        }
        if self.workers == 0 {
            return Err(TnaError::Config("at least one worker required".into()));
        }
        Ok(())
    }
}

/// Targets evaluated for a sequence of `t_count` snapshots.
pub fn target_range(t_count: usize, fraction: f64) -> Result<std::ops::RangeInclusive<usize>> {
    if t_count < 3 {
        return Err(TnaError::contract(format!(
            "evaluation needs at least 3 snapshots, got {t_count}"
        )));
    }
    let all = t_count - 2;
    let kept = ((fraction * all as f64).ceil() as usize).clamp(1, all);
    Ok(3..=kept + 2)
}

#[derive(Clone, Debug)]
pub struct TargetResult {
    pub t: usize,
    pub metrics: MetricsRecord,
    pub train_log: TrainLog,
    pub model: Option<Model>,
}

#[derive(Clone, Debug)]
pub struct HarnessResult {
    pub dataset: String,
    pub config: String,
    pub parameter_count: usize,
    pub targets: Vec<TargetResult>,
    /// Targets without new edges, left out of the means.
    pub skipped: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub auc_mean: f64,
    pub auc_std: f64,
    pub ap_mean: f64,
    pub ap_std: f64,
    pub evaluated: usize,
}

/// One line of the per-target JSON output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub dataset: String,
    pub config: String,
    pub t: usize,
    pub auc: f64,
    pub ap: f64,
    pub threshold_precision: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl HarnessResult {
    pub fn summary(&self) -> Summary {
        let aucs: Vec<f64> = self.targets.iter().map(|r| r.metrics.auc).collect();
        let aps: Vec<f64> = self.targets.iter().map(|r| r.metrics.ap).collect();
        let (auc_mean, auc_std) = mean_std(&aucs);
        let (ap_mean, ap_std) = mean_std(&aps);
        Summary {
            auc_mean,
            auc_std,
            ap_mean,
            ap_std,
            evaluated: self.targets.len(),
        }
    }

    /// `t,auc,ap` per target, then a `mean` and a `std` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,auc,ap\n");
        for r in &self.targets {
            let _ = writeln!(out, "{},{},{}", r.t, r.metrics.auc, r.metrics.ap);
        }
        let s = self.summary();
        let _ = writeln!(out, "mean,{},{}", s.auc_mean, s.ap_mean);
        let _ = writeln!(out, "std,{},{}", s.auc_std, s.ap_std);
        out
    }

    pub fn metrics_json(&self) -> Vec<MetricsJson> {
        self.targets
            .iter()
            .map(|r| MetricsJson {
                dataset: self.dataset.clone(),
                config: self.config.clone(),
                t: r.t,
                auc: r.metrics.auc,
                ap: r.metrics.ap,
                threshold_precision: r.metrics.threshold_precision,
                n_pos: r.metrics.n_pos,
                n_neg: r.metrics.n_neg,
            })
            .collect()
    }
}

/// Trains a fresh model on `G_1..G_{t-1}`; every draw comes from generators
/// keyed by `(seed, t)`.
pub fn train_for_target(
    g: &TemporalGraph,
    t: usize,
    config: &HarnessConfig,
) -> Result<(Model, TrainLog)> {
    if t < 3 || t > g.len() + 1 {
        return Err(TnaError::contract(format!(
            "target {t} outside 3..={}",
            g.len() + 1
        )));
    }
    let seed = config.train.seed;
    let mut model = Model::new(
        config.model.clone(),
        g.vertex_count(),
        &mut derive(seed, t, Stream::Init),
    )?;
    let log = train_on_sequence(
        &mut model,
        &g.snapshots()[..t - 1],
        &config.train,
        &mut derive(seed, t, Stream::Noise),
    )?;
    Ok((model, log))
}

/// Trains for and scores one target; `None` when `t` has nothing to predict.
pub fn evaluate_target(
    g: &TemporalGraph,
    t: usize,
    config: &HarnessConfig,
) -> Result<Option<TargetResult>> {
    let mut eval_rng = derive(config.train.seed, t, Stream::Evaluation);
    let evalset = match config.mode {
        EvalMode::NewEdges => match build_new_edge_evalset(g, t, &mut eval_rng)? {
            Some(es) => es,
            None => return Ok(None),
        },
        EvalMode::FullGraph => {
            build_full_graph_evalset(g.snapshot(t)?, config.full_graph_cap, &mut eval_rng)?
        }
    };
    let (model, train_log) = train_for_target(g, t, config)?;
    let mu = model.embed(&g.snapshots()[..t - 1])?;
    let metrics = score_evalset(&mu, &evalset)?;
    log::info!("t={t} auc={:.4} ap={:.4}", metrics.auc, metrics.ap);
    Ok(Some(TargetResult {
        t,
        metrics,
        train_log,
        model: config.keep_models.then_some(model),
    }))
}

pub fn algorithm1_harness(
    g: &TemporalGraph,
    dataset: &str,
    config: &HarnessConfig,
) -> Result<HarnessResult> {
    config.validate()?;
    let targets: Vec<usize> = target_range(g.len(), config.fraction)?.collect();
    let parameter_count = Model::new(
        config.model.clone(),
        g.vertex_count(),
        &mut derive(0, 0, Stream::Init),
    )?
    .count_parameters();

    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<(usize, Result<Option<TargetResult>>)>> = Mutex::new(Vec::new());
    let work = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(&t) = targets.get(k) else { break };
        let outcome = evaluate_target(g, t, config);
        let failed = outcome.is_err();
        outcomes.lock().expect("worker panicked").push((t, outcome));
        if failed {
            // stop handing out further targets
            next.store(targets.len(), Ordering::Relaxed);
        }
    };
    let workers = config.workers.min(targets.len());
    if workers <= 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(work);
            }
        });
    }

    let mut outcomes = outcomes.into_inner().expect("worker panicked");
    outcomes.sort_by_key(|(t, _)| *t);
    let mut result = HarnessResult {
        dataset: dataset.to_string(),
        config: config.model.to_string(),
        parameter_count,
        targets: Vec::new(),
        skipped: Vec::new(),
    };
    for (t, outcome) in outcomes {
        match outcome? {
            Some(r) => result.targets.push(r),
            None => {
                log::warn!("target {t} has no new edges, skipped");
                result.skipped.push(t);
            }
        }
    }
    if result.targets.is_empty() {
        return Err(TnaError::Degenerate(
            "no target had edges to predict".into(),
        ));
    }
    Ok(result)
}
