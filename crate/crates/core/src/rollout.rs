//! Autoregressive rollout: predicted snapshots are fed back as inputs and
//! each step's embedding is scored against the true future snapshot.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Result, TnaError};
use crate::evalset::{build_new_edge_evalset, score_evalset};
use crate::graph::{Edge, Snapshot, TemporalGraph};
use crate::metrics::MetricsRecord;
use crate::model::Model;
use crate::rng::{derive, Stream};
use crate::tensor::{dot, Matrix};
use crate::train::TrainLog;

/// How a decoded probability matrix becomes a snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarize {
    /// Pairs with probability strictly above `τ`.
    Threshold(f64),
    /// The `|E_{start}|` highest-scoring pairs.
    TopK,
}

impl Default for Binarize {
    fn default() -> Self {
        Binarize::Threshold(0.5)
    }
}

/// Snapshot from embeddings `z`: a pair is an edge when `σ(z_i·z_j)`
/// passes the rule; `edge_budget` is the `k` of [`Binarize::TopK`].
pub fn binarize(z: &Matrix, rule: Binarize, edge_budget: usize) -> Snapshot {
    let n = z.rows();
    let logit = |i: usize, j: usize| dot(z.row(i), z.row(j));
    let edges: Vec<Edge> = match rule {
        Binarize::Threshold(tau) => {
            // σ(x) > τ  ⇔  x > logit(τ)
            let cut = (tau / (1.0 - tau)).ln();
            (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| logit(i, j) > cut)
                .collect()
        }
        Binarize::TopK => {
            let mut scored: Vec<(f64, Edge)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .map(|(i, j)| (logit(i, j), (i, j)))
                .collect();
            let k = edge_budget.min(scored.len());
            if k < scored.len() {
                // highest first, ties by pair order
                scored.select_nth_unstable_by(k, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                scored.truncate(k);
            }
            let mut e: Vec<Edge> = scored.into_iter().map(|(_, e)| e).collect();
            e.sort_unstable();
            e
        }
    };
    Snapshot::new(n, edges).expect("pairs are canonical and in range")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    /// 1-based step `k`; the scored snapshot is `start_t + k`.
    pub step: usize,
    pub t: usize,
    /// `None` when the true snapshot adds no edges.
    pub metrics: Option<MetricsRecord>,
}

/// `model` is assumed trained on `G_1..G_{start_t}`. Step `k` scores the
/// new edges of `G_{start_t+k}` with the current embedding, then feeds the
/// binarized prediction back. Evaluation pairs are drawn exactly as in the
/// standard harness, so horizon 1 reproduces its score.
pub fn rollout(
    model: &Model,
    g: &TemporalGraph,
    start_t: usize,
    horizon: usize,
    rule: Binarize,
    seed: u64,
) -> Result<Vec<RolloutStep>> {
    if horizon == 0 || start_t == 0 || start_t + horizon > g.len() {
        return Err(TnaError::contract(format!(
            "rollout from {start_t} over {horizon} steps exceeds {} snapshots",
            g.len()
        )));
    }
    let budget = g.snapshot(start_t)?.edge_count();
    let mut tape = Tape::new();
    let params = model.params().bind(&mut tape, false);
    let mut state = model.new_state();
    let steps = model.forward_sequence(
        &mut tape,
        &params,
        &g.snapshots()[..start_t],
        &mut state,
        None,
    )?;
    let mut mu = tape.value(steps.last().expect("non-empty").mu).clone();

    let mut out = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let t = start_t + k;
        let mut rng = derive(seed, t, Stream::Evaluation);
        let metrics = match build_new_edge_evalset(g, t, &mut rng)? {
            Some(es) => Some(score_evalset(&mu, &es)?),
            None => None,
        };
        out.push(RolloutStep {
            step: k,
            t,
            metrics,
        });
        if k < horizon {
            let predicted = Arc::new(binarize(&mu, rule, budget));
            let step = model.forward_step(&mut tape, &params, &predicted, &mut state, None)?;
            mu = tape.value(step.mu).clone();
        }
    }
    Ok(out)
}

/// Last training snapshot for a history share: `⌊fraction · T⌋`, at least 2.
pub fn training_cut(t_count: usize, fraction: f64, horizon: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TnaError::Config(format!(
            "train fraction {fraction} outside (0, 1]"
        )));
    }
    let cut = ((fraction * t_count as f64).floor() as usize).max(2);
    if horizon == 0 || cut + horizon > t_count {
        return Err(TnaError::Config(format!(
            "training on {cut} of {t_count} snapshots leaves no room for {horizon} rollout steps"
        )));
    }
    Ok(cut)
}

pub struct RolloutRun {
    /// Last snapshot seen in training.
    pub cut: usize,
    pub model: Model,
    pub train_log: TrainLog,
    pub steps: Vec<RolloutStep>,
}

/// Trains on the first `⌊fraction · T⌋` snapshots, seeded as the harness
/// seeds the following target, then rolls out `horizon` steps.
pub fn rollout_experiment(
    g: &TemporalGraph,
    config: &crate::harness::HarnessConfig,
    train_fraction: f64,
    horizon: usize,
    rule: Binarize,
) -> Result<RolloutRun> {
    config.validate()?;
    if let Binarize::Threshold(tau) = rule {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(TnaError::Config(format!("threshold {tau} outside (0, 1)")));
        }
    }
    let cut = training_cut(g.len(), train_fraction, horizon)?;
    let (model, train_log) = crate::harness::train_for_target(g, cut + 1, config)?;
    let steps = rollout(&model, g, cut, horizon, rule, config.train.seed)?;
    Ok(RolloutRun {
        cut,
        model,
        train_log,
        steps,
    })
}

pub fn rollout_csv(steps: &[RolloutStep]) -> String {
    let mut out = String::from("step,t,auc,ap,threshold_precision,n_pos,n_neg\n");
    for s in steps {
        match &s.metrics {
            Some(m) => out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.step, s.t, m.auc, m.ap, m.threshold_precision, m.n_pos, m.n_neg
            )),
            None => out.push_str(&format!("{},{},,,,0,0\n", s.step, s.t)),
        }
    }
    out
}
