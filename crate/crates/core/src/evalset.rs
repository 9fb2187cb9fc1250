//! Balanced evaluation sets of vertex pairs and their scoring.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Result, TnaError};
use crate::graph::{canonical, Edge, Snapshot, TemporalGraph};
use crate::metrics::{auc, average_precision, threshold_precision, MetricsRecord};
use crate::tensor::{dot, Matrix};

/// Default cap on positives for full-graph evaluation.
pub const FULL_GRAPH_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSet {
    pub positives: Vec<Edge>,
    pub negatives: Vec<Edge>,
}

/// Probabilities and logits of every pair in an [`EvalSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub pos_logits: Vec<f64>,
    pub neg_logits: Vec<f64>,
    pub pos_scores: Vec<f64>,
    pub neg_scores: Vec<f64>,
}

/// `count` distinct pairs, uniformly at random, none in `excluded` and none
/// a self-pair.
fn sample_absent_pairs(
    n: usize,
    excluded: &HashSet<Edge>,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Edge>> {
    let total = n * n.saturating_sub(1) / 2;
    let available = total - excluded.len();
    if available < count {
        return Err(TnaError::Degenerate(format!(
            "only {available} absent pairs for {count} negatives"
        )));
    }
    if available < 4 * count {
        // dense: enumerate the candidates and pick among them
        let candidates: Vec<Edge> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !excluded.contains(e))
            .collect();
        return Ok(index::sample(rng, candidates.len(), count)
            .into_iter()
            .map(|k| candidates[k])
            .collect());
    }
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i == j {
            continue;
        }
        let e = canonical(i, j);
        if !excluded.contains(&e) && chosen.insert(e) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Positives are the edges new in snapshot `t` (1-based, `t ≥ 2`);
/// negatives an equal number of pairs absent from both `G_t` and
/// `G_{t-1}`. `Ok(None)` when `G_t` has no new edges.
pub fn build_new_edge_evalset(
    g: &TemporalGraph,
    t: usize,
    rng: &mut impl Rng,
) -> Result<Option<EvalSet>> {
    let positives = g.new_edges(t)?;
    if positives.is_empty() {
        return Ok(None);
    }
    let (prev, cur) = (g.snapshot(t - 1)?, g.snapshot(t)?);
    let excluded: HashSet<Edge> = cur.edges().iter().chain(prev.edges()).copied().collect();
    let negatives = sample_absent_pairs(g.vertex_count(), &excluded, positives.len(), rng)?;
    Ok(Some(EvalSet {
        positives,
        negatives,
    }))
}

/// Up to `cap` positives drawn uniformly from the edges of `target`, and the
/// same number of its non-edges.
pub fn build_full_graph_evalset(
    target: &Snapshot,
    cap: usize,
    rng: &mut impl Rng,
) -> Result<EvalSet> {
    if target.non_edge_count() == 0 {
        return Err(TnaError::Degenerate(
            "complete graph has no negatives".into(),
        ));
    }
    let count = target.edge_count().min(cap).min(target.non_edge_count());
    let positives: Vec<Edge> = index::sample(rng, target.edge_count(), count)
        .into_iter()
        .map(|k| target.edges()[k])
        .collect();
    let excluded: HashSet<Edge> = target.edges().iter().copied().collect();
    let negatives = sample_absent_pairs(target.vertex_count(), &excluded, count, rng)?;
    Ok(EvalSet {
        positives,
        negatives,
    })
}

fn pair_logits(z: &Matrix, pairs: &[Edge]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(i, j)| {
            if i >= z.rows() || j >= z.rows() {
                return Err(TnaError::contract(format!(
                    "pair ({i}, {j}) outside {} embeddings",
                    z.rows()
                )));
            }
            Ok(dot(z.row(i), z.row(j)))
        })
        .collect()
}

pub fn score_pairs(z: &Matrix, es: &EvalSet) -> Result<Scored> {
    let pos_logits = pair_logits(z, &es.positives)?;
    let neg_logits = pair_logits(z, &es.negatives)?;
    Ok(Scored {
        pos_scores: pos_logits.iter().map(|&x| sigmoid(x)).collect(),
        neg_scores: neg_logits.iter().map(|&x| sigmoid(x)).collect(),
        pos_logits,
        neg_logits,
    })
}

/// Scores each pair by `σ(z_i · z_j)`. Rankings use the dot products
/// themselves, which order pairs identically without saturating at 1.
pub fn score_evalset(z: &Matrix, es: &EvalSet) -> Result<MetricsRecord> {
    let s = score_pairs(z, es)?;
    Ok(MetricsRecord {
        auc: auc(&s.pos_logits, &s.neg_logits)?,
        ap: average_precision(&s.pos_logits, &s.neg_logits)?,
        threshold_precision: threshold_precision(&s.pos_scores, &s.neg_scores)?,
        n_pos: es.positives.len(),
        n_neg: es.negatives.len(),
    })
}
