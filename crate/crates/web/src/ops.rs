//! The demo operations on plain strings, so they run and test natively.

use serde::{Deserialize, Serialize};
use tna_core::harness::{evaluate_target, HarnessConfig};
use tna_core::metrics::{auc, average_precision};
use tna_core::model::pair_probability;
use tna_core::synthetic::{generate_sbm_seeded, SbmConfig};
use tna_core::train::TrainConfig;
use tna_core::{graph, snapfile, ModelConfig, TemporalGraph};

#[derive(Serialize)]
struct StepSummary {
    t: usize,
    edges: usize,
    new_edges: usize,
}

#[derive(Serialize)]
struct SbmResponse {
    vertex_count: usize,
    steps: Vec<StepSummary>,
    /// Community of every vertex in the last snapshot.
    labels: Vec<usize>,
    /// Edges of the last snapshot.
    edges: Vec<(usize, usize)>,
    snapfile: String,
}

fn steps(g: &TemporalGraph) -> Vec<StepSummary> {
    g.snapshots()
        .iter()
        .enumerate()
        .map(|(k, s)| StepSummary {
            t: k + 1,
            edges: s.edge_count(),
            new_edges: if k == 0 {
                s.edge_count()
            } else {
                graph::edge_difference(s, &g.snapshots()[k - 1]).len()
            },
        })
        .collect()
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("plain data serialises")
}

/// `config_json` holds any subset of the SBM settings.
pub fn sbm(config_json: &str) -> Result<String, String> {
    let config: SbmConfig = serde_json::from_str(config_json).map_err(|e| e.to_string())?;
    let out = generate_sbm_seeded(&config).map_err(|e| e.to_string())?;
    let last = out.graph.snapshots().last().ok_or("no snapshots")?;
    Ok(to_json(&SbmResponse {
        vertex_count: out.graph.vertex_count(),
        steps: steps(&out.graph),
        labels: out.labels.last().cloned().unwrap_or_default(),
        edges: last.edges().to_vec(),
        snapfile: snapfile::to_string(&out.graph),
    }))
}

#[derive(Deserialize)]
#[serde(default)]
pub struct TrainRequest {
    pub config: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// How many top-scoring unseen pairs to return.
    pub top: usize,
}

impl Default for TrainRequest {
    fn default() -> Self {
        TrainRequest {
            config: "TTV/LN/SC".into(),
            epochs: 60,
            learning_rate: 1e-2,
            seed: 0,
            top: 10,
        }
    }
}

#[derive(Serialize)]
struct Prediction {
    i: usize,
    j: usize,
    probability: f64,
    appeared: bool,
}

#[derive(Serialize)]
struct TrainResponse {
    config: String,
    parameter_count: usize,
    target: usize,
    auc: f64,
    ap: f64,
    n_pos: usize,
    n_neg: usize,
    loss: Vec<f64>,
    predictions: Vec<Prediction>,
}

/// Trains on all but the last snapshot of `snapfile_text` and scores the
/// last one's new edges.
pub fn train_and_predict(snapfile_text: &str, request_json: &str) -> Result<String, String> {
    let g = snapfile::from_str(snapfile_text).map_err(|e| e.to_string())?;
    let req: TrainRequest = serde_json::from_str(request_json).map_err(|e| e.to_string())?;
    let model: ModelConfig = req
        .config
        .parse()
        .map_err(|e: tna_core::TnaError| e.to_string())?;
    let mut config = HarnessConfig::new(
        model,
        TrainConfig {
            epochs: req.epochs,
            learning_rate: req.learning_rate,
            seed: req.seed,
            ..TrainConfig::default()
        },
    );
    config.keep_models = true;
    config.validate().map_err(|e| e.to_string())?;
    let t = g.len();
    if t < 3 {
        return Err(format!("need at least 3 snapshots, got {t}"));
    }
    let result = evaluate_target(&g, t, &config)
        .map_err(|e| e.to_string())?
        .ok_or_else(|| format!("snapshot {t} adds no edges"))?;
    let trained = result.model.as_ref().expect("models kept");

    let history = &g.snapshots()[..t - 1];
    let z = trained.embed(history).map_err(|e| e.to_string())?;
    let (prev, next) = (&history[t - 2], &g.snapshots()[t - 1]);
    let n = g.vertex_count();
    let mut unseen: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !prev.has_edge(i, j))
        .map(|(i, j)| (pair_probability(&z, i, j), i, j))
        .collect();
    unseen.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let predictions = unseen
        .into_iter()
        .take(req.top)
        .map(|(probability, i, j)| Prediction {
            i,
            j,
            probability,
            appeared: next.has_edge(i, j),
        })
        .collect();

    Ok(to_json(&TrainResponse {
        config: config.model.to_string(),
        parameter_count: trained.count_parameters(),
        target: t,
        auc: result.metrics.auc,
        ap: result.metrics.ap,
        n_pos: result.metrics.n_pos,
        n_neg: result.metrics.n_neg,
        loss: result.train_log.epochs.iter().map(|e| e.total).collect(),
        predictions,
    }))
}

#[derive(Deserialize)]
struct ScoreRequest {
    positives: Vec<f64>,
    negatives: Vec<f64>,
}

#[derive(Serialize)]
struct ScoreResponse {
    auc: f64,
    ap: f64,
}

/// AUC and AP of `{"positives": [...], "negatives": [...]}`.
pub fn score(request_json: &str) -> Result<String, String> {
    let req: ScoreRequest = serde_json::from_str(request_json).map_err(|e| e.to_string())?;
    let auc = auc(&req.positives, &req.negatives).map_err(|e| e.to_string())?;
    let ap = average_precision(&req.positives, &req.negatives).map_err(|e| e.to_string())?;
    Ok(to_json(&ScoreResponse { auc, ap }))
}
