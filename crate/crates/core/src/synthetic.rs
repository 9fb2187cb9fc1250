//! Synthetic snapshot sequences: an evolving stochastic block model and
//! Erdős random rewiring of a seed graph.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};
use crate::graph::{canonical, Edge, Snapshot, TemporalGraph};
use crate::rng::{derive, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmConfig {
    pub vertex_count: usize,
    pub communities: usize,
    pub snapshots: usize,
    pub migrators_per_step: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            vertex_count: 3000,
            communities: 3,
            snapshots: 30,
            migrators_per_step: 20,
            p_intra: 0.01,
            p_inter: 0.0005,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_inter && self.p_inter < self.p_intra && self.p_intra <= 1.0) {
            return Err(TnaError::Config(format!(
                "need 0 <= p_inter < p_intra <= 1, got p_inter={} p_intra={}",
                self.p_inter, self.p_intra
            )));
        }
        if self.communities < 2 || self.communities > self.vertex_count {
            return Err(TnaError::Config(format!(
                "{} communities over {} vertices",
                self.communities, self.vertex_count
            )));
        }
        if self.migrators_per_step > self.vertex_count {
            return Err(TnaError::Config("more migrators than vertices".into()));
        }
        if self.snapshots == 0 {
            return Err(TnaError::Config("at least one snapshot required".into()));
        }
        Ok(())
    }
}

/// Generated sequence together with the community of every vertex at every
/// step.
#[derive(Clone, Debug)]
pub struct SbmOutput {
    pub graph: TemporalGraph,
    pub labels: Vec<Vec<usize>>,
}

fn draw_sbm_snapshot(labels: &[usize], p_intra: f64, p_inter: f64, rng: &mut impl Rng) -> Snapshot {
    let n = labels.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] {
                p_intra
            } else {
                p_inter
            };
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Snapshot::from_sorted(n, edges)
}

pub fn generate_sbm(config: &SbmConfig, rng: &mut impl Rng) -> Result<SbmOutput> {
    config.validate()?;
    let (n, k) = (config.vertex_count, config.communities);
    let mut labels: Vec<usize> = (0..n).map(|v| v * k / n).collect();
    let mut history = Vec::with_capacity(config.snapshots);
    let mut snapshots = Vec::with_capacity(config.snapshots);
    for step in 0..config.snapshots {
        if step > 0 {
            for v in index::sample(rng, n, config.migrators_per_step) {
                // uniform over the k-1 other communities
                let shift = rng.gen_range(1..k);
                labels[v] = (labels[v] + shift) % k;
            }
        }
        snapshots.push(draw_sbm_snapshot(
            &labels,
            config.p_intra,
            config.p_inter,
            rng,
        ));
        history.push(labels.clone());
    }
    Ok(SbmOutput {
        graph: TemporalGraph::new(snapshots, "step")?,
        labels: history,
    })
}

/// [`generate_sbm`] driven by the config's own seed.
pub fn generate_sbm_seeded(config: &SbmConfig) -> Result<SbmOutput> {
    generate_sbm(config, &mut derive(config.seed, 0, Stream::Synthetic))
}

/// Replaces `count` uniformly chosen edges with uniformly chosen absent,
/// non-self pairs. A replacement may land on a pair just removed.
pub fn rewire_step(g: &Snapshot, count: usize, rng: &mut impl Rng) -> Result<Snapshot> {
    if count == 0 {
        return Ok(g.clone());
    }
    let n = g.vertex_count();
    if count > g.edge_count() {
        return Err(TnaError::Config(format!(
            "cannot rewire {count} of {} edges",
            g.edge_count()
        )));
    }
    if g.non_edge_count() == 0 {
        return Err(TnaError::Degenerate(
            "graph is complete, nothing to rewire into".into(),
        ));
    }
    let removed: HashSet<usize> = index::sample(rng, g.edge_count(), count)
        .into_iter()
        .collect();
    let mut kept: HashSet<Edge> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(k, _)| !removed.contains(k))
        .map(|(_, &e)| e)
        .collect();
    let mut added = 0;
    while added < count {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j && kept.insert(canonical(i, j)) {
            added += 1;
        }
    }
    let mut edges: Vec<Edge> = kept.into_iter().collect();
    edges.sort_unstable();
    Ok(Snapshot::from_sorted(n, edges))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewireConfig {
    pub snapshots: usize,
    pub edges_rewired_per_step: usize,
    pub seed: u64,
}

/// `snapshots` graphs starting from `source`, each a rewiring of the last.
pub fn generate_rewire(
    source: &Snapshot,
    config: &RewireConfig,
    rng: &mut impl Rng,
) -> Result<TemporalGraph> {
    if config.snapshots == 0 {
        return Err(TnaError::Config("at least one snapshot required".into()));
    }
    if config.edges_rewired_per_step > source.edge_count() {
        return Err(TnaError::Config(format!(
            "cannot rewire {} of {} edges",
            config.edges_rewired_per_step,
            source.edge_count()
        )));
    }
    let mut snapshots = vec![source.clone()];
    for _ in 1..config.snapshots {
        let next = rewire_step(
            snapshots.last().expect("non-empty"),
            config.edges_rewired_per_step,
            rng,
        )?;
        snapshots.push(next);
    }
    TemporalGraph::new(snapshots, "step")
}

pub fn generate_rewire_seeded(source: &Snapshot, config: &RewireConfig) -> Result<TemporalGraph> {
    generate_rewire(
        source,
        config,
        &mut derive(config.seed, 0, Stream::Synthetic),
    )
}
