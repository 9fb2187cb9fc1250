use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tna_core::harness::{algorithm1_harness, train_for_target, HarnessConfig};
use tna_core::model::decode;
use tna_core::rollout::{rollout, Binarize};
use tna_core::synthetic::{generate_sbm, SbmConfig};
use tna_core::train::{train_on_sequence, TrainConfig};
use tna_core::{Matrix, Model, ModelConfig, Snapshot, TemporalGraph};

const ABLATIONS: [&str; 6] = ["GGG", "GGV", "TGV", "TTV", "TTV/LN", "TTV/LN/SC"];

fn random_sequence(n: usize, t_count: usize, density: f64, rng: &mut impl Rng) -> TemporalGraph {
    let snaps = (0..t_count)
        .map(|_| {
            let edges: Vec<_> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|_| rng.gen_bool(density))
                .collect();
            Snapshot::new(n, edges).unwrap()
        })
        .collect();
    TemporalGraph::new(snaps, "step").unwrap()
}

/// Relabels vertex `v` as `perm[v]`. With one-hot features, a relabelling
/// also moves the rows of every `|V|`-row weight.
fn permute_graph(g: &TemporalGraph, perm: &[usize]) -> TemporalGraph {
    let snaps = g
        .snapshots()
        .iter()
        .map(|s| {
            Snapshot::new(
                s.vertex_count(),
                s.edges().iter().map(|&(i, j)| (perm[i], perm[j])),
            )
            .unwrap()
        })
        .collect();
    TemporalGraph::new(snaps, g.granularity()).unwrap()
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = m.clone();
    for (v, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(m.row(v));
    }
    out
}

#[test]
fn forward_pass_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 8;
    for config in ABLATIONS {
        for _ in 0..5 {
            let g = random_sequence(n, 3, 0.35, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let model = Model::new(config.parse().unwrap(), n, &mut rng).unwrap();
            let mut moved = model.clone();
            for m in moved.params_mut().values_mut() {
                if m.rows() == n {
                    *m = permute_rows(m, &perm);
                }
            }
            let mu = model.embed(g.snapshots()).unwrap();
            let mu_moved = moved.embed(permute_graph(&g, &perm).snapshots()).unwrap();
            let expected = permute_rows(&mu, &perm);
            assert!(mu_moved.max_abs_diff(&expected) < 1e-10, "{config}");
        }
    }
}

#[test]
fn step_shapes_and_decoder_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let g = random_sequence(7, 4, 0.3, &mut rng);
    let model = Model::new(ModelConfig::canonical(), 7, &mut rng).unwrap();
    let mut tape = tna_core::autodiff::Tape::new();
    let bound = model.params().bind(&mut tape, false);
    let mut state = model.new_state();
    let steps = model
        .forward_sequence(&mut tape, &bound, g.snapshots(), &mut state, Some(&mut rng))
        .unwrap();
    assert_eq!(steps.len(), 4);
    for s in &steps {
        assert_eq!(tape.value(s.mu).shape(), (7, 16));
        assert_eq!(tape.value(s.log_sigma.unwrap()).shape(), (7, 16));
        assert_eq!(tape.value(s.z).shape(), (7, 16));
        let p = decode(tape.value(s.z));
        assert!(p.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p.max_abs_diff(&p.transpose()), 0.0);
    }
}

#[test]
fn every_ablation_builds_and_trains() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g = random_sequence(10, 4, 0.3, &mut rng);
    for config in ABLATIONS {
        let mut model = Model::new(config.parse().unwrap(), 10, &mut rng).unwrap();
        let log = train_on_sequence(
            &mut model,
            g.snapshots(),
            &TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(log.epochs.len(), 3, "{config}");
        assert!(log.epochs.iter().all(|l| l.total.is_finite()));
    }
}

#[test]
fn training_loss_falls_on_a_growing_toy() {
    let snaps: Vec<Arc<Snapshot>> = (1..=4)
        .map(|t| Arc::new(Snapshot::new(6, (0..t + 1).map(|k| (k, k + 1))).unwrap()))
        .collect();
    let mut model = Model::new(
        ModelConfig::canonical(),
        6,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    let log = train_on_sequence(
        &mut model,
        &snaps,
        &TrainConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    assert!(log.epochs[199].total < log.epochs[0].total);
}

fn small_sbm() -> TemporalGraph {
    generate_sbm(
        &SbmConfig {
            vertex_count: 60,
            snapshots: 6,
            migrators_per_step: 4,
            p_intra: 0.2,
            p_inter: 0.02,
            ..SbmConfig::default()
        },
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap()
    .graph
}

fn quick_config() -> HarnessConfig {
    HarnessConfig::new(
        ModelConfig::canonical(),
        TrainConfig {
            epochs: 10,
            seed: 5,
            ..TrainConfig::default()
        },
    )
}

#[test]
fn horizon_one_rollout_equals_standard_evaluation() {
    let g = small_sbm();
    let config = quick_config();
    let standard = algorithm1_harness(&g, "sbm", &config).unwrap();
    for start in 2..g.len() {
        let (model, _) = train_for_target(&g, start + 1, &config).unwrap();
        let steps = rollout(&model, &g, start, 1, Binarize::default(), config.train.seed).unwrap();
        let expected = standard
            .targets
            .iter()
            .find(|r| r.t == start + 1)
            .map(|r| r.metrics);
        let got = steps[0].metrics;
        assert_eq!(
            got.map(|m| m.auc.to_bits()),
            expected.map(|m| m.auc.to_bits())
        );
        assert_eq!(
            got.map(|m| m.ap.to_bits()),
            expected.map(|m| m.ap.to_bits())
        );
        assert_eq!(got, expected);
    }
}

#[test]
fn rollout_reports_each_step() {
    let g = small_sbm();
    let config = quick_config();
    let (model, _) = train_for_target(&g, 3, &config).unwrap();
    for rule in [Binarize::Threshold(0.5), Binarize::TopK] {
        let steps = rollout(&model, &g, 2, 4, rule, 5).unwrap();
        assert_eq!(
            steps.iter().map(|s| s.t).collect::<Vec<_>>(),
            vec![3, 4, 5, 6]
        );
    }
    assert!(rollout(&model, &g, 2, 5, Binarize::TopK, 5).is_err());
}

#[test]
fn harness_outputs_are_reproducible() {
    let g = small_sbm();
    let a = algorithm1_harness(&g, "sbm", &quick_config()).unwrap();
    let b = algorithm1_harness(&g, "sbm", &quick_config()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(
        serde_json::to_string(&a.metrics_json()).unwrap(),
        serde_json::to_string(&b.metrics_json()).unwrap()
    );
}
