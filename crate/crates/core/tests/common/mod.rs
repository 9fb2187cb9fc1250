//! Oracles shared by the unit-style suites and the acceptance runner.
#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tna_core::autodiff::Tape;
use tna_core::train::{sequence_loss, KlScale};
use tna_core::{Matrix, Model, ModelConfig, Snapshot};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Below 1e-4 in magnitude the comparison becomes absolute (1e-8): a
/// central difference of losses carrying ~1e-15 rounding has a noise floor
/// near 1e-10.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn toy_sequence() -> Vec<Arc<Snapshot>> {
    [
        vec![(0, 1), (1, 2), (3, 4)],
        vec![(0, 1), (1, 2), (2, 3), (3, 4)],
        vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)],
    ]
    .into_iter()
    .map(|e| Arc::new(Snapshot::new(6, e).unwrap()))
    .collect()
}

pub struct GradientReport {
    pub parameters: usize,
    pub worst: f64,
    /// Name, element, analytic and numeric value of the worst entry.
    pub worst_at: (String, usize, f64, f64),
}

/// Every parameter entry of `config` on the toy sequence, checked against
/// central differences of the full training loss.
pub fn full_model_check(config: &str) -> GradientReport {
    let graphs = toy_sequence();
    let mut model = Model::new(
        config.parse::<ModelConfig>().unwrap(),
        6,
        &mut ChaCha8Rng::seed_from_u64(11),
    )
    .unwrap();
    let loss_of = |model: &Model, grads: bool| {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, true);
        // the same reparameterisation noise on every evaluation
        let mut noise = ChaCha8Rng::seed_from_u64(12);
        let loss = sequence_loss(
            model,
            &mut tape,
            &bound,
            &graphs,
            1e-5,
            KlScale::PerVertex,
            Some(&mut noise),
        )
        .unwrap();
        let value = tape.value(loss.total).item();
        let g: Vec<Matrix> = if grads {
            tape.backward(loss.total).unwrap();
            bound
                .vars()
                .iter()
                .map(|&v| tape.grad(v).unwrap().clone())
                .collect()
        } else {
            Vec::new()
        };
        (value, g)
    };
    let names: Vec<String> = model
        .params()
        .ids()
        .map(|id| model.params().name(id).to_string())
        .collect();
    let (_, analytic) = loss_of(&model, true);
    let mut report = GradientReport {
        parameters: 0,
        worst: 0.0,
        worst_at: (String::new(), 0, 0.0, 0.0),
    };
    for k in 0..analytic.len() {
        for e in 0..analytic[k].len() {
            let original = model.params().values()[k].as_slice()[e];
            model.params_mut().values_mut()[k].as_mut_slice()[e] = original + H;
            let up = loss_of(&model, false).0;
            model.params_mut().values_mut()[k].as_mut_slice()[e] = original - H;
            let down = loss_of(&model, false).0;
            model.params_mut().values_mut()[k].as_mut_slice()[e] = original;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[k].as_slice()[e];
            let err = relative_error(a, numeric);
            report.parameters += 1;
            if err >= report.worst {
                report.worst = err;
                report.worst_at = (names[k].clone(), e, a, numeric);
            }
        }
    }
    report
}

pub fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut count = 0.0;
    for p in pos {
        for n in neg {
            if p > n {
                count += 1.0;
            } else if p == n {
                count += 0.5;
            }
        }
    }
    count / (pos.len() * neg.len()) as f64
}

/// Precision at the rank of every positive, with ranks assigned by counting
/// items that sort strictly ahead (higher score, or equal score earlier in
/// the positives-then-negatives input order).
pub fn brute_ap(pos: &[f64], neg: &[f64]) -> f64 {
    let items: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    let ahead = |k: usize, j: usize| items[j].0 > items[k].0 || (items[j].0 == items[k].0 && j < k);
    let mut total = 0.0;
    for k in 0..items.len() {
        if !items[k].1 {
            continue;
        }
        let rank = 1 + (0..items.len()).filter(|&j| ahead(k, j)).count();
        let hits = 1
            + (0..items.len())
                .filter(|&j| items[j].1 && ahead(k, j))
                .count();
        total += hits as f64 / rank as f64;
    }
    total / pos.len() as f64
}

// coarse grid so ties are frequent
fn score() -> impl Strategy<Value = f64> {
    (0u8..6).prop_map(|v| f64::from(v) / 5.0)
}

/// At most 8 scores, at least one of each class.
pub fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=7).prop_flat_map(|np| {
        (
            prop::collection::vec(score(), np),
            prop::collection::vec(score(), 1..=(8 - np)),
        )
    })
}
