//! Fitting a model to a snapshot sequence: each step's embeddings
//! reconstruct the next snapshot, one optimizer update per epoch.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, TnaError};
use crate::graph::Snapshot;
use crate::layers::Bound;
use crate::loss::{kl_term, l2_term, reconstruction_term, LossBreakdown};
use crate::model::Model;
use crate::optim::{RmsProp, RmsPropConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    RmsProp,
}

/// KL normalisation. `PerVertex` divides the summed divergence by |V|,
/// `PerEntry` by |V|², the same scale as the reconstruction term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlScale {
    PerVertex,
    PerEntry,
}

impl KlScale {
    /// Extra factor applied on top of the per-vertex KL.
    pub fn factor(self, vertex_count: usize) -> f64 {
        match self {
            KlScale::PerVertex => 1.0,
            KlScale::PerEntry => 1.0 / vertex_count as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub optimizer: Optimizer,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub kl_scale: KlScale,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 200,
            l2_lambda: 1e-5,
            optimizer: Optimizer::RmsProp,
            rmsprop_decay: 0.99,
            rmsprop_eps: 1e-8,
            kl_scale: KlScale::PerVertex,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.l2_lambda >= 0.0
            && (0.0..1.0).contains(&self.rmsprop_decay)
            && self.rmsprop_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TnaError::Config(format!(
                "invalid training settings {self:?}"
            )))
        }
    }

    fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.rmsprop_decay,
            eps: self.rmsprop_eps,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<LossBreakdown>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,reconstruction,kl,l2,total\n");
        for (e, l) in self.epochs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e + 1,
                l.reconstruction,
                l.kl,
                l.l2,
                l.total
            );
        }
        out
    }

    pub fn last(&self) -> Option<&LossBreakdown> {
        self.epochs.last()
    }
}

/// Total loss over a sequence: reconstruction of `A_{s+1}` from step `s`
/// plus KL for every step but the last, and one L2 term.
pub struct SequenceLoss {
    pub total: Var,
    pub reconstruction: Var,
    pub kl: Option<Var>,
    pub l2: Var,
}

impl SequenceLoss {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            reconstruction: tape.value(self.reconstruction).item(),
            kl: self.kl.map_or(0.0, |k| tape.value(k).item()),
            l2: tape.value(self.l2).item(),
            total: tape.value(self.total).item(),
        }
    }
}

fn accumulate(tape: &mut Tape, acc: Option<Var>, term: Var) -> Result<Var> {
    match acc {
        Some(a) => tape.add(a, term),
        None => Ok(term),
    }
}

/// Records the loss of `model` on `snapshots` (length ≥ 2). With `sampler`
/// the embeddings are sampled; without it they are the means.
pub fn sequence_loss(
    model: &Model,
    tape: &mut Tape,
    params: &Bound,
    snapshots: &[Arc<Snapshot>],
    l2_lambda: f64,
    kl_scale: KlScale,
    mut sampler: Option<&mut dyn RngCore>,
) -> Result<SequenceLoss> {
    if snapshots.len() < 2 {
        return Err(TnaError::contract("training needs at least two snapshots"));
    }
    let mut state = model.new_state();
    let mut rec = None;
    let mut kl = None;
    for pair in snapshots.windows(2) {
        let rng = sampler.as_mut().map(|r| &mut **r as &mut dyn RngCore);
        let step = model.forward_step(tape, params, &pair[0], &mut state, rng)?;
        let r = reconstruction_term(tape, step.z, &pair[1])?;
        rec = Some(accumulate(tape, rec, r)?);
        if let Some(log_sigma) = step.log_sigma {
            let mut k = kl_term(tape, step.mu, log_sigma)?;
            if kl_scale != KlScale::PerVertex {
                k = tape.scale(k, kl_scale.factor(pair[1].vertex_count()));
            }
            kl = Some(accumulate(tape, kl, k)?);
        }
    }
    let reconstruction = rec.expect("at least one step");
    let l2 = l2_term(tape, params, l2_lambda)?;
    let mut total = tape.add(reconstruction, l2)?;
    if let Some(k) = kl {
        total = tape.add(total, k)?;
    }
    Ok(SequenceLoss {
        total,
        reconstruction,
        kl,
        l2,
    })
}

/// Trains `model` in place on `snapshots`; `noise` supplies the
/// reparameterisation draws. Zero epochs leaves the model untouched.
pub fn train_on_sequence(
    model: &mut Model,
    snapshots: &[Arc<Snapshot>],
    config: &TrainConfig,
    noise: &mut dyn RngCore,
) -> Result<TrainLog> {
    config.validate()?;
    if snapshots.len() < 2 {
        return Err(TnaError::contract("training needs at least two snapshots"));
    }
    let mut optimizer = RmsProp::new(config.rmsprop(), model.params());
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, true);
        let loss = sequence_loss(
            model,
            &mut tape,
            &bound,
            snapshots,
            config.l2_lambda,
            config.kl_scale,
            Some(&mut *noise),
        )?;
        let breakdown = loss.breakdown(&tape);
        if !breakdown.total.is_finite() {
            return Err(TnaError::Degenerate(format!(
                "loss became non-finite at epoch {}",
                epoch + 1
            )));
        }
        tape.backward(loss.total)?;
        let grads: Vec<_> = bound.vars().iter().map(|&v| tape.grad(v)).collect();
        optimizer.step(model.params_mut(), &grads)?;
        log::debug!("epoch {} loss {:.6}", epoch + 1, breakdown.total);
        log.epochs.push(breakdown);
    }
    Ok(log)
}
