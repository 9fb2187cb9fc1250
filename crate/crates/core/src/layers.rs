//! Learnable layers: graph convolution, GRU cell and the temporal
//! neighbourhood aggregation block that couples them.
//!
//! Parameters live in a [`ParamStore`] and layers refer to them by
//! [`ParamId`]. Before a forward pass the store is bound onto a tape with
//! [`ParamStore::bind`]; one binding serves every time step of a sequence,
//! so a block's weights are shared through time by construction.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var, LAYER_NORM_EPS};
use crate::error::{Result, TnaError};
use crate::tensor::{CsrMatrix, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors, in creation order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    /// Total number of scalar parameters.
    pub fn element_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Puts every parameter on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|m| {
                if trainable {
                    tape.param(m.clone())
                } else {
                    tape.constant(m.clone())
                }
            })
            .collect();
        Bound(vars)
    }
}

/// Tape handles for a [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Layer input. `Identity` stands for the `|V|×|V|` identity feature
/// matrix, which is never materialised: `Â · I · W = Â · W`.
#[derive(Clone, Copy, Debug)]
pub enum Features {
    Identity(usize),
    Dense(Var),
}

impl Features {
    fn width(self, tape: &Tape) -> usize {
        match self {
            Features::Identity(n) => n,
            Features::Dense(v) => tape.value(v).cols(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// `act(Â · H · W)`; no bias.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl GcnLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(in_dim, out_dim, rng),
        );
        GcnLayer {
            weight,
            activation,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bound,
        adjacency: &Arc<CsrMatrix>,
        input: Features,
    ) -> Result<Var> {
        let w = params.var(self.weight);
        let width = input.width(tape);
        if width != self.in_dim {
            return Err(TnaError::shape(
                "gcn",
                (adjacency.rows(), width),
                (self.in_dim, self.out_dim),
            ));
        }
        let projected = match input {
            Features::Identity(_) => w,
            Features::Dense(h) => tape.matmul(h, w)?,
        };
        let aggregated = tape.spmm(adjacency.clone(), projected)?;
        Ok(match self.activation {
            Activation::Relu => tape.relu(aggregated),
            Activation::Identity => aggregated,
        })
    }
}

/// GRU over the vertex rows of a matrix, gate biases included.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_update: ParamId,
    pub input_reset: ParamId,
    pub input_candidate: ParamId,
    pub hidden_update: ParamId,
    pub hidden_reset: ParamId,
    pub hidden_candidate: ParamId,
    pub bias_update: ParamId,
    pub bias_reset: ParamId,
    pub bias_candidate: ParamId,
    pub dim: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        let mut square = |suffix: &str, rng: &mut _| {
            store.add(format!("{name}.{suffix}"), glorot_uniform(dim, dim, rng))
        };
        let input_update = square("u_update", rng);
        let input_reset = square("u_reset", rng);
        let input_candidate = square("u_candidate", rng);
        let hidden_update = square("w_update", rng);
        let hidden_reset = square("w_reset", rng);
        let hidden_candidate = square("w_candidate", rng);
        GruCell {
            input_update,
            input_reset,
            input_candidate,
            hidden_update,
            hidden_reset,
            hidden_candidate,
            bias_update: store.add(format!("{name}.b_update"), Matrix::zeros(1, dim)),
            bias_reset: store.add(format!("{name}.b_reset"), Matrix::zeros(1, dim)),
            bias_candidate: store.add(format!("{name}.b_candidate"), Matrix::zeros(1, dim)),
            dim,
        }
    }

    fn gate_input(tape: &mut Tape, x: Var, u: Var, h: Var, w: Var, b: Var) -> Result<Var> {
        let xu = tape.matmul(x, u)?;
        let hw = tape.matmul(h, w)?;
        let sum = tape.add(xu, hw)?;
        tape.add_row(sum, b)
    }

    /// One step:
    /// `u = σ(xU_u + hW_u + b_u)`, `r = σ(xU_r + hW_r + b_r)`,
    /// `h̃ = tanh(xU_h + (r⊙h)W_h + b_h)`, `h' = (1-u)⊙h + u⊙h̃`.
    pub fn step(&self, tape: &mut Tape, params: &Bound, x: Var, h_prev: Var) -> Result<Var> {
        let (xs, hs) = (tape.value(x).shape(), tape.value(h_prev).shape());
        if xs != hs || xs.1 != self.dim {
            return Err(TnaError::shape("gru", xs, hs));
        }
        let p = |id| params.var(id);
        let u_pre = Self::gate_input(
            tape,
            x,
            p(self.input_update),
            h_prev,
            p(self.hidden_update),
            p(self.bias_update),
        )?;
        let update = tape.sigmoid(u_pre);
        let r_pre = Self::gate_input(
            tape,
            x,
            p(self.input_reset),
            h_prev,
            p(self.hidden_reset),
            p(self.bias_reset),
        )?;
        let reset = tape.sigmoid(r_pre);
        let gated = tape.hadamard(reset, h_prev)?;
        let c_pre = Self::gate_input(
            tape,
            x,
            p(self.input_candidate),
            gated,
            p(self.hidden_candidate),
            p(self.bias_candidate),
        )?;
        let candidate = tape.tanh(c_pre);
        // (1-u)⊙h + u⊙h̃ = h + u⊙(h̃ - h)
        let delta = tape.sub(candidate, h_prev)?;
        let step = tape.hadamard(update, delta)?;
        tape.add(h_prev, step)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNormParams {
            gain: store.add(format!("{name}.gain"), Matrix::filled(1, dim, 1.0)),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, dim)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bound, x: Var) -> Result<Var> {
        tape.layer_norm(
            x,
            params.var(self.gain),
            params.var(self.bias),
            LAYER_NORM_EPS,
        )
    }
}

/// Linear mix of the concatenated `(GCN, GRU)` representations.
#[derive(Clone, Debug)]
pub struct SkipMix {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct TnaBlock {
    pub gcn: GcnLayer,
    pub gru: GruCell,
    pub ln_gcn: Option<LayerNormParams>,
    pub ln_gru: Option<LayerNormParams>,
    pub skip: Option<SkipMix>,
    pub leaky_slope: f64,
}

/// Output of one block step.
#[derive(Clone, Copy, Debug)]
pub struct BlockOutput {
    /// Representation passed to the next layer.
    pub output: Var,
    /// Recurrent state for the next snapshot.
    pub hidden: Var,
}

impl TnaBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        use_layer_norm: bool,
        use_skip: bool,
        leaky_slope: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let gcn = GcnLayer::new(
            store,
            &format!("{name}.gcn"),
            in_dim,
            out_dim,
            Activation::Relu,
            rng,
        );
        let gru = GruCell::new(store, &format!("{name}.gru"), out_dim, rng);
        let (ln_gcn, ln_gru) = if use_layer_norm {
            (
                Some(LayerNormParams::new(
                    store,
                    &format!("{name}.ln_gcn"),
                    out_dim,
                )),
                Some(LayerNormParams::new(
                    store,
                    &format!("{name}.ln_gru"),
                    out_dim,
                )),
            )
        } else {
            (None, None)
        };
        let skip = use_skip.then(|| SkipMix {
            weight: store.add(
                format!("{name}.skip.weight"),
                glorot_uniform(2 * out_dim, out_dim, rng),
            ),
            bias: store.add(format!("{name}.skip.bias"), Matrix::zeros(1, out_dim)),
        });
        TnaBlock {
            gcn,
            gru,
            ln_gcn,
            ln_gru,
            skip,
            leaky_slope,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.gcn.out_dim
    }

    /// One snapshot through the block. `hidden` is the block's previous GRU
    /// output, or `None` for a zero state at the start of a sequence.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bound,
        adjacency: &Arc<CsrMatrix>,
        input: Features,
        hidden: Option<Var>,
    ) -> Result<BlockOutput> {
        let conv = self.gcn.forward(tape, params, adjacency, input)?;
        let h_gcn = match &self.ln_gcn {
            Some(ln) => ln.forward(tape, params, conv)?,
            None => conv,
        };
        let h_prev = match hidden {
            Some(h) => h,
            None => tape.constant(Matrix::zeros(adjacency.rows(), self.out_dim())),
        };
        let recurrent = self.gru.step(tape, params, h_gcn, h_prev)?;
        let h_gru = match &self.ln_gru {
            Some(ln) => ln.forward(tape, params, recurrent)?,
            None => recurrent,
        };
        let output = match &self.skip {
            Some(skip) => {
                let both = tape.concat_cols(h_gcn, h_gru)?;
                let mixed = tape.matmul(both, params.var(skip.weight))?;
                let biased = tape.add_row(mixed, params.var(skip.bias))?;
                tape.leaky_relu(biased, self.leaky_slope)
            }
            None => h_gru,
        };
        Ok(BlockOutput {
            output,
            hidden: h_gru,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{sigmoid, LEAKY_SLOPE};
    use crate::graph::Snapshot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_adj(n: usize) -> Arc<CsrMatrix> {
        Snapshot::empty(n).normalized_adjacency()
    }

    #[test]
    fn glorot_bound_value() {
        assert!((glorot_bound(64, 32) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn initialisation_is_seeded() {
        let build = || {
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            TnaBlock::new(&mut store, "b", 5, 4, true, true, LEAKY_SLOPE, &mut rng);
            store
        };
        let (a, b) = (build(), build());
        assert_eq!(a, b);
        let gain = a.iter().find(|(n, _)| *n == "b.ln_gcn.gain").unwrap().1;
        assert!(gain.as_slice().iter().all(|v| *v == 1.0));
        let bias = a.iter().find(|(n, _)| *n == "b.ln_gru.bias").unwrap().1;
        assert!(bias.as_slice().iter().all(|v| *v == 0.0));
        let bound = glorot_bound(5, 4);
        let w = a.iter().find(|(n, _)| *n == "b.gcn.weight").unwrap().1;
        assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn gcn_identity_chain_and_relu() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = GcnLayer::new(&mut store, "g", 2, 2, Activation::Relu, &mut rng);
        *store.get_mut(layer.weight) = Matrix::identity(2);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let out = layer
            .forward(&mut tape, &p, &identity_adj(2), Features::Identity(2))
            .unwrap();
        assert_eq!(tape.value(out), &Matrix::identity(2));

        *store.get_mut(layer.weight) = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, -1.0]]);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let out = layer
            .forward(&mut tape, &p, &identity_adj(2), Features::Identity(2))
            .unwrap();
        assert_eq!(
            tape.value(out),
            &Matrix::from_rows(&[&[1.0, 0.0], &[0.5, 0.0]])
        );
    }

    #[test]
    fn gcn_matches_hand_evaluation_on_path() {
        // Â for the path 0-1-2, written out by hand.
        let s6 = 1.0 / 6f64.sqrt();
        let a_hat = Matrix::from_rows(&[&[0.5, s6, 0.0], &[s6, 1.0 / 3.0, s6], &[0.0, s6, 0.5]]);
        let h = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0], &[-1.0, 1.0]]);
        let w = Matrix::from_rows(&[&[0.3, -0.7, 1.1], &[0.2, 0.4, -0.5]]);
        let mut expected = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    for m in 0..2 {
                        acc += a_hat.get(i, k) * h.get(k, m) * w.get(m, j);
                    }
                }
                expected.set(i, j, acc.max(0.0));
            }
        }

        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = GcnLayer::new(&mut store, "g", 2, 3, Activation::Relu, &mut rng);
        *store.get_mut(layer.weight) = w;
        let adj = Snapshot::new(3, [(0, 1), (1, 2)])
            .unwrap()
            .normalized_adjacency();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let hv = tape.constant(h);
        let out = layer
            .forward(&mut tape, &p, &adj, Features::Dense(hv))
            .unwrap();
        assert!(tape.value(out).max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn gcn_rejects_wrong_width() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = GcnLayer::new(&mut store, "g", 3, 2, Activation::Relu, &mut rng);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let h = tape.constant(Matrix::zeros(2, 4));
        assert!(layer
            .forward(&mut tape, &p, &identity_adj(2), Features::Dense(h))
            .is_err());
    }

    fn zero_cell(dim: usize) -> (ParamStore, GruCell) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = GruCell::new(&mut store, "gru", dim, &mut rng);
        for m in store.values_mut() {
            *m = Matrix::zeros(m.rows(), m.cols());
        }
        (store, cell)
    }

    #[test]
    fn zero_parameter_gru_halves_state() {
        let (store, cell) = zero_cell(2);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let x = tape.constant(Matrix::from_rows(&[&[1.0, -3.0]]));
        let h = tape.constant(Matrix::from_rows(&[&[0.8, -0.4]]));
        let out = cell.step(&mut tape, &p, x, h).unwrap();
        assert_eq!(tape.value(out), &Matrix::from_rows(&[&[0.4, -0.2]]));
        let zero = tape.constant(Matrix::zeros(1, 2));
        let out = cell.step(&mut tape, &p, x, zero).unwrap();
        assert_eq!(tape.value(out), &Matrix::zeros(1, 2));
    }

    #[test]
    fn saturated_update_gate_copies_candidate() {
        let (mut store, cell) = zero_cell(1);
        *store.get_mut(cell.bias_update) = Matrix::scalar(50.0);
        *store.get_mut(cell.input_candidate) = Matrix::scalar(1.0);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let x = tape.constant(Matrix::scalar(0.5));
        let h = tape.constant(Matrix::scalar(-0.9));
        let out = cell.step(&mut tape, &p, x, h).unwrap();
        assert!((tape.value(out).item() - 0.5f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn scalar_gru_hand_values() {
        let (mut store, cell) = zero_cell(1);
        for id in [cell.input_update, cell.input_reset, cell.input_candidate] {
            *store.get_mut(id) = Matrix::scalar(1.0);
        }
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let x = tape.constant(Matrix::scalar(1.0));
        let h = tape.constant(Matrix::scalar(0.0));
        let out = cell.step(&mut tape, &p, x, h).unwrap();
        let expected = sigmoid(1.0) * 1f64.tanh();
        assert!((tape.value(out).item() - expected).abs() < 1e-15);
        assert!((tape.value(out).item() - 0.55677).abs() < 1e-5);
    }

    #[test]
    fn block_with_identity_skip_and_zero_gru_returns_leaky_gcn() {
        let n = 4;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let block = TnaBlock::new(&mut store, "b", n, 3, true, true, LEAKY_SLOPE, &mut rng);
        let gru_ids = [
            block.gru.input_update,
            block.gru.input_reset,
            block.gru.input_candidate,
            block.gru.hidden_update,
            block.gru.hidden_reset,
            block.gru.hidden_candidate,
        ];
        for id in gru_ids {
            *store.get_mut(id) = Matrix::zeros(3, 3);
        }
        let skip = block.skip.clone().unwrap();
        let mut stacked = Matrix::zeros(6, 3);
        for i in 0..3 {
            stacked.set(i, i, 1.0);
            stacked.set(i + 3, i, 1.0);
        }
        *store.get_mut(skip.weight) = stacked;

        let adj = Snapshot::new(n, [(0, 1), (1, 2), (2, 3)])
            .unwrap()
            .normalized_adjacency();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let out = block
            .forward(&mut tape, &p, &adj, Features::Identity(n), None)
            .unwrap();
        // zero GRU parameters and zero state give a zero GRU output; layer
        // norm of a zero row stays zero, so the skip sees (H_gcn, 0).
        let conv = block
            .gcn
            .forward(&mut tape, &p, &adj, Features::Identity(n))
            .unwrap();
        let h_gcn = block
            .ln_gcn
            .as_ref()
            .unwrap()
            .forward(&mut tape, &p, conv)
            .unwrap();
        let expected = tape
            .value(h_gcn)
            .map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
        assert!(tape.value(out.output).max_abs_diff(&expected) < 1e-15);
        assert!(tape.value(out.hidden).as_slice().iter().all(|v| *v == 0.0));
    }
}
