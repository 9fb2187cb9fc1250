//! Layer-spec models: stacks of plain GCN (`G`) and TNA (`T`) layers with
//! an optional variational head (`V`), decoded by an inner product.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape, Var, LEAKY_SLOPE};
use crate::error::{Result, TnaError};
use crate::graph::Snapshot;
use crate::layers::{Activation, Bound, Features, GcnLayer, ParamStore, TnaBlock};
use crate::tensor::{dot, Matrix};

/// `logσ` is clamped to this range before exponentiation.
pub const LOG_SIGMA_CLAMP: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    /// Plain graph convolution.
    G,
    /// Graph convolution followed by a GRU (TNA block).
    T,
}

/// Architecture description, e.g. `TTV/LN/SC`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerKind>,
    pub variational: bool,
    pub use_layer_norm: bool,
    pub use_skip: bool,
    /// Width of each `G`/`T` layer.
    pub dims: Vec<usize>,
    pub leaky_slope: f64,
}

impl ModelConfig {
    /// Two TNA blocks (32 and 16 filters) with layer norm, skip mixing and
    /// a 16-dimensional variational embedding.
    pub fn canonical() -> Self {
        "TTV/LN/SC".parse().expect("canonical spec parses")
    }

    /// Default widths: 32 for the first layer, 16 after.
    pub fn default_dims(layer_count: usize) -> Vec<usize> {
        (0..layer_count)
            .map(|i| if i == 0 { 32 } else { 16 })
            .collect()
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        self.dims = dims;
        self.validate()?;
        Ok(self)
    }

    /// Embedding width `d`.
    pub fn embedding_dim(&self) -> usize {
        self.dims.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(TnaError::Config(
                "at least one G or T layer is required".into(),
            ));
        }
        if self.dims.len() != self.layers.len() {
            return Err(TnaError::Config(format!(
                "{} layer widths given for {} layers",
                self.dims.len(),
                self.layers.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(TnaError::Config("layer widths must be positive".into()));
        }
        if !self.layers.contains(&LayerKind::T) && (self.use_layer_norm || self.use_skip) {
            return Err(TnaError::Config(
                "LN and SC modify T layers; this spec has none".into(),
            ));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(TnaError::Config(
                "leaky slope must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

impl FromStr for ModelConfig {
    type Err = TnaError;

    /// Accepts `TTV/LN/SC`, `ttv_ln_sc`, `GGG`, ...
    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_uppercase().replace('_', "/");
        let mut parts = normalized.split('/');
        let grammar = parts.next().unwrap_or_default();
        let mut layers = Vec::new();
        let mut variational = false;
        for (i, c) in grammar.chars().enumerate() {
            match c {
                'G' if !variational => layers.push(LayerKind::G),
                'T' if !variational => layers.push(LayerKind::T),
                'V' if i + 1 == grammar.len() => variational = true,
                _ => {
                    return Err(TnaError::Config(format!(
                        "bad layer spec {s:?}: expected G/T layers with an optional terminal V"
                    )))
                }
            }
        }
        let (mut use_layer_norm, mut use_skip) = (false, false);
        for flag in parts {
            match flag {
                "LN" => use_layer_norm = true,
                "SC" => use_skip = true,
                other => return Err(TnaError::Config(format!("unknown flag {other:?} in {s:?}"))),
            }
        }
        let config = ModelConfig {
            dims: ModelConfig::default_dims(layers.len()),
            layers,
            variational,
            use_layer_norm,
            use_skip,
            leaky_slope: LEAKY_SLOPE,
        };
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.layers {
            f.write_str(match l {
                LayerKind::G => "G",
                LayerKind::T => "T",
            })?;
        }
        if self.variational {
            f.write_str("V")?;
        }
        if self.use_layer_norm {
            f.write_str("/LN")?;
        }
        if self.use_skip {
            f.write_str("/SC")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Gcn(GcnLayer),
    Tna(TnaBlock),
}

#[derive(Clone, Debug)]
pub struct VariationalHeads {
    pub mu: GcnLayer,
    pub log_sigma: GcnLayer,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    vertex_count: usize,
    layers: Vec<Layer>,
    heads: Option<VariationalHeads>,
    params: ParamStore,
}

/// Recurrent state: one hidden matrix per layer (`None` for `G` layers and
/// before the first snapshot).
#[derive(Clone, Debug, Default)]
pub struct SequenceState {
    hidden: Vec<Option<Var>>,
}

impl SequenceState {
    pub fn new(model: &Model) -> Self {
        SequenceState {
            hidden: vec![None; model.layers.len()],
        }
    }

    pub fn reset(&mut self) {
        self.hidden.iter_mut().for_each(|h| *h = None);
    }

    pub fn hidden(&self) -> &[Option<Var>] {
        &self.hidden
    }
}

/// Per-snapshot result of a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub mu: Var,
    /// Clamped `logσ`; `None` for non-variational specs.
    pub log_sigma: Option<Var>,
    /// Sampled embedding, or `mu` in deterministic mode.
    pub z: Var,
}

impl Model {
    /// Builds and initialises a model for a universe of `vertex_count`
    /// vertices with identity input features.
    pub fn new(config: ModelConfig, vertex_count: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if vertex_count == 0 {
            return Err(TnaError::Config("vertex count must be positive".into()));
        }
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut in_dim = vertex_count;
        let last = config.layers.len() - 1;
        for (i, (&kind, &out_dim)) in config.layers.iter().zip(&config.dims).enumerate() {
            let name = format!("layers.{i}");
            layers.push(match kind {
                LayerKind::G => {
                    // Without a variational head the last G layer is the
                    // embedding itself and stays linear.
                    let activation = if i == last && !config.variational {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    };
                    Layer::Gcn(GcnLayer::new(
                        &mut params,
                        &name,
                        in_dim,
                        out_dim,
                        activation,
                        rng,
                    ))
                }
                LayerKind::T => Layer::Tna(TnaBlock::new(
                    &mut params,
                    &name,
                    in_dim,
                    out_dim,
                    config.use_layer_norm,
                    config.use_skip,
                    config.leaky_slope,
                    rng,
                )),
            });
            in_dim = out_dim;
        }
        let heads = config.variational.then(|| {
            let d = config.embedding_dim();
            VariationalHeads {
                mu: GcnLayer::new(&mut params, "head_mu", in_dim, d, Activation::Identity, rng),
                log_sigma: GcnLayer::new(
                    &mut params,
                    "head_log_sigma",
                    in_dim,
                    d,
                    Activation::Identity,
                    rng,
                ),
            }
        });
        Ok(Model {
            config,
            vertex_count,
            layers,
            heads,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn heads(&self) -> Option<&VariationalHeads> {
        self.heads.as_ref()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `|Θ|`: total number of scalar parameters.
    pub fn count_parameters(&self) -> usize {
        self.params.element_count()
    }

    pub fn new_state(&self) -> SequenceState {
        SequenceState::new(self)
    }

    /// Runs one snapshot, advancing `state`. With `sampler` set, `z` is
    /// drawn as `μ + ε ⊙ exp(logσ)`, `ε ~ N(0, I)`; otherwise `z = μ`.
    pub fn forward_step(
        &self,
        tape: &mut Tape,
        params: &Bound,
        snapshot: &Snapshot,
        state: &mut SequenceState,
        sampler: Option<&mut dyn rand::RngCore>,
    ) -> Result<StepOutput> {
        if snapshot.vertex_count() != self.vertex_count {
            return Err(TnaError::shape(
                "forward",
                (snapshot.vertex_count(), snapshot.vertex_count()),
                (self.vertex_count, self.vertex_count),
            ));
        }
        if state.hidden.len() != self.layers.len() {
            return Err(TnaError::State(
                "sequence state belongs to another model".into(),
            ));
        }
        let adjacency = snapshot.normalized_adjacency();
        let mut h = Features::Identity(self.vertex_count);
        for (layer, hidden) in self.layers.iter().zip(state.hidden.iter_mut()) {
            let out = match layer {
                Layer::Gcn(g) => g.forward(tape, params, &adjacency, h)?,
                Layer::Tna(block) => {
                    let step = block.forward(tape, params, &adjacency, h, *hidden)?;
                    *hidden = Some(step.hidden);
                    step.output
                }
            };
            h = Features::Dense(out);
        }
        let Features::Dense(last) = h else {
            unreachable!("at least one layer");
        };
        let Some(heads) = &self.heads else {
            return Ok(StepOutput {
                mu: last,
                log_sigma: None,
                z: last,
            });
        };
        let mu = heads.mu.forward(tape, params, &adjacency, h)?;
        let raw = heads.log_sigma.forward(tape, params, &adjacency, h)?;
        let log_sigma = tape.clamp(raw, -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP);
        let z = match sampler {
            Some(rng) => {
                let (rows, cols) = tape.value(mu).shape();
                let noise: Vec<f64> = (0..rows * cols)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let eps = tape.constant(Matrix::from_vec(rows, cols, noise)?);
                let sigma = tape.exp(log_sigma);
                let scaled = tape.hadamard(eps, sigma)?;
                tape.add(mu, scaled)?
            }
            None => mu,
        };
        Ok(StepOutput {
            mu,
            log_sigma: Some(log_sigma),
            z,
        })
    }

    /// Runs every snapshot in order from `state`.
    pub fn forward_sequence(
        &self,
        tape: &mut Tape,
        params: &Bound,
        snapshots: &[Arc<Snapshot>],
        state: &mut SequenceState,
        mut sampler: Option<&mut dyn rand::RngCore>,
    ) -> Result<Vec<StepOutput>> {
        if snapshots.is_empty() {
            return Err(TnaError::contract("forward pass over an empty sequence"));
        }
        let mut steps = Vec::with_capacity(snapshots.len());
        for s in snapshots {
            let rng = sampler.as_mut().map(|r| &mut **r as &mut dyn rand::RngCore);
            steps.push(self.forward_step(tape, params, s, state, rng)?);
        }
        Ok(steps)
    }

    /// Deterministic embeddings `μ_t` of the last snapshot in `snapshots`.
    pub fn embed(&self, snapshots: &[Arc<Snapshot>]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let mut state = self.new_state();
        let steps = self.forward_sequence(&mut tape, &bound, snapshots, &mut state, None)?;
        let last = steps.last().expect("non-empty sequence");
        Ok(tape.value(last.mu).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            vertex_count: self.vertex_count,
            params: self
                .params
                .iter()
                .map(|(name, m)| NamedArray {
                    name: name.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                    values: m.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TnaError::Format {
                what: "checkpoint",
                message: format!("unknown format tag {:?}", ck.format),
            });
        }
        // Structure comes from the config; values are then overwritten.
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = Model::new(ck.config.clone(), ck.vertex_count, &mut rng)?;
        if model.params.len() != ck.params.len() {
            return Err(TnaError::Format {
                what: "checkpoint",
                message: format!(
                    "{} arrays stored, config needs {}",
                    ck.params.len(),
                    model.params.len()
                ),
            });
        }
        for (id, stored) in model
            .params
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(&ck.params)
        {
            let name = model.params.name(id).to_string();
            let slot = model.params.get_mut(id);
            if stored.name != name || (stored.rows, stored.cols) != slot.shape() {
                return Err(TnaError::Format {
                    what: "checkpoint",
                    message: format!(
                        "array {:?} ({}x{}) does not match {name:?} {:?}",
                        stored.name,
                        stored.rows,
                        stored.cols,
                        slot.shape()
                    ),
                });
            }
            *slot = Matrix::from_vec(stored.rows, stored.cols, stored.values.clone())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        Model::from_checkpoint(&ck)
    }
}

pub const CHECKPOINT_FORMAT: &str = "tna-checkpoint/1";

/// Serialised model: config plus every parameter array keyed by layer path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub vertex_count: usize,
    pub params: Vec<NamedArray>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Inner-product decoder `σ(Z Zᵀ)`.
pub fn decode(z: &Matrix) -> Matrix {
    // keep entries strictly inside (0, 1) where σ would round to an end
    const LO: f64 = f64::MIN_POSITIVE;
    const HI: f64 = 1.0 - f64::EPSILON / 2.0;
    let n = z.rows();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = sigmoid(dot(z.row(i), z.row(j))).clamp(LO, HI);
            p.set(i, j, v);
            p.set(j, i, v);
        }
    }
    p
}

/// Edge probability of one pair under the inner-product decoder.
#[inline]
pub fn pair_probability(z: &Matrix, i: usize, j: usize) -> f64 {
    sigmoid(dot(z.row(i), z.row(j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn grammar_round_trip() {
        for spec in ["GGG", "GGV", "TGV", "TTV", "TTV/LN", "TTV/LN/SC"] {
            let c: ModelConfig = spec.parse().unwrap();
            assert_eq!(c.to_string(), spec);
        }
        assert_eq!(
            "ttv_ln_sc".parse::<ModelConfig>().unwrap(),
            ModelConfig::canonical()
        );
        assert_eq!("GGG".parse::<ModelConfig>().unwrap().dims, vec![32, 16, 16]);
    }

    #[test]
    fn grammar_rejects_nonsense() {
        for bad in ["", "V", "GVG", "TTX", "TTV/XX", "GGV/LN"] {
            assert!(bad.parse::<ModelConfig>().is_err(), "{bad}");
        }
        assert!(ModelConfig::canonical().with_dims(vec![32]).is_err());
    }

    #[test]
    fn ggg_has_no_recurrent_state_or_head() {
        let m = Model::new("GGG".parse().unwrap(), 10, &mut rng()).unwrap();
        assert_eq!(m.layers().len(), 3);
        assert!(m.layers().iter().all(|l| matches!(l, Layer::Gcn(_))));
        assert!(m.heads().is_none());
    }

    #[test]
    fn parameter_count_formula() {
        let m = Model::new("GGV".parse().unwrap(), 3_783, &mut rng()).unwrap();
        assert_eq!(m.count_parameters(), 3_783 * 32 + 32 * 16 + 2 * 16 * 16);
        let m = Model::new(ModelConfig::canonical(), 10, &mut rng()).unwrap();
        let block1 = 10 * 32 + 6 * 32 * 32 + 3 * 32 + 4 * 32 + 64 * 32 + 32;
        let block2 = 32 * 16 + 6 * 16 * 16 + 3 * 16 + 4 * 16 + 32 * 16 + 16;
        assert_eq!(m.count_parameters(), block1 + block2 + 2 * 16 * 16);
    }

    #[test]
    fn decoder_reference_values() {
        let p = decode(&Matrix::zeros(3, 2));
        assert!(p.as_slice().iter().all(|v| *v == 0.5));
        let z = Matrix::from_rows(&[&[1.0, 0.0], &[1.0, 0.0], &[0.3, -2.0]]);
        let p = decode(&z);
        assert!((p.get(0, 1) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(p.max_abs_diff(&p.transpose()), 0.0);
    }

    #[test]
    fn deterministic_mode_returns_mu() {
        let snaps: Vec<Arc<Snapshot>> = vec![
            Arc::new(Snapshot::new(5, [(0, 1), (1, 2)]).unwrap()),
            Arc::new(Snapshot::new(5, [(0, 1), (1, 2), (3, 4)]).unwrap()),
        ];
        let m = Model::new(ModelConfig::canonical(), 5, &mut rng()).unwrap();
        let mut tape = Tape::new();
        let p = m.params().bind(&mut tape, false);
        let mut state = m.new_state();
        let out = m
            .forward_sequence(&mut tape, &p, &snaps, &mut state, None)
            .unwrap();
        assert_eq!(out.len(), 2);
        for o in &out {
            assert_eq!(o.z, o.mu);
            assert_eq!(tape.value(o.mu).shape(), (5, 16));
            assert_eq!(tape.value(o.log_sigma.unwrap()).shape(), (5, 16));
        }
    }

    #[test]
    fn vanishing_variance_sample_equals_mu() {
        let snaps = vec![Arc::new(Snapshot::new(4, [(0, 1), (2, 3)]).unwrap())];
        let mut m = Model::new("GGV".parse().unwrap(), 4, &mut rng()).unwrap();
        // Positive weights keep every hidden row positive, so a hugely
        // negative logσ head drives every entry to the lower clamp.
        for w in m.params_mut().values_mut() {
            *w = Matrix::filled(w.rows(), w.cols(), 0.1);
        }
        let head = m.heads().unwrap().log_sigma.weight;
        let (r, c) = m.params().get(head).shape();
        *m.params_mut().get_mut(head) = Matrix::filled(r, c, -1e6);
        let mut tape = Tape::new();
        let p = m.params().bind(&mut tape, false);
        let mut state = m.new_state();
        let mut noise = ChaCha8Rng::seed_from_u64(3);
        let out = m
            .forward_sequence(&mut tape, &p, &snaps, &mut state, Some(&mut noise))
            .unwrap();
        let ls = tape.value(out[0].log_sigma.unwrap());
        assert!(ls.as_slice().iter().all(|v| *v == -LOG_SIGMA_CLAMP));
        let diff = tape.value(out[0].z).max_abs_diff(tape.value(out[0].mu));
        assert!(diff < 1e-3, "{diff}");
    }

    #[test]
    fn sampling_is_seeded() {
        let snaps = vec![
            Arc::new(Snapshot::new(6, [(0, 1), (2, 3), (4, 5)]).unwrap()),
            Arc::new(Snapshot::new(6, [(0, 1), (1, 2), (2, 3), (4, 5)]).unwrap()),
        ];
        let m = Model::new(ModelConfig::canonical(), 6, &mut rng()).unwrap();
        let run = || {
            let mut tape = Tape::new();
            let p = m.params().bind(&mut tape, false);
            let mut state = m.new_state();
            let mut noise = ChaCha8Rng::seed_from_u64(99);
            let out = m
                .forward_sequence(&mut tape, &p, &snaps, &mut state, Some(&mut noise))
                .unwrap();
            out.iter()
                .map(|o| tape.value(o.z).clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn wrong_universe_is_rejected() {
        let m = Model::new(ModelConfig::canonical(), 6, &mut rng()).unwrap();
        let snaps = vec![Arc::new(Snapshot::empty(5))];
        assert!(m.embed(&snaps).is_err());
        assert!(m.embed(&[]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = Model::new(ModelConfig::canonical(), 7, &mut rng()).unwrap();
        let text = serde_json::to_string(&m.to_checkpoint()).unwrap();
        let back = Model::from_checkpoint(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config(), m.config());
    }
}
