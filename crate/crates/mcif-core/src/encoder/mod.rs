//! Classifier whose penultimate layer doubles as the anomaly-detection
//! latent space.
//!
//! Two trunk variants share the head: a stack of gated recurrent layers for
//! encoded light-curve sequences, or a single dense hidden layer for
//! pre-extracted feature vectors. After the trunk, the contextual scalars
//! are concatenated and passed through `dense(latent_dim, relu)`, whose
//! activation is the latent vector, and a softmax output layer over the
//! common classes.
//!
//! All gradients are hand-derived (see [`train`]) and verified against
//! central finite differences.

mod train;

pub use train::{gradient_check, train, EpochStats, LabeledSet, TrainSample};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EncodedSequence;
use crate::error::{CoreError, Result};
use crate::linalg::Mat;
use crate::math;
use crate::rng::{self, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Sequence,
    Features,
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_kind: InputKind,
    /// Row width for sequences (4), feature dimension otherwise.
    pub input_dim: usize,
    /// Width of each gated recurrent layer (sequence trunk).
    pub recurrent_units: usize,
    /// Stacked recurrent layers (sequence trunk).
    pub recurrent_layers: usize,
    /// Hidden width of the dense trunk (features path).
    pub feature_hidden: usize,
    /// Penultimate (latent) width.
    pub latent_dim: usize,
    pub n_classes: usize,
    /// Contextual scalars concatenated after the trunk; 0 disables context.
    pub context_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl NetworkConfig {
    /// Sequence-path defaults at desk scale (latent 32; the full-scale
    /// setting uses latent 100).
    pub fn sequence(n_classes: usize, latent_dim: usize, seed: u64) -> Self {
        Self {
            input_kind: InputKind::Sequence,
            input_dim: 4,
            recurrent_units: 32,
            recurrent_layers: 2,
            feature_hidden: 64,
            latent_dim,
            n_classes,
            context_dim: 4,
            epochs: 40,
            learning_rate: 1e-3,
            batch_size: 128,
            seed,
        }
    }

    pub fn features(input_dim: usize, n_classes: usize, latent_dim: usize, seed: u64) -> Self {
        Self {
            input_kind: InputKind::Features,
            input_dim,
            recurrent_units: 0,
            recurrent_layers: 0,
            feature_hidden: 64,
            latent_dim,
            n_classes,
            context_dim: 0,
            epochs: 40,
            learning_rate: 1e-3,
            batch_size: 128,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 1 {
            return Err(CoreError::Invalid("latent_dim must be >= 1".into()));
        }
        if self.n_classes < 2 {
            return Err(CoreError::Invalid("n_classes must be >= 2".into()));
        }
        if self.epochs < 1 {
            return Err(CoreError::Invalid("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(CoreError::Invalid("batch_size must be >= 1".into()));
        }
        if self.input_kind == InputKind::Sequence
            && (self.recurrent_units < 1 || self.recurrent_layers < 1)
        {
            return Err(CoreError::Invalid(
                "sequence path needs at least one recurrent layer with units >= 1".into(),
            ));
        }
        if self.input_kind == InputKind::Features && self.feature_hidden < 1 {
            return Err(CoreError::Invalid("feature_hidden must be >= 1".into()));
        }
        Ok(())
    }

    /// Trunk output width before context concatenation.
    pub fn trunk_dim(&self) -> usize {
        match self.input_kind {
            InputKind::Sequence => self.recurrent_units,
            InputKind::Features => self.feature_hidden,
        }
    }
}

/// Gate weights of one gated recurrent layer.
///
/// Update gate `z`, reset gate `r`, candidate `hh`:
/// `z = sigm(Wz x + Uz h + bz)`, `r = sigm(Wr x + Ur h + br)`,
/// `hh = tanh(Wh x + Uh (r*h) + bh)`, `h' = (1-z)*h + z*hh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayer {
    pub w_z: Mat,
    pub u_z: Mat,
    pub b_z: Vec<f64>,
    pub w_r: Mat,
    pub u_r: Mat,
    pub b_r: Vec<f64>,
    pub w_h: Mat,
    pub u_h: Mat,
    pub b_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trunk {
    Sequence { layers: Vec<GruLayer> },
    Features { hidden: Dense },
}

/// All trainable tensors. The gradient buffer reuses the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub trunk: Trunk,
    /// `latent_dim x (trunk_dim + context_dim)` plus bias.
    pub latent: Dense,
    /// `n_classes x latent_dim` plus bias.
    pub output: Dense,
}

impl GruLayer {
    fn zeros(units: usize, in_dim: usize) -> Self {
        Self {
            w_z: Mat::zeros(units, in_dim),
            u_z: Mat::zeros(units, units),
            b_z: vec![0.0; units],
            w_r: Mat::zeros(units, in_dim),
            u_r: Mat::zeros(units, units),
            b_r: vec![0.0; units],
            w_h: Mat::zeros(units, in_dim),
            u_h: Mat::zeros(units, units),
            b_h: vec![0.0; units],
        }
    }
}

impl Dense {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: Mat::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }
}

impl ParamSet {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let trunk = match config.input_kind {
            InputKind::Sequence => {
                let mut layers = Vec::new();
                for l in 0..config.recurrent_layers {
                    let in_dim = if l == 0 {
                        config.input_dim
                    } else {
                        config.recurrent_units
                    };
                    layers.push(GruLayer::zeros(config.recurrent_units, in_dim));
                }
                Trunk::Sequence { layers }
            }
            InputKind::Features => Trunk::Features {
                hidden: Dense::zeros(config.feature_hidden, config.input_dim),
            },
        };
        Self {
            trunk,
            latent: Dense::zeros(config.latent_dim, config.trunk_dim() + config.context_dim),
            output: Dense::zeros(config.n_classes, config.latent_dim),
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn init(config: &NetworkConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        let mut stream = rng::rng_from_seed(substream(seed, "encoder-init", 0));
        for (name, rows, cols, data) in params.tensors_mut() {
            if name.ends_with(".b") {
                continue; // biases stay zero
            }
            let bound = math::sqrt(6.0 / (rows + cols) as f64);
            for v in data.iter_mut() {
                *v = (stream.gen::<f64>() * 2.0 - 1.0) * bound;
            }
        }
        params
    }

    /// Every tensor in a fixed order as `(name, rows, cols, data)`.
    /// Biases are reported as `rows x 1`. The order is the contract between
    /// the optimizer state, gradient buffers, and checkpoints.
    pub fn tensors(&self) -> Vec<(String, usize, usize, &[f64])> {
        let mut out: Vec<(String, usize, usize, &[f64])> = Vec::new();
        match &self.trunk {
            Trunk::Sequence { layers } => {
                for (l, layer) in layers.iter().enumerate() {
                    for (gate, w, u, b) in [
                        ("z", &layer.w_z, &layer.u_z, &layer.b_z),
                        ("r", &layer.w_r, &layer.u_r, &layer.b_r),
                        ("h", &layer.w_h, &layer.u_h, &layer.b_h),
                    ] {
                        out.push((
                            alloc::format!("gru{l}.w_{gate}"),
                            w.rows(),
                            w.cols(),
                            w.as_slice(),
                        ));
                        out.push((
                            alloc::format!("gru{l}.u_{gate}"),
                            u.rows(),
                            u.cols(),
                            u.as_slice(),
                        ));
                        out.push((alloc::format!("gru{l}.b_{gate}"), b.len(), 1, b));
                    }
                }
            }
            Trunk::Features { hidden } => {
                out.push((
                    "hidden.w".into(),
                    hidden.w.rows(),
                    hidden.w.cols(),
                    hidden.w.as_slice(),
                ));
                out.push(("hidden.b".into(), hidden.b.len(), 1, &hidden.b));
            }
        }
        out.push((
            "latent.w".into(),
            self.latent.w.rows(),
            self.latent.w.cols(),
            self.latent.w.as_slice(),
        ));
        out.push(("latent.b".into(), self.latent.b.len(), 1, &self.latent.b));
        out.push((
            "output.w".into(),
            self.output.w.rows(),
            self.output.w.cols(),
            self.output.w.as_slice(),
        ));
        out.push(("output.b".into(), self.output.b.len(), 1, &self.output.b));
        out
    }

    /// Mutable twin of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, usize, usize, &mut [f64])> {
        let mut out: Vec<(String, usize, usize, &mut [f64])> = Vec::new();
        match &mut self.trunk {
            Trunk::Sequence { layers } => {
                for (l, layer) in layers.iter_mut().enumerate() {
                    for (gate, w, u, b) in [
                        ("z", &mut layer.w_z, &mut layer.u_z, &mut layer.b_z),
                        ("r", &mut layer.w_r, &mut layer.u_r, &mut layer.b_r),
                        ("h", &mut layer.w_h, &mut layer.u_h, &mut layer.b_h),
                    ] {
                        let (rows, cols) = (w.rows(), w.cols());
                        out.push((
                            alloc::format!("gru{l}.w_{gate}"),
                            rows,
                            cols,
                            w.as_mut_slice(),
                        ));
                        let (rows, cols) = (u.rows(), u.cols());
                        out.push((
                            alloc::format!("gru{l}.u_{gate}"),
                            rows,
                            cols,
                            u.as_mut_slice(),
                        ));
                        let blen = b.len();
                        out.push((alloc::format!("gru{l}.b_{gate}"), blen, 1, b.as_mut_slice()));
                    }
                }
            }
            Trunk::Features { hidden } => {
                let (rows, cols) = (hidden.w.rows(), hidden.w.cols());
                out.push(("hidden.w".into(), rows, cols, hidden.w.as_mut_slice()));
                let blen = hidden.b.len();
                out.push(("hidden.b".into(), blen, 1, hidden.b.as_mut_slice()));
            }
        }
        let (rows, cols) = (self.latent.w.rows(), self.latent.w.cols());
        out.push(("latent.w".into(), rows, cols, self.latent.w.as_mut_slice()));
        let blen = self.latent.b.len();
        out.push(("latent.b".into(), blen, 1, self.latent.b.as_mut_slice()));
        let (rows, cols) = (self.output.w.rows(), self.output.w.cols());
        out.push(("output.w".into(), rows, cols, self.output.w.as_mut_slice()));
        let blen = self.output.b.len();
        out.push(("output.b".into(), blen, 1, self.output.b.as_mut_slice()));
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, _, data)| data.len()).sum()
    }

    /// Error naming the first tensor containing a non-finite value.
    pub fn validate_finite(&self) -> Result<()> {
        for (name, _, _, data) in self.tensors() {
            if data.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFiniteParameter { tensor: name });
            }
        }
        Ok(())
    }
}

/// A single model input, borrowed from caller storage.
#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a> {
    Sequence(&'a EncodedSequence),
    Features { values: &'a [f64], context: &'a [f64] },
}

/// Owned variant used by training sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OwnedInput {
    Sequence(EncodedSequence),
    Features { values: Vec<f64>, context: Vec<f64> },
}

impl OwnedInput {
    pub fn as_ref(&self) -> ModelInput<'_> {
        match self {
            OwnedInput::Sequence(enc) => ModelInput::Sequence(enc),
            OwnedInput::Features { values, context } => ModelInput::Features {
                values,
                context,
            },
        }
    }
}

/// Penultimate-layer activation for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub object_id: String,
    pub z: Vec<f64>,
}

/// The trained classifier/encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderClassifier {
    pub config: NetworkConfig,
    pub params: ParamSet,
    /// Inverse-frequency class weights, mean 1, aligned with `class_order`.
    pub class_weights: Vec<f64>,
    pub class_order: Vec<String>,
    pub training_log: Vec<EpochStats>,
}

impl EncoderClassifier {
    /// Freshly initialized, untrained model.
    pub fn new(config: NetworkConfig, class_order: Vec<String>, class_weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if class_order.len() != config.n_classes || class_weights.len() != config.n_classes {
            return Err(CoreError::DimensionMismatch {
                expected: config.n_classes,
                got: class_order.len().min(class_weights.len()),
            });
        }
        let params = ParamSet::init(&config, config.seed);
        Ok(Self {
            config,
            params,
            class_weights,
            class_order,
            training_log: Vec::new(),
        })
    }

    /// Class probabilities and latent vector for one input.
    ///
    /// Masked sequence steps do not update the recurrent state, so appending
    /// padding rows can never change the output.
    pub fn forward(&self, input: &ModelInput<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        self.params.validate_finite()?;
        let (probs, z) = forward_pass(&self.config, &self.params, input, None)?;
        Ok((probs, z))
    }

    /// Latent vectors for a batch, order preserved. Parameters are validated
    /// once up front.
    pub fn encode<'a>(
        &self,
        inputs: impl IntoIterator<Item = (&'a str, ModelInput<'a>)>,
    ) -> Result<Vec<LatentVector>> {
        self.params.validate_finite()?;
        let mut out = Vec::new();
        for (object_id, input) in inputs {
            let (_, z) = forward_pass(&self.config, &self.params, &input, None)?;
            out.push(LatentVector {
                object_id: object_id.into(),
                z,
            });
        }
        Ok(out)
    }

    /// Predicted class index (argmax of probabilities).
    pub fn predict(&self, input: &ModelInput<'_>) -> Result<usize> {
        let (probs, _) = self.forward(input)?;
        Ok(argmax(&probs))
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Inverse-frequency class weights normalized to mean 1.
pub fn class_weights_from_counts(counts: &[usize]) -> Result<Vec<f64>> {
    if counts.contains(&0) {
        return Err(CoreError::Invalid(
            "every class needs at least one training sample for class weights".into(),
        ));
    }
    let raw: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
    Ok(normalize_mean_one(&raw))
}

/// Scale so the mean is exactly 1. Scaling all inputs by a power of two
/// leaves the result bit-identical.
pub fn normalize_mean_one(weights: &[f64]) -> Vec<f64> {
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    weights.iter().map(|w| w / mean).collect()
}

// ---------------------------------------------------------------------------
// Forward pass (shared by inference and training)
// ---------------------------------------------------------------------------

/// Per-step cache of one recurrent layer, kept only while training.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// Input vector to this layer at this step.
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub hh: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardCache {
    /// `steps[real_step][layer]`.
    pub steps: Vec<Vec<StepCache>>,
    /// Features-trunk input and pre-relu activation.
    pub feat_x: Vec<f64>,
    pub feat_pre: Vec<f64>,
    /// Latent-layer input (trunk output ++ context) and pre-relu activation.
    pub v: Vec<f64>,
    pub latent_pre: Vec<f64>,
    pub z_latent: Vec<f64>,
    pub probs: Vec<f64>,
    pub logp: Vec<f64>,
}

pub(crate) fn forward_pass(
    config: &NetworkConfig,
    params: &ParamSet,
    input: &ModelInput<'_>,
    mut cache: Option<&mut ForwardCache>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (trunk_out, context): (Vec<f64>, &[f64]) = match (&params.trunk, input) {
        (Trunk::Sequence { layers }, ModelInput::Sequence(enc)) => {
            if enc.rows.cols() != config.input_dim {
                return Err(CoreError::DimensionMismatch {
                    expected: config.input_dim,
                    got: enc.rows.cols(),
                });
            }
            let units = config.recurrent_units;
            let mut hidden: Vec<Vec<f64>> = vec![vec![0.0; units]; layers.len()];
            for (t, mask) in enc.mask.iter().enumerate() {
                if !mask {
                    continue;
                }
                let mut x: Vec<f64> = enc.rows.row(t).to_vec();
                let mut step_caches = Vec::new();
                for (l, layer) in layers.iter().enumerate() {
                    let h_prev = hidden[l].clone();
                    let (h, sc) = gru_step(layer, &x, &h_prev, cache.is_some());
                    if let Some(sc) = sc {
                        step_caches.push(sc);
                    }
                    hidden[l] = h.clone();
                    x = h;
                }
                if let Some(c) = cache.as_deref_mut() {
                    c.steps.push(step_caches);
                }
            }
            let top = hidden.pop().expect("at least one recurrent layer");
            (top, &enc.context)
        }
        (Trunk::Features { hidden }, ModelInput::Features { values, context }) => {
            if values.len() != config.input_dim {
                return Err(CoreError::DimensionMismatch {
                    expected: config.input_dim,
                    got: values.len(),
                });
            }
            let mut pre = hidden.b.clone();
            hidden.w.matvec_add(values, &mut pre);
            let out: Vec<f64> = pre.iter().map(|&a| relu(a)).collect();
            if let Some(c) = cache.as_deref_mut() {
                c.feat_x = values.to_vec();
                c.feat_pre = pre;
            }
            (out, context)
        }
        _ => {
            return Err(CoreError::Invalid(
                "input kind does not match the model trunk".into(),
            ))
        }
    };

    if context.len() != config.context_dim {
        return Err(CoreError::DimensionMismatch {
            expected: config.context_dim,
            got: context.len(),
        });
    }

    let mut v = trunk_out;
    v.extend_from_slice(context);

    let mut latent_pre = params.latent.b.clone();
    params.latent.w.matvec_add(&v, &mut latent_pre);
    let z_latent: Vec<f64> = latent_pre.iter().map(|&a| relu(a)).collect();

    let mut logits = params.output.b.clone();
    params.output.w.matvec_add(&z_latent, &mut logits);

    let (probs, logp) = softmax(&logits);

    if let Some(c) = cache {
        c.v = v;
        c.latent_pre = latent_pre;
        c.z_latent = z_latent.clone();
        c.probs = probs.clone();
        c.logp = logp;
    }
    Ok((probs, z_latent))
}

pub(crate) fn gru_step(
    layer: &GruLayer,
    x: &[f64],
    h_prev: &[f64],
    want_cache: bool,
) -> (Vec<f64>, Option<StepCache>) {
    let units = h_prev.len();

    let mut z = layer.b_z.clone();
    layer.w_z.matvec_add(x, &mut z);
    layer.u_z.matvec_add(h_prev, &mut z);
    z.iter_mut().for_each(|a| *a = math::sigmoid(*a));

    let mut r = layer.b_r.clone();
    layer.w_r.matvec_add(x, &mut r);
    layer.u_r.matvec_add(h_prev, &mut r);
    r.iter_mut().for_each(|a| *a = math::sigmoid(*a));

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
    let mut hh = layer.b_h.clone();
    layer.w_h.matvec_add(x, &mut hh);
    layer.u_h.matvec_add(&rh, &mut hh);
    hh.iter_mut().for_each(|a| *a = math::tanh(*a));

    let mut h = vec![0.0; units];
    for i in 0..units {
        h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * hh[i];
    }

    let cache = want_cache.then(|| StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z: z.clone(),
        r: r.clone(),
        hh: hh.clone(),
    });
    (h, cache)
}

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Numerically stable softmax; returns `(probs, log-probs)`.
pub(crate) fn softmax(logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&a| math::exp(a - max)).collect();
    let sum: f64 = exps.iter().sum();
    let log_sum = math::ln(sum);
    let probs: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    let logp: Vec<f64> = logits.iter().map(|&a| a - max - log_sum).collect();
    (probs, logp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{preprocess, LcPoint, LightCurve, Passband, Wavelengths};
    use alloc::string::ToString;

    fn tiny_sequence_config() -> NetworkConfig {
        let mut cfg = NetworkConfig::sequence(3, 5, 42);
        cfg.recurrent_units = 4;
        cfg
    }

    fn sample_curve(n: usize) -> LightCurve {
        LightCurve {
            object_id: "s".into(),
            points: (0..n)
                .map(|j| LcPoint {
                    time: j as f64,
                    flux: 10.0 + j as f64,
                    flux_err: 1.0,
                    passband: if j % 2 == 0 { Passband::G } else { Passband::R },
                })
                .collect(),
            redshift: Some(0.2),
            mwebv: Some(0.05),
            label: None,
        }
    }

    fn model(cfg: NetworkConfig) -> EncoderClassifier {
        let n = cfg.n_classes;
        EncoderClassifier::new(
            cfg,
            (0..n).map(|i| alloc::format!("c{i}")).collect(),
            vec![1.0; n],
        )
        .unwrap()
    }

    #[test]
    fn zero_output_layer_gives_uniform_probs() {
        let mut m = model(tiny_sequence_config());
        m.params.output.w.fill(0.0);
        m.params.output.b.iter_mut().for_each(|b| *b = 0.0);
        let enc = preprocess(&sample_curve(6), 8, &Wavelengths::default());
        let (probs, _) = m.forward(&ModelInput::Sequence(&enc)).unwrap();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn probs_form_a_simplex() {
        let m = model(tiny_sequence_config());
        let enc = preprocess(&sample_curve(6), 8, &Wavelengths::default());
        let (probs, _) = m.forward(&ModelInput::Sequence(&enc)).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn fully_masked_sequence_depends_only_on_context() {
        let m = model(tiny_sequence_config());
        let empty = LightCurve {
            object_id: "e".into(),
            points: vec![],
            redshift: Some(0.2),
            mwebv: Some(0.05),
            label: None,
        };
        let enc_a = preprocess(&empty, 4, &Wavelengths::default());
        let enc_b = preprocess(&empty, 16, &Wavelengths::default());
        let (pa, za) = m.forward(&ModelInput::Sequence(&enc_a)).unwrap();
        let (pb, zb) = m.forward(&ModelInput::Sequence(&enc_b)).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(za, zb);

        let mut different_context = empty.clone();
        different_context.redshift = Some(0.9);
        let enc_c = preprocess(&different_context, 4, &Wavelengths::default());
        let (_, zc) = m.forward(&ModelInput::Sequence(&enc_c)).unwrap();
        assert_ne!(za, zc);
    }

    #[test]
    fn appending_masked_padding_never_changes_outputs() {
        let m = model(tiny_sequence_config());
        let lc = sample_curve(5);
        let short = preprocess(&lc, 5, &Wavelengths::default());
        let padded = preprocess(&lc, 37, &Wavelengths::default());
        let (pa, za) = m.forward(&ModelInput::Sequence(&short)).unwrap();
        let (pb, zb) = m.forward(&ModelInput::Sequence(&padded)).unwrap();
        // Bit-for-bit: masked steps are skipped, not multiplied by zero.
        assert_eq!(pa, pb);
        assert_eq!(za, zb);
    }

    /// Straight-line re-implementation of the full sequence forward pass,
    /// written directly from the gate equations with scalar loops and no
    /// shared helpers.
    #[allow(clippy::needless_range_loop)] // scalar index loops on purpose
    fn straight_line_forward(m: &EncoderClassifier, enc: &EncodedSequence) -> (Vec<f64>, Vec<f64>) {
        let layers = match &m.params.trunk {
            Trunk::Sequence { layers } => layers,
            _ => unreachable!(),
        };
        let u = m.config.recurrent_units;
        let mut hs: Vec<Vec<f64>> = vec![vec![0.0; u]; layers.len()];
        for t in 0..enc.mask.len() {
            if !enc.mask[t] {
                continue;
            }
            let mut x: Vec<f64> = enc.rows.row(t).to_vec();
            for (l, layer) in layers.iter().enumerate() {
                let hp = hs[l].clone();
                let mut h_new = vec![0.0; u];
                for i in 0..u {
                    let mut az = layer.b_z[i];
                    let mut ar = layer.b_r[i];
                    for (k, xv) in x.iter().enumerate() {
                        az += layer.w_z.get(i, k) * xv;
                        ar += layer.w_r.get(i, k) * xv;
                    }
                    for k in 0..u {
                        az += layer.u_z.get(i, k) * hp[k];
                        ar += layer.u_r.get(i, k) * hp[k];
                    }
                    let z = 1.0 / (1.0 + math::exp(-az));
                    let _r = 1.0 / (1.0 + math::exp(-ar));
                    let mut ah = layer.b_h[i];
                    for (k, xv) in x.iter().enumerate() {
                        ah += layer.w_h.get(i, k) * xv;
                    }
                    for k in 0..u {
                        // r is per-output; recompute the k-th reset gate.
                        let mut ark = layer.b_r[k];
                        for (kk, xv) in x.iter().enumerate() {
                            ark += layer.w_r.get(k, kk) * xv;
                        }
                        for kk in 0..u {
                            ark += layer.u_r.get(k, kk) * hp[kk];
                        }
                        let rk = 1.0 / (1.0 + math::exp(-ark));
                        ah += layer.u_h.get(i, k) * (rk * hp[k]);
                    }
                    let hh = math::tanh(ah);
                    h_new[i] = (1.0 - z) * hp[i] + z * hh;
                }
                hs[l] = h_new.clone();
                x = h_new;
            }
        }
        let mut v = hs.last().unwrap().clone();
        v.extend_from_slice(&enc.context);
        let mut zlat = vec![0.0; m.config.latent_dim];
        for i in 0..m.config.latent_dim {
            let mut a = m.params.latent.b[i];
            for (k, vv) in v.iter().enumerate() {
                a += m.params.latent.w.get(i, k) * vv;
            }
            zlat[i] = a.max(0.0);
        }
        let mut logits = vec![0.0; m.config.n_classes];
        for i in 0..m.config.n_classes {
            let mut a = m.params.output.b[i];
            for (k, zv) in zlat.iter().enumerate() {
                a += m.params.output.w.get(i, k) * zv;
            }
            logits[i] = a;
        }
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&a| math::exp(a - mx)).collect();
        let s: f64 = exps.iter().sum();
        (exps.into_iter().map(|e| e / s).collect(), zlat)
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let m = model(tiny_sequence_config());
        let enc = preprocess(&sample_curve(7), 10, &Wavelengths::default());
        let (probs, z) = m.forward(&ModelInput::Sequence(&enc)).unwrap();
        let (probs_o, z_o) = straight_line_forward(&m, &enc);
        for (a, b) in probs.iter().zip(&probs_o) {
            assert!((a - b).abs() < 1e-12, "probs {a} vs {b}");
        }
        for (a, b) in z.iter().zip(&z_o) {
            assert!((a - b).abs() < 1e-12, "z {a} vs {b}");
        }
    }

    #[test]
    fn nan_parameter_is_named() {
        let mut m = model(tiny_sequence_config());
        m.params.latent.w.set(0, 0, f64::NAN);
        let enc = preprocess(&sample_curve(3), 4, &Wavelengths::default());
        let err = m.forward(&ModelInput::Sequence(&enc)).unwrap_err();
        assert_eq!(
            err,
            CoreError::NonFiniteParameter {
                tensor: "latent.w".to_string()
            }
        );
    }

    #[test]
    fn encode_is_deterministic_and_sized() {
        let m = model(tiny_sequence_config());
        let lc = sample_curve(4);
        let enc = preprocess(&lc, 6, &Wavelengths::default());
        let a = m
            .encode([("obj", ModelInput::Sequence(&enc))])
            .unwrap();
        let b = m
            .encode([("obj", ModelInput::Sequence(&enc))])
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].z.len(), m.config.latent_dim);
        assert_eq!(a[0].object_id, "obj");
    }

    #[test]
    fn class_weights_match_inverse_frequency_example() {
        let w = class_weights_from_counts(&[90, 10]).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-12);
        assert!((w[1] - 1.8).abs() < 1e-12);
        // Power-of-two rescaling then renormalization is bit-identical.
        let scaled: Vec<f64> = w.iter().map(|x| x * 4.0).collect();
        assert_eq!(normalize_mean_one(&scaled), normalize_mean_one(&w));
    }

    #[test]
    fn input_kind_mismatch_is_rejected() {
        let m = model(tiny_sequence_config());
        let err = m
            .forward(&ModelInput::Features {
                values: &[1.0],
                context: &[],
            })
            .unwrap_err();
        assert!(matches!(err, CoreError::Invalid(_)));
    }
}
