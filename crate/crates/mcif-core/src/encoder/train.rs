//! Training: class-weighted cross-entropy, hand-derived backpropagation
//! (through time for the recurrent trunk), Adam updates, and the
//! finite-difference gradient checker.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, class_weights_from_counts, forward_pass, EncoderClassifier, ForwardCache, ModelInput,
    NetworkConfig, OwnedInput, ParamSet, Trunk,
};
use crate::data::check_no_anomalous;
use crate::error::{CoreError, Result};
use crate::rng::{self, substream};

/// One labeled training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub object_id: String,
    pub label_index: usize,
    pub input: OwnedInput,
}

/// A labeled dataset with a stable class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub samples: Vec<TrainSample>,
    pub class_order: Vec<String>,
}

impl LabeledSet {
    /// Build a training set; the class order is the sorted set of labels.
    /// Any object from an anomalous class is rejected here, at assembly
    /// time, before a batch can ever see it.
    pub fn for_training(
        items: Vec<(String, String, OwnedInput)>,
        anomalous_classes: &BTreeSet<String>,
    ) -> Result<Self> {
        check_no_anomalous(
            items.iter().map(|(id, label, _)| (id.as_str(), label.as_str())),
            anomalous_classes,
        )?;
        let class_order: Vec<String> = items
            .iter()
            .map(|(_, label, _)| label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self::with_class_order(items, class_order)
    }

    /// Build a set against an existing class order (validation/test sets
    /// scored under a trained model). Labels outside the order are an error.
    pub fn with_class_order(
        items: Vec<(String, String, OwnedInput)>,
        class_order: Vec<String>,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(items.len());
        for (object_id, label, input) in items {
            let label_index = class_order
                .iter()
                .position(|c| *c == label)
                .ok_or_else(|| {
                    CoreError::Invalid(alloc::format!("label `{label}` not in class order"))
                })?;
            samples.push(TrainSample {
                object_id,
                label_index,
                input,
            });
        }
        Ok(Self {
            samples,
            class_order,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_order.len()];
        for s in &self.samples {
            counts[s.label_index] += 1;
        }
        counts
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.object_id.as_str())
    }
}

/// Per-epoch training log entry. Validation fields are `None` when no
/// validation set was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    beta1_t: f64,
    beta2_t: f64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    fn new(params: &ParamSet, lr: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, _, _, d)| d.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            beta1_t: 1.0,
            beta2_t: 1.0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.beta1_t *= self.beta1;
        self.beta2_t *= self.beta2;
        let bc1 = 1.0 - self.beta1_t;
        let bc2 = 1.0 - self.beta2_t;
        let gtensors = grads.tensors();
        for (k, (_, _, _, pdata)) in params.tensors_mut().into_iter().enumerate() {
            let gdata = gtensors[k].3;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..pdata.len() {
                let g = gdata[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                pdata[i] -= self.lr * m_hat / (crate::math::sqrt(v_hat) + self.eps);
            }
        }
    }
}

impl ParamSet {
    fn zero_all(&mut self) {
        for (_, _, _, data) in self.tensors_mut() {
            data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Accumulate gradients for one sample into `grads`.
///
/// `scale` is `class_weight / batch_size`; the loss contribution returned is
/// already weighted (but not divided by the batch size).
fn backward_sample(
    config: &NetworkConfig,
    params: &ParamSet,
    cache: &ForwardCache,
    input: &ModelInput<'_>,
    target: usize,
    scale: f64,
    grads: &mut ParamSet,
) {
    let n_classes = config.n_classes;

    // d loss / d logits for weighted cross-entropy.
    let mut dlogits = vec![0.0; n_classes];
    for (c, (d, p)) in dlogits.iter_mut().zip(&cache.probs).enumerate() {
        let indicator = if c == target { 1.0 } else { 0.0 };
        *d = scale * (p - indicator);
    }

    // Output layer.
    grads.output.w.outer_add(&dlogits, &cache.z_latent);
    for (g, d) in grads.output.b.iter_mut().zip(&dlogits) {
        *g += d;
    }
    let mut dz_latent = vec![0.0; config.latent_dim];
    params.output.w.t_matvec_add(&dlogits, &mut dz_latent);

    // Latent layer (relu).
    let mut da_latent = dz_latent;
    for (d, &pre) in da_latent.iter_mut().zip(&cache.latent_pre) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    grads.latent.w.outer_add(&da_latent, &cache.v);
    for (g, d) in grads.latent.b.iter_mut().zip(&da_latent) {
        *g += d;
    }
    let mut dv = vec![0.0; params.latent.w.cols()];
    params.latent.w.t_matvec_add(&da_latent, &mut dv);
    let trunk_dim = config.trunk_dim();
    let d_trunk = &dv[..trunk_dim];

    match (&params.trunk, &mut grads.trunk, input) {
        (Trunk::Features { hidden }, Trunk::Features { hidden: ghidden }, _) => {
            let mut da = d_trunk.to_vec();
            for (d, &pre) in da.iter_mut().zip(&cache.feat_pre) {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            }
            ghidden.w.outer_add(&da, &cache.feat_x);
            for (g, d) in ghidden.b.iter_mut().zip(&da) {
                *g += d;
            }
            let _ = hidden;
        }
        (
            Trunk::Sequence { layers },
            Trunk::Sequence { layers: glayers },
            ModelInput::Sequence(_),
        ) => {
            let n_layers = layers.len();
            let units = config.recurrent_units;
            let mut dh_carry: Vec<Vec<f64>> = vec![vec![0.0; units]; n_layers];
            dh_carry[n_layers - 1].copy_from_slice(d_trunk);

            for step in cache.steps.iter().rev() {
                let mut dx_above: Option<Vec<f64>> = None;
                for l in (0..n_layers).rev() {
                    let sc = &step[l];
                    let layer = &layers[l];
                    let glayer = &mut glayers[l];

                    let mut dh = core::mem::take(&mut dh_carry[l]);
                    if let Some(dx) = dx_above.take() {
                        for (a, b) in dh.iter_mut().zip(&dx) {
                            *a += b;
                        }
                    }

                    // h = (1-z) h_prev + z hh
                    let mut dz_pre = vec![0.0; units];
                    let mut da_h = vec![0.0; units];
                    let mut dh_prev = vec![0.0; units];
                    for i in 0..units {
                        let z = sc.z[i];
                        let hh = sc.hh[i];
                        dz_pre[i] = dh[i] * (hh - sc.h_prev[i]) * z * (1.0 - z);
                        da_h[i] = dh[i] * z * (1.0 - hh * hh);
                        dh_prev[i] = dh[i] * (1.0 - z);
                    }

                    // Candidate gate: a_h = Wh x + Uh (r*h_prev) + bh
                    let rh: Vec<f64> = sc
                        .r
                        .iter()
                        .zip(&sc.h_prev)
                        .map(|(r, h)| r * h)
                        .collect();
                    glayer.w_h.outer_add(&da_h, &sc.x);
                    glayer.u_h.outer_add(&da_h, &rh);
                    for (g, d) in glayer.b_h.iter_mut().zip(&da_h) {
                        *g += d;
                    }
                    let mut d_rh = vec![0.0; units];
                    layer.u_h.t_matvec_add(&da_h, &mut d_rh);

                    // Reset gate.
                    let mut dr_pre = vec![0.0; units];
                    for i in 0..units {
                        let r = sc.r[i];
                        dr_pre[i] = d_rh[i] * sc.h_prev[i] * r * (1.0 - r);
                        dh_prev[i] += d_rh[i] * r;
                    }
                    glayer.w_r.outer_add(&dr_pre, &sc.x);
                    glayer.u_r.outer_add(&dr_pre, &sc.h_prev);
                    for (g, d) in glayer.b_r.iter_mut().zip(&dr_pre) {
                        *g += d;
                    }
                    layer.u_r.t_matvec_add(&dr_pre, &mut dh_prev);

                    // Update gate.
                    glayer.w_z.outer_add(&dz_pre, &sc.x);
                    glayer.u_z.outer_add(&dz_pre, &sc.h_prev);
                    for (g, d) in glayer.b_z.iter_mut().zip(&dz_pre) {
                        *g += d;
                    }
                    layer.u_z.t_matvec_add(&dz_pre, &mut dh_prev);

                    // Input gradient feeding the layer below at this step.
                    if l > 0 {
                        let mut dx = vec![0.0; sc.x.len()];
                        layer.w_z.t_matvec_add(&dz_pre, &mut dx);
                        layer.w_r.t_matvec_add(&dr_pre, &mut dx);
                        layer.w_h.t_matvec_add(&da_h, &mut dx);
                        dx_above = Some(dx);
                    }

                    dh_carry[l] = dh_prev;
                }
            }
        }
        _ => unreachable!("trunk/input mismatch is caught in the forward pass"),
    }
}

/// Forward + backward over a batch. Returns `(sum of weighted losses,
/// correct predictions)`; gradient scale is `weight / batch_len` so `grads`
/// ends up holding the gradient of the batch-mean loss.
fn batch_gradients(
    config: &NetworkConfig,
    params: &ParamSet,
    samples: &[&TrainSample],
    class_weights: &[f64],
    grads: &mut ParamSet,
) -> Result<(f64, usize)> {
    let batch_len = samples.len() as f64;
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for sample in samples {
        let input = sample.input.as_ref();
        let mut cache = ForwardCache::default();
        forward_pass(config, params, &input, Some(&mut cache))?;
        let w = class_weights[sample.label_index];
        loss_sum += -w * cache.logp[sample.label_index];
        if argmax(&cache.probs) == sample.label_index {
            correct += 1;
        }
        backward_sample(
            config,
            params,
            &cache,
            &input,
            sample.label_index,
            w / batch_len,
            grads,
        );
    }
    Ok((loss_sum, correct))
}

/// Weighted loss and accuracy without touching gradients.
fn evaluate(
    config: &NetworkConfig,
    params: &ParamSet,
    set: &LabeledSet,
    class_weights: &[f64],
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for sample in &set.samples {
        let mut cache = ForwardCache::default();
        forward_pass(config, params, &sample.input.as_ref(), Some(&mut cache))?;
        loss_sum += -class_weights[sample.label_index] * cache.logp[sample.label_index];
        if argmax(&cache.probs) == sample.label_index {
            correct += 1;
        }
    }
    let n = set.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Train a classifier with class-weighted cross-entropy and Adam.
///
/// Fully deterministic under `config.seed`: initialization and the per-epoch
/// shuffle both come from named substreams of it. Training aborts with
/// [`CoreError::Diverged`] if a batch loss stops being finite.
pub fn train(
    config: &NetworkConfig,
    train_set: &LabeledSet,
    val_set: Option<&LabeledSet>,
) -> Result<EncoderClassifier> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    if train_set.class_order.len() != config.n_classes {
        return Err(CoreError::DimensionMismatch {
            expected: config.n_classes,
            got: train_set.class_order.len(),
        });
    }
    let class_weights = class_weights_from_counts(&train_set.class_counts())?;
    let mut model = EncoderClassifier::new(
        config.clone(),
        train_set.class_order.clone(),
        class_weights.clone(),
    )?;

    let mut adam = AdamState::new(&model.params, config.learning_rate);
    let mut grads = ParamSet::zeros(config);
    let mut last_finite_loss = f64::NAN;

    let n = train_set.len();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut stream = rng::rng_from_seed(substream(config.seed, "encoder-shuffle", epoch as u64));
        rng::shuffle(&mut stream, &mut order);

        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &train_set.samples[i]).collect();
            grads.zero_all();
            let (loss_sum, correct) =
                batch_gradients(config, &model.params, &batch, &class_weights, &mut grads)?;
            let batch_loss = loss_sum / batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(CoreError::Diverged {
                    epoch,
                    batch: batch_index,
                    last_loss: last_finite_loss,
                });
            }
            last_finite_loss = batch_loss;
            adam.step(&mut model.params, &grads);
            // Exploding updates can leave the loss finite (relu and the
            // stable softmax absorb infinities) while the parameters are
            // already ruined; treat that as divergence too.
            if model.params.validate_finite().is_err() {
                return Err(CoreError::Diverged {
                    epoch,
                    batch: batch_index,
                    last_loss: last_finite_loss,
                });
            }
            epoch_loss += loss_sum;
            epoch_correct += correct;
        }

        let (val_loss, val_accuracy) = match val_set {
            Some(vs) if !vs.is_empty() => {
                let (l, a) = evaluate(config, &model.params, vs, &class_weights)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        model.training_log.push(EpochStats {
            epoch,
            train_loss: epoch_loss / n as f64,
            train_accuracy: epoch_correct as f64 / n as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(model)
}

/// Verify the analytic gradients against central finite differences
/// (`h = 1e-5`) on a random subset of at most `n_probes` parameters.
/// Returns the maximum relative error
/// `|g_a - g_f| / max(|g_a|, |g_f|, 1e-8)`.
pub fn gradient_check(
    model: &EncoderClassifier,
    batch: &LabeledSet,
    n_probes: usize,
    seed: u64,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let config = &model.config;
    let class_weights = &model.class_weights;

    let mut params = model.params.clone();
    let mut grads = ParamSet::zeros(config);
    let samples: Vec<&TrainSample> = batch.samples.iter().collect();
    batch_gradients(config, &params, &samples, class_weights, &mut grads)?;

    let loss_of = |params: &ParamSet| -> Result<f64> {
        let mut total = 0.0;
        for s in &samples {
            let mut cache = ForwardCache::default();
            forward_pass(config, params, &s.input.as_ref(), Some(&mut cache))?;
            total += -class_weights[s.label_index] * cache.logp[s.label_index];
        }
        Ok(total / samples.len() as f64)
    };

    // Flat index space across all tensors.
    let sizes: Vec<usize> = params.tensors().iter().map(|(_, _, _, d)| d.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut stream = rng::rng_from_seed(substream(seed, "gradient-check", 0));
    let mut picks: Vec<usize> = if total <= n_probes {
        (0..total).collect()
    } else {
        let mut set = BTreeSet::new();
        while set.len() < n_probes {
            set.insert(stream.gen_range(0..total));
        }
        set.into_iter().collect()
    };
    picks.sort_unstable();

    let mut max_rel = 0.0f64;
    for flat in picks {
        // Locate (tensor, element).
        let mut k = 0;
        let mut offset = flat;
        while offset >= sizes[k] {
            offset -= sizes[k];
            k += 1;
        }
        let analytic = grads.tensors()[k].3[offset];

        let original = params.tensors()[k].3[offset];
        params.tensors_mut()[k].3[offset] = original + H;
        let plus = loss_of(&params)?;
        params.tensors_mut()[k].3[offset] = original - H;
        let minus = loss_of(&params)?;
        params.tensors_mut()[k].3[offset] = original;

        let numeric = (plus - minus) / (2.0 * H);
        let denom = crate::math::abs(analytic)
            .max(crate::math::abs(numeric))
            .max(1e-8);
        let rel = crate::math::abs(analytic - numeric) / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
