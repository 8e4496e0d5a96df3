//! Dice prediction without ground truth.
//!
//! A (auxiliary map, prediction map) pair is summarised into a fixed-order
//! feature vector; a one-hidden-layer tanh network maps standardized
//! features to a Dice estimate. Training minimises the mean Huber loss with
//! mini-batch Adam and analytic gradients.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::maps::compensated_sum;
use crate::volume::{BinaryMask, GridShape, ProbabilityMap, ScalarVolume};
use crate::{Error, Result};

/// Which auxiliary map accompanies the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Image,
    Uncertainty,
    Error,
}

impl std::str::FromStr for PairKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(PairKind::Image),
            "uncertainty" => Ok(PairKind::Uncertainty),
            "error" => Ok(PairKind::Error),
            other => Err(Error::InvalidArgument(format!("unknown pair kind {other:?}"))),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 8;

pub const FEATURE_NAMES: [&str; 18] = [
    "aux_mean",
    "aux_std",
    "aux_min",
    "aux_max",
    "aux_vs",
    "pred_vs",
    "lesion_voxels",
    "aux_mean_inside",
    "aux_mean_outside",
    "aux_hist_0",
    "aux_hist_1",
    "aux_hist_2",
    "aux_hist_3",
    "aux_hist_4",
    "aux_hist_5",
    "aux_hist_6",
    "aux_hist_7",
    "boundary_voxels",
];

pub const FEATURE_LEN: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: PairKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(kind: PairKind, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature values must be finite".into()));
        }
        Ok(FeatureVector { kind, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Foreground voxels with at least one 6-neighbour outside the mask (grid
/// edges count as outside).
pub fn boundary_voxel_count(mask: &BinaryMask) -> usize {
    let s: GridShape = mask.shape();
    let mut count = 0;
    for z in 0..s.nz {
        for y in 0..s.ny {
            for x in 0..s.nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                let outside = |dx: isize, dy: isize, dz: isize| {
                    let (nx, ny, nz) = (x as isize + dx, y as isize + dy, z as isize + dz);
                    if nx < 0 || ny < 0 || nz < 0 {
                        return true;
                    }
                    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                    nx >= s.nx || ny >= s.ny || nz >= s.nz || !mask.get(nx, ny, nz)
                };
                if outside(-1, 0, 0)
                    || outside(1, 0, 0)
                    || outside(0, -1, 0)
                    || outside(0, 1, 0)
                    || outside(0, 0, -1)
                    || outside(0, 0, 1)
                {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Summarises a map pair into [`FEATURE_NAMES`] order.
pub fn extract_features(aux: &ScalarVolume, pred: &ProbabilityMap, kind: PairKind) -> Result<FeatureVector> {
    aux.ensure_same_shape(pred.shape())?;
    let a = aux.data();
    let n = a.len() as f64;
    let mean = compensated_sum(a.iter().copied()) / n;
    let var = compensated_sum(a.iter().map(|v| (v - mean) * (v - mean))) / n;
    let (min, max) = (aux.min(), aux.max());

    let lesion = crate::volume::binarize(pred, 0.5);
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (&v, &m) in a.iter().zip(lesion.data()) {
        if m {
            inside.push(v);
        } else {
            outside.push(v);
        }
    }
    let mean_of = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            compensated_sum(xs.iter().copied()) / xs.len() as f64
        }
    };

    let mut hist = [0usize; HISTOGRAM_BINS];
    let span = max - min;
    for &v in a {
        let bin = if span > 0.0 {
            (((v - min) / span * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        hist[bin] += 1;
    }

    let mut values = vec![
        mean,
        var.sqrt(),
        min,
        max,
        compensated_sum(a.iter().copied()),
        compensated_sum(pred.data().iter().copied()),
        inside.len() as f64,
        mean_of(&inside),
        mean_of(&outside),
    ];
    values.extend(hist.iter().map(|&c| c as f64 / n));
    values.push(boundary_voxel_count(&lesion) as f64);
    debug_assert_eq!(values.len(), FEATURE_LEN);
    FeatureVector::new(kind, values)
}

/// Huber loss as ½r² inside |r| <= delta and delta|r| - delta/2 outside.
///
/// For delta = 1 this is the textbook Huber loss; for other deltas the two
/// branches do not meet at |r| = delta.
pub fn huber_loss(truth: f64, pred: f64, delta: f64) -> f64 {
    let r = (truth - pred).abs();
    if r <= delta {
        0.5 * r * r
    } else {
        delta * r - 0.5 * delta
    }
}

/// d huber_loss / d pred.
pub fn huber_grad(truth: f64, pred: f64, delta: f64) -> f64 {
    let r = pred - truth;
    if r.abs() <= delta {
        r
    } else {
        delta * r.signum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub delta: f64,
    pub seed: u64,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            batch_size: 8,
            delta: 1.0,
            seed: 0,
            hidden_width: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got {} / {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.delta > 0.0) {
            return bad(format!("huber delta must be > 0, got {}", self.delta));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_width == 0 {
            return bad("epochs, batch size and hidden width must be positive".into());
        }
        Ok(())
    }
}

/// Per-feature z-scoring fitted on a training set. Constant features are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_len: usize,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let input_len = rows.first().map(|r| r.len()).unwrap_or(0);
        let n = rows.len() as f64;
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for j in 0..input_len {
            let m = compensated_sum(rows.iter().map(|r| r[j])) / n;
            let var = compensated_sum(rows.iter().map(|r| (r[j] - m) * (r[j] - m))) / n;
            let s = var.sqrt();
            if s > 1e-12 * (1.0 + m.abs()) {
                kept.push(j);
                mean.push(m);
                std.push(s);
            } else {
                dropped.push(j);
            }
        }
        if kept.is_empty() {
            return Err(Error::Degenerate("every feature is constant over the training set".into()));
        }
        Ok(Standardizer {
            input_len,
            kept,
            dropped,
            mean,
            std,
        })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&j, (m, s))| (row[j] - m) / s)
            .collect()
    }
}

/// tanh hidden layer, linear scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input: usize,
    pub hidden: usize,
    /// Row-major `hidden x input`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Network {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Network {
            input,
            hidden,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights, zero hidden biases, output bias `bias`.
    pub fn init(input: usize, hidden: usize, bias: f64, rng: &mut impl Rng) -> Self {
        let mut net = Network::zeros(input, hidden);
        let a1 = (6.0 / (input + hidden) as f64).sqrt();
        for w in &mut net.w1 {
            *w = rng.gen_range(-a1..a1);
        }
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        for w in &mut net.w2 {
            *w = rng.gen_range(-a2..a2);
        }
        net.b2 = bias;
        net
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + 2 * self.hidden + 1
    }

    /// Flat parameters in order w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter vector length");
        let (w1, rest) = p.split_at(self.hidden * self.input);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, rest) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input..(j + 1) * self.input];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
                z.tanh()
            })
            .collect()
    }

    /// Unclamped output for standardized input `x`.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let h = self.hidden_activations(x);
        h.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2
    }

    /// Mean Huber loss over `(xs, ys)` and its gradient w.r.t. [`Network::params`].
    pub fn objective_and_gradient(&self, xs: &[&[f64]], ys: &[f64], delta: f64) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let mut grad = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        let off_b1 = self.hidden * self.input;
        let off_w2 = off_b1 + self.hidden;
        let off_b2 = off_w2 + self.hidden;
        for (x, &y) in xs.iter().zip(ys) {
            let h = self.hidden_activations(x);
            let out = h.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2;
            loss += huber_loss(y, out, delta);
            let g = huber_grad(y, out, delta) / n;
            grad[off_b2] += g;
            for j in 0..self.hidden {
                grad[off_w2 + j] += g * h[j];
                let dz = g * self.w2[j] * (1.0 - h[j] * h[j]);
                grad[off_b1 + j] += dz;
                let row = &mut grad[j * self.input..(j + 1) * self.input];
                for (gw, &xk) in row.iter_mut().zip(x.iter()) {
                    *gw += dz * xk;
                }
            }
        }
        (loss / n, grad)
    }
}

/// Adam state for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    pub kind: PairKind,
    pub standardizer: Standardizer,
    pub network: Network,
    pub config: TrainConfig,
}

impl RegressorModel {
    pub fn input_len(&self) -> usize {
        self.standardizer.input_len
    }

    /// Unclamped network output.
    pub fn raw_output(&self, f: &FeatureVector) -> Result<f64> {
        if f.len() != self.input_len() {
            return Err(Error::LengthMismatch {
                expected: self.input_len(),
                found: f.len(),
            });
        }
        if f.kind != self.kind {
            return Err(Error::InvalidArgument(format!(
                "model was trained on {:?} pairs, got {:?}",
                self.kind, f.kind
            )));
        }
        Ok(self.network.forward(&self.standardizer.transform(&f.values)))
    }
}

/// Predicted Dice, clamped to [0, 1].
pub fn predict(model: &RegressorModel, f: &FeatureVector) -> Result<f64> {
    Ok(model.raw_output(f)?.clamp(0.0, 1.0))
}

/// Fits a regressor with mini-batch Adam on the mean Huber loss.
///
/// Returns the model and the mean training loss of every epoch. Identical
/// inputs and seed give bit-identical results.
pub fn train_regressor(dataset: &[(FeatureVector, f64)], cfg: &TrainConfig) -> Result<(RegressorModel, Vec<f64>)> {
    cfg.validate()?;
    if dataset.len() < 2 * cfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for batch size {}, got {}",
            2 * cfg.batch_size,
            cfg.batch_size,
            dataset.len()
        )));
    }
    let kind = dataset[0].0.kind;
    let width = dataset[0].0.len();
    for (f, y) in dataset {
        if f.len() != width || f.kind != kind {
            return Err(Error::InvalidArgument("mixed feature layouts in dataset".into()));
        }
        if !(0.0..=1.0).contains(y) {
            return Err(Error::InvalidArgument(format!("target {y} outside [0, 1]")));
        }
    }
    let ys: Vec<f64> = dataset.iter().map(|(_, y)| *y).collect();
    let y_mean = compensated_sum(ys.iter().copied()) / ys.len() as f64;
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(Error::Degenerate("all training targets are equal".into()));
    }

    let raw_rows: Vec<&[f64]> = dataset.iter().map(|(f, _)| f.values.as_slice()).collect();
    let standardizer = Standardizer::fit(&raw_rows)?;
    let xs: Vec<Vec<f64>> = raw_rows.iter().map(|r| standardizer.transform(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut network = Network::init(standardizer.kept.len(), cfg.hidden_width, y_mean, &mut rng);
    let mut params = network.params();
    let mut adam = Adam::new(params.len(), cfg);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            network.set_params(&params);
            let (loss, grad) = network.objective_and_gradient(&bx, &by, cfg.delta);
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut params, &grad);
        }
        history.push(epoch_loss / dataset.len() as f64);
    }
    network.set_params(&params);
    Ok((
        RegressorModel {
            kind,
            standardizer,
            network,
            config: cfg.clone(),
        },
        history,
    ))
}

pub const MODEL_FORMAT: &str = "segqc-dice-regressor";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    pair_kind: PairKind,
    feature_names: Vec<String>,
    standardizer: Standardizer,
    network: Network,
    train_config: TrainConfig,
}

impl RegressorModel {
    pub fn to_json(&self) -> Result<String> {
        let names = if self.input_len() == FEATURE_LEN {
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.input_len()).map(|i| format!("f{i}")).collect()
        };
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            pair_kind: self.kind,
            feature_names: names,
            standardizer: self.standardizer.clone(),
            network: self.network.clone(),
            train_config: self.config.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let st = &doc.standardizer;
        let net = &doc.network;
        let consistent = st.kept.len() == st.mean.len()
            && st.kept.len() == st.std.len()
            && st.kept.iter().chain(&st.dropped).all(|&j| j < st.input_len)
            && st.kept.len() + st.dropped.len() == st.input_len
            && st.std.iter().all(|&s| s > 0.0)
            && net.input == st.kept.len()
            && net.w1.len() == net.hidden * net.input
            && net.b1.len() == net.hidden
            && net.w2.len() == net.hidden
            && doc.feature_names.len() == st.input_len;
        if !consistent {
            return Err(Error::Parse("model document has inconsistent shapes".into()));
        }
        Ok(RegressorModel {
            kind: doc.pair_kind,
            standardizer: doc.standardizer,
            network: doc.network,
            config: doc.train_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
