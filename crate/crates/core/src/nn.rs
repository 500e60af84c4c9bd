//! Feedforward classifier: three ReLU hidden layers of 32 units and a
//! two-way softmax head, trained on mean cross-entropy with Adam.
//!
//! Weight decay is coupled: `λ·w` is added to the gradient of every
//! parameter before the Adam moment updates, which is the L2-penalty form.
//! Layer weights are stored `inputs × outputs`, so a batch forward pass is
//! `X · W + b`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::pipeline::{split_indices, EncodedDataset, SplitSpec, NUM_FEATURES};
use crate::seed::{self, Stream};

pub const HIDDEN: [usize; 3] = [32, 32, 32];
pub const CLASSES: usize = 2;

/// Layer widths of the default network, input first.
pub const ARCHITECTURE: [usize; 5] = [NUM_FEATURES, HIDDEN[0], HIDDEN[1], HIDDEN[2], CLASSES];

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("training set needs both classes and at least a few rows per class: {0}")]
    DegenerateTrainingSet(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs × outputs`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }
}

/// Network weights. Gradients and Adam moments reuse this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    pub fn zeros(widths: &[usize]) -> MlpParams {
        assert!(
            widths.len() >= 2,
            "need at least an input and an output width"
        );
        MlpParams {
            layers: widths
                .windows(2)
                .map(|w| Dense {
                    weights: Matrix::zeros(w[0], w[1]),
                    bias: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams::zeros(&self.widths())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(<[f64]>::len).sum()
    }

    /// Weight and bias buffers, layer by layer.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Half-width of the uniform initializer for a layer with `fan_in` inputs
/// (He/Kaiming uniform).
pub fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Default-architecture weights drawn from `U(−b, b)` with `b = √(6/fan_in)`
/// and zero biases.
pub fn init_params(seed: u64) -> MlpParams {
    init_params_for(&ARCHITECTURE, seed)
}

pub fn init_params_for(widths: &[usize], seed: u64) -> MlpParams {
    let mut rng = seed::rng(seed, Stream::Init);
    let mut p = MlpParams::zeros(widths);
    for layer in &mut p.layers {
        let b = init_bound(layer.inputs());
        for w in layer.weights.as_mut_slice() {
            *w = rng.gen_range(-b..=b);
        }
    }
    p
}

/// Intermediate activations kept for backpropagation: `inputs[l]` is the
/// input to layer `l`.
struct ForwardPass {
    inputs: Vec<Matrix>,
    probabilities: Matrix,
}

fn check_batch(p: &MlpParams, batch: &Matrix) -> Result<(), NnError> {
    if batch.cols() != p.input_dim() {
        return Err(NnError::ShapeMismatch(format!(
            "batch has {} columns, network expects {}",
            batch.cols(),
            p.input_dim()
        )));
    }
    Ok(())
}

/// In-place row softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &mut Matrix) {
    for r in 0..logits.rows() {
        let row = logits.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

fn forward_pass(p: &MlpParams, batch: &Matrix) -> Result<ForwardPass, NnError> {
    check_batch(p, batch)?;
    let last = p.layers.len() - 1;
    let mut inputs = Vec::with_capacity(p.layers.len());
    let mut current = batch.clone();
    for (l, layer) in p.layers.iter().enumerate() {
        let mut z = current.matmul(&layer.weights);
        z.add_row_vector(&layer.bias);
        if !z.is_finite() {
            return Err(NnError::NonFiniteActivation { layer: l });
        }
        inputs.push(current);
        if l < last {
            for x in z.as_mut_slice() {
                *x = x.max(0.0);
            }
        }
        current = z;
    }
    softmax_rows(&mut current);
    Ok(ForwardPass {
        inputs,
        probabilities: current,
    })
}

/// Class probabilities, one row per input row.
pub fn forward(p: &MlpParams, batch: &Matrix) -> Result<Matrix, NnError> {
    forward_pass(p, batch).map(|f| f.probabilities)
}

fn check_labels(rows: usize, labels: &[u8]) -> Result<(), NnError> {
    if rows != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{rows} rows but {} labels",
            labels.len()
        )));
    }
    if rows == 0 {
        return Err(NnError::ShapeMismatch("empty batch".into()));
    }
    if let Some(bad) = labels.iter().find(|&&y| usize::from(y) >= CLASSES) {
        return Err(NnError::ShapeMismatch(format!(
            "label {bad} is not a class index"
        )));
    }
    Ok(())
}

/// Mean cross-entropy `−mean log p[y]`, with `p` floored at [`LOG_FLOOR`].
pub fn loss(probabilities: &Matrix, labels: &[u8]) -> Result<f64, NnError> {
    check_labels(probabilities.rows(), labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -probabilities.get(r, usize::from(y)).max(LOG_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Loss and exact gradients of mean cross-entropy w.r.t. every parameter.
pub fn loss_and_gradients(
    p: &MlpParams,
    batch: &Matrix,
    labels: &[u8],
) -> Result<(f64, MlpParams), NnError> {
    check_labels(batch.rows(), labels)?;
    let pass = forward_pass(p, batch)?;
    let value = loss(&pass.probabilities, labels)?;
    let n = batch.rows() as f64;

    // d(mean CE)/d(logits) = (softmax − onehot) / n
    let mut delta = pass.probabilities;
    for (r, &y) in labels.iter().enumerate() {
        let row = delta.row_mut(r);
        row[usize::from(y)] -= 1.0;
        for x in row.iter_mut() {
            *x /= n;
        }
    }

    let mut grads = p.zeros_like();
    for l in (0..p.layers.len()).rev() {
        let input = &pass.inputs[l];
        grads.layers[l].weights = input.t_matmul(&delta);
        grads.layers[l].bias = delta.sum_rows();
        if l > 0 {
            let mut back = delta.matmul_t(&p.layers[l].weights);
            // inputs[l] = relu(z_{l-1}); the derivative is 1 where it is positive
            for (d, &a) in back.as_mut_slice().iter_mut().zip(input.as_slice()) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = back;
        }
    }
    Ok((value, grads))
}

pub fn backward(p: &MlpParams, batch: &Matrix, labels: &[u8]) -> Result<MlpParams, NnError> {
    loss_and_gradients(p, batch, labels).map(|(_, g)| g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Share of the training rows held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.max_epochs == 0 {
            return bad("max_epochs is 0: nothing to train".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.epsilon > 0.0 && self.weight_decay >= 0.0) {
            return bad("epsilon must be positive and weight decay non-negative".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("batch size and patience must be at least 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation fraction {} not in (0, 1)",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(p: &MlpParams) -> AdamState {
        AdamState {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update over a flat buffer. `t` is the step
/// number after incrementing (≥ 1).
pub fn adam_update(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &TrainConfig,
) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..w.len() {
        let gi = g[i] + cfg.weight_decay * w[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

pub fn adam_step(p: &mut MlpParams, grads: &MlpParams, state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t;
    let tensors = p
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().zip(state.v.tensors_mut()));
    for ((w, g), (m, v)) in tensors {
        adam_update(w, g, m, v, t, cfg);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// 1-based epoch after which training ended.
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        for (i, ((t, v), a)) in self
            .train_loss
            .iter()
            .zip(&self.val_loss)
            .zip(&self.val_accuracy)
            .enumerate()
        {
            out.push_str(&format!("{},{t},{v},{a}\n", i + 1));
        }
        out
    }
}

/// Patience-based stopping on a monitored loss; only strict improvements
/// reset the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, monitored: f64) -> Verdict {
        if monitored < self.best {
            self.best = monitored;
            self.best_epoch = epoch;
            self.stale = 0;
            Verdict::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

fn accuracy(probabilities: &Matrix, labels: &[u8]) -> f64 {
    let hits = argmax_rows(probabilities)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Holds out a stratified validation slice, then trains with early stopping.
pub fn train(
    data: &EncodedDataset,
    cfg: &TrainConfig,
) -> Result<(MlpParams, TrainHistory), NnError> {
    cfg.validate()?;
    for class in 0..CLASSES as u8 {
        if !data.labels.contains(&class) {
            return Err(NnError::DegenerateTrainingSet(format!(
                "class {class} is absent"
            )));
        }
    }
    let spec = SplitSpec {
        test_fraction: cfg.validation_fraction,
        seed: seed::derive(cfg.seed, Stream::Validation),
        stratified: true,
    };
    let split = split_indices(&data.labels, &spec)
        .map_err(|e| NnError::DegenerateTrainingSet(e.to_string()))?;
    train_with_validation(&data.select(&split.train), &data.select(&split.test), cfg)
}

/// Trains on `fit` and monitors loss on `validation`; returns the parameters
/// from the epoch with the lowest validation loss.
pub fn train_with_validation(
    fit: &EncodedDataset,
    validation: &EncodedDataset,
    cfg: &TrainConfig,
) -> Result<(MlpParams, TrainHistory), NnError> {
    cfg.validate()?;
    if fit.is_empty() || validation.is_empty() {
        return Err(NnError::DegenerateTrainingSet(
            "empty fit or validation set".into(),
        ));
    }
    let mut widths = ARCHITECTURE;
    widths[0] = fit.features.cols();
    let mut params = init_params_for(&widths, cfg.seed);
    let mut state = AdamState::new(&params);
    let mut shuffle_rng = seed::rng(cfg.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.max_epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch = fit.features.select_rows(chunk);
            let labels: Vec<u8> = chunk.iter().map(|&i| fit.labels[i]).collect();
            let grads = backward(&params, &batch, &labels)?;
            adam_step(&mut params, &grads, &mut state, cfg);
        }
        let train_loss = loss(&forward(&params, &fit.features)?, &fit.labels)?;
        let val_probs = forward(&params, &validation.features)?;
        let val_loss = loss(&val_probs, &validation.labels)?;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history
            .val_accuracy
            .push(accuracy(&val_probs, &validation.labels));
        history.stopped_epoch = epoch;

        match stopper.observe(epoch, val_loss) {
            Verdict::Improved => best.clone_from(&params),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok((best, history))
}

/// Ties resolve to class 0.
fn argmax_rows(probabilities: &Matrix) -> Vec<u8> {
    probabilities
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

pub fn predict_proba(p: &MlpParams, features: &Matrix) -> Result<Matrix, NnError> {
    forward(p, features)
}

pub fn predict(p: &MlpParams, features: &Matrix) -> Result<Vec<u8>, NnError> {
    forward(p, features).map(|probs| argmax_rows(&probs))
}
