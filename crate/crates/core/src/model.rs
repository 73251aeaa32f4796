//! Flat-parameter softmax classifiers (logistic regression and a one-hidden-
//! layer ReLU MLP) with minibatch SGD local training.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::params::{check_dim, ParameterVector};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LogisticRegression,
    OneHiddenLayerMlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub hidden_units: usize,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            input_dim,
            num_classes,
            hidden_units: 0,
        }
    }

    pub fn mlp(input_dim: usize, hidden_units: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::OneHiddenLayerMlp,
            input_dim,
            num_classes,
            hidden_units,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(invalid("model.input_dim", "must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(invalid("model.num_classes", "must be >= 2"));
        }
        if self.kind == ModelKind::OneHiddenLayerMlp && self.hidden_units == 0 {
            return Err(invalid("model.hidden_units", "must be >= 1 for an MLP"));
        }
        Ok(())
    }

    /// Parameter dimension d.
    pub fn dim(&self) -> usize {
        let (i, k, h) = (self.input_dim, self.num_classes, self.hidden_units);
        match self.kind {
            ModelKind::LogisticRegression => i * k + k,
            ModelKind::OneHiddenLayerMlp => h * i + h + k * h + k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(invalid("train.local_epochs", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("train.learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(invalid("train.batch_size", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("train.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid("train.weight_decay", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Benign,
    Compromised,
    Fake,
}

/// One client's submission for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub role: Role,
    pub delta: ParameterVector,
}

impl ClientUpdate {
    pub fn new(client_id: usize, role: Role, delta: ParameterVector) -> Self {
        Self { client_id, role, delta }
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ParameterVector> {
    spec.validate()?;
    let mut rng = rng_from(seed);
    let mut draw = |n: usize, fan_in: usize, out: &mut Vec<f64>| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        out.extend((0..n).map(|_| rng.random_range(-bound..bound)));
    };
    let mut values = Vec::with_capacity(spec.dim());
    let (i, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_units);
    match spec.kind {
        ModelKind::LogisticRegression => draw(i * k + k, i, &mut values),
        ModelKind::OneHiddenLayerMlp => {
            draw(h * i + h, i, &mut values);
            draw(k * h + k, h, &mut values);
        }
    }
    Ok(ParameterVector::new(values))
}

/// Scratch space for one forward/backward pass.
struct Workspace {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    grad_hidden: Vec<f64>,
}

impl Workspace {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            hidden_pre: vec![0.0; spec.hidden_units],
            hidden: vec![0.0; spec.hidden_units],
            logits: vec![0.0; spec.num_classes],
            probs: vec![0.0; spec.num_classes],
            grad_hidden: vec![0.0; spec.hidden_units],
        }
    }
}

fn affine(weights: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let width = x.len();
    for (o, (row, b)) in out.iter_mut().zip(weights.chunks_exact(width).zip(bias)) {
        *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

/// Computes logits into `ws.logits`.
fn forward(spec: &ModelSpec, params: &[f64], x: &[f64], ws: &mut Workspace) {
    let (i, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_units);
    match spec.kind {
        ModelKind::LogisticRegression => {
            affine(&params[..i * k], &params[i * k..], x, &mut ws.logits);
        }
        ModelKind::OneHiddenLayerMlp => {
            let (w1, rest) = params.split_at(h * i);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(k * h);
            affine(w1, b1, x, &mut ws.hidden_pre);
            for (a, z) in ws.hidden.iter_mut().zip(&ws.hidden_pre) {
                *a = z.max(0.0);
            }
            affine(w2, b2, &ws.hidden, &mut ws.logits);
        }
    }
}

/// Softmax into `probs`; returns the cross-entropy of `label`.
fn softmax_xent(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    max + sum.ln() - logits[label]
}

/// Adds `scale * d loss / d params` for one sample into `grad`; returns the loss.
fn accumulate_gradient(
    spec: &ModelSpec,
    params: &[f64],
    x: &[f64],
    label: usize,
    scale: f64,
    grad: &mut [f64],
    ws: &mut Workspace,
) -> f64 {
    forward(spec, params, x, ws);
    let loss = softmax_xent(&ws.logits, label, &mut ws.probs);
    ws.probs[label] -= 1.0;
    let (i, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_units);
    match spec.kind {
        ModelKind::LogisticRegression => {
            let (gw, gb) = grad.split_at_mut(i * k);
            for (c, g) in ws.probs.iter().enumerate() {
                let g = g * scale;
                gb[c] += g;
                for (w, v) in gw[c * i..(c + 1) * i].iter_mut().zip(x) {
                    *w += g * v;
                }
            }
        }
        ModelKind::OneHiddenLayerMlp => {
            let w2 = &params[h * i + h..h * i + h + k * h];
            let (g1, g2) = grad.split_at_mut(h * i + h);
            let (gw1, gb1) = g1.split_at_mut(h * i);
            let (gw2, gb2) = g2.split_at_mut(k * h);
            ws.grad_hidden.iter_mut().for_each(|g| *g = 0.0);
            for (c, g) in ws.probs.iter().enumerate() {
                let g = g * scale;
                gb2[c] += g;
                let row = &w2[c * h..(c + 1) * h];
                for u in 0..h {
                    gw2[c * h + u] += g * ws.hidden[u];
                    ws.grad_hidden[u] += g * row[u];
                }
            }
            for u in 0..h {
                if ws.hidden_pre[u] <= 0.0 {
                    continue;
                }
                let g = ws.grad_hidden[u];
                gb1[u] += g;
                for (w, v) in gw1[u * i..(u + 1) * i].iter_mut().zip(x) {
                    *w += g * v;
                }
            }
        }
    }
    loss
}

/// Mean cross-entropy over `indices` and its gradient (no weight decay).
pub fn batch_gradient(
    spec: &ModelSpec,
    params: &ParameterVector,
    data: &LabeledDataset,
    indices: &[usize],
) -> Result<(f64, ParameterVector)> {
    check_dim(spec.dim(), params.dim())?;
    check_dim(spec.input_dim, data.input_dim())?;
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ws = Workspace::new(spec);
    let mut grad = vec![0.0; spec.dim()];
    let scale = 1.0 / indices.len() as f64;
    let mut loss = 0.0;
    for &s in indices {
        loss += accumulate_gradient(
            spec,
            params.as_slice(),
            data.row(s),
            data.label(s),
            scale,
            &mut grad,
            &mut ws,
        );
    }
    Ok((loss * scale, ParameterVector::new(grad)))
}

/// Mean cross-entropy loss and top-1 accuracy. Ties in the argmax go to the
/// lowest class index.
pub fn evaluate(spec: &ModelSpec, params: &ParameterVector, data: &LabeledDataset) -> Result<(f64, f64)> {
    check_dim(spec.dim(), params.dim())?;
    check_dim(spec.input_dim, data.input_dim())?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ws = Workspace::new(spec);
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in 0..data.len() {
        forward(spec, params.as_slice(), data.row(s), &mut ws);
        loss += softmax_xent(&ws.logits, data.label(s), &mut ws.probs);
        let mut best = 0;
        for (c, z) in ws.logits.iter().enumerate() {
            if *z > ws.logits[best] {
                best = c;
            }
        }
        if best == data.label(s) {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Stateful local optimizer: heavy-ball momentum SGD with L2 weight decay
/// folded into the gradient. Momentum and shuffling state persist across
/// epochs.
pub struct LocalTrainer<'a> {
    spec: &'a ModelSpec,
    cfg: &'a TrainConfig,
    start: ParameterVector,
    params: Vec<f64>,
    velocity: Vec<f64>,
    rng: ChaCha8Rng,
    ws: Workspace,
    grad: Vec<f64>,
}

impl<'a> LocalTrainer<'a> {
    pub fn new(spec: &'a ModelSpec, cfg: &'a TrainConfig, global: &ParameterVector, seed: u64) -> Result<Self> {
        check_dim(spec.dim(), global.dim())?;
        Ok(Self {
            spec,
            cfg,
            start: global.clone(),
            params: global.as_slice().to_vec(),
            velocity: vec![0.0; spec.dim()],
            rng: rng_from(seed),
            ws: Workspace::new(spec),
            grad: vec![0.0; spec.dim()],
        })
    }

    pub fn epoch(&mut self, data: &LabeledDataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_dim(self.spec.input_dim, data.input_dim())?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        for batch in order.chunks(self.cfg.batch_size) {
            self.grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &s in batch {
                accumulate_gradient(
                    self.spec,
                    &self.params,
                    data.row(s),
                    data.label(s),
                    scale,
                    &mut self.grad,
                    &mut self.ws,
                );
            }
            let (lr, mu, wd) = (self.cfg.learning_rate, self.cfg.momentum, self.cfg.weight_decay);
            for ((p, v), g) in self.params.iter_mut().zip(&mut self.velocity).zip(&self.grad) {
                let g = g + wd * *p;
                *v = mu * *v + g;
                *p -= lr * *v;
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Delta from the starting model.
    pub fn delta(&self) -> ParameterVector {
        ParameterVector::new(
            self.params
                .iter()
                .zip(self.start.as_slice())
                .map(|(p, s)| p - s)
                .collect(),
        )
    }
}

/// Runs `local_epochs` of SGD from `global` and returns θ_local − global.
pub fn local_train(
    spec: &ModelSpec,
    global: &ParameterVector,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ParameterVector> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut trainer = LocalTrainer::new(spec, cfg, global, seed)?;
    for _ in 0..cfg.local_epochs {
        trainer.epoch(data)?;
    }
    Ok(trainer.delta())
}
