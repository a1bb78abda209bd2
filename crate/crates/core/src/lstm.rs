//! Recurrent sequence labeller: stacked LSTM cells and a per-step softmax
//! over the six sides, trained with Adam on per-step cross-entropy.
//!
//! All parameters live in one flat vector so the optimizer and the gradient
//! check treat them uniformly.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{DecisionSequence, SIDE_COUNT};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const INPUTS: usize = 3;
const GATES: usize = 4;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at epoch {epoch} (seed {seed}, lr {learning_rate})")]
    DivergedLoss { epoch: usize, seed: u64, learning_rate: f64, report: Box<TrainReport> },
    #[error("example {0} has {1} labels for {2} inputs")]
    LabelMismatch(usize, usize, usize),
}

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("weights file is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_size: usize,
    pub layer_count: usize,
    /// Inputs are divided by this before entering the network.
    pub input_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub version: u32,
    pub config: NetConfig,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub layer_count: usize,
    pub seed: u64,
    /// Share of examples held out for validation accuracy.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.001,
            hidden_size: 32,
            layer_count: 1,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    /// Three layers of 128, the large preset.
    pub fn large() -> Self {
        Self { hidden_size: 128, layer_count: 3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_size == 0 || self.layer_count == 0 {
            return bad("epochs, batch_size, hidden_size and layer_count must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub z: Vec<Vector3<f64>>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainReport {
    pub config: Option<TrainConfig>,
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub validation_accuracy: Vec<f64>,
    pub train_examples: usize,
    pub validation_examples: usize,
}

/// Offsets of one layer's blocks in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct LayerShape {
    inputs: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    out_w: usize,
    out_b: usize,
    total: usize,
}

impl NetConfig {
    fn layers(&self) -> Vec<LayerShape> {
        let h = self.hidden_size;
        let mut off = 0;
        (0..self.layer_count)
            .map(|l| {
                let inputs = if l == 0 { INPUTS } else { h };
                let w = off;
                let b = w + GATES * h * (inputs + h);
                off = b + GATES * h;
                LayerShape { inputs, w, b }
            })
            .collect()
    }

    fn shape(&self) -> Shape {
        let h = self.hidden_size;
        let layers = self.layers();
        let last = layers.last().expect("at least one layer");
        let out_w = last.b + GATES * h;
        let out_b = out_w + SIDE_COUNT * h;
        Shape { out_w, out_b, total: out_b + SIDE_COUNT }
    }

    pub fn parameter_count(&self) -> usize {
        self.shape().total
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax in place, shifted by the max for stability.
fn softmax(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

fn argmax_low(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-layer activations kept for the backward pass.
struct LayerTrace {
    inputs: Vec<Vec<f64>>,
    /// Gate activations i, f, g, o per step, 4H long.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
}

struct Trace {
    layers: Vec<LayerTrace>,
    probs: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = config.shape();
        let h = config.hidden_size;
        let mut params = vec![0.0; shape.total];
        let bound = 1.0 / (h as f64).sqrt();
        for l in config.layers() {
            for p in &mut params[l.w..l.b] {
                *p = rng.gen_range(-bound..bound);
            }
            for p in &mut params[l.b + h..l.b + 2 * h] {
                *p = 1.0;
            }
        }
        // Small output weights keep the initial softmax near uniform.
        let out_bound = 0.1 * bound;
        for p in &mut params[shape.out_w..shape.out_b] {
            *p = rng.gen_range(-out_bound..out_bound);
        }
        Self { version: WEIGHTS_FORMAT_VERSION, config, params }
    }

    pub fn zeros(config: NetConfig) -> Self {
        let n = config.parameter_count();
        Self { version: WEIGHTS_FORMAT_VERSION, config, params: vec![0.0; n] }
    }

    fn forward(&self, z: &[Vector3<f64>]) -> Trace {
        let h = self.config.hidden_size;
        let shape = self.config.shape();
        let p = &self.params;
        let mut below: Vec<Vec<f64>> = z.iter().map(|v| (v / self.config.input_scale).iter().cloned().collect()).collect();
        let mut layers = Vec::with_capacity(self.config.layer_count);
        for l in self.config.layers() {
            let cols = l.inputs + h;
            let mut tr = LayerTrace { inputs: vec![], gates: vec![], cells: vec![], hidden: vec![] };
            let mut hp = vec![0.0; h];
            let mut cp = vec![0.0; h];
            for x in &below {
                let mut xh = x.clone();
                xh.extend_from_slice(&hp);
                let mut a = p[l.b..l.b + GATES * h].to_vec();
                for (r, ar) in a.iter_mut().enumerate() {
                    let row = &p[l.w + r * cols..l.w + (r + 1) * cols];
                    *ar += row.iter().zip(&xh).map(|(w, v)| w * v).sum::<f64>();
                }
                for j in 0..h {
                    a[j] = sigmoid(a[j]);
                    a[h + j] = sigmoid(a[h + j]);
                    a[2 * h + j] = a[2 * h + j].tanh();
                    a[3 * h + j] = sigmoid(a[3 * h + j]);
                }
                let c: Vec<f64> = (0..h).map(|j| a[h + j] * cp[j] + a[j] * a[2 * h + j]).collect();
                let hn: Vec<f64> = (0..h).map(|j| a[3 * h + j] * c[j].tanh()).collect();
                tr.inputs.push(xh);
                tr.gates.push(a);
                tr.cells.push(c.clone());
                tr.hidden.push(hn.clone());
                hp = hn;
                cp = c;
            }
            below = tr.hidden.clone();
            layers.push(tr);
        }
        let probs = below
            .iter()
            .map(|hv| {
                let mut o: Vec<f64> = (0..SIDE_COUNT)
                    .map(|k| {
                        let row = &p[shape.out_w + k * h..shape.out_w + (k + 1) * h];
                        p[shape.out_b + k] + row.iter().zip(hv).map(|(w, v)| w * v).sum::<f64>()
                    })
                    .collect();
                softmax(&mut o);
                o
            })
            .collect();
        Trace { layers, probs }
    }

    /// Per-step side probabilities.
    pub fn probabilities(&self, z: &[Vector3<f64>]) -> Vec<Vec<f64>> {
        self.forward(z).probs
    }

    pub fn infer(&self, z: &[Vector3<f64>], _delta: f64) -> DecisionSequence {
        DecisionSequence(self.probabilities(z).iter().map(|p| argmax_low(p) as u8 + 1).collect())
    }

    /// Summed cross-entropy of one sequence and, when `grad` is given, its
    /// gradient accumulated into `grad` scaled by `weight`.
    fn sequence_loss(&self, ex: &Example, weight: f64, grad: Option<&mut [f64]>) -> (f64, usize) {
        let tr = self.forward(&ex.z);
        let mut loss = 0.0;
        let mut correct = 0;
        for (pr, &lab) in tr.probs.iter().zip(&ex.labels) {
            loss -= pr[lab as usize - 1].max(1e-300).ln();
            if argmax_low(pr) + 1 == lab as usize {
                correct += 1;
            }
        }
        let Some(g) = grad else {
            return (loss, correct);
        };
        let h = self.config.hidden_size;
        let shape = self.config.shape();
        let p = &self.params;
        let steps = ex.z.len();
        // Output layer.
        let top = tr.layers.last().expect("one layer");
        let mut dh_seq: Vec<Vec<f64>> = vec![vec![0.0; h]; steps];
        for t in 0..steps {
            let mut dlog = tr.probs[t].clone();
            dlog[ex.labels[t] as usize - 1] -= 1.0;
            for (k, d) in dlog.iter().enumerate() {
                let d = d * weight;
                g[shape.out_b + k] += d;
                for j in 0..h {
                    g[shape.out_w + k * h + j] += d * top.hidden[t][j];
                    dh_seq[t][j] += d * p[shape.out_w + k * h + j];
                }
            }
        }
        let layers = self.config.layers();
        for (l, tr_l) in layers.iter().zip(&tr.layers).rev() {
            let cols = l.inputs + h;
            let mut dx_seq = vec![vec![0.0; l.inputs]; steps];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for t in (0..steps).rev() {
                let a = &tr_l.gates[t];
                let c = &tr_l.cells[t];
                let mut da = vec![0.0; GATES * h];
                for j in 0..h {
                    let dh = dh_seq[t][j] + dh_next[j];
                    let (i, f, gg, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                    let tc = c[j].tanh();
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                    let c_prev = if t > 0 { tr_l.cells[t - 1][j] } else { 0.0 };
                    da[j] = dc * gg * i * (1.0 - i);
                    da[h + j] = dc * c_prev * f * (1.0 - f);
                    da[2 * h + j] = dc * i * (1.0 - gg * gg);
                    da[3 * h + j] = dh * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                let xh = &tr_l.inputs[t];
                let mut dxh = vec![0.0; cols];
                for (r, &d) in da.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g[l.b + r] += d;
                    let base = l.w + r * cols;
                    for q in 0..cols {
                        g[base + q] += d * xh[q];
                        dxh[q] += d * p[base + q];
                    }
                }
                dx_seq[t].copy_from_slice(&dxh[..l.inputs]);
                dh_next.copy_from_slice(&dxh[l.inputs..]);
            }
            dh_seq = dx_seq;
        }
        (loss, correct)
    }

    /// Mean per-step cross-entropy over `examples`.
    pub fn loss(&self, examples: &[Example]) -> f64 {
        let steps: usize = examples.iter().map(|e| e.labels.len()).sum();
        examples.iter().map(|e| self.sequence_loss(e, 0.0, None).0).sum::<f64>() / steps as f64
    }

    /// Mean per-step loss and its gradient over the flat parameters.
    pub fn loss_and_gradient(&self, examples: &[Example]) -> (f64, Vec<f64>) {
        let steps: usize = examples.iter().map(|e| e.labels.len()).sum();
        let w = 1.0 / steps as f64;
        let mut g = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for e in examples {
            loss += self.sequence_loss(e, w, Some(&mut g)).0;
        }
        (loss * w, g)
    }

    /// Per-step accuracy against the labels.
    pub fn accuracy(&self, examples: &[Example]) -> f64 {
        let steps: usize = examples.iter().map(|e| e.labels.len()).sum();
        if steps == 0 {
            return 0.0;
        }
        let correct: usize = examples.iter().map(|e| self.sequence_loss(e, 0.0, None).1).sum();
        correct as f64 / steps as f64
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<(), WeightsError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WeightsError> {
        let net: Network = serde_json::from_str(&fs::read_to_string(path)?)?;
        if net.version != WEIGHTS_FORMAT_VERSION {
            return Err(WeightsError::Malformed(format!("unsupported version {}", net.version)));
        }
        if net.config.hidden_size == 0 || net.config.layer_count == 0 || net.params.len() != net.config.parameter_count() {
            return Err(WeightsError::Malformed("parameter count does not match the configuration".into()));
        }
        if !net.is_finite() || !(net.config.input_scale > 0.0) {
            return Err(WeightsError::Malformed("non-finite parameters".into()));
        }
        Ok(net)
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Train a fresh network. The last `validation_fraction` of a seeded shuffle
/// is held out; minibatches are drawn in a seeded order each epoch.
pub fn train(examples: &[Example], config: &TrainConfig, input_scale: f64) -> Result<(Network, TrainReport), TrainError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (i, e) in examples.iter().enumerate() {
        if e.labels.len() != e.z.len() || e.labels.iter().any(|&l| !(1..=SIDE_COUNT as u8).contains(&l)) {
            return Err(TrainError::LabelMismatch(i, e.labels.len(), e.z.len()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let held = ((examples.len() as f64) * config.validation_fraction).floor() as usize;
    let held = held.min(examples.len() - 1);
    let (train_idx, val_idx) = order.split_at(examples.len() - held);
    let train_set: Vec<Example> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let val_set: Vec<Example> = val_idx.iter().map(|&i| examples[i].clone()).collect();

    let net_cfg = NetConfig { hidden_size: config.hidden_size, layer_count: config.layer_count, input_scale };
    let mut net = Network::new(net_cfg, rng.gen());
    let mut adam = Adam::new(net.params.len(), config.learning_rate);
    let mut report = TrainReport {
        config: Some(config.clone()),
        train_examples: train_set.len(),
        validation_examples: val_set.len(),
        ..Default::default()
    };
    let mut idx: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in idx.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, grad) = net.loss_and_gradient(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                report.epoch_loss.push(loss);
                return Err(TrainError::DivergedLoss {
                    epoch,
                    seed: config.seed,
                    learning_rate: config.learning_rate,
                    report: Box::new(report),
                });
            }
            adam.step(&mut net.params, &grad);
            epoch_loss += loss;
            batches += 1;
        }
        report.epoch_loss.push(epoch_loss / batches as f64);
        report.train_accuracy.push(net.accuracy(&train_set));
        if !val_set.is_empty() {
            report.validation_accuracy.push(net.accuracy(&val_set));
        }
        log::debug!("epoch {epoch}: loss {:.4}", report.epoch_loss[epoch]);
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(layers: usize, seed: u64) -> (Network, Vec<Example>) {
        let cfg = NetConfig { hidden_size: 4, layer_count: layers, input_scale: 0.1 };
        let mut net = Network::new(cfg, seed);
        // Larger output weights so every block carries gradient signal.
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for p in net.params.iter_mut() {
            *p += rng.gen_range(-0.3..0.3);
        }
        let ex = (0..2)
            .map(|_| Example {
                z: (0..6).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-0.2..0.2))).collect(),
                labels: (0..6).map(|_| rng.gen_range(1..=6u8)).collect(),
            })
            .collect();
        (net, ex)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for layers in [1, 2] {
            let (net, ex) = tiny(layers, 3);
            let (_, g) = net.loss_and_gradient(&ex);
            let h = 1e-4;
            for i in 0..net.params.len() {
                let mut plus = net.clone();
                plus.params[i] += h;
                let mut minus = net.clone();
                minus.params[i] -= h;
                let fd = (plus.loss(&ex) - minus.loss(&ex)) / (2.0 * h);
                let scale = fd.abs().max(g[i].abs()).max(1e-6);
                assert!((fd - g[i]).abs() / scale <= 1e-3, "layers {layers} param {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn zero_network_picks_lowest_side() {
        let net = Network::zeros(NetConfig { hidden_size: 5, layer_count: 2, input_scale: 0.1 });
        let z = vec![Vector3::new(0.3, -0.1, 0.2); 7];
        assert_eq!(net.infer(&z, 0.1).0, vec![1; 7]);
        for p in net.probabilities(&z) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn initial_loss_is_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex: Vec<Example> = (0..50)
            .map(|_| Example {
                z: (0..41).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0))).collect(),
                labels: (0..41).map(|_| rng.gen_range(1..=6u8)).collect(),
            })
            .collect();
        let net = Network::new(NetConfig { hidden_size: 32, layer_count: 1, input_scale: 0.1 }, 9);
        assert!((net.loss(&ex) - 6f64.ln()).abs() < 0.01);
    }

    #[test]
    fn predictions_do_not_depend_on_other_examples() {
        let (net, ex) = tiny(2, 5);
        let a = net.infer(&ex[0].z, 0.1);
        let _ = net.infer(&ex[1].z, 0.1);
        assert_eq!(a, net.infer(&ex[0].z, 0.1));
    }

    #[test]
    fn weights_round_trip_and_reject_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let (net, _) = tiny(2, 1);
        let path = dir.path().join("w.json");
        net.save(&path).unwrap();
        assert_eq!(Network::load(&path).unwrap(), net);
        let mut bad = net.clone();
        bad.params.pop();
        bad.save(&path).unwrap();
        assert!(matches!(Network::load(&path), Err(WeightsError::Malformed(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let (_, ex) = tiny(1, 2);
        let cfg = TrainConfig { epochs: 3, batch_size: 1, hidden_size: 4, validation_fraction: 0.0, ..Default::default() };
        let (a, ra) = train(&ex, &cfg, 0.1).unwrap();
        let (b, rb) = train(&ex, &cfg, 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn bad_config_and_empty_data_are_rejected() {
        let cfg = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(matches!(train(&[], &cfg, 0.1), Err(TrainError::InvalidConfig(_))));
        assert!(matches!(train(&[], &TrainConfig::default(), 0.1), Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let (_, mut ex) = tiny(1, 2);
        ex[1].z[3].x = f64::NAN;
        let cfg = TrainConfig { epochs: 5, batch_size: 1, hidden_size: 4, validation_fraction: 0.0, seed: 8, ..Default::default() };
        match train(&ex, &cfg, 0.1) {
            Err(TrainError::DivergedLoss { seed, epoch, .. }) => assert_eq!((seed, epoch), (8, 0)),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }
}
