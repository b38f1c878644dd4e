//! Fully connected tanh network with a softmax output, trained with Adam on
//! softmax cross-entropy plus an L2 penalty on the weights.
//!
//! The penalty follows the common `lambda / (2 n) * sum(W^2)` convention with
//! `n` the mini-batch size. Inputs are z-scored with statistics of the
//! training set, which are stored in the model.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BodyLabel, Classifier, N_CLASSES};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, N_INPUTS};

const FORMAT_TAG: &str = "contactiso-fnn";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub layers: Vec<Layer>,
    pub mean: [f64; N_INPUTS],
    pub std: [f64; N_INPUTS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    pub n_hl: usize,
    pub n_neu: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Share of the training data held out for early stopping; 0 monitors the training loss.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lambda: 0.0,
            batch_size: 128,
            max_epochs: 2000,
            patience: 50,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.step_size > 0.0) {
            return bad("step size must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("L2 factor must be non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch budget must be positive");
        }
        if !(0.0..0.9).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 0.9)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

fn sizes(arch: Arch) -> Vec<usize> {
    let mut s = vec![N_INPUTS];
    s.extend(std::iter::repeat(arch.n_neu).take(arch.n_hl));
    s.push(N_CLASSES);
    s
}

fn softmax_rows(z: &mut DMatrix<f64>) {
    for mut row in z.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

impl FnnModel {
    /// Network with all weights and biases zero and identity normalization.
    pub fn zeros(arch: Arch) -> Self {
        let s = sizes(arch);
        FnnModel {
            layers: s
                .windows(2)
                .map(|w| Layer {
                    w: DMatrix::zeros(w[1], w[0]),
                    b: DVector::zeros(w[1]),
                })
                .collect(),
            mean: [0.0; N_INPUTS],
            std: [1.0; N_INPUTS],
        }
    }

    fn glorot(arch: Arch, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(arch);
        for l in &mut m.layers {
            let a = (6.0 / (l.w.nrows() + l.w.ncols()) as f64).sqrt();
            l.w = DMatrix::from_fn(l.w.nrows(), l.w.ncols(), |_, _| rng.random_range(-a..a));
        }
        m
    }

    pub fn arch(&self) -> Arch {
        Arch {
            n_hl: self.layers.len() - 1,
            n_neu: if self.layers.len() > 1 { self.layers[0].w.nrows() } else { 0 },
        }
    }

    fn normalize(&self, x: &[f64]) -> impl Iterator<Item = f64> + '_ {
        x.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| (v - m) / s)
            .collect::<Vec<_>>()
            .into_iter()
    }

    fn batch(&self, xs: &[[f64; N_INPUTS]], idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_row_iterator(idx.len(), N_INPUTS, idx.iter().flat_map(|&i| self.normalize(&xs[i])))
    }

    /// Activations of every layer for a normalized batch; the last entry holds
    /// the class probabilities.
    fn activations(&self, x: DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = acts.last().unwrap() * l.w.transpose();
            for mut row in z.row_iter_mut() {
                row += l.b.transpose();
            }
            if k == last {
                softmax_rows(&mut z);
            } else {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_proba(&self, input: &[f64]) -> Result<[f64; N_CLASSES]> {
        if input.len() != N_INPUTS {
            return Err(Error::DimensionMismatch {
                expected: N_INPUTS,
                got: input.len(),
            });
        }
        let x = DMatrix::from_row_iterator(1, N_INPUTS, self.normalize(input));
        let p = self.activations(x).pop().unwrap();
        Ok(std::array::from_fn(|j| p[(0, j)]))
    }

    pub fn predict(&self, input: &[f64]) -> Result<BodyLabel> {
        let p = self.predict_proba(input)?;
        Ok(argmax_label(&p))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{FORMAT_TAG} {FORMAT_VERSION}\nlayers");
        for l in &self.layers {
            write!(s, " {}", l.w.ncols()).unwrap();
        }
        writeln!(s, " {}", self.layers.last().unwrap().w.nrows()).unwrap();
        let line = |s: &mut String, tag: &str, v: &mut dyn Iterator<Item = f64>| {
            s.push_str(tag);
            for x in v {
                write!(s, " {x:?}").unwrap();
            }
            s.push('\n');
        };
        line(&mut s, "mean", &mut self.mean.iter().copied());
        line(&mut s, "std", &mut self.std.iter().copied());
        for l in &self.layers {
            line(&mut s, "w", &mut l.w.transpose().iter().copied());
            line(&mut s, "b", &mut l.b.iter().copied());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |m: String| Error::Parse(format!("network file: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |tag: &str| -> Result<Vec<String>> {
            let l = lines.next().ok_or_else(|| perr(format!("missing {tag} line")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(tag) {
                return Err(perr(format!("expected {tag} line, got {l:?}")));
            }
            Ok(it.map(str::to_string).collect())
        };
        let head = next(FORMAT_TAG)?;
        if head.first().map(String::as_str) != Some(&FORMAT_VERSION.to_string()) {
            return Err(perr(format!("unsupported version {head:?}")));
        }
        let nums = |v: Vec<String>| -> Result<Vec<f64>> {
            v.iter().map(|t| t.parse::<f64>().map_err(|e| perr(format!("{t:?}: {e}")))).collect()
        };
        let dims: Vec<usize> = next("layers")?
            .iter()
            .map(|t| t.parse::<usize>().map_err(|e| perr(e.to_string())))
            .collect::<Result<_>>()?;
        if dims.len() < 2 || dims[0] != N_INPUTS || *dims.last().unwrap() != N_CLASSES {
            return Err(perr(format!("layer sizes {dims:?} do not map {N_INPUTS} inputs to {N_CLASSES} classes")));
        }
        let fixed = |v: Vec<f64>| -> Result<[f64; N_INPUTS]> {
            let n = v.len();
            v.try_into().map_err(|_| Error::DimensionMismatch {
                expected: N_INPUTS,
                got: n,
            })
        };
        let mean = fixed(nums(next("mean")?)?)?;
        let std = fixed(nums(next("std")?)?)?;
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let wv = nums(next("w")?)?;
            let bv = nums(next("b")?)?;
            if wv.len() != w[0] * w[1] || bv.len() != w[1] {
                return Err(Error::DimensionMismatch {
                    expected: w[0] * w[1] + w[1],
                    got: wv.len() + bv.len(),
                });
            }
            layers.push(Layer {
                w: DMatrix::from_row_slice(w[1], w[0], &wv),
                b: DVector::from_vec(bv),
            });
        }
        let m = FnnModel { layers, mean, std };
        if !m.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite())) {
            return Err(perr("non-finite parameter".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn argmax_label(p: &[f64; N_CLASSES]) -> BodyLabel {
    let mut best = 0;
    for j in 1..N_CLASSES {
        if p[j] > p[best] {
            best = j;
        }
    }
    BodyLabel::from_index(best).unwrap()
}

pub fn fnn_forward(model: &FnnModel, fv: &FeatureVector) -> [f64; N_CLASSES] {
    model.predict_proba(&fv.inputs()).expect("feature vector has the network input size")
}

impl Classifier for FnnModel {
    fn classify(&self, fv: &FeatureVector) -> BodyLabel {
        argmax_label(&fnn_forward(self, fv))
    }
}

struct Adam {
    m: Vec<(DMatrix<f64>, DVector<f64>)>,
    v: Vec<(DMatrix<f64>, DVector<f64>)>,
    t: i32,
}

impl Adam {
    fn new(model: &FnnModel) -> Self {
        let z: Vec<_> = model
            .layers
            .iter()
            .map(|l| (DMatrix::zeros(l.w.nrows(), l.w.ncols()), DVector::zeros(l.b.len())))
            .collect();
        Adam {
            m: z.clone(),
            v: z,
            t: 0,
        }
    }

    fn update(&mut self, model: &mut FnnModel, grads: &[(DMatrix<f64>, DVector<f64>)], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let lr = cfg.step_size;
        let step = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
        };
        for (k, l) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[k];
            for (((p, m), v), g) in l.w.iter_mut().zip(self.m[k].0.iter_mut()).zip(self.v[k].0.iter_mut()).zip(gw.iter()) {
                step(p, m, v, *g);
            }
            for (((p, m), v), g) in l.b.iter_mut().zip(self.m[k].1.iter_mut()).zip(self.v[k].1.iter_mut()).zip(gb.iter()) {
                step(p, m, v, *g);
            }
        }
    }
}

fn one_hot(ys: &[BodyLabel], idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), N_CLASSES, |r, c| if ys[idx[r]].index() == c { 1.0 } else { 0.0 })
}

fn cross_entropy(p: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    -p.zip_map(y, |p, y| if y > 0.0 { p.max(1e-300).ln() } else { 0.0 }).sum() / p.nrows() as f64
}

fn weight_penalty(model: &FnnModel, lambda: f64, n: usize) -> f64 {
    lambda / (2.0 * n as f64) * model.layers.iter().map(|l| l.w.norm_squared()).sum::<f64>()
}

/// Mean loss (cross-entropy plus penalty) and accuracy over a subset.
fn score(model: &FnnModel, xs: &[[f64; N_INPUTS]], ys: &[BodyLabel], idx: &[usize], lambda: f64, batch: usize) -> (f64, f64) {
    if idx.is_empty() {
        return (0.0, 0.0);
    }
    let p = model.activations(model.batch(xs, idx)).pop().unwrap();
    let y = one_hot(ys, idx);
    let correct = (0..idx.len())
        .filter(|&r| {
            let row: [f64; N_CLASSES] = std::array::from_fn(|c| p[(r, c)]);
            argmax_label(&row) == ys[idx[r]]
        })
        .count();
    (
        cross_entropy(&p, &y) + weight_penalty(model, lambda, batch.min(idx.len())),
        correct as f64 / idx.len() as f64,
    )
}

fn gradients(model: &FnnModel, x: DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> (f64, Vec<(DMatrix<f64>, DVector<f64>)>) {
    let n = x.nrows();
    let acts = model.activations(x);
    let p = acts.last().unwrap();
    let loss = cross_entropy(p, y) + weight_penalty(model, lambda, n);
    let mut delta = (p - y) / n as f64;
    let mut grads = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); model.layers.len()];
    for k in (0..model.layers.len()).rev() {
        let a_prev = &acts[k];
        let gw = delta.transpose() * a_prev + &model.layers[k].w * (lambda / n as f64);
        let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
        if k > 0 {
            let back = &delta * &model.layers[k].w;
            delta = back.zip_map(a_prev, |d, a| d * (1.0 - a * a));
        }
        grads[k] = (gw, gb);
    }
    (loss, grads)
}

/// Deterministic given `cfg.seed`. Every class must be present.
pub fn fnn_train(
    xs: &[[f64; N_INPUTS]],
    ys: &[BodyLabel],
    cfg: &TrainConfig,
    arch: Arch,
) -> Result<(FnnModel, TrainReport)> {
    cfg.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if arch.n_neu == 0 && arch.n_hl > 0 {
        return Err(Error::InvalidArgument("hidden layers need at least one neuron".into()));
    }
    for b in BodyLabel::ALL {
        if !ys.contains(&b) {
            return Err(Error::EmptyClass(b.name().into()));
        }
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite training features".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (xs.len() as f64 * cfg.validation_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut model = FnnModel::glorot(arch, &mut rng);
    let n = train_idx.len() as f64;
    for k in 0..N_INPUTS {
        let mean = train_idx.iter().map(|&i| xs[i][k]).sum::<f64>() / n;
        let var = train_idx.iter().map(|&i| (xs[i][k] - mean).powi(2)).sum::<f64>() / n;
        model.mean[k] = mean;
        model.std[k] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }

    let monitor: Vec<usize> = if val_idx.is_empty() { train_idx.clone() } else { val_idx.to_vec() };
    let mut adam = Adam::new(&model);
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut epochs = 0;
    for epoch in 0..cfg.max_epochs {
        epochs = epoch + 1;
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (loss, grads) = gradients(&model, model.batch(xs, chunk), &one_hot(ys, chunk), cfg.lambda);
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, loss });
            }
            adam.update(&mut model, &grads, cfg);
        }
        let (loss, _) = score(&model, xs, ys, &monitor, cfg.lambda, cfg.batch_size);
        if !loss.is_finite() {
            return Err(Error::NanLoss { epoch, loss });
        }
        if loss < best.0 - 1e-12 {
            best = (loss, model.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
    }
    let model = best.1;
    let (train_loss, train_accuracy) = score(&model, xs, ys, &train_idx, cfg.lambda, cfg.batch_size);
    log::debug!("fnn {arch:?} lambda {}: {epochs} epochs, best {}, acc {train_accuracy:.4}", cfg.lambda, best.2);
    Ok((
        model,
        TrainReport {
            epochs,
            best_epoch: best.2,
            train_loss,
            train_accuracy,
        },
    ))
}
