//! Stratified k-fold cross-validation and the architecture/penalty grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fnn::{fnn_train, Arch, TrainConfig};
use super::{BodyLabel, N_CLASSES};
use crate::error::{Error, Result};
use crate::features::N_INPUTS;

/// Fold index for every sample. Each class is shuffled and dealt round-robin,
/// so every fold sees every class once a class has at least `k` samples.
pub fn stratified_folds(ys: &[BodyLabel], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; ys.len()];
    for b in BodyLabel::ALL {
        let mut idx: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == b).collect();
        if idx.len() < k {
            return Err(Error::EmptyClass(format!("{b} has {} samples for {k} folds", idx.len())));
        }
        idx.shuffle(&mut rng);
        for (n, i) in idx.into_iter().enumerate() {
            fold[i] = n % k;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n_hl: Vec<usize>,
    pub n_neu: Vec<usize>,
    pub lambda: Vec<f64>,
    pub folds: usize,
}

impl GridSpec {
    /// Even neuron grid `step, 2 step, ..` up to `max_neu`.
    pub fn up_to(max_hl: usize, max_neu: usize, neu_step: usize, lambda: Vec<f64>) -> Self {
        GridSpec {
            n_hl: (1..=max_hl).collect(),
            n_neu: (1..=max_neu.div_ceil(neu_step)).map(|i| (i * neu_step).min(max_neu)).collect(),
            lambda,
            folds: 5,
        }
    }

    pub fn cells(&self) -> Vec<(Arch, f64)> {
        let mut out = Vec::new();
        for &n_hl in &self.n_hl {
            for &n_neu in &self.n_neu {
                for &l in &self.lambda {
                    out.push((Arch { n_hl, n_neu }, l));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub arch: Arch,
    pub lambda: f64,
    pub fold_accuracy: Vec<f64>,
}

impl GridCell {
    pub fn mean_accuracy(&self) -> f64 {
        self.fold_accuracy.iter().sum::<f64>() / self.fold_accuracy.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl GridResult {
    pub fn best(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n_hl,n_neu,lambda,mean_acc\n");
        for c in &self.cells {
            s.push_str(&format!("{},{},{},{:.6}\n", c.arch.n_hl, c.arch.n_neu, c.lambda, c.mean_accuracy()));
        }
        s
    }

    /// Best mean accuracy among cells with `n_neu < 10` and among the rest.
    pub fn narrow_vs_wide(&self) -> (Option<f64>, Option<f64>) {
        let best = |f: &dyn Fn(&GridCell) -> bool| {
            self.cells.iter().filter(|c| f(c)).map(GridCell::mean_accuracy).fold(None, |a: Option<f64>, v| {
                Some(a.map_or(v, |a| a.max(v)))
            })
        };
        (best(&|c| c.arch.n_neu < 10), best(&|c| c.arch.n_neu >= 10))
    }
}

/// Mean k-fold accuracy of every grid cell. Cells and folds train in
/// parallel; results are ordered as `spec.cells()` and ties keep the first cell.
pub fn grid_search(xs: &[[f64; N_INPUTS]], ys: &[BodyLabel], spec: &GridSpec, cfg: &TrainConfig) -> Result<GridResult> {
    if xs.len() < spec.folds * N_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "{} samples are too few for {}-fold validation",
            xs.len(),
            spec.folds
        )));
    }
    let folds = stratified_folds(ys, spec.folds, cfg.seed)?;
    let cells = spec.cells();
    if cells.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.folds).map(move |f| (c, f))).collect();
    let acc: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| -> Result<f64> {
            let (arch, lambda) = cells[c];
            let (tr, te): (Vec<usize>, Vec<usize>) = (0..xs.len()).partition(|&i| folds[i] != f);
            let txs: Vec<_> = tr.iter().map(|&i| xs[i]).collect();
            let tys: Vec<_> = tr.iter().map(|&i| ys[i]).collect();
            let cfg = TrainConfig {
                lambda,
                ..cfg.clone()
            };
            let (m, _) = fnn_train(&txs, &tys, &cfg, arch)?;
            let ok = te.iter().filter(|&&i| m.predict(&xs[i]).map(|p| p == ys[i]).unwrap_or(false)).count();
            Ok(ok as f64 / te.len() as f64)
        })
        .collect::<Result<_>>()?;
    let cells: Vec<GridCell> = cells
        .iter()
        .enumerate()
        .map(|(c, (arch, lambda))| GridCell {
            arch: *arch,
            lambda: *lambda,
            fold_accuracy: acc[c * spec.folds..(c + 1) * spec.folds].to_vec(),
        })
        .collect();
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.mean_accuracy() > cells[best].mean_accuracy() {
            best = i;
        }
    }
    Ok(GridResult { cells, best })
}
