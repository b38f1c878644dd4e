//! Collided-body classification: the threshold decision tree, a small
//! feedforward network, cross-validated grid search and confusion matrices.

pub mod cv;
pub mod fnn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{count_excited, FeatureVector};

pub const N_CLASSES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BodyLabel {
    C1L1,
    C1L2,
    C2L1,
    C2L2,
    C3L1,
    C3L2,
    MP,
}

impl BodyLabel {
    pub const ALL: [BodyLabel; N_CLASSES] = [
        BodyLabel::C1L1,
        BodyLabel::C1L2,
        BodyLabel::C2L1,
        BodyLabel::C2L2,
        BodyLabel::C3L1,
        BodyLabel::C3L2,
        BodyLabel::MP,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Zero-based chain index and link number (1 or 2); `None` for the platform.
    pub fn chain_link(self) -> Option<(usize, u8)> {
        match self {
            BodyLabel::MP => None,
            b => {
                let i = b.index();
                Some((i / 2, (i % 2) as u8 + 1))
            }
        }
    }

    pub fn from_chain_link(chain: usize, link: u8) -> Self {
        assert!(chain < 3 && (link == 1 || link == 2), "no body for chain {chain} link {link}");
        Self::ALL[2 * chain + link as usize - 1]
    }

    pub fn is_first_link(self) -> bool {
        matches!(self.chain_link(), Some((_, 1)))
    }

    pub fn name(self) -> &'static str {
        ["C1L1", "C1L2", "C2L1", "C2L2", "C3L1", "C3L2", "mP"][self.index()]
    }
}

impl fmt::Display for BodyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BodyLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown body label {s:?}")))
    }
}

pub trait Classifier {
    fn classify(&self, fv: &FeatureVector) -> BodyLabel;
}

/// Decision-tree thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtParams {
    /// m
    pub eps_d: f64,
    /// deg
    pub eps_alpha: f64,
    /// N*m
    pub eps_tau: f64,
}

impl Default for DtParams {
    fn default() -> Self {
        DtParams {
            eps_d: 0.05,
            eps_alpha: 35.0,
            eps_tau: 2.5,
        }
    }
}

impl DtParams {
    pub fn validate(&self) -> Result<()> {
        if [self.eps_d, self.eps_alpha, self.eps_tau].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("decision-tree thresholds must be positive: {self:?}")))
        }
    }
}

/// Threshold tree: a line passing close to a coupling joint means a contact
/// on that chain; a force along the forearm with at most one excited drive
/// means the first link. `n_tau` is recounted with `params.eps_tau`.
pub fn dt_classify(fv: &FeatureVector, params: &DtParams) -> BodyLabel {
    let mut j = 0;
    for i in 1..3 {
        if fv.d[i] < fv.d[j] {
            j = i;
        }
    }
    if fv.d[j] < params.eps_d {
        let a = fv.alpha[j].abs();
        let along = a < params.eps_alpha || 180.0 - a < params.eps_alpha;
        if along && count_excited(&fv.tau_hat, params.eps_tau) < 2 {
            BodyLabel::from_chain_link(j, 1)
        } else {
            BodyLabel::from_chain_link(j, 2)
        }
    } else {
        BodyLabel::MP
    }
}

impl Classifier for DtParams {
    fn classify(&self, fv: &FeatureVector) -> BodyLabel {
        dt_classify(fv, self)
    }
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: BodyLabel, predicted: BodyLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..N_CLASSES).map(|i| self.counts[i][i]).sum();
        match self.total() {
            0 => 0.0,
            n => correct as f64 / n as f64,
        }
    }

    /// Row-normalized matrix; empty rows stay zero.
    pub fn normalized(&self) -> [[f64; N_CLASSES]; N_CLASSES] {
        let mut out = [[0.0; N_CLASSES]; N_CLASSES];
        for (i, row) in self.counts.iter().enumerate() {
            let n: u64 = row.iter().sum();
            if n > 0 {
                for (j, c) in row.iter().enumerate() {
                    out[i][j] = *c as f64 / n as f64;
                }
            }
        }
        out
    }

    pub fn diagonal(&self) -> [f64; N_CLASSES] {
        let n = self.normalized();
        std::array::from_fn(|i| n[i][i])
    }

    pub fn to_csv(&self) -> String {
        let n = self.normalized();
        let mut out = String::from("true");
        for b in BodyLabel::ALL {
            out.push(',');
            out.push_str(b.name());
        }
        out.push_str(",count\n");
        for b in BodyLabel::ALL {
            out.push_str(b.name());
            for v in n[b.index()] {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push_str(&format!(",{}\n", self.counts[b.index()].iter().sum::<u64>()));
        }
        out
    }
}

pub fn evaluate<'a, C, I>(classifier: &C, data: I) -> ConfusionMatrix
where
    C: Classifier + ?Sized,
    I: IntoIterator<Item = (&'a FeatureVector, BodyLabel)>,
{
    let mut cm = ConfusionMatrix::default();
    for (fv, truth) in data {
        cm.add(truth, classifier.classify(fv));
    }
    cm
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn fv(d: [f64; 3], alpha: [f64; 3], tau: [f64; 3]) -> FeatureVector {
        FeatureVector {
            d: Vector3::from(d),
            alpha: Vector3::from(alpha),
            n_tau: 0,
            f_hat: Vector3::new(1.0, 0.0, 0.0),
            tau_hat: Vector3::from(tau),
        }
    }

    #[test]
    fn label_indexing_round_trips() {
        for b in BodyLabel::ALL {
            assert_eq!(BodyLabel::from_index(b.index()), Some(b));
            assert_eq!(b.name().parse::<BodyLabel>().unwrap(), b);
            if let Some((c, l)) = b.chain_link() {
                assert_eq!(BodyLabel::from_chain_link(c, l), b);
            }
        }
        assert_eq!(BodyLabel::C2L2.chain_link(), Some((1, 2)));
        assert!("C4L1".parse::<BodyLabel>().is_err());
    }

    #[test]
    fn far_lines_are_platform_contacts() {
        let p = DtParams::default();
        assert_eq!(dt_classify(&fv([0.05, 0.2, 0.3], [0.0; 3], [0.0; 3]), &p), BodyLabel::MP);
    }

    #[test]
    fn first_link_branch() {
        let p = DtParams::default();
        assert_eq!(dt_classify(&fv([0.01, 0.3, 0.3], [2.0, 0.0, 0.0], [5.0, 0.0, 0.0]), &p), BodyLabel::C1L1);
        assert_eq!(dt_classify(&fv([0.3, 0.3, 0.01], [0.0, 0.0, -170.0], [0.0; 3]), &p), BodyLabel::C3L1);
    }

    #[test]
    fn second_link_branch() {
        let p = DtParams::default();
        assert_eq!(dt_classify(&fv([0.01, 0.3, 0.3], [90.0, 0.0, 0.0], [5.0, 5.0, 5.0]), &p), BodyLabel::C1L2);
        // Aligned with the forearm but two drives excited.
        assert_eq!(dt_classify(&fv([0.3, 0.01, 0.3], [0.0, 1.0, 0.0], [0.0, 5.0, 5.0]), &p), BodyLabel::C2L2);
    }

    #[test]
    fn argmin_ties_take_lowest_chain() {
        let p = DtParams::default();
        assert_eq!(dt_classify(&fv([0.3, 0.01, 0.01], [90.0; 3], [0.0; 3]), &p), BodyLabel::C2L2);
    }

    #[test]
    fn perfect_and_constant_classifiers() {
        let data: Vec<(FeatureVector, BodyLabel)> = BodyLabel::ALL
            .iter()
            .map(|b| (fv([b.index() as f64, 0.0, 0.0], [0.0; 3], [0.0; 3]), *b))
            .collect();
        struct Oracle;
        impl Classifier for Oracle {
            fn classify(&self, fv: &FeatureVector) -> BodyLabel {
                BodyLabel::from_index(fv.d[0] as usize).unwrap()
            }
        }
        struct Always;
        impl Classifier for Always {
            fn classify(&self, _: &FeatureVector) -> BodyLabel {
                BodyLabel::MP
            }
        }
        let cm = evaluate(&Oracle, data.iter().map(|(f, b)| (f, *b)));
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.diagonal(), [1.0; N_CLASSES]);
        let cm = evaluate(&Always, data.iter().map(|(f, b)| (f, *b)));
        assert!((cm.accuracy() - 1.0 / 7.0).abs() < 1e-15);
        for row in cm.normalized() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
