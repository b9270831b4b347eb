//! Linear-probe evaluation on frozen encoder features and similarity
//! diagnostics for projected batches.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data_augment::LabeledVectors;
use crate::error::{ensure_dim, Error, Result};
use crate::model::{forward_encoder, ModelSpec, ModelState};
use crate::numerics::{dot_unchecked, norm2, pairwise_sum_by, Mat64, Rng, MIN_NORM};
use crate::pairing::{partner, PairIndexSet};

const SPLIT_TAG: u64 = 0x7370_6c69;
const PROBE_SHUFFLE_TAG: u64 = 0x7072_6f62;

/// Encoder outputs `h` for every row of `x`, computed in a single batch.
pub fn extract_features(state: &ModelState, spec: &ModelSpec, x: &Mat64) -> Result<Mat64> {
    Ok(forward_encoder(state, spec, x)?.output().clone())
}

/// Features extracted from every row of a labelled set.
pub fn extract_labeled(
    state: &ModelState,
    spec: &ModelSpec,
    data: &LabeledVectors,
) -> Result<LabeledVectors> {
    LabeledVectors::new(
        extract_features(state, spec, &data.features)?,
        data.labels.clone(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub lr0: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub scaling: FeatureScaling,
}

/// Preprocessing of the frozen features, fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScaling {
    /// Raw features.
    None,
    /// Per-feature zero mean and unit variance, the affine-free batch
    /// normalization usually placed in front of a linear probe.
    Standardize,
    /// ZCA whitening; makes the probe blind to any invertible linear map
    /// of the features.
    Whiten,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            decay: 0.98,
            epochs: 100,
            batch_size: 32,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
            scaling: FeatureScaling::Whiten,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::domain(format!("{field}: {why}")));
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return fail("lr0", "must be finite and > 0");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail("decay", "must lie in (0, 1]");
        }
        if self.epochs == 0 {
            return fail("epochs", "must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1");
        }
        if self.patience == 0 {
            return fail("patience", "must be at least 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("val_fraction", "must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Accuracy of the selected weights on the training split.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub trace: Vec<ProbeEpoch>,
}

/// Softmax regression weights, `classes × (features + 1)` with the bias
/// in the last column.
#[derive(Debug, Clone, PartialEq)]
struct Linear {
    w: Mat64,
}

impl Linear {
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let f = x.len();
        (0..self.w.rows())
            .map(|k| dot_unchecked(&self.w.row(k)[..f], x) + self.w.get(k, f))
            .collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (k, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = k;
            }
        }
        best
    }

    fn accuracy(&self, data: &LabeledVectors, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows
            .iter()
            .filter(|&&r| self.predict(data.features.row(r)) == data.labels[r])
            .count();
        hits as f64 / rows.len() as f64
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Relative eigenvalue below which a covariance direction is treated as
/// empty and dropped by whitening.
const WHITEN_RANK_TOL: f64 = 1e-10;

/// Spread below which a feature counts as constant and maps to zero.
const CONSTANT_FEATURE_TOL: f64 = 1e-12;

/// Affine map `x ↦ (x − μ) T` fitted on the training set.
struct Scaler {
    mean: Vec<f64>,
    /// `F × F`, row-major; `None` for a diagonal map.
    transform: Option<Vec<f64>>,
    diagonal: Vec<f64>,
}

impl Scaler {
    fn fit(x: &Mat64, scaling: FeatureScaling) -> Self {
        let (n, f) = (x.rows(), x.cols());
        let mean: Vec<f64> = match scaling {
            FeatureScaling::None => vec![0.0; f],
            _ => (0..f)
                .map(|c| pairwise_sum_by(n, |r| x.get(r, c)) / n as f64)
                .collect(),
        };
        match scaling {
            FeatureScaling::None => Self {
                mean,
                transform: None,
                diagonal: vec![1.0; f],
            },
            FeatureScaling::Standardize => {
                let diagonal = (0..f)
                    .map(|c| {
                        let var =
                            pairwise_sum_by(n, |r| (x.get(r, c) - mean[c]).powi(2)) / n as f64;
                        if var.sqrt() > CONSTANT_FEATURE_TOL {
                            1.0 / var.sqrt()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Self {
                    mean,
                    transform: None,
                    diagonal,
                }
            }
            FeatureScaling::Whiten => {
                // Σ^{−1/2} over the non-empty eigendirections. Rotating the
                // inputs rotates the output the same way.
                let cov = DMatrix::from_fn(f, f, |a, b| {
                    pairwise_sum_by(n, |r| (x.get(r, a) - mean[a]) * (x.get(r, b) - mean[b]))
                        / n as f64
                });
                let eig = SymmetricEigen::new(cov);
                let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
                let scale = DVector::from_iterator(
                    f,
                    eig.eigenvalues.iter().map(|&l| {
                        if l > WHITEN_RANK_TOL * top {
                            1.0 / l.sqrt()
                        } else {
                            0.0
                        }
                    }),
                );
                let v = &eig.eigenvectors;
                let t = v * DMatrix::from_diagonal(&scale) * v.transpose();
                Self {
                    mean,
                    transform: Some((0..f * f).map(|k| t[(k / f, k % f)]).collect()),
                    diagonal: Vec::new(),
                }
            }
        }
    }

    fn apply(&self, x: &Mat64) -> Mat64 {
        let f = x.cols();
        match &self.transform {
            Some(t) => Mat64::from_fn(x.rows(), f, |r, c| {
                pairwise_sum_by(f, |k| (x.get(r, k) - self.mean[k]) * t[k * f + c])
            }),
            None => Mat64::from_fn(x.rows(), f, |r, c| {
                (x.get(r, c) - self.mean[c]) * self.diagonal[c]
            }),
        }
    }
}

/// Trains a linear softmax classifier on `train` with minibatch SGD,
/// keeps the weights with the best accuracy on a held-out part of
/// `train`, and scores them on `test`. Features are first scaled per
/// `cfg.scaling` with training-set statistics, so the fixed learning rate
/// suits encoders of any output scale.
pub fn linear_probe(
    train: &LabeledVectors,
    test: &LabeledVectors,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    cfg.validate()?;
    ensure_dim("probe feature width", train.dim(), test.dim())?;
    let classes = train.num_classes().max(test.num_classes());
    let distinct = {
        let mut seen = vec![false; classes];
        train.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::domain(
            "linear probe needs at least two classes in the training set",
        ));
    }
    if train.len() < 2 {
        return Err(Error::domain(
            "linear probe needs at least two training rows",
        ));
    }

    let (train, test) = {
        let scaler = Scaler::fit(&train.features, cfg.scaling);
        (
            LabeledVectors::new(scaler.apply(&train.features), train.labels.clone())?,
            LabeledVectors::new(scaler.apply(&test.features), test.labels.clone())?,
        )
    };
    let (train, test) = (&train, &test);

    let order = Rng::derive(cfg.seed, &[SPLIT_TAG]).permutation(train.len());
    let n_val =
        ((train.len() as f64 * cfg.val_fraction).round() as usize).clamp(1, train.len() - 1);
    let (val_rows, fit_rows) = order.split_at(n_val);
    let (val_rows, fit_rows) = (val_rows.to_vec(), fit_rows.to_vec());

    let f = train.dim();
    let mut model = Linear {
        w: Mat64::zeros(classes, f + 1),
    };
    let mut best = (model.clone(), f64::NEG_INFINITY, 0usize);
    let mut since_best = 0;
    let mut trace = Vec::new();
    let all_test: Vec<usize> = (0..test.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr0 * cfg.decay.powi(epoch as i32);
        let mut rows = fit_rows.clone();
        Rng::derive(cfg.seed, &[PROBE_SHUFFLE_TAG, epoch as u64]).shuffle(&mut rows);
        let mut loss_sum = 0.0;
        for chunk in rows.chunks(cfg.batch_size) {
            let mut grad = Mat64::zeros(classes, f + 1);
            for &r in chunk {
                let x = train.features.row(r);
                let p = softmax(&model.logits(x));
                let y = train.labels[r];
                loss_sum -= p[y].max(f64::MIN_POSITIVE).ln();
                for (k, pk) in p.iter().enumerate() {
                    let delta = pk - if k == y { 1.0 } else { 0.0 };
                    let row = grad.row_mut(k);
                    for (g, xv) in row[..f].iter_mut().zip(x) {
                        *g += delta * xv;
                    }
                    row[f] += delta;
                }
            }
            let scale = lr / chunk.len() as f64;
            for (w, g) in model.w.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                *w -= scale * g;
            }
        }
        let val_accuracy = model.accuracy(train, &val_rows);
        trace.push(ProbeEpoch {
            epoch,
            lr,
            train_loss: loss_sum / fit_rows.len() as f64,
            train_accuracy: model.accuracy(train, &fit_rows),
            val_accuracy,
        });
        if val_accuracy > best.1 {
            best = (model.clone(), val_accuracy, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (chosen, val_accuracy, best_epoch) = best;
    Ok(ProbeReport {
        train_accuracy: chosen.accuracy(train, &fit_rows),
        val_accuracy,
        test_accuracy: chosen.accuracy(test, &all_test),
        epochs_run: trace.len(),
        best_epoch,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub mean_pos: f64,
    pub mean_neg: f64,
    pub gap: f64,
}

impl SimilarityStats {
    /// Gap within `tol` of zero while positives are within `tol` of
    /// perfectly aligned: every feature points the same way.
    pub fn is_collapsed(&self, tol: f64) -> bool {
        self.gap.abs() <= tol && self.mean_pos >= 1.0 - tol
    }
}

/// Mean cosine similarity over ordered positive and negative pairs.
pub fn pairwise_similarity_stats(z: &Mat64, pairs: &PairIndexSet) -> Result<SimilarityStats> {
    ensure_dim("similarity batch rows", pairs.views(), z.rows())?;
    let norms: Vec<f64> = z.iter_rows().map(norm2).collect();
    if let Some((index, &norm)) = norms.iter().enumerate().find(|(_, &n)| !(n > MIN_NORM)) {
        return Err(Error::DegenerateVector { index, norm });
    }
    let cos = |i: usize, j: usize| {
        (dot_unchecked(z.row(i), z.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
    };
    let v = pairs.views();
    let mean_pos = pairwise_sum_by(v, |a| cos(a, partner(a))) / v as f64;
    let mean_neg = if pairs.t_n() == 0 {
        0.0
    } else {
        let per_anchor: Vec<f64> = (0..v)
            .map(|a| {
                let list = pairs.negatives_of(a);
                pairwise_sum_by(list.len(), |k| cos(a, list[k]))
            })
            .collect();
        pairwise_sum_by(v, |a| per_anchor[a]) / pairs.t_n() as f64
    };
    Ok(SimilarityStats {
        mean_pos,
        mean_neg,
        gap: mean_pos - mean_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::build_pairs;

    fn one_hot_set(n: usize, classes: usize) -> LabeledVectors {
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let features = Mat64::from_fn(n, classes, |r, c| if labels[r] == c { 1.0 } else { 0.0 });
        LabeledVectors::new(features, labels).unwrap()
    }

    #[test]
    fn one_hot_features_are_perfectly_separable() {
        let train = one_hot_set(200, 4);
        let test = one_hot_set(40, 4);
        let report = linear_probe(&train, &test, &ProbeConfig::default()).unwrap();
        assert_eq!(report.test_accuracy, 1.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let train =
            LabeledVectors::new(Mat64::from_fn(10, 2, |r, _| r as f64), vec![0; 10]).unwrap();
        assert!(linear_probe(&train, &train, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn best_validation_is_kept() {
        let train = one_hot_set(100, 3);
        let report = linear_probe(&train, &train, &ProbeConfig::default()).unwrap();
        let last = report.trace.last().unwrap().val_accuracy;
        assert!(report.val_accuracy >= last);
        assert!(report
            .trace
            .iter()
            .all(|e| e.val_accuracy <= report.val_accuracy));
    }

    fn skewed(seed: u64) -> Mat64 {
        let mut rng = Rng::new(seed, 3);
        let data = (0..600)
            .map(|k| [100.0, 1.0, 0.01][k % 3] * rng.standard_normal() + 5.0)
            .collect();
        Mat64::new(200, 3, data).unwrap()
    }

    fn covariance(x: &Mat64) -> Vec<Vec<f64>> {
        let n = x.rows() as f64;
        let mean: Vec<f64> = (0..x.cols())
            .map(|c| x.iter_rows().map(|r| r[c]).sum::<f64>() / n)
            .collect();
        (0..x.cols())
            .map(|a| {
                (0..x.cols())
                    .map(|b| {
                        x.iter_rows()
                            .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
                            .sum::<f64>()
                            / n
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn scaling_modes() {
        let x = skewed(1);
        assert_eq!(Scaler::fit(&x, FeatureScaling::None).apply(&x), x);

        let s = covariance(&Scaler::fit(&x, FeatureScaling::Standardize).apply(&x));
        for (c, row) in s.iter().enumerate() {
            assert!((row[c] - 1.0).abs() < 1e-12);
        }

        let w = covariance(&Scaler::fit(&x, FeatureScaling::Whiten).apply(&x));
        for (a, row) in w.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                assert!((v - if a == b { 1.0 } else { 0.0 }).abs() < 1e-9, "{w:?}");
            }
        }
    }

    #[test]
    fn constant_features_map_to_zero() {
        let x = Mat64::from_fn(10, 2, |r, c| if c == 0 { 3.0 } else { r as f64 });
        for scaling in [FeatureScaling::Standardize, FeatureScaling::Whiten] {
            let y = Scaler::fit(&x, scaling).apply(&x);
            assert!(y.iter_rows().all(|r| r[0] == 0.0), "{scaling:?}");
        }
    }

    #[test]
    fn collapsed_batch_statistics() {
        let z = Mat64::from_fn(6, 3, |_, c| [0.2, 0.5, -0.1][c]);
        let s = pairwise_similarity_stats(&z, &build_pairs(3).unwrap()).unwrap();
        assert!((s.mean_pos - 1.0).abs() < 1e-15 && (s.mean_neg - 1.0).abs() < 1e-15);
        assert!(s.gap.abs() < 1e-15);
        assert!(s.is_collapsed(0.05));
    }

    #[test]
    fn orthogonal_clusters_statistics() {
        // Views of sample k are both e_k.
        let z = Mat64::from_fn(6, 3, |r, c| if r / 2 == c { 1.0 } else { 0.0 });
        let s = pairwise_similarity_stats(&z, &build_pairs(3).unwrap()).unwrap();
        assert_eq!((s.mean_pos, s.mean_neg, s.gap), (1.0, 0.0, 1.0));
        assert!(!s.is_collapsed(0.05));
    }

    #[test]
    fn zero_vector_is_degenerate() {
        let z = Mat64::zeros(4, 2);
        assert!(pairwise_similarity_stats(&z, &build_pairs(2).unwrap()).is_err());
    }
}
