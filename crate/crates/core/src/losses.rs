//! MIO binary-contrastive loss, InfoNCE, and the L2 positive-pair
//! regularizer, with analytic gradients with respect to every feature
//! vector.
//!
//! All three losses are written as functions of the ordered-pair similarity
//! matrix `C`. Each gradient is first formed as `G = ∂L/∂C` and then pushed
//! through the similarity map once, so every appearance of `z_o` (as
//! anchor, as positive partner, as somebody else's negative) is accounted
//! for. In cosine mode the normalization Jacobian is applied on top.
//!
//! The per-anchor displacement forms and the projector "influence"
//! diagnostics are exposed alongside. They are only defined for dot-product
//! similarity at unit temperature.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{
    dot_unchecked, l1_norm, log_sigmoid_unchecked, norm2, pairwise_sum_by, sigmoid, Mat64, MIN_NORM,
};
use crate::pairing::{partner, PairIndexSet};
use crate::par;

/// How `C_ij` is computed from feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Raw inner product `⟨z_i, z_j⟩`.
    Dot,
    /// `⟨z_i, z_j⟩ / (‖z_i‖ ‖z_j‖)`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda: f64,
    pub mode: SimilarityMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            lambda: 1.0,
            mode: SimilarityMode::Cosine,
        }
    }
}

impl LossConfig {
    pub fn new(tau: f64, lambda: f64, mode: SimilarityMode) -> Result<Self> {
        let cfg = Self { tau, lambda, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::domain(format!(
                "tau must be finite and > 0, got {}",
                self.tau
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::domain(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    fn require_paper_setting(&self, what: &str) -> Result<()> {
        if self.mode != SimilarityMode::Dot || self.tau != 1.0 {
            return Err(Error::Unsupported(format!(
                "{what} is only defined for dot-product similarity at tau = 1 \
                 (got {:?}, tau = {})",
                self.mode, self.tau
            )));
        }
        Ok(())
    }
}

/// Which objective the trainer and the verification tools evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mio,
    Infonce,
    MioL2,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Mio, LossKind::Infonce, LossKind::MioL2];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mio => "mio",
            LossKind::Infonce => "infonce",
            LossKind::MioL2 => "mio_l2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossDiagnostics {
    /// Mean of the per-pair positive terms (`−ln σ(C/τ)` for MIO).
    pub positive_term: f64,
    /// Mean of the per-pair negative terms; zero when there are none.
    pub negative_term: f64,
    pub mean_positive_similarity: f64,
    pub mean_negative_similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    /// `∂L/∂z`, one row per feature vector; `None` for value-only calls.
    pub grad_z: Option<Mat64>,
    pub diagnostics: Option<LossDiagnostics>,
}

impl LossReport {
    /// The gradient block; panics on a value-only report.
    pub fn grad(&self) -> &Mat64 {
        self.grad_z
            .as_ref()
            .expect("loss report carries no gradient")
    }
}

/// Pairwise similarities plus what the chain rule needs afterwards.
struct Similarities {
    /// `C`, `V × V`; the diagonal is never read.
    c: Mat64,
    /// Unit rows in cosine mode, the raw rows in dot mode.
    basis: Mat64,
    /// Row norms (cosine mode only).
    norms: Option<Vec<f64>>,
}

fn check_batch(z: &Mat64, pairs: &PairIndexSet) -> Result<()> {
    ensure_dim("feature batch rows", pairs.views(), z.rows())?;
    if let Some((r, _)) = z
        .iter_rows()
        .enumerate()
        .find(|(_, row)| row.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::domain(format!("feature vector {r} is not finite")));
    }
    Ok(())
}

fn similarities(z: &Mat64, mode: SimilarityMode) -> Result<Similarities> {
    let v = z.rows();
    let (basis, norms) = match mode {
        SimilarityMode::Dot => (z.clone(), None),
        SimilarityMode::Cosine => {
            let norms: Vec<f64> = z.iter_rows().map(norm2).collect();
            if let Some((index, &norm)) = norms.iter().enumerate().find(|(_, &n)| n <= MIN_NORM) {
                return Err(Error::DegenerateVector { index, norm });
            }
            let unit = Mat64::from_fn(v, z.cols(), |r, c| z.get(r, c) / norms[r]);
            (unit, Some(norms))
        }
    };
    let rows = par::map_indexed(v, |i| {
        (0..v)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    dot_unchecked(basis.row(i), basis.row(j))
                }
            })
            .collect::<Vec<_>>()
    });
    let c = Mat64::new(v, v, rows.concat())?;
    Ok(Similarities { c, basis, norms })
}

/// Pushes `G = ∂L/∂C` back to `∂L/∂z`.
fn chain_to_z(sims: &Similarities, g: &Mat64) -> Mat64 {
    let v = sims.basis.rows();
    let d = sims.basis.cols();
    let rows = par::map_indexed(v, |i| {
        let w: Vec<f64> = (0..v)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    g.get(i, j) + g.get(j, i)
                }
            })
            .collect();
        let mut grad: Vec<f64> = (0..d)
            .map(|m| pairwise_sum_by(v, |j| w[j] * sims.basis.get(j, m)))
            .collect();
        if let Some(norms) = &sims.norms {
            let u = sims.basis.row(i);
            let radial = dot_unchecked(u, &grad);
            for (gm, um) in grad.iter_mut().zip(u) {
                *gm = (*gm - radial * um) / norms[i];
            }
        }
        grad
    });
    Mat64::from_fn(v, d, |r, c| rows[r][c])
}

fn mean_similarities(sims: &Similarities, pairs: &PairIndexSet) -> (f64, f64) {
    let v = pairs.views();
    let pos = pairwise_sum_by(v, |a| sims.c.get(a, partner(a))) / v as f64;
    let t_n = pairs.t_n();
    let neg = if t_n == 0 {
        0.0
    } else {
        let per_anchor: Vec<f64> = (0..v)
            .map(|a| {
                let list = pairs.negatives_of(a);
                pairwise_sum_by(list.len(), |k| sims.c.get(a, list[k]))
            })
            .collect();
        pairwise_sum_by(v, |a| per_anchor[a]) / t_n as f64
    };
    (pos, neg)
}

fn mio_impl(
    z: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
    with_grad: bool,
) -> Result<LossReport> {
    cfg.validate()?;
    check_batch(z, pairs)?;
    let sims = similarities(z, cfg.mode)?;
    let v = pairs.views();
    let t_p = pairs.t_p() as f64;
    let t_n = pairs.t_n();
    let tau = cfg.tau;

    // Per anchor: (−ln σ(C_pos/τ), Σ_neg −ln σ(−C/τ)).
    let terms = par::map_indexed(v, |a| {
        let pos = -log_sigmoid_unchecked(sims.c.get(a, partner(a)) / tau);
        let list = pairs.negatives_of(a);
        let neg = pairwise_sum_by(list.len(), |k| {
            -log_sigmoid_unchecked(-sims.c.get(a, list[k]) / tau)
        });
        (pos, neg)
    });
    let pos_sum = pairwise_sum_by(v, |a| terms[a].0);
    let neg_sum = pairwise_sum_by(v, |a| terms[a].1);
    let positive_term = pos_sum / t_p;
    let negative_term = if t_n == 0 { 0.0 } else { neg_sum / t_n as f64 };
    let value = positive_term + negative_term;

    let (mean_pos, mean_neg) = mean_similarities(&sims, pairs);
    let diagnostics = LossDiagnostics {
        positive_term,
        negative_term,
        mean_positive_similarity: mean_pos,
        mean_negative_similarity: mean_neg,
    };

    let grad_z = with_grad.then(|| {
        let mut g = Mat64::zeros(v, v);
        for a in 0..v {
            let p = partner(a);
            g.set(a, p, -sigmoid(-sims.c.get(a, p) / tau) / (t_p * tau));
            for &j in pairs.negatives_of(a) {
                g.set(a, j, sigmoid(sims.c.get(a, j) / tau) / (t_n as f64 * tau));
            }
        }
        chain_to_z(&sims, &g)
    });

    Ok(LossReport {
        value,
        grad_z,
        diagnostics: Some(diagnostics),
    })
}

/// MIO loss value.
///
/// `L = −(1/T_P) Σ_pos ln σ(C/τ) − (1/T_N) Σ_neg ln(1 − σ(C/τ))` over
/// ordered pairs; the negative term is zero when `N = 1`.
pub fn mio_loss(z: &Mat64, pairs: &PairIndexSet, cfg: &LossConfig) -> Result<LossReport> {
    mio_impl(z, pairs, cfg, false)
}

/// MIO loss value and full gradient.
pub fn mio_grad_z(z: &Mat64, pairs: &PairIndexSet, cfg: &LossConfig) -> Result<LossReport> {
    mio_impl(z, pairs, cfg, true)
}

/// Softmax over the candidates of one anchor (partner first, then the
/// anchor's negatives in list order), plus the log-sum-exp.
fn anchor_softmax(
    sims: &Similarities,
    pairs: &PairIndexSet,
    a: usize,
    tau: f64,
) -> (Vec<f64>, f64) {
    let list = pairs.negatives_of(a);
    let logits: Vec<f64> = std::iter::once(partner(a))
        .chain(list.iter().copied())
        .map(|j| sims.c.get(a, j) / tau)
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let total = pairwise_sum_by(exps.len(), |k| exps[k]);
    let lse = m + total.ln();
    (
        exps.into_iter().map(|e| e / total).collect(),
        lse - logits[0],
    )
}

fn infonce_impl(
    z: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
    with_grad: bool,
) -> Result<LossReport> {
    cfg.validate()?;
    if pairs.n() < 2 {
        return Err(Error::domain(
            "InfoNCE needs at least 2 source samples (no negatives otherwise)",
        ));
    }
    check_batch(z, pairs)?;
    let sims = similarities(z, cfg.mode)?;
    let v = pairs.views();
    let tau = cfg.tau;

    let per_anchor = par::map_indexed(v, |a| anchor_softmax(&sims, pairs, a, tau));
    let value = pairwise_sum_by(v, |a| per_anchor[a].1) / v as f64;

    let (mean_pos, mean_neg) = mean_similarities(&sims, pairs);
    let positive_mean_prob = pairwise_sum_by(v, |a| per_anchor[a].0[0]) / v as f64;
    let diagnostics = LossDiagnostics {
        positive_term: value,
        negative_term: 1.0 - positive_mean_prob,
        mean_positive_similarity: mean_pos,
        mean_negative_similarity: mean_neg,
    };

    let grad_z = with_grad.then(|| {
        let mut g = Mat64::zeros(v, v);
        let scale = 1.0 / (v as f64 * tau);
        for (a, (probs, _)) in per_anchor.iter().enumerate() {
            g.set(a, partner(a), (probs[0] - 1.0) * scale);
            for (k, &j) in pairs.negatives_of(a).iter().enumerate() {
                g.set(a, j, probs[k + 1] * scale);
            }
        }
        chain_to_z(&sims, &g)
    });

    Ok(LossReport {
        value,
        grad_z,
        diagnostics: Some(diagnostics),
    })
}

/// InfoNCE value: 2N anchors, each with its partner and 2N − 2 negatives in
/// the denominator.
pub fn infonce_loss(z: &Mat64, pairs: &PairIndexSet, cfg: &LossConfig) -> Result<LossReport> {
    infonce_impl(z, pairs, cfg, false)
}

pub fn infonce_grad_z(z: &Mat64, pairs: &PairIndexSet, cfg: &LossConfig) -> Result<LossReport> {
    infonce_impl(z, pairs, cfg, true)
}

/// `λ Σ_k ‖z_{2k} − z_{2k+1}‖²` over unordered positive pairs, on raw `z`.
pub fn l2_reg(z: &Mat64, pairs: &PairIndexSet, lambda: f64) -> Result<LossReport> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::domain(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    check_batch(z, pairs)?;
    let n = pairs.n();
    let d = z.cols();
    let sq: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = (z.row(2 * k), z.row(2 * k + 1));
            pairwise_sum_by(d, |m| (a[m] - b[m]) * (a[m] - b[m]))
        })
        .collect();
    let value = lambda * pairwise_sum_by(n, |k| sq[k]);
    let mut grad = Mat64::zeros(z.rows(), d);
    for k in 0..n {
        for m in 0..d {
            let diff = 2.0 * lambda * (z.get(2 * k, m) - z.get(2 * k + 1, m));
            grad.set(2 * k, m, diff);
            grad.set(2 * k + 1, m, -diff);
        }
    }
    Ok(LossReport {
        value,
        grad_z: Some(grad),
        diagnostics: None,
    })
}

/// MIO plus the L2 regularizer with coefficient `cfg.lambda`.
pub fn mio_l2_loss(z: &Mat64, pairs: &PairIndexSet, cfg: &LossConfig) -> Result<LossReport> {
    let base = mio_grad_z(z, pairs, cfg)?;
    if cfg.lambda == 0.0 {
        return Ok(base);
    }
    let reg = l2_reg(z, pairs, cfg.lambda)?;
    let mut grad = base.grad_z.expect("mio_grad_z returns a gradient");
    for (g, r) in grad.as_mut_slice().iter_mut().zip(reg.grad().as_slice()) {
        *g += r;
    }
    Ok(LossReport {
        value: base.value + reg.value,
        grad_z: Some(grad),
        diagnostics: base.diagnostics,
    })
}

/// Evaluates `kind` with its gradient.
pub fn evaluate(
    kind: LossKind,
    z: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
) -> Result<LossReport> {
    match kind {
        LossKind::Mio => mio_grad_z(z, pairs, cfg),
        LossKind::Infonce => infonce_grad_z(z, pairs, cfg),
        LossKind::MioL2 => mio_l2_loss(z, pairs, cfg),
    }
}

/// Evaluates only the value of `kind`.
pub fn evaluate_value(
    kind: LossKind,
    z: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
) -> Result<f64> {
    match kind {
        LossKind::Mio => mio_loss(z, pairs, cfg).map(|r| r.value),
        LossKind::Infonce => infonce_loss(z, pairs, cfg).map(|r| r.value),
        LossKind::MioL2 => {
            let base = mio_loss(z, pairs, cfg)?.value;
            if cfg.lambda == 0.0 {
                Ok(base)
            } else {
                Ok(base + l2_reg(z, pairs, cfg.lambda)?.value)
            }
        }
    }
}

/// Per-anchor MIO displacement of each `z_o`:
/// `−(1/T_P)[z_{o'}(1 − σ(C_{oo'})) − (1/(T_P−2)) Σ_{i∈neg(o)} σ(C_{oi}) z_i]`.
///
/// Only the terms with `z_o` as anchor are included, so the full gradient
/// from [`mio_grad_z`] is exactly twice this.
pub fn mio_displacement_per_anchor(
    z: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
) -> Result<Mat64> {
    cfg.require_paper_setting("the per-anchor MIO displacement")?;
    check_batch(z, pairs)?;
    let sims = similarities(z, SimilarityMode::Dot)?;
    let v = pairs.views();
    let d = z.cols();
    let t_p = pairs.t_p() as f64;
    let rows = par::map_indexed(v, |o| {
        let p = partner(o);
        let pos_w = 1.0 - sigmoid(sims.c.get(o, p));
        let list = pairs.negatives_of(o);
        let neg_scale = if list.is_empty() {
            0.0
        } else {
            1.0 / (t_p - 2.0)
        };
        let weights: Vec<f64> = list.iter().map(|&i| sigmoid(sims.c.get(o, i))).collect();
        (0..d)
            .map(|m| {
                let neg = pairwise_sum_by(list.len(), |k| weights[k] * z.get(list[k], m));
                -(z.get(p, m) * pos_w - neg_scale * neg) / t_p
            })
            .collect::<Vec<_>>()
    });
    Ok(Mat64::from_fn(v, d, |r, c| rows[r][c]))
}

/// Weights of the InfoNCE displacement of `z_o`, written as
/// `∂L/∂z_o = −(1/T_P)[w₊ z_{o'} − Σ_j w_j z_j]` in dot mode at `τ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementWeights {
    /// `(1 − p₊(o⇓, o')) + (1 − p₊(o'⇓, o))`.
    pub partner_weight: f64,
    /// `p₊(o⇓, j) + p₊(j⇓, o)` for each negative `j` of `o`, in list order.
    pub negative_weights: Vec<f64>,
}

pub fn infonce_displacement_weights(
    z: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
) -> Result<Vec<DisplacementWeights>> {
    cfg.require_paper_setting("the InfoNCE displacement weights")?;
    if pairs.n() < 2 {
        return Err(Error::domain("InfoNCE needs at least 2 source samples"));
    }
    check_batch(z, pairs)?;
    let sims = similarities(z, SimilarityMode::Dot)?;
    let v = pairs.views();
    let probs: Vec<Vec<f64>> = (0..v)
        .map(|a| anchor_softmax(&sims, pairs, a, 1.0).0)
        .collect();
    // Probability that anchor `a` assigns to candidate `j`.
    let prob = |a: usize, j: usize| -> f64 {
        if j == partner(a) {
            probs[a][0]
        } else {
            let k = pairs
                .negatives_of(a)
                .iter()
                .position(|&x| x == j)
                .expect("j is a negative of a");
            probs[a][k + 1]
        }
    };
    Ok((0..v)
        .map(|o| {
            let p = partner(o);
            DisplacementWeights {
                partner_weight: (1.0 - prob(o, p)) + (1.0 - prob(p, o)),
                negative_weights: pairs
                    .negatives_of(o)
                    .iter()
                    .map(|&j| prob(o, j) + prob(j, o))
                    .collect(),
            }
        })
        .collect())
}

/// Influence factor of the pair `(j, k)`:
/// element `m` is `(z_j)_m ‖h_k‖₁ + (z_k)_m ‖h_j‖₁`.
pub fn influence_factor(z_j: &[f64], z_k: &[f64], h_j: &[f64], h_k: &[f64]) -> Result<Vec<f64>> {
    ensure_dim("influence_factor z", z_j.len(), z_k.len())?;
    ensure_dim("influence_factor h", h_j.len(), h_k.len())?;
    Ok(influence_with_norms(z_j, z_k, l1_norm(h_j), l1_norm(h_k)))
}

fn influence_with_norms(z_j: &[f64], z_k: &[f64], h_j_l1: f64, h_k_l1: f64) -> Vec<f64> {
    z_j.iter()
        .zip(z_k)
        .map(|(a, b)| a * h_k_l1 + b * h_j_l1)
        .collect()
}

fn check_projector_inputs(z: &Mat64, h: &Mat64, pairs: &PairIndexSet) -> Result<Vec<f64>> {
    check_batch(z, pairs)?;
    ensure_dim("hidden batch rows", z.rows(), h.rows())?;
    Ok(h.iter_rows().map(l1_norm).collect())
}

/// Projector gradient of the MIO loss in its influence-factor form:
/// `−(1/T_P) Σ_j [(1 − σ(C_jk)) Q_jk − (1/(T_P−2)) Σ_{i∈neg(j)} σ(C_ji) Q_ji]`.
pub fn projector_grad_mio(
    z: &Mat64,
    h: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    cfg.require_paper_setting("projector_grad_mio")?;
    let h_l1 = check_projector_inputs(z, h, pairs)?;
    let sims = similarities(z, SimilarityMode::Dot)?;
    let v = pairs.views();
    let d = z.cols();
    let t_p = pairs.t_p() as f64;
    let per_anchor = par::map_indexed(v, |j| {
        let k = partner(j);
        let mut acc: Vec<f64> = influence_with_norms(z.row(j), z.row(k), h_l1[j], h_l1[k])
            .into_iter()
            .map(|q| (1.0 - sigmoid(sims.c.get(j, k))) * q)
            .collect();
        let list = pairs.negatives_of(j);
        if !list.is_empty() {
            let qs: Vec<(f64, Vec<f64>)> = list
                .iter()
                .map(|&i| {
                    (
                        sigmoid(sims.c.get(j, i)),
                        influence_with_norms(z.row(j), z.row(i), h_l1[j], h_l1[i]),
                    )
                })
                .collect();
            for (m, a) in acc.iter_mut().enumerate() {
                *a -= pairwise_sum_by(qs.len(), |t| qs[t].0 * qs[t].1[m]) / (t_p - 2.0);
            }
        }
        acc
    });
    Ok((0..d)
        .map(|m| -pairwise_sum_by(v, |j| per_anchor[j][m]) / t_p)
        .collect())
}

/// Projector gradient of InfoNCE in its influence-factor form:
/// `−(1/2N) Σ_j [Q_jk − Σ_i e^{C_ji} Q_ji / Σ_i e^{C_ji}]`, the inner sums
/// running over the partner and the negatives of `j`.
pub fn projector_grad_infonce(
    z: &Mat64,
    h: &Mat64,
    pairs: &PairIndexSet,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    cfg.require_paper_setting("projector_grad_infonce")?;
    if pairs.n() < 2 {
        return Err(Error::domain("InfoNCE needs at least 2 source samples"));
    }
    let h_l1 = check_projector_inputs(z, h, pairs)?;
    let sims = similarities(z, SimilarityMode::Dot)?;
    let v = pairs.views();
    let d = z.cols();
    let per_anchor = par::map_indexed(v, |j| {
        let (probs, _) = anchor_softmax(&sims, pairs, j, 1.0);
        let candidates: Vec<usize> = std::iter::once(partner(j))
            .chain(pairs.negatives_of(j).iter().copied())
            .collect();
        let qs: Vec<Vec<f64>> = candidates
            .iter()
            .map(|&i| influence_with_norms(z.row(j), z.row(i), h_l1[j], h_l1[i]))
            .collect();
        (0..d)
            .map(|m| qs[0][m] - pairwise_sum_by(qs.len(), |t| probs[t] * qs[t][m]))
            .collect::<Vec<_>>()
    });
    Ok((0..d)
        .map(|m| -pairwise_sum_by(v, |j| per_anchor[j][m]) / v as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::pairing::build_pairs;
    use std::f64::consts::LN_2;

    fn random_batch(n: usize, d: usize, seed: u64) -> Mat64 {
        let mut rng = Rng::new(seed, 0);
        let data: Vec<f64> = (0..2 * n * d).map(|_| rng.standard_normal()).collect();
        Mat64::new(2 * n, d, data).unwrap()
    }

    fn dot_cfg(tau: f64) -> LossConfig {
        LossConfig::new(tau, 0.0, SimilarityMode::Dot).unwrap()
    }

    fn cos_cfg(tau: f64) -> LossConfig {
        LossConfig::new(tau, 0.0, SimilarityMode::Cosine).unwrap()
    }

    /// Literal walk over the 2N×2N grid, classifying each cell on the fly.
    fn mio_grid_oracle(z: &Mat64, cfg: &LossConfig) -> f64 {
        let v = z.rows();
        let n = v / 2;
        let t_p = (2 * n) as f64;
        let t_n = (4 * n * n - 4 * n) as f64;
        let sim = |i: usize, j: usize| {
            let (a, b) = (z.row(i), z.row(j));
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            match cfg.mode {
                SimilarityMode::Dot => d,
                SimilarityMode::Cosine => {
                    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                    d / (na * nb)
                }
            }
        };
        let mut pos = 0.0;
        let mut neg = 0.0;
        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                let p = 1.0 / (1.0 + (-sim(i, j) / cfg.tau).exp());
                if i / 2 == j / 2 {
                    pos -= p.ln();
                } else {
                    neg -= (1.0 - p).ln();
                }
            }
        }
        pos / t_p + if t_n > 0.0 { neg / t_n } else { 0.0 }
    }

    fn infonce_grid_oracle(z: &Mat64, cfg: &LossConfig) -> f64 {
        let v = z.rows();
        let sim = |i: usize, j: usize| -> f64 {
            let d: f64 = z.row(i).iter().zip(z.row(j)).map(|(x, y)| x * y).sum();
            match cfg.mode {
                SimilarityMode::Dot => d,
                SimilarityMode::Cosine => {
                    let na: f64 = z.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nb: f64 = z.row(j).iter().map(|x| x * x).sum::<f64>().sqrt();
                    d / (na * nb)
                }
            }
        };
        let mut total = 0.0;
        for a in 0..v {
            let p = a ^ 1;
            let num = (sim(a, p) / cfg.tau).exp();
            let mut den = 0.0;
            for j in 0..v {
                if j != a {
                    den += (sim(a, j) / cfg.tau).exp();
                }
            }
            total -= (num / den).ln();
        }
        total / v as f64
    }

    #[test]
    fn mio_single_pair_zero_similarity_is_ln2() {
        let z = Mat64::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let pairs = build_pairs(1).unwrap();
        let r = mio_loss(&z, &pairs, &dot_cfg(1.0)).unwrap();
        assert!((r.value - LN_2).abs() < 1e-15);
        assert!(r.grad_z.is_none());
    }

    #[test]
    fn mio_identical_unit_pair_cosine() {
        let z = Mat64::new(2, 3, vec![0.6, 0.8, 0.0, 0.6, 0.8, 0.0]).unwrap();
        let pairs = build_pairs(1).unwrap();
        let r = mio_loss(&z, &pairs, &cos_cfg(1.0)).unwrap();
        // −ln σ(1) = ln(1 + e^{-1}), 50-digit reference.
        let expected = 0.313_261_687_518_222_834_048_995_494_967_855_6;
        assert!((r.value - expected).abs() < 1e-15, "{}", r.value);
    }

    #[test]
    fn mio_matches_grid_oracle() {
        for (n, seed) in [(2, 1), (3, 2), (4, 3)] {
            let z = random_batch(n, 5, seed);
            let pairs = build_pairs(n).unwrap();
            for cfg in [dot_cfg(1.0), dot_cfg(0.5), cos_cfg(0.5)] {
                let got = mio_loss(&z, &pairs, &cfg).unwrap().value;
                let want = mio_grid_oracle(&z, &cfg);
                assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn infonce_matches_grid_oracle() {
        let z = random_batch(4, 6, 17);
        let pairs = build_pairs(4).unwrap();
        for cfg in [dot_cfg(1.0), cos_cfg(0.5)] {
            let got = infonce_loss(&z, &pairs, &cfg).unwrap().value;
            let want = infonce_grid_oracle(&z, &cfg);
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn infonce_uniform_similarities() {
        // Identical vectors give every logit the same value.
        for n in [2usize, 3, 5] {
            let z = Mat64::from_fn(2 * n, 3, |_, c| [0.2, -0.4, 0.9][c]);
            let pairs = build_pairs(n).unwrap();
            let r = infonce_loss(&z, &pairs, &dot_cfg(0.7)).unwrap();
            let want = ((2 * n - 1) as f64).ln();
            assert!((r.value - want).abs() < 1e-13);
        }
        let z = Mat64::from_fn(4, 2, |_, _| 1.0);
        let r = infonce_loss(&z, &build_pairs(2).unwrap(), &dot_cfg(1.0)).unwrap();
        assert!((r.value - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn infonce_saturated_positive() {
        // Partners identical, scaled so C_pos/τ = 50; negatives orthogonal.
        let n = 3;
        let d = 2 * n;
        let s = 50f64.sqrt();
        let z = Mat64::from_fn(2 * n, d, |r, c| if c == r / 2 { s } else { 0.0 });
        let pairs = build_pairs(n).unwrap();
        let r = infonce_grad_z(&z, &pairs, &dot_cfg(1.0)).unwrap();
        assert!(r.value < 1e-20);
        assert!(r.grad().as_slice().iter().all(|g| g.abs() < 1e-18));
    }

    #[test]
    fn infonce_rejects_single_sample() {
        let z = random_batch(1, 3, 0);
        let pairs = build_pairs(1).unwrap();
        assert!(infonce_loss(&z, &pairs, &dot_cfg(1.0)).is_err());
    }

    #[test]
    fn cosine_mode_rejects_zero_vector() {
        let mut z = random_batch(2, 3, 4);
        z.row_mut(3).fill(0.0);
        let err = mio_loss(&z, &build_pairs(2).unwrap(), &cos_cfg(0.5)).unwrap_err();
        assert!(matches!(err, Error::DegenerateVector { index: 3, .. }));
    }

    #[test]
    fn mio_zero_similarity_gradient_matches_hand_form() {
        // Orthonormal rows: every C_ij = 0, σ = 1/2.
        let n = 3;
        let v = 2 * n;
        let z = Mat64::identity(v);
        let pairs = build_pairs(n).unwrap();
        let cfg = dot_cfg(1.0);
        let per_anchor = mio_displacement_per_anchor(&z, &pairs, &cfg).unwrap();
        let full = mio_grad_z(&z, &pairs, &cfg).unwrap();
        let t_p = v as f64;
        for o in 0..v {
            for m in 0..v {
                let p = o ^ 1;
                let neg_sum: f64 = (0..v)
                    .filter(|&i| i != o && i != p)
                    .map(|i| z.get(i, m))
                    .sum();
                let hand = -(0.5 * z.get(p, m) - 0.5 * neg_sum / (t_p - 2.0)) / t_p;
                assert!((per_anchor.get(o, m) - hand).abs() < 1e-15);
                assert!((full.grad().get(o, m) - 2.0 * hand).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cosine_gradient_is_tangential() {
        let z = random_batch(4, 6, 9);
        let pairs = build_pairs(4).unwrap();
        for r in [
            mio_grad_z(&z, &pairs, &cos_cfg(0.5)).unwrap(),
            infonce_grad_z(&z, &pairs, &cos_cfg(0.5)).unwrap(),
        ] {
            for o in 0..z.rows() {
                let radial = dot_unchecked(r.grad().row(o), z.row(o));
                assert!(radial.abs() < 1e-15, "{radial}");
            }
        }
    }

    #[test]
    fn l2_reg_examples() {
        let pairs = build_pairs(1).unwrap();
        let same = Mat64::new(2, 2, vec![0.3, 0.4, 0.3, 0.4]).unwrap();
        let r = l2_reg(&same, &pairs, 1.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad().as_slice().iter().all(|&g| g == 0.0));

        let ortho = Mat64::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(l2_reg(&ortho, &pairs, 1.0).unwrap().value, 2.0);
        assert!(l2_reg(&ortho, &pairs, -1.0).is_err());
    }

    #[test]
    fn mio_l2_with_zero_lambda_is_bit_identical() {
        let z = random_batch(3, 4, 5);
        let pairs = build_pairs(3).unwrap();
        let cfg = cos_cfg(0.5);
        let a = mio_grad_z(&z, &pairs, &cfg).unwrap();
        let b = mio_l2_loss(&z, &pairs, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.grad_z, b.grad_z);
    }

    #[test]
    fn mio_l2_identical_positives_equals_mio() {
        let mut z = random_batch(3, 4, 6);
        for k in 0..3 {
            let row = z.row(2 * k).to_vec();
            z.row_mut(2 * k + 1).copy_from_slice(&row);
        }
        let pairs = build_pairs(3).unwrap();
        let cfg = LossConfig::new(0.5, 1.0, SimilarityMode::Cosine).unwrap();
        let base = mio_loss(&z, &pairs, &cfg).unwrap().value;
        assert_eq!(mio_l2_loss(&z, &pairs, &cfg).unwrap().value, base);
    }

    #[test]
    fn influence_factor_examples() {
        let q = influence_factor(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[2.0, 0.0]).unwrap();
        assert_eq!(q, vec![2.0, 2.0]);
        let zero = influence_factor(&[1.0, 2.0], &[3.0, 4.0], &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        let ab = influence_factor(&[0.1, -0.2], &[0.5, 0.7], &[1.0, 2.0], &[0.5, 0.0]).unwrap();
        let ba = influence_factor(&[0.5, 0.7], &[0.1, -0.2], &[0.5, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(ab, ba);
        assert!(influence_factor(&[1.0], &[1.0, 2.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn projector_grad_requires_paper_setting() {
        let z = random_batch(2, 3, 1);
        let h = random_batch(2, 4, 2);
        let pairs = build_pairs(2).unwrap();
        assert!(matches!(
            projector_grad_mio(&z, &h, &pairs, &cos_cfg(1.0)),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            projector_grad_infonce(&z, &h, &pairs, &dot_cfg(0.5)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn projector_grads_vanish_with_zero_hidden() {
        let z = random_batch(2, 3, 1);
        let h = Mat64::zeros(4, 5);
        let pairs = build_pairs(2).unwrap();
        let cfg = dot_cfg(1.0);
        assert!(projector_grad_mio(&z, &h, &pairs, &cfg)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        assert!(projector_grad_infonce(&z, &h, &pairs, &cfg)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn projector_grad_mio_saturates() {
        // Positives at C = +50, negatives at C = −50.
        let n = 2;
        let s = 5.0;
        let z = Mat64::from_fn(4, 2, |r, _| if r < 2 { s } else { -s });
        let pairs = build_pairs(n).unwrap();
        let h = Mat64::from_fn(4, 3, |r, c| (r + c) as f64 * 0.1);
        let g = projector_grad_mio(&z, &h, &pairs, &dot_cfg(1.0)).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-18), "{g:?}");
    }

    #[test]
    fn projector_grad_infonce_uniform_similarities() {
        let n = 2;
        let z = Mat64::from_fn(4, 2, |_, c| [0.3, 0.1][c]);
        let h = Mat64::from_fn(4, 3, |r, c| ((r * 3 + c) % 5) as f64 * 0.25);
        let pairs = build_pairs(n).unwrap();
        let g = projector_grad_infonce(&z, &h, &pairs, &dot_cfg(1.0)).unwrap();
        let mut want = [0.0; 2];
        for j in 0..4 {
            let cands: Vec<usize> = (0..4).filter(|&i| i != j).collect();
            let qk = influence_factor(z.row(j), z.row(j ^ 1), h.row(j), h.row(j ^ 1)).unwrap();
            for m in 0..2 {
                let avg: f64 = cands
                    .iter()
                    .map(|&i| influence_factor(z.row(j), z.row(i), h.row(j), h.row(i)).unwrap()[m])
                    .sum::<f64>()
                    / cands.len() as f64;
                want[m] -= (qk[m] - avg) / 4.0;
            }
        }
        for m in 0..2 {
            assert!((g[m] - want[m]).abs() < 1e-14);
        }
    }
}
