//! Exact enumeration of the MIO loss and the information quantities that
//! bound it, on small discrete alphabets where every expectation is a
//! finite sum.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{log_sigmoid_unchecked, pairwise_sum_by, Mat64, Rng};

/// Joint cells with zero probability map to this score.
pub const SCORE_FLOOR: f64 = 1e-300;

const SUM_TOLERANCE: f64 = 1e-12;

/// A joint distribution over pairs drawn from a `k`-letter alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    joint: Mat64,
    marginal: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(joint: Mat64) -> Result<Self> {
        let k = joint.rows();
        if k == 0 || joint.cols() != k {
            return Err(Error::domain(format!(
                "joint must be a non-empty square matrix, got {}x{}",
                joint.rows(),
                joint.cols()
            )));
        }
        if let Some(&bad) = joint
            .as_slice()
            .iter()
            .find(|p| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::domain(format!(
                "joint entries must be finite and >= 0, got {bad}"
            )));
        }
        let total = pairwise_sum_by(k * k, |i| joint.as_slice()[i]);
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::domain(format!("joint must sum to 1, got {total}")));
        }
        let marginal = joint
            .iter_rows()
            .map(|r| pairwise_sum_by(k, |b| r[b]))
            .collect();
        Ok(Self { joint, marginal })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Mat64::from_rows(rows)?)
    }

    /// Product of a marginal with itself.
    pub fn independent(marginal: &[f64]) -> Result<Self> {
        let k = marginal.len();
        Self::new(Mat64::from_fn(k, k, |a, b| marginal[a] * marginal[b]))
    }

    /// Both elements of the pair always equal, each letter with mass `1/k`.
    pub fn perfectly_correlated_uniform(k: usize) -> Result<Self> {
        Self::new(Mat64::from_fn(k, k, |a, b| {
            if a == b {
                1.0 / k as f64
            } else {
                0.0
            }
        }))
    }

    /// Joint drawn from a flat Dirichlet over all `k²` cells.
    pub fn random_dirichlet(k: usize, rng: &mut Rng) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("alphabet size must be at least 1"));
        }
        // Normalized Exp(1) draws are Dirichlet(1, ..., 1).
        let draws: Vec<f64> = (0..k * k).map(|_| -(1.0 - rng.uniform()).ln()).collect();
        let total = pairwise_sum_by(draws.len(), |i| draws[i]);
        Self::new(Mat64::new(
            k,
            k,
            draws.into_iter().map(|x| x / total).collect(),
        )?)
    }

    pub fn k(&self) -> usize {
        self.marginal.len()
    }

    pub fn joint(&self) -> &Mat64 {
        &self.joint
    }

    /// Row sums of the joint.
    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    fn require_positive_marginals(&self) -> Result<()> {
        match self.marginal.iter().position(|&r| r <= 0.0) {
            Some(a) => Err(Error::domain(format!("marginal of letter {a} is zero"))),
            None => Ok(()),
        }
    }

    fn product(&self, a: usize, b: usize) -> f64 {
        self.marginal[a] * self.marginal[b]
    }

    fn sum_cells(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let k = self.k();
        pairwise_sum_by(k * k, |i| f(i / k, i % k))
    }
}

/// Strictly positive pair scores, one per ordered letter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    scores: Mat64,
}

impl ScoreTable {
    pub fn new(scores: Mat64) -> Result<Self> {
        if scores.rows() != scores.cols() {
            return Err(Error::domain("score table must be square"));
        }
        if let Some(&bad) = scores
            .as_slice()
            .iter()
            .find(|s| !(**s > 0.0) || s.is_nan())
        {
            return Err(Error::domain(format!("scores must be > 0, got {bad}")));
        }
        Ok(Self { scores })
    }

    pub fn k(&self) -> usize {
        self.scores.rows()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.scores.get(a, b)
    }

    pub fn as_matrix(&self) -> &Mat64 {
        &self.scores
    }
}

/// `I = Σ p ln(p / (r_a r_b))` in nats, with `0 ln 0 = 0`.
pub fn mutual_information(j: &DiscreteJoint) -> Result<f64> {
    Ok(j.sum_cells(|a, b| {
        let p = j.joint.get(a, b);
        if p == 0.0 {
            0.0
        } else {
            p * (p / j.product(a, b)).ln()
        }
    })
    .max(0.0))
}

fn ratio(j: &DiscreteJoint, a: usize, b: usize) -> f64 {
    let p = j.joint.get(a, b);
    if p == 0.0 {
        SCORE_FLOOR
    } else {
        p / j.product(a, b)
    }
}

/// Density-ratio scores `p(a, b) / (r_a r_b)`.
pub fn plug_in_scores(j: &DiscreteJoint) -> Result<ScoreTable> {
    j.require_positive_marginals()?;
    let k = j.k();
    ScoreTable::new(Mat64::from_fn(k, k, |a, b| ratio(j, a, b)))
}

/// The two halves of the expected loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedLossTerms {
    /// `−E_{p}[ln(s / (1 + s))]`.
    pub positive: f64,
    /// `−E_{r⊗r}[ln(1 / (1 + s))]`.
    pub negative: f64,
}

pub fn expected_mio_loss_terms(j: &DiscreteJoint, s: &ScoreTable) -> Result<ExpectedLossTerms> {
    ensure_dim("score table size", j.k(), s.k())?;
    let positive = -j.sum_cells(|a, b| {
        let p = j.joint.get(a, b);
        if p == 0.0 {
            0.0
        } else {
            p * log_sigmoid_unchecked(s.get(a, b).ln())
        }
    });
    let negative = -j.sum_cells(|a, b| {
        let q = j.product(a, b);
        if q == 0.0 {
            0.0
        } else {
            q * log_sigmoid_unchecked(-s.get(a, b).ln())
        }
    });
    Ok(ExpectedLossTerms { positive, negative })
}

/// Expected MIO loss when positives follow the joint and negatives follow
/// the product of marginals, with posterior `s / (1 + s)`.
pub fn expected_mio_loss(j: &DiscreteJoint, s: &ScoreTable) -> Result<f64> {
    let t = expected_mio_loss_terms(j, s)?;
    Ok(t.positive + t.negative)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub loss: f64,
    pub i_pos: f64,
    /// `E_{r⊗r}[ln(p / (r_a r_b))]`, which equals `−KL(r⊗r ‖ p)`.
    pub i_neg_tilde: f64,
    /// `loss − (−i_pos + i_neg_tilde)`; non-negative when the bound holds.
    pub slack: f64,
}

/// Evaluates both sides of `loss ≥ −I_pos + Ĩ_neg` with plug-in scores.
pub fn verify_bound(j: &DiscreteJoint) -> Result<BoundReport> {
    let scores = plug_in_scores(j)?;
    let loss = expected_mio_loss(j, &scores)?;
    let i_pos = mutual_information(j)?;
    let i_neg_tilde = j.sum_cells(|a, b| j.product(a, b) * ratio(j, a, b).ln());
    Ok(BoundReport {
        loss,
        i_pos,
        i_neg_tilde,
        slack: loss - (-i_pos + i_neg_tilde),
    })
}
