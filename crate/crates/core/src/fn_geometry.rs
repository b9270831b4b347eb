//! Planar model of sampled false negatives around a class centroid: the
//! chance of drawing them symmetrically, the weighted resultant they pull
//! towards, and how far that resultant deviates from the centroid
//! direction.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{pairwise_sum_by, Rng};
use crate::par;

/// Radii are redrawn until they fall within this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

/// How the per-sample prediction weights `p_i ∈ [0, 1]` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum WeightMode {
    /// Every sample gets the same weight.
    Uniform(f64),
    /// Independent `U[0, 1]` weights.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub centroid: (f64, f64),
    pub sigma: f64,
    pub eta: usize,
    pub t_p: usize,
    pub weight_mode: WeightMode,
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let (x, y) = self.centroid;
        if !(x.is_finite() && y.is_finite()) || x.hypot(y) == 0.0 {
            return Err(Error::domain("centroid must be finite and non-zero"));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::domain(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if self.t_p < 3 {
            return Err(Error::domain(format!(
                "t_p must be at least 3, got {}",
                self.t_p
            )));
        }
        if self.eta == 0 || self.eta > self.t_p - 2 {
            return Err(Error::domain(format!(
                "eta must be in [1, t_p - 2 = {}], got {}",
                self.t_p - 2,
                self.eta
            )));
        }
        if let WeightMode::Uniform(p) = self.weight_mode {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!(
                    "uniform weight must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }

    fn normalizer(&self) -> f64 {
        (self.t_p - 2) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryTrial {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    pub weights: Vec<f64>,
    /// `(x', y')`, the weighted resultant of the sampled positions.
    pub resultant: (f64, f64),
    /// Centroid part of the resultant, `(Σp_i / (T_P − 2)) · centroid`.
    pub a: (f64, f64),
    /// Magnitude of the spread part of the resultant.
    pub b: f64,
    /// Direction of the spread part, in `(−π, π]`.
    pub theta: f64,
    /// Angle from the centroid direction to the resultant, in `(−π, π]`.
    pub phi: f64,
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Builds a trial from explicit polar offsets and weights.
pub fn trial_from_samples(
    cfg: &GeometryConfig,
    radii: Vec<f64>,
    angles: Vec<f64>,
    weights: Vec<f64>,
) -> Result<GeometryTrial> {
    cfg.validate()?;
    ensure_dim("trial radii", cfg.eta, radii.len())?;
    ensure_dim("trial angles", cfg.eta, angles.len())?;
    ensure_dim("trial weights", cfg.eta, weights.len())?;
    let norm = cfg.normalizer();
    let (x_o, y_o) = cfg.centroid;
    let n = cfg.eta;

    let x_res = pairwise_sum_by(n, |i| weights[i] * (x_o + radii[i] * angles[i].cos())) / norm;
    let y_res = pairwise_sum_by(n, |i| weights[i] * (y_o + radii[i] * angles[i].sin())) / norm;
    let weight_share = pairwise_sum_by(n, |i| weights[i]) / norm;
    let b_x = pairwise_sum_by(n, |i| weights[i] * radii[i] * angles[i].cos()) / norm;
    let b_y = pairwise_sum_by(n, |i| weights[i] * radii[i] * angles[i].sin()) / norm;

    Ok(GeometryTrial {
        resultant: (x_res, y_res),
        a: (weight_share * x_o, weight_share * y_o),
        b: b_x.hypot(b_y),
        theta: b_y.atan2(b_x),
        phi: wrap_angle(y_res.atan2(x_res) - y_o.atan2(x_o)),
        radii,
        angles,
        weights,
    })
}

fn truncated_radius(rng: &mut Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let r = sigma * rng.standard_normal();
        if r.abs() <= TRUNCATION_SIGMAS * sigma {
            return r;
        }
    }
}

/// Draws one set of `eta` false negatives and evaluates the resultant.
pub fn run_trial(cfg: &GeometryConfig, rng: &mut Rng) -> Result<GeometryTrial> {
    cfg.validate()?;
    let mut radii = Vec::with_capacity(cfg.eta);
    let mut angles = Vec::with_capacity(cfg.eta);
    let mut weights = Vec::with_capacity(cfg.eta);
    for _ in 0..cfg.eta {
        radii.push(truncated_radius(rng, cfg.sigma));
        angles.push(rng.uniform_range(0.0, 2.0 * PI));
        weights.push(match cfg.weight_mode {
            WeightMode::Uniform(p) => p,
            WeightMode::Random => rng.uniform(),
        });
    }
    trial_from_samples(cfg, radii, angles, weights)
}

/// Runs `trials` trials, trial `t` drawing from substream `t` of `rng`.
pub fn monte_carlo_trials(
    cfg: &GeometryConfig,
    trials: usize,
    rng: &Rng,
) -> Result<Vec<GeometryTrial>> {
    cfg.validate()?;
    par::try_map_indexed(trials, |t| run_trial(cfg, &mut rng.split(t as u64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiStats {
    pub trials: usize,
    pub mean_abs_phi: f64,
    pub max_abs_phi: f64,
    /// Fraction of trials with `cos φ > 0`.
    pub frac_cos_positive: f64,
}

impl PhiStats {
    pub fn from_phis(phis: &[f64]) -> Result<Self> {
        if phis.is_empty() {
            return Err(Error::domain("at least one trial is required"));
        }
        let n = phis.len();
        let positive = phis.iter().filter(|p| p.cos() > 0.0).count();
        Ok(Self {
            trials: n,
            mean_abs_phi: pairwise_sum_by(n, |i| phis[i].abs()) / n as f64,
            max_abs_phi: phis.iter().fold(0.0, |m, p| m.max(p.abs())),
            frac_cos_positive: positive as f64 / n as f64,
        })
    }
}

/// Aggregates `trials` trials with the same substreams as
/// [`monte_carlo_trials`], keeping only the deviation angles.
pub fn monte_carlo_phi(cfg: &GeometryConfig, trials: usize, rng: &Rng) -> Result<PhiStats> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    let phis = par::try_map_indexed(trials, |t| {
        run_trial(cfg, &mut rng.split(t as u64)).map(|tr| tr.phi)
    })?;
    PhiStats::from_phis(&phis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSign {
    Positive,
    Negative,
    /// `x_o² = y_o²`; the case table does not cover it.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiCase {
    pub q_sign: QSign,
    /// 0 when `Θ` lies below the `π/2 − arctan(y_o/x_o)` boundary, else 1.
    pub xi: u8,
    /// Closed-form deviation with the centroid term neglected.
    pub predicted_phi: f64,
}

/// Case-table lookup for a centroid `(x_o, y_o)` and spread direction `Θ`.
///
/// The table is written for `B sin Θ ≥ 0`, i.e. `Θ ∈ [0, π]`. Directions in
/// `(−π, 0)` are handled by reflecting across the x-axis, which negates both
/// `Θ` and `arctan(y_o/x_o)` and hence the prediction.
pub fn classify_phi_case(x_o: f64, y_o: f64, theta: f64) -> Result<PhiCase> {
    if x_o == 0.0 {
        return Err(Error::domain("x_o = 0 leaves the case split undefined"));
    }
    if !(x_o.is_finite() && y_o.is_finite() && theta.is_finite()) {
        return Err(Error::domain("classify_phi_case inputs must be finite"));
    }
    let diff = x_o * x_o - y_o * y_o;
    let q_sign = if diff.abs() <= 1e-12 * (x_o * x_o + y_o * y_o) {
        QSign::Degenerate
    } else if diff / x_o > 0.0 {
        QSign::Positive
    } else {
        QSign::Negative
    };
    let theta = wrap_angle(theta);
    let alpha = (y_o / x_o).atan();
    let (t, a, sign) = if theta < 0.0 {
        (-theta, -alpha, -1.0)
    } else {
        (theta, alpha, 1.0)
    };
    let xi = u8::from(t >= FRAC_PI_2 - a);
    let phi = if xi == 0 { t + a } else { -PI + t + a };
    Ok(PhiCase {
        q_sign,
        xi,
        predicted_phi: sign * phi,
    })
}

/// Inputs of the symmetric false-negative selection probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricFnProbabilityInput {
    pub batch_size: u64,
    pub num_classes: u64,
    pub samples_per_class: u64,
}

impl SymmetricFnProbabilityInput {
    pub fn new(batch_size: u64, num_classes: u64, samples_per_class: u64) -> Result<Self> {
        let inp = Self {
            batch_size,
            num_classes,
            samples_per_class,
        };
        inp.validate()?;
        Ok(inp)
    }

    /// Rounds `batch_size` to the nearest positive multiple of `num_classes`
    /// (ties upward) so the uniform-per-class premise can hold.
    pub fn rounded(batch_size: u64, num_classes: u64, samples_per_class: u64) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::domain("num_classes must be positive"));
        }
        let per_class = ((batch_size + num_classes / 2) / num_classes).max(1);
        Self::new(per_class * num_classes, num_classes, samples_per_class)
    }

    pub fn validate(&self) -> Result<()> {
        let (b, c, n) = (self.batch_size, self.num_classes, self.samples_per_class);
        if b == 0 || c == 0 || n == 0 {
            return Err(Error::domain(
                "batch_size, num_classes and samples_per_class must be positive",
            ));
        }
        if b % c != 0 {
            return Err(Error::domain(format!(
                "num_classes {c} does not divide batch_size {b}"
            )));
        }
        if b / c > n {
            return Err(Error::domain(format!(
                "cannot draw {} samples per class from {n}",
                b / c
            )));
        }
        Ok(())
    }

    fn base_and_exponent(&self) -> (f64, u64) {
        let base =
            self.batch_size as f64 / (self.samples_per_class as f64 * self.num_classes as f64);
        (base, self.batch_size / self.num_classes)
    }
}

/// `(B / (N_C · |C|))^(B / |C|)`.
pub fn symmetric_fn_probability(inp: &SymmetricFnProbabilityInput) -> Result<f64> {
    inp.validate()?;
    let (base, exponent) = inp.base_and_exponent();
    if exponent <= 64 {
        Ok(base.powi(exponent as i32))
    } else {
        Ok((exponent as f64 * base.ln()).exp())
    }
}

/// Natural log of [`symmetric_fn_probability`], finite even when the
/// probability underflows.
pub fn ln_symmetric_fn_probability(inp: &SymmetricFnProbabilityInput) -> Result<f64> {
    inp.validate()?;
    let (base, exponent) = inp.base_and_exponent();
    Ok(exponent as f64 * base.ln())
}
