//! Monte-Carlo deviation angles of sampled false negatives.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use miolab_core::fn_geometry::{
    monte_carlo_phi, monte_carlo_trials, GeometryConfig, PhiStats, WeightMode, TRUNCATION_SIGMAS,
};
use miolab_core::Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_beside, write_manifest};

#[derive(Debug, Clone, Serialize)]
pub struct GeometryOptions {
    pub centroid: (f64, f64),
    pub sigma: f64,
    pub t_p: usize,
    pub weights: WeightMode,
    pub etas: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub trials_out: Option<PathBuf>,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            centroid: (10.0, 0.0),
            sigma: 1.0,
            t_p: 256,
            weights: WeightMode::Uniform(1.0),
            etas: vec![4, 8, 16, 32],
            trials: 100_000,
            seed: 0,
            out: None,
            trials_out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaRow {
    pub eta: usize,
    pub trials: usize,
    pub mean_abs_phi: f64,
    pub max_abs_phi: f64,
    pub frac_cos_positive: f64,
}

#[derive(Serialize)]
struct TrialRow {
    eta: usize,
    trial: usize,
    mean_radius: f64,
    b: f64,
    theta: f64,
    phi: f64,
}

impl GeometryOptions {
    fn config(&self, eta: usize) -> GeometryConfig {
        GeometryConfig {
            centroid: self.centroid,
            sigma: self.sigma,
            eta,
            t_p: self.t_p,
            weight_mode: self.weights,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.etas.is_empty() {
            return Err(CliError::usage("geometry: at least one eta is required"));
        }
        if self.trials == 0 {
            return Err(CliError::usage("geometry: trials must be at least 1"));
        }
        for &eta in &self.etas {
            self.config(eta)
                .validate()
                .map_err(|e| CliError::usage(format!("geometry: {e}")))?;
        }
        Ok(())
    }

    /// Whether the sampled positions provably stay on the centroid's side:
    /// the spread part is at most `TRUNCATION_SIGMAS · σ` times the weight
    /// share, the centroid part is `‖c‖` times it.
    pub fn in_regime(&self) -> bool {
        self.centroid.0.hypot(self.centroid.1) > TRUNCATION_SIGMAS * self.sigma
    }
}

pub fn sweep(opts: &GeometryOptions) -> CliResult<Vec<EtaRow>> {
    opts.validate()?;
    let rng = Rng::new(opts.seed, 0);
    opts.etas
        .iter()
        .map(|&eta| {
            let PhiStats {
                trials,
                mean_abs_phi,
                max_abs_phi,
                frac_cos_positive,
            } = monte_carlo_phi(&opts.config(eta), opts.trials, &rng)?;
            Ok(EtaRow {
                eta,
                trials,
                mean_abs_phi,
                max_abs_phi,
                frac_cos_positive,
            })
        })
        .collect()
}

/// Failed regime checks, empty when everything holds.
pub fn regime_failures(opts: &GeometryOptions, rows: &[EtaRow]) -> Vec<String> {
    let mut failures = Vec::new();
    if !opts.in_regime() {
        return failures;
    }
    for r in rows {
        if r.frac_cos_positive != 1.0 {
            failures.push(format!(
                "eta={}: frac_cos_positive = {} < 1",
                r.eta, r.frac_cos_positive
            ));
        }
        if !(r.max_abs_phi < FRAC_PI_2) {
            failures.push(format!(
                "eta={}: max_abs_phi = {} >= pi/2",
                r.eta, r.max_abs_phi
            ));
        }
    }
    if opts.sigma == 0.0 {
        if let Some(r) = rows.iter().find(|r| r.max_abs_phi != 0.0) {
            failures.push(format!(
                "eta={}: sigma = 0 but max_abs_phi = {}",
                r.eta, r.max_abs_phi
            ));
        }
    } else {
        let mut sorted: Vec<&EtaRow> = rows.iter().collect();
        sorted.sort_by_key(|r| r.eta);
        for w in sorted.windows(2) {
            if w[0].eta < w[1].eta && !(w[1].mean_abs_phi < w[0].mean_abs_phi) {
                failures.push(format!(
                    "mean_abs_phi does not decrease from eta={} ({}) to eta={} ({})",
                    w[0].eta, w[0].mean_abs_phi, w[1].eta, w[1].mean_abs_phi
                ));
            }
        }
    }
    failures
}

pub fn run(opts: &GeometryOptions) -> CliResult<String> {
    opts.validate()?;
    if let Some(path) = &opts.out {
        let cfg = serde_json::to_vec(opts).expect("options serialize");
        write_manifest(&manifest_beside(path), "geometry", &cfg, opts.seed)?;
    }
    let rows = sweep(opts)?;
    if let Some(path) = &opts.out {
        let mut w = csv::Writer::from_path(path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &opts.trials_out {
        let mut w = csv::Writer::from_path(path)?;
        let rng = Rng::new(opts.seed, 0);
        for &eta in &opts.etas {
            for (t, tr) in monte_carlo_trials(&opts.config(eta), opts.trials, &rng)?
                .iter()
                .enumerate()
            {
                w.serialize(TrialRow {
                    eta,
                    trial: t,
                    mean_radius: tr.radii.iter().sum::<f64>() / tr.radii.len() as f64,
                    b: tr.b,
                    theta: tr.theta,
                    phi: tr.phi,
                })?;
            }
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }

    let mut report = String::from("eta  mean_abs_phi  max_abs_phi  frac_cos_positive\n");
    for r in &rows {
        report.push_str(&format!(
            "{:<4} {:>12.6e} {:>12.6e} {:>18}\n",
            r.eta, r.mean_abs_phi, r.max_abs_phi, r.frac_cos_positive
        ));
    }
    if !opts.in_regime() {
        report.push_str("centroid is within the truncation radius; regime checks skipped\n");
    }
    let failures = regime_failures(opts, &rows);
    if !failures.is_empty() {
        return Err(CliError::check(format!(
            "{report}regime check failed:\n  {}",
            failures.join("\n  ")
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zero_angles() {
        let opts = GeometryOptions {
            sigma: 0.0,
            trials: 50,
            ..GeometryOptions::default()
        };
        let rows = sweep(&opts).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.max_abs_phi == 0.0 && r.frac_cos_positive == 1.0));
        assert!(regime_failures(&opts, &rows).is_empty());
    }

    #[test]
    fn non_monotone_sweep_is_flagged() {
        let opts = GeometryOptions::default();
        let rows = [
            EtaRow {
                eta: 4,
                trials: 1,
                mean_abs_phi: 0.1,
                max_abs_phi: 0.2,
                frac_cos_positive: 1.0,
            },
            EtaRow {
                eta: 8,
                trials: 1,
                mean_abs_phi: 0.2,
                max_abs_phi: 0.3,
                frac_cos_positive: 1.0,
            },
        ];
        assert_eq!(regime_failures(&opts, &rows).len(), 1);
    }

    #[test]
    fn invalid_eta_is_a_usage_error() {
        let opts = GeometryOptions {
            etas: vec![300],
            ..GeometryOptions::default()
        };
        assert_eq!(run(&opts).unwrap_err().exit_code(), 2);
    }
}
