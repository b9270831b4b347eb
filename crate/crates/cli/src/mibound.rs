//! Sweeps of the loss / mutual-information bound over random joints.

use std::path::PathBuf;

use miolab_core::mi_oracle::{verify_bound, DiscreteJoint};
use miolab_core::Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_beside, write_manifest};

/// Smallest slack still counted as the bound holding.
pub const SLACK_TOLERANCE: f64 = -1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct MiboundOptions {
    pub ks: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub k: usize,
    /// `independent` (uniform marginals) or `dirichlet`.
    pub joint: &'static str,
    pub trial: usize,
    pub loss: f64,
    pub i_pos: f64,
    pub i_neg_tilde: f64,
    pub slack: f64,
}

fn validate(opts: &MiboundOptions) -> CliResult<()> {
    if opts.ks.is_empty() {
        return Err(CliError::usage("mibound: at least one k is required"));
    }
    if let Some(k) = opts.ks.iter().find(|&&k| k < 2) {
        return Err(CliError::usage(format!(
            "mibound: k = {k} is a degenerate alphabet; k must be at least 2"
        )));
    }
    Ok(())
}

pub fn rows(opts: &MiboundOptions) -> CliResult<Vec<BoundRow>> {
    validate(opts)?;
    let mut out = Vec::new();
    for &k in &opts.ks {
        let row = |joint, trial, j: &DiscreteJoint| -> CliResult<BoundRow> {
            let r = verify_bound(j)?;
            Ok(BoundRow {
                k,
                joint,
                trial,
                loss: r.loss,
                i_pos: r.i_pos,
                i_neg_tilde: r.i_neg_tilde,
                slack: r.slack,
            })
        };
        out.push(row(
            "independent",
            0,
            &DiscreteJoint::independent(&vec![1.0 / k as f64; k])?,
        )?);
        let mut rng = Rng::new(opts.seed, k as u64);
        for t in 0..opts.trials {
            out.push(row(
                "dirichlet",
                t,
                &DiscreteJoint::random_dirichlet(k, &mut rng)?,
            )?);
        }
    }
    Ok(out)
}

/// Writes the CSV and fails when any slack is negative.
pub fn run(opts: &MiboundOptions) -> CliResult<String> {
    validate(opts)?;
    if let Some(path) = &opts.out {
        let cfg = serde_json::to_vec(opts).expect("options serialize");
        write_manifest(&manifest_beside(path), "mibound", &cfg, opts.seed)?;
    }
    let rows = rows(opts)?;
    if let Some(path) = &opts.out {
        let mut w = csv::Writer::from_path(path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    let worst = rows
        .iter()
        .min_by(|a, b| a.slack.total_cmp(&b.slack))
        .expect("at least one row");
    let summary = format!(
        "{} joints checked; smallest slack {:.3e} (k={}, {} trial {})",
        rows.len(),
        worst.slack,
        worst.k,
        worst.joint,
        worst.trial
    );
    if !(worst.slack >= SLACK_TOLERANCE) {
        return Err(CliError::check(format!("bound violated: {summary}")));
    }
    Ok(summary)
}
