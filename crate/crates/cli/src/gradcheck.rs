//! Analytic loss gradients against central finite differences.

use std::fmt::Write as _;
use std::path::PathBuf;

use miolab_core::losses::{evaluate, evaluate_value, LossConfig, LossKind, SimilarityMode};
use miolab_core::model::{
    finite_diff_audit, forward, init_params, AuditConfig, ModelSpec, ModelState,
};
use miolab_core::numerics::{fd_relative_error, norm2};
use miolab_core::pairing::build_pairs;
use miolab_core::{Mat64, Rng};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MAX_N: usize = 16;
pub const MAX_D: usize = 64;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckOptions {
    pub losses: Vec<LossKind>,
    pub modes: Vec<SimilarityMode>,
    pub sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Tolerance for the whole-model audit, which runs through batch
    /// standardization.
    pub model_tolerance: f64,
    pub tau: f64,
    pub lambda: f64,
    pub model_audit: bool,
    /// Corrupts one analytic entry; the check must then fail.
    pub inject_fault: bool,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            losses: LossKind::ALL.to_vec(),
            modes: vec![SimilarityMode::Dot, SimilarityMode::Cosine],
            sizes: vec![2, 4, 8],
            dims: vec![4, 16],
            trials: 5,
            seed: 0,
            tolerance: 1e-6,
            model_tolerance: 1e-4,
            tau: 0.5,
            lambda: 0.3,
            model_audit: true,
            inject_fault: false,
            out: None,
        }
    }
}

/// One checked batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    /// `z` for the loss alone, `model` for the full encoder/projector.
    pub target: &'static str,
    pub loss: &'static str,
    pub mode: &'static str,
    pub n: usize,
    pub d: usize,
    pub trial: usize,
    pub seed: u64,
    pub max_rel_err: f64,
    /// Worst entry, `row:col` for `z` or the parameter name for `model`.
    pub coordinate: String,
    pub tolerance: f64,
    pub pass: bool,
}

fn mode_name(m: SimilarityMode) -> &'static str {
    match m {
        SimilarityMode::Dot => "dot",
        SimilarityMode::Cosine => "cosine",
    }
}

impl GradcheckOptions {
    pub fn validate(&self) -> CliResult<()> {
        if self.losses.is_empty()
            || self.modes.is_empty()
            || self.sizes.is_empty()
            || self.dims.is_empty()
        {
            return Err(CliError::usage(
                "gradcheck: losses, modes, sizes and dims must be non-empty",
            ));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n == 0 || n > MAX_N) {
            return Err(CliError::usage(format!(
                "gradcheck: size {n} is outside [1, {MAX_N}]"
            )));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d == 0 || d > MAX_D) {
            return Err(CliError::usage(format!(
                "gradcheck: dim {d} is outside [1, {MAX_D}]"
            )));
        }
        if self.losses.contains(&LossKind::Infonce) && self.sizes.contains(&1) {
            return Err(CliError::usage(
                "gradcheck: infonce is unsupported at N = 1 (no negatives)",
            ));
        }
        if self.trials == 0 {
            return Err(CliError::usage("gradcheck: trials must be at least 1"));
        }
        if !(self.tolerance > 0.0 && self.model_tolerance > 0.0) {
            return Err(CliError::usage("gradcheck: tolerances must be positive"));
        }
        LossConfig::new(self.tau, self.lambda, SimilarityMode::Dot)?;
        Ok(())
    }
}

/// Rows with i.i.d. `N(0, scale²)` entries.
fn random_batch(rows: usize, cols: usize, scale: f64, seed: u64) -> Mat64 {
    let mut rng = Rng::new(seed, 0);
    let data = (0..rows * cols)
        .map(|_| scale * rng.standard_normal())
        .collect();
    Mat64::new(rows, cols, data).expect("length matches")
}

/// Largest relative error between `analytic` and central differences of
/// `f`, with the coordinate where it occurs. The comparison floor scales
/// with `|f(z)|` because the quotient's rounding noise does.
fn compare_with_fd(
    z: &Mat64,
    analytic: &Mat64,
    f: impl Fn(&Mat64) -> CliResult<f64>,
) -> CliResult<(f64, usize, usize)> {
    let value = f(z)?;
    let mut worst = (0.0, 0, 0);
    let mut probe = z.clone();
    for r in 0..z.rows() {
        for c in 0..z.cols() {
            let base = z.get(r, c);
            probe.set(r, c, base + FD_STEP);
            let plus = f(&probe)?;
            probe.set(r, c, base - FD_STEP);
            let minus = f(&probe)?;
            probe.set(r, c, base);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = fd_relative_error(analytic.get(r, c), numeric, value);
            if !(err <= worst.0) {
                worst = (err, r, c);
            }
        }
    }
    Ok(worst)
}

fn trial_seed(base: u64, path: &[u64]) -> u64 {
    Rng::derive(base, path).next_u64()
}

pub fn run_trials(opts: &GradcheckOptions) -> CliResult<Vec<TrialRow>> {
    opts.validate()?;
    let mut rows = Vec::new();
    for (li, &loss) in opts.losses.iter().enumerate() {
        for (mi, &mode) in opts.modes.iter().enumerate() {
            let cfg = LossConfig::new(opts.tau, opts.lambda, mode)?;
            for &n in &opts.sizes {
                let pairs = build_pairs(n)?;
                for &d in &opts.dims {
                    for t in 0..opts.trials {
                        let seed = trial_seed(
                            opts.seed,
                            &[li as u64, mi as u64, n as u64, d as u64, t as u64],
                        );
                        let z = random_batch(2 * n, d, 1.0, seed);
                        let mut analytic = evaluate(loss, &z, &pairs, &cfg)?.grad().clone();
                        if opts.inject_fault && t == 0 {
                            let g = analytic.get(0, 0);
                            analytic.set(0, 0, g + 1e-3 * (1.0 + g.abs()));
                        }
                        let (err, r, c) = compare_with_fd(&z, &analytic, |p| {
                            Ok(evaluate_value(loss, p, &pairs, &cfg)?)
                        })?;
                        rows.push(TrialRow {
                            target: "z",
                            loss: loss.name(),
                            mode: mode_name(mode),
                            n,
                            d,
                            trial: t,
                            seed,
                            max_rel_err: err,
                            coordinate: format!("{r}:{c}"),
                            tolerance: opts.tolerance,
                            pass: err <= opts.tolerance,
                        });
                    }
                }
            }
            if opts.model_audit {
                rows.extend(model_audit(opts, li, mi, loss, &cfg)?);
            }
        }
    }
    Ok(rows)
}

/// Smallest ReLU input magnitude an audited model may have, in steps.
const KINK_MARGIN_STEPS: f64 = 100.0;

/// Draws parameters and an input batch from successive seeds until no
/// ReLU input is within reach of its kink and no output row vanishes. A
/// zero-initialized bias behind a row whose previous layer is entirely
/// dead sits exactly at 0; a fully dead projector row gives `z = 0`.
fn kink_free_draw(
    spec: &ModelSpec,
    rows: usize,
    seed_for: impl Fn(u64) -> u64,
) -> CliResult<(u64, ModelState, Mat64)> {
    for attempt in 0..100 {
        let seed = seed_for(attempt);
        let state = init_params(spec, seed)?;
        let x = random_batch(rows, spec.encoder.input_dim(), 1.0, seed);
        let trace = forward(&state, spec, &x)?;
        let clear = trace.relu_margin(spec) > KINK_MARGIN_STEPS * FD_STEP;
        if clear && trace.z().iter_rows().all(|r| norm2(r) > KINK_MARGIN_STEPS * FD_STEP) {
            return Ok((seed, state, x));
        }
    }
    Err(CliError::check("no kink-free model draw in 100 attempts"))
}

/// Every parameter of a small batch-standardized desk model.
fn model_audit(
    opts: &GradcheckOptions,
    li: usize,
    mi: usize,
    loss: LossKind,
    cfg: &LossConfig,
) -> CliResult<Vec<TrialRow>> {
    const N: usize = 4;
    const INPUT: usize = 6;
    let spec = ModelSpec::desk(INPUT, &[10], 8, &[8], 4)?;
    let pairs = build_pairs(N)?;
    (0..opts.trials)
        .map(|t| {
            let (seed, state, x) = kink_free_draw(&spec, 2 * N, |attempt| {
                trial_seed(
                    opts.seed,
                    &[li as u64, mi as u64, u64::MAX, t as u64, attempt],
                )
            })?;
            let report = finite_diff_audit(
                &state,
                &spec,
                &x,
                |z| evaluate(loss, z, &pairs, cfg).map(|r| (r.value, r.grad().clone())),
                &AuditConfig::default(),
            )?;
            Ok(TrialRow {
                target: "model",
                loss: loss.name(),
                mode: mode_name(cfg.mode),
                n: N,
                d: INPUT,
                trial: t,
                seed,
                max_rel_err: report.max_rel_err,
                coordinate: report.worst_parameter,
                tolerance: opts.model_tolerance,
                pass: report.max_rel_err <= opts.model_tolerance,
            })
        })
        .collect()
}

/// Worst error per (target, loss, mode), in first-seen order.
pub fn summary_table(rows: &[TrialRow]) -> String {
    let mut groups: Vec<(&str, &str, &str, usize, &TrialRow)> = Vec::new();
    for row in rows {
        match groups
            .iter_mut()
            .find(|g| (g.0, g.1, g.2) == (row.target, row.loss, row.mode))
        {
            Some(g) => {
                g.3 += 1;
                if row.max_rel_err > g.4.max_rel_err {
                    g.4 = row;
                }
            }
            None => groups.push((row.target, row.loss, row.mode, 1, row)),
        }
    }
    let mut out = format!(
        "{:<6} {:<8} {:<7} {:>6} {:>12} {:>10}  {}\n",
        "target", "loss", "mode", "trials", "max_rel_err", "tolerance", "worst"
    );
    for (target, loss, mode, count, w) in groups {
        let _ = writeln!(
            out,
            "{target:<6} {loss:<8} {mode:<7} {count:>6} {:>12.3e} {:>10.1e}  seed={} n={} d={} at {}",
            w.max_rel_err, w.tolerance, w.seed, w.n, w.d, w.coordinate
        );
    }
    out
}

pub fn run(opts: &GradcheckOptions) -> CliResult<String> {
    let rows = run_trials(opts)?;
    if let Some(path) = &opts.out {
        let cfg = serde_json::to_vec(opts).expect("options serialize");
        crate::manifest::write_manifest(
            &crate::manifest::manifest_beside(path),
            "gradcheck",
            &cfg,
            opts.seed,
        )?;
        let mut w = csv::Writer::from_path(path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    let table = summary_table(&rows);
    if let Some(bad) = rows.iter().find(|r| !r.pass) {
        return Err(CliError::check(format!(
            "{table}gradient check failed: loss={} mode={} target={} seed={} n={} d={} coordinate={} rel_err={:.3e} > {:.1e}",
            bad.loss, bad.mode, bad.target, bad.seed, bad.n, bad.d, bad.coordinate, bad.max_rel_err, bad.tolerance
        )));
    }
    Ok(table)
}
