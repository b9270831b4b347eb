//! MLP encoder and projector with hand-written backpropagation, a
//! finite-difference audit, and JSON checkpoints.
//!
//! Each layer computes `a = W x + b`, optionally standardizes `a` with
//! batch statistics (no learned scale or shift), then applies its
//! activation. Weights are stored `out × in`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{dot_unchecked, pairwise_sum_by, relative_error, Mat64, Rng};
use crate::par;

/// Variance offset of batch standardization.
pub const NORM_EPS: f64 = 1e-5;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

const INIT_TAG: u64 = 0x696e_6974;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    None,
    BatchStandardize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    /// `[input, hidden..., output]`.
    pub widths: Vec<usize>,
    /// One per layer.
    pub activations: Vec<Activation>,
    /// One per layer.
    pub norms: Vec<Norm>,
    pub bias: bool,
}

impl MlpSpec {
    /// Hidden layers get `hidden` activation and `hidden_norm`; the last
    /// layer gets `output` and no normalization.
    pub fn stack(
        widths: &[usize],
        hidden: Activation,
        hidden_norm: Norm,
        output: Activation,
        bias: bool,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::domain(
                "an MLP needs at least an input and an output width",
            ));
        }
        let layers = widths.len() - 1;
        let mut activations = vec![hidden; layers];
        let mut norms = vec![hidden_norm; layers];
        activations[layers - 1] = output;
        norms[layers - 1] = Norm::None;
        let spec = Self {
            widths: widths.to_vec(),
            activations,
            norms,
            bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::domain("an MLP needs at least one layer"));
        }
        if let Some(i) = self.widths.iter().position(|&w| w == 0) {
            return Err(Error::domain(format!("layer width {i} is zero")));
        }
        ensure_dim("MLP activations", self.layers(), self.activations.len())?;
        ensure_dim("MLP norms", self.layers(), self.norms.len())?;
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    pub fn parameter_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + if self.bias { w[1] } else { 0 })
            .sum()
    }

    fn uses_norm(&self) -> bool {
        self.norms.contains(&Norm::BatchStandardize)
    }
}

/// Encoder `f` followed by projector `q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub encoder: MlpSpec,
    pub projector: MlpSpec,
}

impl ModelSpec {
    /// Encoder `input → hidden... → feature` with ReLU throughout; projector
    /// `feature → proj_hidden... → output` with batch-standardized ReLU
    /// hidden layers and a linear head, all without bias. A bias ahead of
    /// batch standardization cancels, and a head bias survives the L2 pull
    /// that shrinks the head weights, so it would come to dominate every `z`.
    pub fn desk(
        input: usize,
        encoder_hidden: &[usize],
        feature: usize,
        projector_hidden: &[usize],
        output: usize,
    ) -> Result<Self> {
        let enc: Vec<usize> = std::iter::once(input)
            .chain(encoder_hidden.iter().copied())
            .chain(std::iter::once(feature))
            .collect();
        let proj: Vec<usize> = std::iter::once(feature)
            .chain(projector_hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect();
        let spec = Self {
            encoder: MlpSpec::stack(&enc, Activation::Relu, Norm::None, Activation::Relu, true)?,
            projector: MlpSpec::stack(
                &proj,
                Activation::Relu,
                Norm::BatchStandardize,
                Activation::Identity,
                false,
            )?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.projector.validate()?;
        if self.encoder.activations.last() != Some(&Activation::Relu) {
            return Err(Error::domain("the encoder's last activation must be relu"));
        }
        ensure_dim(
            "projector input width",
            self.encoder.output_dim(),
            self.projector.input_dim(),
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.projector.parameter_count()
    }

    pub fn uses_norm(&self) -> bool {
        self.encoder.uses_norm() || self.projector.uses_norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`.
    pub weight: Mat64,
    /// Empty when the layer has no bias.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Parameters of both networks. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub encoder: Mlp,
    pub projector: Mlp,
}

/// Gradients with respect to every entry of a [`ModelState`].
pub type ModelGrads = ModelState;

/// Which kind of tensor a parameter lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
}

/// A named view of one parameter tensor.
pub struct TensorMut<'a> {
    pub name: String,
    pub kind: TensorKind,
    pub values: &'a mut [f64],
}

pub struct TensorRef<'a> {
    pub name: String,
    pub kind: TensorKind,
    pub values: &'a [f64],
}

impl Mlp {
    fn zeros_like(spec: &MlpSpec) -> Self {
        Self {
            layers: spec
                .widths
                .windows(2)
                .map(|w| Dense {
                    weight: Mat64::zeros(w[1], w[0]),
                    bias: if spec.bias {
                        vec![0.0; w[1]]
                    } else {
                        Vec::new()
                    },
                })
                .collect(),
        }
    }

    fn check(&self, spec: &MlpSpec, what: &'static str) -> Result<()> {
        ensure_dim(what, spec.layers(), self.layers.len())?;
        for (layer, w) in self.layers.iter().zip(spec.widths.windows(2)) {
            ensure_dim(what, w[1], layer.weight.rows())?;
            ensure_dim(what, w[0], layer.weight.cols())?;
            ensure_dim(what, if spec.bias { w[1] } else { 0 }, layer.bias.len())?;
        }
        Ok(())
    }
}

impl ModelState {
    pub fn zeros_like(spec: &ModelSpec) -> Self {
        Self {
            encoder: Mlp::zeros_like(&spec.encoder),
            projector: Mlp::zeros_like(&spec.projector),
        }
    }

    /// Checks that the tensor shapes agree with `spec`.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        self.encoder
            .check(&spec.encoder, "encoder parameter shape")?;
        self.projector
            .check(&spec.projector, "projector parameter shape")
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (net, mlp) in [("encoder", &self.encoder), ("projector", &self.projector)] {
            for (i, layer) in mlp.layers.iter().enumerate() {
                out.push(TensorRef {
                    name: format!("{net}.{i}.weight"),
                    kind: TensorKind::Weight,
                    values: layer.weight.as_slice(),
                });
                if !layer.bias.is_empty() {
                    out.push(TensorRef {
                        name: format!("{net}.{i}.bias"),
                        kind: TensorKind::Bias,
                        values: &layer.bias,
                    });
                }
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        for (net, mlp) in [
            ("encoder", &mut self.encoder),
            ("projector", &mut self.projector),
        ] {
            for (i, layer) in mlp.layers.iter_mut().enumerate() {
                out.push(TensorMut {
                    name: format!("{net}.{i}.weight"),
                    kind: TensorKind::Weight,
                    values: layer.weight.as_mut_slice(),
                });
                if !layer.bias.is_empty() {
                    out.push(TensorMut {
                        name: format!("{net}.{i}.bias"),
                        kind: TensorKind::Bias,
                        values: &mut layer.bias,
                    });
                }
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.values.len()).sum()
    }

    /// All parameters, tensor by tensor in [`ModelState::tensors`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.values.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.values.iter().all(|v| v.is_finite()))
    }

    /// Name of flat parameter `index`, e.g. `projector.1.weight[3,7]`.
    pub fn parameter_name(&self, index: usize) -> String {
        let mut offset = index;
        for (net, mlp) in [("encoder", &self.encoder), ("projector", &self.projector)] {
            for (i, layer) in mlp.layers.iter().enumerate() {
                let n = layer.weight.as_slice().len();
                if offset < n {
                    let cols = layer.weight.cols();
                    return format!("{net}.{i}.weight[{},{}]", offset / cols, offset % cols);
                }
                offset -= n;
                if offset < layer.bias.len() {
                    return format!("{net}.{i}.bias[{offset}]");
                }
                offset -= layer.bias.len();
            }
        }
        format!("parameter #{index}")
    }

    fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut offset = index;
        for mlp in [&mut self.encoder, &mut self.projector] {
            for layer in &mut mlp.layers {
                let n = layer.weight.as_slice().len();
                if offset < n {
                    return &mut layer.weight.as_mut_slice()[offset];
                }
                offset -= n;
                if offset < layer.bias.len() {
                    return &mut layer.bias[offset];
                }
                offset -= layer.bias.len();
            }
        }
        panic!("parameter index {index} out of range");
    }

    fn param(&self, index: usize) -> f64 {
        let mut offset = index;
        for mlp in [&self.encoder, &self.projector] {
            for layer in &mlp.layers {
                let n = layer.weight.as_slice().len();
                if offset < n {
                    return layer.weight.as_slice()[offset];
                }
                offset -= n;
                if offset < layer.bias.len() {
                    return layer.bias[offset];
                }
                offset -= layer.bias.len();
            }
        }
        panic!("parameter index {index} out of range");
    }
}

fn init_mlp(spec: &MlpSpec, rng: &mut Rng) -> Result<Mlp> {
    let mut mlp = Mlp::zeros_like(spec);
    for layer in &mut mlp.layers {
        let sigma = (2.0 / layer.weight.cols() as f64).sqrt();
        for w in layer.weight.as_mut_slice() {
            *w = rng.gaussian(0.0, sigma)?;
        }
    }
    Ok(mlp)
}

/// He initialization: weights `N(0, 2 / fan_in)`, biases zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelState> {
    spec.validate()?;
    let mut rng = Rng::derive(seed, &[INIT_TAG]);
    Ok(ModelState {
        encoder: init_mlp(&spec.encoder, &mut rng)?,
        projector: init_mlp(&spec.projector, &mut rng)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input: Mat64,
    /// `W x + b`.
    pub pre: Mat64,
    /// Standardized pre-activation and per-feature `1/√(var + ε)`.
    pub standardized: Option<(Mat64, Vec<f64>)>,
    pub output: Mat64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace {
    pub layers: Vec<LayerTrace>,
}

impl MlpTrace {
    pub fn output(&self) -> &Mat64 {
        &self.layers.last().expect("at least one layer").output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub encoder: MlpTrace,
    pub projector: MlpTrace,
}

impl ForwardTrace {
    /// Encoder output, one row per input.
    pub fn h(&self) -> &Mat64 {
        self.encoder.output()
    }

    /// Projector output, one row per input.
    pub fn z(&self) -> &Mat64 {
        self.projector.output()
    }

    /// Smallest distance from any ReLU input to the kink at 0. A finite
    /// difference whose step can cross the kink measures a one-sided slope,
    /// so audits need this well above the step.
    pub fn relu_margin(&self, spec: &ModelSpec) -> f64 {
        [
            (&self.encoder, &spec.encoder),
            (&self.projector, &spec.projector),
        ]
        .into_iter()
        .flat_map(|(trace, mlp)| trace.layers.iter().zip(&mlp.activations))
        .filter(|(_, act)| **act == Activation::Relu)
        .flat_map(|(lt, _)| {
            lt.standardized
                .as_ref()
                .map_or(&lt.pre, |(n, _)| n)
                .as_slice()
        })
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

fn affine(x: &Mat64, layer: &Dense) -> Mat64 {
    let out = layer.weight.rows();
    let rows = par::map_indexed(x.rows(), |r| {
        let xr = x.row(r);
        (0..out)
            .map(|o| {
                let b = layer.bias.get(o).copied().unwrap_or(0.0);
                dot_unchecked(layer.weight.row(o), xr) + b
            })
            .collect::<Vec<_>>()
    });
    Mat64::from_fn(x.rows(), out, |r, c| rows[r][c])
}

fn standardize(a: &Mat64) -> (Mat64, Vec<f64>) {
    let m = a.rows() as f64;
    let cols = a.cols();
    let mean: Vec<f64> = (0..cols)
        .map(|c| pairwise_sum_by(a.rows(), |r| a.get(r, c)) / m)
        .collect();
    let inv_std: Vec<f64> = (0..cols)
        .map(|c| {
            let var = pairwise_sum_by(a.rows(), |r| (a.get(r, c) - mean[c]).powi(2)) / m;
            1.0 / (var + NORM_EPS).sqrt()
        })
        .collect();
    let n = Mat64::from_fn(a.rows(), cols, |r, c| (a.get(r, c) - mean[c]) * inv_std[c]);
    (n, inv_std)
}

fn activate(v: &Mat64, act: Activation) -> Mat64 {
    match act {
        Activation::Identity => v.clone(),
        Activation::Relu => Mat64::from_fn(v.rows(), v.cols(), |r, c| v.get(r, c).max(0.0)),
    }
}

fn forward_mlp(mlp: &Mlp, spec: &MlpSpec, x: &Mat64) -> Result<MlpTrace> {
    ensure_dim("network input width", spec.input_dim(), x.cols())?;
    let mut layers = Vec::with_capacity(mlp.layers.len());
    let mut input = x.clone();
    for (i, layer) in mlp.layers.iter().enumerate() {
        let pre = affine(&input, layer);
        let standardized = match spec.norms[i] {
            Norm::None => None,
            Norm::BatchStandardize => Some(standardize(&pre)),
        };
        let output = activate(
            standardized.as_ref().map_or(&pre, |(n, _)| n),
            spec.activations[i],
        );
        layers.push(LayerTrace {
            input: std::mem::replace(&mut input, output.clone()),
            pre,
            standardized,
            output,
        });
    }
    Ok(MlpTrace { layers })
}

/// Encoder-only forward pass.
pub fn forward_encoder(state: &ModelState, spec: &ModelSpec, x: &Mat64) -> Result<MlpTrace> {
    spec.validate()?;
    state.check(spec)?;
    forward_mlp(&state.encoder, &spec.encoder, x)
}

pub fn forward(state: &ModelState, spec: &ModelSpec, x: &Mat64) -> Result<ForwardTrace> {
    let encoder = forward_encoder(state, spec, x)?;
    debug_assert!(encoder.output().as_slice().iter().all(|&v| v >= 0.0));
    let projector = forward_mlp(&state.projector, &spec.projector, encoder.output())?;
    Ok(ForwardTrace { encoder, projector })
}

/// Backpropagates `d_out` through one network, filling `grads`, and
/// returns the gradient with respect to its input.
fn backward_mlp(
    mlp: &Mlp,
    spec: &MlpSpec,
    trace: &MlpTrace,
    d_out: Mat64,
    grads: &mut Mlp,
) -> Mat64 {
    let mut d = d_out;
    for i in (0..mlp.layers.len()).rev() {
        let lt = &trace.layers[i];
        let layer = &mlp.layers[i];
        let batch = lt.pre.rows();
        let width = lt.pre.cols();

        // Through the activation.
        if spec.activations[i] == Activation::Relu {
            let gate = lt.standardized.as_ref().map_or(&lt.pre, |(n, _)| n);
            for (dv, g) in d.as_mut_slice().iter_mut().zip(gate.as_slice()) {
                if *g <= 0.0 {
                    *dv = 0.0;
                }
            }
        }

        // Through batch standardization.
        if let Some((n, inv_std)) = &lt.standardized {
            let m = batch as f64;
            let sum_d: Vec<f64> = (0..width)
                .map(|c| pairwise_sum_by(batch, |r| d.get(r, c)))
                .collect();
            let sum_dn: Vec<f64> = (0..width)
                .map(|c| pairwise_sum_by(batch, |r| d.get(r, c) * n.get(r, c)))
                .collect();
            d = Mat64::from_fn(batch, width, |r, c| {
                inv_std[c] / m * (m * d.get(r, c) - sum_d[c] - n.get(r, c) * sum_dn[c])
            });
        }

        // Through the affine map.
        let in_width = layer.weight.cols();
        let g = &mut grads.layers[i];
        let dw = par::map_indexed(width, |o| {
            (0..in_width)
                .map(|k| pairwise_sum_by(batch, |r| d.get(r, o) * lt.input.get(r, k)))
                .collect::<Vec<_>>()
        });
        g.weight = Mat64::from_fn(width, in_width, |o, k| dw[o][k]);
        if !g.bias.is_empty() {
            g.bias = (0..width)
                .map(|o| pairwise_sum_by(batch, |r| d.get(r, o)))
                .collect();
        }
        let dx = par::map_indexed(batch, |r| {
            (0..in_width)
                .map(|k| pairwise_sum_by(width, |o| d.get(r, o) * layer.weight.get(o, k)))
                .collect::<Vec<_>>()
        });
        d = Mat64::from_fn(batch, in_width, |r, k| dx[r][k]);
    }
    d
}

/// Exact parameter gradients given `∂L/∂z`.
pub fn backward(
    state: &ModelState,
    spec: &ModelSpec,
    trace: &ForwardTrace,
    grad_z: &Mat64,
) -> Result<ModelGrads> {
    state.check(spec)?;
    ensure_dim(
        "trace encoder layers",
        spec.encoder.layers(),
        trace.encoder.layers.len(),
    )?;
    ensure_dim(
        "trace projector layers",
        spec.projector.layers(),
        trace.projector.layers.len(),
    )?;
    ensure_dim("grad_z rows", trace.z().rows(), grad_z.rows())?;
    ensure_dim("grad_z cols", trace.z().cols(), grad_z.cols())?;
    let mut grads = ModelState::zeros_like(spec);
    let d_h = backward_mlp(
        &state.projector,
        &spec.projector,
        &trace.projector,
        grad_z.clone(),
        &mut grads.projector,
    );
    backward_mlp(
        &state.encoder,
        &spec.encoder,
        &trace.encoder,
        d_h,
        &mut grads.encoder,
    );
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    /// Central-difference step, in `[1e-7, 1e-3]`.
    pub step: f64,
    /// Check at most this many parameters, chosen at random; every
    /// parameter when `None` or when the model is smaller.
    pub max_params: Option<usize>,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_params: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub max_rel_err: f64,
    pub worst_parameter: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

/// Compares `analytic` with central differences of `objective` around
/// `state`.
pub fn finite_diff_audit_with<F>(
    state: &ModelState,
    analytic: &ModelGrads,
    objective: F,
    cfg: &AuditConfig,
) -> Result<AuditReport>
where
    F: Fn(&ModelState) -> Result<f64> + Sync,
{
    if !(1e-7..=1e-3).contains(&cfg.step) {
        return Err(Error::domain(format!(
            "audit step must lie in [1e-7, 1e-3], got {}",
            cfg.step
        )));
    }
    let total = state.parameter_count();
    ensure_dim("analytic gradient size", total, analytic.parameter_count())?;
    let mut indices: Vec<usize> = (0..total).collect();
    if let Some(limit) = cfg.max_params {
        if limit < total {
            let mut rng = Rng::derive(cfg.seed, &[0x6175_6469_74]);
            rng.shuffle(&mut indices);
            indices.truncate(limit.max(1));
            indices.sort_unstable();
        }
    }
    let h = cfg.step;
    let results = par::try_map_indexed(indices.len(), |k| {
        let idx = indices[k];
        let mut probe = state.clone();
        let base = probe.param(idx);
        *probe.param_mut(idx) = base + h;
        let plus = objective(&probe)?;
        *probe.param_mut(idx) = base - h;
        let minus = objective(&probe)?;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::Audit {
                parameter: state.parameter_name(idx),
            });
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.param(idx);
        Ok((relative_error(a, numeric), a, numeric))
    })?;
    let (worst, &(err, a, n)) =
        results
            .iter()
            .enumerate()
            .fold((0, &(0.0, 0.0, 0.0)), |best, (k, r)| {
                if r.0 > best.1 .0 {
                    (k, r)
                } else {
                    best
                }
            });
    Ok(AuditReport {
        max_rel_err: err,
        worst_parameter: state.parameter_name(indices.get(worst).copied().unwrap_or(0)),
        worst_analytic: a,
        worst_numeric: n,
        checked: indices.len(),
    })
}

/// Audits [`backward`] end to end for the loss `loss(z) = (value, ∂/∂z)`
/// on input batch `x`.
pub fn finite_diff_audit<L>(
    state: &ModelState,
    spec: &ModelSpec,
    x: &Mat64,
    loss: L,
    cfg: &AuditConfig,
) -> Result<AuditReport>
where
    L: Fn(&Mat64) -> Result<(f64, Mat64)> + Sync,
{
    let trace = forward(state, spec, x)?;
    let (value, grad_z) = loss(trace.z())?;
    if !value.is_finite() {
        return Err(Error::Audit {
            parameter: "(unperturbed)".into(),
        });
    }
    let analytic = backward(state, spec, &trace, &grad_z)?;
    finite_diff_audit_with(
        state,
        &analytic,
        |s| {
            let t = forward(s, spec, x)?;
            loss(t.z()).map(|(v, _)| v)
        },
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub spec: ModelSpec,
    pub state: ModelState,
}

impl Checkpoint {
    pub fn new(spec: ModelSpec, state: ModelState, seed: u64) -> Result<Self> {
        spec.validate()?;
        state.check(&spec)?;
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed,
            spec,
            state,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ck.format_version
            )));
        }
        ck.spec
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.state
            .check(&ck.spec)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        for t in ck.state.tensors() {
            if t.kind == TensorKind::Weight && t.values.is_empty() {
                return Err(Error::Checkpoint(format!("{} is empty", t.name)));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
