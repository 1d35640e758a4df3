//! HGNN, MultiHGNN, ResHGNN and ResMultiHGNN.
//!
//! Every family is a stack of hypergraph convolutions over a propagation
//! matrix `L` (see [`crate::hypergraph`]):
//!
//! ```text
//! plain:     X' = act(L X W + b)
//! residual:  S  = (1 - alpha) L X + alpha X0
//!            X' = act((1 - beta) S + beta (S W + b))
//! ```
//!
//! Single-hypergraph families run on the column-wise concatenation of all
//! modalities. Multi families run one independent branch per modality and
//! average the branch logits.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::MultiModalDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Hgnn,
    MultiHgnn,
    ResHgnn,
    ResMultiHgnn,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Hgnn,
        Family::MultiHgnn,
        Family::ResHgnn,
        Family::ResMultiHgnn,
    ];

    pub fn is_residual(self) -> bool {
        matches!(self, Family::ResHgnn | Family::ResMultiHgnn)
    }

    pub fn is_multi(self) -> bool {
        matches!(self, Family::MultiHgnn | Family::ResMultiHgnn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Hgnn => "hgnn",
            Family::MultiHgnn => "multihgnn",
            Family::ResHgnn => "reshgnn",
            Family::ResMultiHgnn => "resmultihgnn",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown model family '{s}' (expected hgnn, multihgnn, reshgnn or resmultihgnn)"
                ))
            })
    }
}

/// How the identity-mapping weight `beta_l` depends on the 1-based layer index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    Constant(f64),
    /// `beta_l = min(1, lambda / l)`.
    InverseDepth { lambda: f64 },
}

/// Per-layer `alpha_l` (initial residual) and `beta_l` (identity mapping).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResSchedule {
    pub alpha: f64,
    pub beta: BetaRule,
}

impl Default for ResSchedule {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: BetaRule::InverseDepth { lambda: 0.5 },
        }
    }
}

impl ResSchedule {
    pub fn constant(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta: BetaRule::Constant(beta),
        }
    }

    pub fn alpha(&self, _layer: usize) -> f64 {
        self.alpha
    }

    pub fn beta(&self, layer: usize) -> f64 {
        match self.beta {
            BetaRule::Constant(b) => b,
            BetaRule::InverseDepth { lambda } => (lambda / layer.max(1) as f64).min(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.alpha) {
            return Err(Error::Parameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        match self.beta {
            BetaRule::Constant(b) if !in_unit(b) => Err(Error::Parameter(format!(
                "beta must lie in [0, 1], got {b}"
            ))),
            BetaRule::InverseDepth { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => Err(
                Error::Parameter(format!("lambda must be finite and >= 0, got {lambda}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    /// Number of hypergraph convolutions. Residual families add an input
    /// and an output linear map that are not counted here.
    pub depth: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub res_schedule: Option<ResSchedule>,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults for `family`: hidden width 128, dropout 0.5, and the
    /// default residual schedule for residual families.
    pub fn new(family: Family, depth: usize, n_classes: usize) -> Self {
        Self {
            family,
            depth,
            hidden: 128,
            n_classes,
            res_schedule: family.is_residual().then(ResSchedule::default),
            dropout: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Parameter(
                "ModelConfig.depth must be at least 1".into(),
            ));
        }
        if self.family.is_residual() && self.depth < 2 {
            return Err(Error::Parameter(format!(
                "ModelConfig.depth must be at least 2 for {}",
                self.family
            )));
        }
        if self.hidden == 0 || self.n_classes == 0 {
            return Err(Error::Parameter(
                "ModelConfig.hidden and n_classes must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!(
                "ModelConfig.dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        match (&self.res_schedule, self.family.is_residual()) {
            (Some(s), true) => s.validate(),
            (None, false) => Ok(()),
            (Some(_), false) => Err(Error::Parameter(format!(
                "{} takes no residual schedule",
                self.family
            ))),
            (None, true) => Err(Error::Parameter(format!(
                "{} needs a residual schedule",
                self.family
            ))),
        }
    }

    fn schedule(&self) -> ResSchedule {
        self.res_schedule.unwrap_or_default()
    }
}

/// Weight and optional bias of one convolution or linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Matrix,
    pub bias: Option<Matrix>,
}

impl ConvParams {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let s = (6.0 / (d_in + d_out) as f64).sqrt();
        let weight = Matrix::from_fn(d_in, d_out, |_, _| rng.random_range(-s..=s));
        Self {
            weight,
            bias: Some(Matrix::zeros(1, d_out)),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    fn record(&self, tape: &mut Tape, vars: &mut Vec<Var>) -> ConvVars {
        let weight = tape.param(self.weight.clone());
        vars.push(weight);
        let bias = self.bias.as_ref().map(|b| {
            let v = tape.param(b.clone());
            vars.push(v);
            v
        });
        ConvVars { weight, bias }
    }
}

/// [`ConvParams`] recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvVars {
    pub weight: Var,
    pub bias: Option<Var>,
}

/// Parameters of one branch (one per modality in multi families).
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub input: Option<ConvParams>,
    pub convs: Vec<ConvParams>,
    pub output: Option<ConvParams>,
}

impl BranchParams {
    fn layers(&self) -> impl Iterator<Item = &ConvParams> {
        self.input
            .iter()
            .chain(self.convs.iter())
            .chain(self.output.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvParams> {
        self.input
            .iter_mut()
            .chain(self.convs.iter_mut())
            .chain(self.output.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub branches: Vec<BranchParams>,
}

impl ModelParams {
    /// Every trainable matrix, in the order [`Model::forward`] records them.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for layer in self.branches.iter().flat_map(BranchParams::layers) {
            out.push(&layer.weight);
            if let Some(b) = &layer.bias {
                out.push(b);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in self.branches.iter_mut().flat_map(BranchParams::layers_mut) {
            out.push(&mut layer.weight);
            if let Some(b) = &mut layer.bias {
                out.push(b);
            }
        }
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }
}

/// `act(L x W + b)`.
///
/// The cheaper association is used: `L (x W)` when the layer narrows,
/// `(L x) W` otherwise.
pub fn hgnn_conv_forward(
    tape: &mut Tape,
    x: Var,
    lap: Var,
    p: ConvVars,
    activate: bool,
) -> Result<Var> {
    let (d_in, d_out) = tape.shape(p.weight);
    let h = if d_out < d_in {
        let xw = tape.matmul(x, p.weight)?;
        tape.matmul(lap, xw)?
    } else {
        let lx = tape.matmul(lap, x)?;
        tape.matmul(lx, p.weight)?
    };
    let h = match p.bias {
        Some(b) => tape.add_row(h, b)?,
        None => h,
    };
    Ok(if activate { tape.relu(h) } else { h })
}

/// Residual hypergraph convolution with initial residual `alpha` and
/// identity mapping `beta`:
/// `act(((1-a) L x + a x0) ((1-b) I + b W))`, the bias riding with `W`.
#[allow(clippy::too_many_arguments)]
pub fn res_conv_forward(
    tape: &mut Tape,
    x: Var,
    x0: Var,
    lap: Var,
    p: ConvVars,
    alpha: f64,
    beta: f64,
    activate: bool,
) -> Result<Var> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parameter(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    let (d_in, d_out) = tape.shape(p.weight);
    if d_in != d_out {
        return Err(Error::shape(
            "res_conv_forward",
            format!("identity mapping needs a square weight, got {d_in}x{d_out}"),
        ));
    }
    if tape.shape(x).1 != d_in || tape.shape(x0) != tape.shape(x) {
        return Err(Error::shape(
            "res_conv_forward",
            format!(
                "x is {:?}, x0 is {:?}, weight is {d_in}x{d_out}",
                tape.shape(x),
                tape.shape(x0)
            ),
        ));
    }
    let lx = tape.matmul(lap, x)?;
    let support = tape.add_scaled(lx, x0, 1.0 - alpha, alpha)?;
    let sw = tape.matmul(support, p.weight)?;
    let sw = match p.bias {
        Some(b) => tape.add_row(sw, b)?,
        None => sw,
    };
    let h = tape.add_scaled(support, sw, 1.0 - beta, beta)?;
    Ok(if activate { tape.relu(h) } else { h })
}

/// Mean fusion of branch outputs.
pub fn fuse_mean(tape: &mut Tape, branch_outputs: &[Var]) -> Result<Var> {
    tape.mean(branch_outputs)
}

fn linear(tape: &mut Tape, x: Var, p: ConvVars) -> Result<Var> {
    let h = tape.matmul(x, p.weight)?;
    match p.bias {
        Some(b) => tape.add_row(h, b),
        None => Ok(h),
    }
}

/// Initializes parameters for `cfg` given per-modality input widths.
pub fn init_params<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    dims: &[usize],
    rng: &mut R,
) -> Result<ModelParams> {
    cfg.validate()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Validation(format!(
            "input widths must be non-empty and positive, got {dims:?}"
        )));
    }
    let branch_dims: Vec<usize> = if cfg.family.is_multi() {
        dims.to_vec()
    } else {
        vec![dims.iter().sum()]
    };
    let (h, c, depth) = (cfg.hidden, cfg.n_classes, cfg.depth);
    let branches = branch_dims
        .into_iter()
        .map(|d| {
            if cfg.family.is_residual() {
                let input = ConvParams::init(d, h, rng);
                let convs = (0..depth).map(|_| ConvParams::init(h, h, rng)).collect();
                let output = ConvParams::init(h, c, rng);
                BranchParams {
                    input: Some(input),
                    convs,
                    output: Some(output),
                }
            } else {
                let convs = (0..depth)
                    .map(|l| {
                        let d_in = if l == 0 { d } else { h };
                        let d_out = if l + 1 == depth { c } else { h };
                        ConvParams::init(d_in, d_out, rng)
                    })
                    .collect();
                BranchParams {
                    input: None,
                    convs,
                    output: None,
                }
            }
        })
        .collect();
    Ok(ModelParams { branches })
}

/// Features and propagation matrix feeding one branch.
#[derive(Debug, Clone)]
pub struct BranchInput {
    pub features: Matrix,
    pub laplacian: Matrix,
}

/// Output of [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Var,
    /// Tape handles of every parameter, aligned with [`ModelParams::tensors`].
    pub params: Vec<Var>,
}

/// A configuration bound to the branch inputs of one dataset.
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    inputs: Vec<BranchInput>,
}

impl Model {
    pub fn new(cfg: ModelConfig, ds: &MultiModalDataset) -> Result<Self> {
        cfg.validate()?;
        if cfg.n_classes != ds.n_classes {
            return Err(Error::Validation(format!(
                "model has {} classes, dataset has {}",
                cfg.n_classes, ds.n_classes
            )));
        }
        let inputs = if cfg.family.is_multi() {
            ds.modalities
                .iter()
                .map(|m| BranchInput {
                    features: m.features.clone(),
                    laplacian: m.hypergraph.laplacian().matrix().clone(),
                })
                .collect()
        } else {
            let (features, g) = ds.concat_modalities()?;
            vec![BranchInput {
                features,
                laplacian: g.laplacian().matrix().clone(),
            }]
        };
        Ok(Self { cfg, inputs })
    }

    /// Builds a model from explicit branch inputs (one for single families).
    pub fn from_inputs(cfg: ModelConfig, inputs: Vec<BranchInput>) -> Result<Self> {
        cfg.validate()?;
        if inputs.is_empty() || (!cfg.family.is_multi() && inputs.len() != 1) {
            return Err(Error::Validation(format!(
                "{} cannot take {} branch inputs",
                cfg.family,
                inputs.len()
            )));
        }
        let n = inputs[0].features.rows();
        for b in &inputs {
            if b.features.rows() != n || b.laplacian.shape() != (n, n) {
                return Err(Error::Validation(
                    "branch inputs disagree on the vertex count".into(),
                ));
            }
        }
        Ok(Self { cfg, inputs })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn inputs(&self) -> &[BranchInput] {
        &self.inputs
    }

    pub fn n_vertices(&self) -> usize {
        self.inputs[0].features.rows()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.inputs.iter().map(|b| b.features.cols()).collect()
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelParams> {
        let dims = self.input_dims();
        if self.cfg.family.is_multi() {
            init_params(&self.cfg, &dims, rng)
        } else {
            // already concatenated
            init_params(&self.cfg, &dims[..1], rng)
        }
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.branches.len() != self.inputs.len() {
            return Err(Error::Validation(format!(
                "{} parameter branches for {} inputs",
                params.branches.len(),
                self.inputs.len()
            )));
        }
        for (b, input) in params.branches.iter().zip(&self.inputs) {
            let residual = self.cfg.family.is_residual();
            let shaped = b.convs.len() == self.cfg.depth
                && b.input.is_some() == residual
                && b.output.is_some() == residual;
            let first_in = b.layers().next().map(ConvParams::d_in);
            let last_out = b.layers().last().map(ConvParams::d_out);
            if !shaped
                || first_in != Some(input.features.cols())
                || last_out != Some(self.cfg.n_classes)
            {
                return Err(Error::Validation(format!(
                    "parameters do not match a depth-{} {} model",
                    self.cfg.depth, self.cfg.family
                )));
            }
        }
        Ok(())
    }

    /// Records a full forward pass on `tape` and returns the logits handle.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        params: &ModelParams,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardPass> {
        self.check_params(params)?;
        let mut vars = Vec::with_capacity(params.tensors().len());
        let mut branch_logits = Vec::with_capacity(self.inputs.len());
        for (input, bp) in self.inputs.iter().zip(&params.branches) {
            let x = tape.constant(input.features.clone());
            let lap = tape.constant(input.laplacian.clone());
            let logits = if self.cfg.family.is_residual() {
                self.residual_branch(tape, x, lap, bp, &mut vars, training, rng)?
            } else {
                self.plain_branch(tape, x, lap, bp, &mut vars, training, rng)?
            };
            branch_logits.push(logits);
        }
        let logits = if self.cfg.family.is_multi() {
            fuse_mean(tape, &branch_logits)?
        } else {
            branch_logits[0]
        };
        Ok(ForwardPass {
            logits,
            params: vars,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn plain_branch<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: Var,
        lap: Var,
        bp: &BranchParams,
        vars: &mut Vec<Var>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let mut h = x;
        let last = bp.convs.len() - 1;
        for (l, conv) in bp.convs.iter().enumerate() {
            let p = conv.record(tape, vars);
            h = hgnn_conv_forward(tape, h, lap, p, l < last)?;
            if l < last {
                h = tape.dropout(h, self.cfg.dropout, training, rng)?;
            }
        }
        Ok(h)
    }

    #[allow(clippy::too_many_arguments)]
    fn residual_branch<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: Var,
        lap: Var,
        bp: &BranchParams,
        vars: &mut Vec<Var>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let schedule = self.cfg.schedule();
        let input = bp.input.as_ref().expect("checked by check_params");
        let output = bp.output.as_ref().expect("checked by check_params");

        let p = input.record(tape, vars);
        let h0 = linear(tape, x, p)?;
        let x0 = tape.relu(h0);
        let mut h = x0;
        for (i, conv) in bp.convs.iter().enumerate() {
            let layer = i + 1;
            h = tape.dropout(h, self.cfg.dropout, training, rng)?;
            let p = conv.record(tape, vars);
            h = res_conv_forward(
                tape,
                h,
                x0,
                lap,
                p,
                schedule.alpha(layer),
                schedule.beta(layer),
                true,
            )?;
        }
        h = tape.dropout(h, self.cfg.dropout, training, rng)?;
        let p = output.record(tape, vars);
        linear(tape, h, p)
    }

    /// Inference logits (dropout off) on a scratch tape.
    pub fn logits(&self, params: &ModelParams) -> Result<Matrix> {
        let mut tape = Tape::new();
        // no draws happen with training off
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let pass = self.forward(&mut tape, params, false, &mut rng)?;
        Ok(tape.value(pass.logits).clone())
    }
}

/// One-shot forward pass over a dataset; returns the logits.
pub fn forward<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    ds: &MultiModalDataset,
    params: &ModelParams,
    training: bool,
    rng: &mut R,
) -> Result<Matrix> {
    let model = Model::new(cfg.clone(), ds)?;
    let mut tape = Tape::new();
    let pass = model.forward(&mut tape, params, training, rng)?;
    Ok(tape.value(pass.logits).clone())
}
