//! The recurrent action optimizer.
//!
//! A single tanh recurrent layer consumes the environment vector, the
//! flattened controller proposals and the encoded state map. Its hidden
//! state drives a softmax gate over controllers, a bounded continuous
//! residual, and per-kind discrete logits. The continuous output is the
//! gate-weighted convex combination of controller commands plus the
//! residual; a discrete action is emitted only when its logit is positive
//! and at least one controller proposed it, so every emission stays
//! justifiable to the action filter.

use crate::action::{ActionKind, ActionProvenance, ActionVector, ContinuousCommand};
use crate::controllers::ControllerProposal;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsemblerError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("expected {expected} proposals, got {got}")]
    ProposalCount { expected: usize, got: usize },
    #[error("checkpoint truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("flat parameter vector has length {got}, expected {expected}")]
    FlatLength { expected: usize, got: usize },
}

/// Values flattened per proposal: heading rate, speed, confidence, and the
/// 9-bit discrete kind mask.
pub const PROPOSAL_FIELDS: usize = 3 + ActionKind::COUNT;

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsemblerDims {
    pub d_in: usize,
    pub d_h: usize,
    pub n_controllers: usize,
}

impl EnsemblerDims {
    pub fn param_count(&self) -> usize {
        let EnsemblerDims {
            d_in,
            d_h,
            n_controllers,
        } = *self;
        d_in * d_h + d_h + d_h * d_h + d_h * n_controllers + d_h * 2 + d_h * ActionKind::COUNT + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x.iter()).map(|(w, xi)| w * xi).sum())
            .collect()
    }

    fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, vr) in self.data.chunks_exact(self.cols).zip(v.iter()) {
            for (o, w) in out.iter_mut().zip(row.iter()) {
                *o += w * vr;
            }
        }
        out
    }
}

/// All learnable weights plus the fixed residual scale.
///
/// `delta_max` bounds the learned continuous residual; it is serialized
/// with the weights and counted in `param_count`, but held fixed during
/// training so the residual bound cannot drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblerParams {
    pub dims: EnsemblerDims,
    w_in: Mat,
    bias: Vec<f64>,
    w_h: Mat,
    w_gate: Mat,
    w_res: Mat,
    w_disc: Mat,
    pub delta_max: f64,
    pub init_seed: u64,
}

impl EnsemblerParams {
    pub fn zeros(dims: EnsemblerDims, delta_max: f64) -> Self {
        EnsemblerParams {
            dims,
            w_in: Mat::zeros(dims.d_h, dims.d_in),
            bias: vec![0.0; dims.d_h],
            w_h: Mat::zeros(dims.d_h, dims.d_h),
            w_gate: Mat::zeros(dims.n_controllers, dims.d_h),
            w_res: Mat::zeros(2, dims.d_h),
            w_disc: Mat::zeros(ActionKind::COUNT, dims.d_h),
            delta_max,
            init_seed: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.dims.param_count()
    }

    /// Canonical flat order: w_in, bias, w_h, w_gate, w_res, w_disc,
    /// delta_max.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w_in.data);
        out.extend_from_slice(&self.bias);
        out.extend_from_slice(&self.w_h.data);
        out.extend_from_slice(&self.w_gate.data);
        out.extend_from_slice(&self.w_res.data);
        out.extend_from_slice(&self.w_disc.data);
        out.push(self.delta_max);
        out
    }

    pub fn from_flat(
        dims: EnsemblerDims,
        flat: &[f64],
        init_seed: u64,
    ) -> Result<Self, EnsemblerError> {
        if flat.len() != dims.param_count() {
            return Err(EnsemblerError::FlatLength {
                expected: dims.param_count(),
                got: flat.len(),
            });
        }
        let mut p = EnsemblerParams::zeros(dims, 0.0);
        p.init_seed = init_seed;
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s.to_vec()
        };
        p.w_in.data = take(dims.d_h * dims.d_in);
        p.bias = take(dims.d_h);
        p.w_h.data = take(dims.d_h * dims.d_h);
        p.w_gate.data = take(dims.n_controllers * dims.d_h);
        p.w_res.data = take(2 * dims.d_h);
        p.w_disc.data = take(ActionKind::COUNT * dims.d_h);
        p.delta_max = flat[at];
        Ok(p)
    }

    /// Index of `delta_max` in the flat vector; everything before it is
    /// trainable.
    pub fn trainable_len(&self) -> usize {
        self.param_count() - 1
    }

    /// Iterates the weight entries (excluding `delta_max`).
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.w_in
            .data
            .iter()
            .chain(self.bias.iter())
            .chain(self.w_h.data.iter())
            .chain(self.w_gate.data.iter())
            .chain(self.w_res.data.iter())
            .chain(self.w_disc.data.iter())
            .copied()
    }

    pub(crate) fn w_h_t_mul(&self, v: &[f64]) -> Vec<f64> {
        self.w_h.t_matvec(v)
    }

    pub(crate) fn w_gate_t_mul(&self, v: &[f64]) -> Vec<f64> {
        self.w_gate.t_matvec(v)
    }

    pub(crate) fn w_res_t_mul(&self, v: &[f64]) -> Vec<f64> {
        self.w_res.t_matvec(v)
    }

    pub(crate) fn w_disc_t_mul(&self, v: &[f64]) -> Vec<f64> {
        self.w_disc.t_matvec(v)
    }
}

/// Flat-vector offsets of each weight group, shared by the gradient code.
#[derive(Debug, Clone, Copy)]
pub struct ParamLayout {
    pub dims: EnsemblerDims,
    pub w_in: usize,
    pub bias: usize,
    pub w_h: usize,
    pub w_gate: usize,
    pub w_res: usize,
    pub w_disc: usize,
    pub delta_max: usize,
}

impl ParamLayout {
    pub fn of(dims: EnsemblerDims) -> Self {
        let w_in = 0;
        let bias = w_in + dims.d_h * dims.d_in;
        let w_h = bias + dims.d_h;
        let w_gate = w_h + dims.d_h * dims.d_h;
        let w_res = w_gate + dims.n_controllers * dims.d_h;
        let w_disc = w_res + 2 * dims.d_h;
        let delta_max = w_disc + ActionKind::COUNT * dims.d_h;
        ParamLayout {
            dims,
            w_in,
            bias,
            w_h,
            w_gate,
            w_res,
            w_disc,
            delta_max,
        }
    }
}

/// Per-episode recurrent state; all-zero at episode start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblerState {
    pub hidden: Vec<f64>,
}

impl EnsemblerState {
    pub fn zeros(d_h: usize) -> Self {
        EnsemblerState {
            hidden: vec![0.0; d_h],
        }
    }
}

/// Uniform random initialization in `[-scale, scale]`, deterministic per
/// seed. The residual bound is set from `delta_max`, not sampled.
pub fn init_params(seed: u64, dims: EnsemblerDims, scale: f64, delta_max: f64) -> EnsemblerParams {
    let mut rng = crate::rng::stream(seed);
    let mut p = EnsemblerParams::zeros(dims, delta_max);
    p.init_seed = seed;
    for group in [
        &mut p.w_in.data,
        &mut p.bias,
        &mut p.w_h.data,
        &mut p.w_gate.data,
        &mut p.w_res.data,
        &mut p.w_disc.data,
    ] {
        for w in group.iter_mut() {
            *w = rng.gen_range(-scale..=scale);
        }
    }
    p
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Flattens proposals into the network input block: per controller
/// `[heading_rate, speed_cmd, confidence, kind mask × 9]` in bank order.
pub fn flatten_proposals(proposals: &[ControllerProposal]) -> Vec<f64> {
    let mut out = Vec::with_capacity(proposals.len() * PROPOSAL_FIELDS);
    for p in proposals {
        out.push(p.continuous.heading_rate);
        out.push(p.continuous.speed_cmd);
        out.push(p.confidence);
        let mut mask = [0.0; ActionKind::COUNT];
        for a in &p.discrete {
            mask[a.kind().index()] = 1.0;
        }
        out.extend_from_slice(&mask);
    }
    out
}

/// Which action kinds at least one controller proposed.
pub fn eligible_kinds(proposals: &[ControllerProposal]) -> [bool; ActionKind::COUNT] {
    let mut eligible = [false; ActionKind::COUNT];
    for p in proposals {
        for a in &p.discrete {
            eligible[a.kind().index()] = true;
        }
    }
    eligible
}

/// Everything the forward pass computed, for training and metrics.
#[derive(Debug, Clone)]
pub struct ForwardDetail {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
    pub gates: Vec<f64>,
    pub logits: Vec<f64>,
    pub res_raw: [f64; 2],
    /// Pre-clamp continuous mean (gated mix plus residual).
    pub mean_continuous: [f64; 2],
    pub eligible: [bool; ActionKind::COUNT],
}

/// Builds the final action from proposals, gates, an emission mask and the
/// clamped continuous command. For each emitted kind the parameterized
/// instances come from the highest-gated proposing controller (ties broken
/// by bank order); provenance lists every proposing controller and the
/// union of their cited records.
pub fn assemble_action(
    proposals: &[ControllerProposal],
    gates: &[f64],
    emitted: &[bool; ActionKind::COUNT],
    continuous: ContinuousCommand,
) -> ActionVector {
    let mut discrete = Vec::new();
    let mut provenance = Vec::new();
    for kind in ActionKind::ALL {
        let d = kind.index();
        if !emitted[d] {
            continue;
        }
        let proposers: Vec<usize> = proposals
            .iter()
            .enumerate()
            .filter(|(_, p)| p.discrete.iter().any(|a| a.kind() == kind))
            .map(|(i, _)| i)
            .collect();
        if proposers.is_empty() {
            continue;
        }
        let donor = *proposers
            .iter()
            .max_by(|a, b| gates[**a].total_cmp(&gates[**b]))
            .unwrap();
        let mut records: Vec<u32> = proposers
            .iter()
            .flat_map(|i| proposals[*i].justifications.iter().copied())
            .collect();
        records.sort_unstable();
        records.dedup();
        let controllers: Vec<String> = proposers
            .iter()
            .map(|i| proposals[*i].controller_id.clone())
            .collect();
        for action in proposals[donor].discrete.iter().filter(|a| a.kind() == kind) {
            discrete.push(action.clone());
            provenance.push(ActionProvenance {
                controllers: controllers.clone(),
                records: records.clone(),
            });
        }
    }
    ActionVector {
        continuous,
        discrete,
        provenance,
    }
}

/// The recurrent cell and its heads, shared by inference and the training
/// replay path.
#[derive(Debug, Clone)]
pub(crate) struct CoreStep {
    pub h: Vec<f64>,
    pub gates: Vec<f64>,
    pub logits: Vec<f64>,
    pub res_raw: [f64; 2],
}

pub(crate) fn core_step(params: &EnsemblerParams, h_prev: &[f64], x: &[f64]) -> CoreStep {
    let d_h = params.dims.d_h;
    let mut z = params.w_in.matvec(x);
    let rec = params.w_h.matvec(h_prev);
    for i in 0..d_h {
        z[i] += rec[i] + params.bias[i];
    }
    let h: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
    let gates = softmax(&params.w_gate.matvec(&h));
    let res = params.w_res.matvec(&h);
    let logits = params.w_disc.matvec(&h);
    CoreStep {
        h,
        gates,
        logits,
        res_raw: [res[0], res[1]],
    }
}

/// Continuous mean: gate-weighted proposal mix plus the bounded residual.
pub(crate) fn continuous_mean(
    delta_max: f64,
    gates: &[f64],
    proposal_continuous: &[[f64; 2]],
    res_raw: [f64; 2],
) -> [f64; 2] {
    let mut mean = [0.0f64; 2];
    for (k, a) in proposal_continuous.iter().enumerate() {
        mean[0] += gates[k] * a[0];
        mean[1] += gates[k] * a[1];
    }
    mean[0] += delta_max * res_raw[0].tanh();
    mean[1] += delta_max * res_raw[1].tanh();
    mean
}

/// One recurrent step with full internals.
pub fn forward_detailed(
    params: &EnsemblerParams,
    state: &EnsemblerState,
    env_vec: &[f64],
    proposals: &[ControllerProposal],
    map_vec: &[f64],
) -> Result<(ActionVector, EnsemblerState, ForwardDetail), EnsemblerError> {
    let dims = params.dims;
    if proposals.len() != dims.n_controllers {
        return Err(EnsemblerError::ProposalCount {
            expected: dims.n_controllers,
            got: proposals.len(),
        });
    }
    let mut x = Vec::with_capacity(dims.d_in);
    x.extend_from_slice(env_vec);
    x.extend(flatten_proposals(proposals));
    x.extend_from_slice(map_vec);
    if x.len() != dims.d_in {
        return Err(EnsemblerError::DimMismatch {
            expected: dims.d_in,
            got: x.len(),
        });
    }
    if state.hidden.len() != dims.d_h {
        return Err(EnsemblerError::DimMismatch {
            expected: dims.d_h,
            got: state.hidden.len(),
        });
    }

    let core = core_step(params, &state.hidden, &x);
    let CoreStep {
        h,
        gates,
        logits: logits_vec,
        res_raw,
    } = core;
    let proposal_continuous: Vec<[f64; 2]> = proposals
        .iter()
        .map(|p| [p.continuous.heading_rate, p.continuous.speed_cmd])
        .collect();
    let mean = continuous_mean(params.delta_max, &gates, &proposal_continuous, res_raw);
    let mut logits = [0.0; ActionKind::COUNT];
    logits.copy_from_slice(&logits_vec);

    let eligible = eligible_kinds(proposals);
    let mut emitted = [false; ActionKind::COUNT];
    for d in 0..ActionKind::COUNT {
        emitted[d] = eligible[d] && logits[d] > 0.0;
    }

    let continuous = ContinuousCommand::new(mean[0], mean[1]).clamped();
    let action = assemble_action(proposals, &gates, &emitted, continuous);
    let detail = ForwardDetail {
        x,
        h_prev: state.hidden.clone(),
        h: h.clone(),
        gates: gates.clone(),
        logits: logits_vec,
        res_raw,
        mean_continuous: mean,
        eligible,
    };
    Ok((action, EnsemblerState { hidden: h }, detail))
}

/// One recurrent step: gates and weighs the proposals under the current
/// environment and map, returning the unified action, the gate weights and
/// the next state.
pub fn forward(
    params: &EnsemblerParams,
    state: &EnsemblerState,
    env_vec: &[f64],
    proposals: &[ControllerProposal],
    map_vec: &[f64],
) -> Result<(ActionVector, Vec<f64>, EnsemblerState), EnsemblerError> {
    let (action, next, detail) = forward_detailed(params, state, env_vec, proposals, map_vec)?;
    Ok((action, detail.gates, next))
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"ASEN";
const CHECKPOINT_VERSION: u32 = 1;

fn checksum32(bytes: &[u8]) -> [u8; 4] {
    let digest = Sha256::digest(bytes);
    [digest[0], digest[1], digest[2], digest[3]]
}

/// Binary checkpoint: magic, version, dims, seed, little-endian f64
/// weights, trailing 32-bit checksum.
pub fn serialize_params(params: &EnsemblerParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dims.d_in as u32).to_le_bytes());
    out.extend_from_slice(&(params.dims.d_h as u32).to_le_bytes());
    out.extend_from_slice(&(params.dims.n_controllers as u32).to_le_bytes());
    out.extend_from_slice(&params.init_seed.to_le_bytes());
    for w in params.to_flat() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let sum = checksum32(&out);
    out.extend_from_slice(&sum);
    out
}

pub fn deserialize_params(bytes: &[u8]) -> Result<EnsemblerParams, EnsemblerError> {
    const HEADER: usize = 4 + 4 + 4 + 4 + 4 + 8;
    if bytes.len() < HEADER + 4 {
        return Err(EnsemblerError::Truncated {
            need: HEADER + 4,
            have: bytes.len(),
        });
    }
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(EnsemblerError::BadMagic);
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(EnsemblerError::UnsupportedVersion(version));
    }
    let dims = EnsemblerDims {
        d_in: u32_at(8) as usize,
        d_h: u32_at(12) as usize,
        n_controllers: u32_at(16) as usize,
    };
    let init_seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let need = HEADER + dims.param_count() * 8 + 4;
    if bytes.len() != need {
        return Err(EnsemblerError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored: [u8; 4] = bytes[bytes.len() - 4..].try_into().unwrap();
    if checksum32(body) != stored {
        return Err(EnsemblerError::ChecksumMismatch);
    }
    let mut flat = Vec::with_capacity(dims.param_count());
    for i in 0..dims.param_count() {
        let off = HEADER + i * 8;
        flat.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }
    EnsemblerParams::from_flat(dims, &flat, init_seed)
}
