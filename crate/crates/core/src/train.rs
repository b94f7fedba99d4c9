//! Policy-gradient training of the ensembler and personality packaging.
//!
//! REINFORCE with a moving baseline: stochastic rollouts perturb the
//! continuous channels with pre-clamp Gaussian noise and flip eligible
//! discrete emissions with a small probability. The per-episode score
//! `∇ log π` is computed analytically by backpropagation through time over
//! the recorded input sequence; the likelihood treats continuous channels
//! as Gaussians around the network mean and discrete emissions as the
//! smoothed Bernoulli `q = ε + (1-2ε)·sigmoid(logit)`. The episode return
//! is the terminal mission utility; no shaping.
//!
//! `delta_max` (the residual bound) is an architecture knob: it is stored
//! with the parameters but receives no gradient.

use crate::action::ActionKind;
use crate::ensemble::{
    continuous_mean, core_step, deserialize_params, serialize_params, EnsemblerParams, ParamLayout,
};
use crate::episode::{run_episode, run_episode_with_noise, EpisodeError, EpisodeResult};
use crate::rng::{derive_seed, derive_seed_indexed};
use crate::scenario::{Scenario, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("episode failed: {0}")]
    Episode(#[from] EpisodeError),
    #[error("non-finite gradient at iteration {iteration} (|g| component {component})")]
    NonFiniteGradient { iteration: usize, component: usize },
    #[error("personality io: {0}")]
    Io(#[from] std::io::Error),
    #[error("personality metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("personality params: {0}")]
    Params(#[from] crate::ensemble::EnsemblerError),
    #[error("bad personality magic")]
    BadMagic,
    #[error("unsupported personality version {0}")]
    UnsupportedVersion(u32),
    #[error("personality file truncated")]
    Truncated,
    #[error("personality checksum mismatch")]
    ChecksumMismatch,
}

/// Exploration noise applied during stochastic rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub sigma: f64,
    pub epsilon: f64,
}

/// Everything recorded at one decision point, sufficient to recompute
/// log-probability gradients by replaying the stored inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
    pub gates: Vec<f64>,
    pub logits: Vec<f64>,
    pub res_raw: [f64; 2],
    pub mean_continuous: [f64; 2],
    pub eligible: [bool; ActionKind::COUNT],
    pub proposal_continuous: Vec<[f64; 2]>,
    /// Pre-clamp noise actually added to each continuous channel.
    pub cont_delta: [f64; 2],
    /// Discrete emissions after flips.
    pub emitted: [bool; ActionKind::COUNT],
}

/// Per-asset decision streams of one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub per_asset: BTreeMap<String, Vec<StepTrace>>,
}

/// One stochastic rollout.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub result: EpisodeResult,
    pub ret: f64,
    pub trace: TrainTrace,
}

/// Runs an exploration episode. With `sigma = 0` and `epsilon = 0` the
/// trajectory is identical to `run_episode`.
pub fn rollout_stochastic(
    scenario: &Scenario,
    params: &EnsemblerParams,
    sigma: f64,
    epsilon: f64,
    seed: u64,
) -> Result<Rollout, EpisodeError> {
    let (result, trace) =
        run_episode_with_noise(scenario, params, seed, Some(NoiseParams { sigma, epsilon }))?;
    Ok(Rollout {
        ret: result.utility.total,
        result,
        trace: trace.expect("trace captured for noisy rollouts"),
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Log-probability of the recorded actions under `params`, replaying the
/// stored input sequence through the network. Differentiable in the
/// parameters; the recorded inputs, noise outcomes and emissions are data.
pub fn log_prob(params: &EnsemblerParams, trace: &TrainTrace, sigma: f64, epsilon: f64) -> f64 {
    let mut logp = 0.0;
    for steps in trace.per_asset.values() {
        let mut h_prev = vec![0.0; params.dims.d_h];
        for step in steps {
            let core = core_step(params, &h_prev, &step.x);
            let mean = continuous_mean(
                params.delta_max,
                &core.gates,
                &step.proposal_continuous,
                core.res_raw,
            );
            if sigma > 0.0 {
                for (ch, m) in mean.iter().enumerate() {
                    let taken = step.mean_continuous[ch] + step.cont_delta[ch];
                    let d = taken - m;
                    logp += -0.5 * (d / sigma) * (d / sigma)
                        - sigma.ln()
                        - 0.5 * (std::f64::consts::TAU).ln();
                }
            }
            if epsilon > 0.0 {
                for (d, logit) in core.logits.iter().enumerate() {
                    if !step.eligible[d] {
                        continue;
                    }
                    let q = epsilon + (1.0 - 2.0 * epsilon) * sigmoid(*logit);
                    logp += if step.emitted[d] { q.ln() } else { (1.0 - q).ln() };
                }
            }
            h_prev = core.h;
        }
    }
    logp
}

/// Analytic `(log π, ∇ log π)` via backpropagation through time. The
/// gradient is a flat vector in canonical parameter order with zero in the
/// `delta_max` slot.
pub fn log_prob_and_grad(
    params: &EnsemblerParams,
    trace: &TrainTrace,
    sigma: f64,
    epsilon: f64,
) -> (f64, Vec<f64>) {
    let dims = params.dims;
    let layout = ParamLayout::of(dims);
    let mut grad = vec![0.0; dims.param_count()];
    let mut logp = 0.0;

    for steps in trace.per_asset.values() {
        // Forward replay under the current parameters.
        let mut cores = Vec::with_capacity(steps.len());
        let mut h_prev = vec![0.0; dims.d_h];
        for step in steps {
            let core = core_step(params, &h_prev, &step.x);
            h_prev = core.h.clone();
            cores.push(core);
        }

        let mut carry = vec![0.0; dims.d_h];
        for (t, step) in steps.iter().enumerate().rev() {
            let core = &cores[t];
            let h = &core.h;
            let h_prev: &[f64] = if t == 0 { &step.h_prev } else { &cores[t - 1].h };
            let mean = continuous_mean(
                params.delta_max,
                &core.gates,
                &step.proposal_continuous,
                core.res_raw,
            );

            // d logp / d mean for the Gaussian continuous channels.
            let mut c = [0.0f64; 2];
            if sigma > 0.0 {
                for (ch, slot) in c.iter_mut().enumerate() {
                    let taken = step.mean_continuous[ch] + step.cont_delta[ch];
                    let d = taken - mean[ch];
                    *slot = d / (sigma * sigma);
                    logp += -0.5 * (d / sigma) * (d / sigma)
                        - sigma.ln()
                        - 0.5 * (std::f64::consts::TAU).ln();
                }
            }

            // d logp / d logit for the smoothed Bernoulli emissions.
            let mut dl = vec![0.0; ActionKind::COUNT];
            if epsilon > 0.0 {
                for (d, slot) in dl.iter_mut().enumerate() {
                    if !step.eligible[d] {
                        continue;
                    }
                    let s = sigmoid(core.logits[d]);
                    let q = epsilon + (1.0 - 2.0 * epsilon) * s;
                    let ds = (1.0 - 2.0 * epsilon) * s * (1.0 - s);
                    if step.emitted[d] {
                        logp += q.ln();
                        *slot = ds / q;
                    } else {
                        logp += (1.0 - q).ln();
                        *slot = -ds / (1.0 - q);
                    }
                }
            }

            // Softmax gate backward: dγ = g ⊙ (ca − Σ g·ca).
            let ca: Vec<f64> = step
                .proposal_continuous
                .iter()
                .map(|a| c[0] * a[0] + c[1] * a[1])
                .collect();
            let gdot: f64 = core.gates.iter().zip(ca.iter()).map(|(g, v)| g * v).sum();
            let dgamma: Vec<f64> = core
                .gates
                .iter()
                .zip(ca.iter())
                .map(|(g, v)| g * (v - gdot))
                .collect();

            // Residual head backward through its tanh.
            let dres = [
                c[0] * params.delta_max * (1.0 - core.res_raw[0].tanh().powi(2)),
                c[1] * params.delta_max * (1.0 - core.res_raw[1].tanh().powi(2)),
            ];

            // Head weight gradients and the hidden-state pullback.
            for (k, dg) in dgamma.iter().enumerate() {
                for (i, hi) in h.iter().enumerate() {
                    grad[layout.w_gate + k * dims.d_h + i] += dg * hi;
                }
            }
            for (ch, dr) in dres.iter().enumerate() {
                for (i, hi) in h.iter().enumerate() {
                    grad[layout.w_res + ch * dims.d_h + i] += dr * hi;
                }
            }
            for (d, dld) in dl.iter().enumerate() {
                if *dld != 0.0 {
                    for (i, hi) in h.iter().enumerate() {
                        grad[layout.w_disc + d * dims.d_h + i] += dld * hi;
                    }
                }
            }

            let mut dh = params.w_gate_t_mul(&dgamma);
            let from_res = params.w_res_t_mul(&dres);
            let from_disc = params.w_disc_t_mul(&dl);
            for i in 0..dims.d_h {
                dh[i] += from_res[i] + from_disc[i] + carry[i];
            }

            // Through the tanh cell into the recurrent weights.
            let dz: Vec<f64> = dh
                .iter()
                .zip(h.iter())
                .map(|(d, hi)| d * (1.0 - hi * hi))
                .collect();
            for (i, dzi) in dz.iter().enumerate() {
                grad[layout.bias + i] += dzi;
                let row = layout.w_in + i * dims.d_in;
                for (j, xj) in step.x.iter().enumerate() {
                    grad[row + j] += dzi * xj;
                }
                let hrow = layout.w_h + i * dims.d_h;
                for (j, hj) in h_prev.iter().enumerate() {
                    grad[hrow + j] += dzi * hj;
                }
            }
            carry = params.w_h_t_mul(&dz);
        }
    }
    grad[layout.delta_max] = 0.0;
    (logp, grad)
}

/// One training episode's contribution to an update.
#[derive(Debug, Clone)]
pub struct EpisodeSample {
    pub ret: f64,
    pub trace: TrainTrace,
}

/// Global-norm cap on the advantage-weighted gradient. Episode scores sum
/// over every tick, so raw norms scale with episode length; without a cap
/// a single lucky batch can throw the policy into a region where all
/// returns tie and the advantage signal dies.
pub const GRAD_NORM_CLIP: f64 = 10.0;

/// REINFORCE ascent step: `params += lr · mean((R - b) ∇ log π)`, with the
/// baseline updated as an exponential moving average of mean returns. The
/// first update (baseline `None`) centers on the batch mean.
pub fn reinforce_update(
    params: &EnsemblerParams,
    batch: &[EpisodeSample],
    learning_rate: f64,
    sigma: f64,
    epsilon: f64,
    baseline: Option<f64>,
    baseline_decay: f64,
) -> Result<(EnsemblerParams, f64), TrainError> {
    assert!(!batch.is_empty(), "reinforce_update needs a nonempty batch");
    let mean_return = batch.iter().map(|s| s.ret).sum::<f64>() / batch.len() as f64;
    let b = baseline.unwrap_or(mean_return);

    let mut g = vec![0.0; params.dims.param_count()];
    for sample in batch {
        let advantage = sample.ret - b;
        if advantage == 0.0 {
            continue;
        }
        let (_, grad) = log_prob_and_grad(params, &sample.trace, sigma, epsilon);
        for (gi, di) in g.iter_mut().zip(grad.iter()) {
            *gi += advantage * di;
        }
    }
    let mut scale = learning_rate / batch.len() as f64;
    let norm = (g.iter().map(|v| v * v).sum::<f64>() / (batch.len() as f64).powi(2)).sqrt();
    if !norm.is_finite() {
        let component = g.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(TrainError::NonFiniteGradient {
            iteration: 0,
            component,
        });
    }
    if norm > GRAD_NORM_CLIP {
        scale *= GRAD_NORM_CLIP / norm;
    }
    let mut flat = params.to_flat();
    for (fi, gi) in flat.iter_mut().zip(g.iter()) {
        *fi += scale * gi;
    }
    let new_params = EnsemblerParams::from_flat(params.dims, &flat, params.init_seed)?;
    let new_baseline = baseline_decay * b + (1.0 - baseline_decay) * mean_return;
    Ok((new_params, new_baseline))
}

/// One learning-curve row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_return: f64,
    pub baseline: f64,
    pub best_return: f64,
}

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("iteration,mean_return,baseline,best_return\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.iteration, p.mean_return, p.baseline, p.best_return
        ));
    }
    out
}

/// Registry row kept in the Cognitive Corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalityInfo {
    pub id: String,
    pub mission_type: String,
    pub final_mean_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalityMeta {
    pub scenario_digest: String,
    pub config: TrainConfig,
    pub final_mean_utility: f64,
    pub eval_seed: u64,
}

/// A trained, uploadable parameter set for one mission type.
#[derive(Debug, Clone, PartialEq)]
pub struct Personality {
    pub id: String,
    pub mission_type: String,
    pub params: EnsemblerParams,
    pub meta: PersonalityMeta,
}

impl Personality {
    pub fn info(&self) -> PersonalityInfo {
        PersonalityInfo {
            id: self.id.clone(),
            mission_type: self.mission_type.clone(),
            final_mean_utility: self.meta.final_mean_utility,
        }
    }
}

/// Trains a personality on the scenario. Deterministic per master seed:
/// the learning curve and final parameters replay exactly.
pub fn train(
    scenario: &Scenario,
    config: &TrainConfig,
) -> Result<(Personality, Vec<CurvePoint>), TrainError> {
    let dims = scenario.ensembler_dims();
    let master = config.master_seed;
    let mut params = crate::ensemble::init_params(
        derive_seed(master, "init"),
        dims,
        scenario.ensembler.init_scale,
        scenario.ensembler.delta_max,
    );
    let mut baseline: Option<f64> = None;
    let mut curve = Vec::with_capacity(config.iterations);
    let mut best: (EnsemblerParams, f64) = (params.clone(), f64::NEG_INFINITY);

    for iteration in 0..config.iterations {
        let mut batch = Vec::with_capacity(config.episodes_per_iteration);
        for episode in 0..config.episodes_per_iteration {
            let seed = derive_seed_indexed(master, "episode", iteration as u64, episode as u64);
            let rollout =
                rollout_stochastic(scenario, &params, config.sigma, config.epsilon, seed)?;
            batch.push(EpisodeSample {
                ret: rollout.ret,
                trace: rollout.trace,
            });
        }
        let mean_return = batch.iter().map(|s| s.ret).sum::<f64>() / batch.len() as f64;
        let best_return = batch.iter().map(|s| s.ret).fold(f64::NEG_INFINITY, f64::max);
        if mean_return > best.1 {
            best = (params.clone(), mean_return);
        }
        let (next, b) = reinforce_update(
            &params,
            &batch,
            config.learning_rate,
            config.sigma,
            config.epsilon,
            baseline,
            config.baseline_decay,
        )
        .map_err(|e| match e {
            TrainError::NonFiniteGradient { component, .. } => {
                TrainError::NonFiniteGradient { iteration, component }
            }
            other => other,
        })?;
        params = next;
        baseline = Some(b);
        curve.push(CurvePoint {
            iteration,
            mean_return,
            baseline: b,
            best_return,
        });
    }

    let chosen = if best.1.is_finite() { best.0 } else { params };
    let eval_seed = derive_seed(master, "eval");
    let final_mean_utility = run_episode(scenario, &chosen, eval_seed)?.utility.total;
    let personality = Personality {
        id: format!("{}-s{}", scenario.name, master),
        mission_type: scenario.name.clone(),
        params: chosen,
        meta: PersonalityMeta {
            scenario_digest: scenario.digest(),
            config: *config,
            final_mean_utility,
            eval_seed,
        },
    };
    Ok((personality, curve))
}

const PERSONALITY_MAGIC: &[u8; 4] = b"ASPK";
const PERSONALITY_VERSION: u32 = 1;

fn checksum32(bytes: &[u8]) -> [u8; 4] {
    let d = Sha256::digest(bytes);
    [d[0], d[1], d[2], d[3]]
}

#[derive(Serialize, Deserialize)]
struct PersonalityHeader {
    id: String,
    mission_type: String,
    meta: PersonalityMeta,
}

pub fn personality_to_bytes(p: &Personality) -> Vec<u8> {
    let header = PersonalityHeader {
        id: p.id.clone(),
        mission_type: p.mission_type.clone(),
        meta: p.meta.clone(),
    };
    let meta_json = serde_json::to_vec(&header).expect("meta serializes");
    let mut out = Vec::new();
    out.extend_from_slice(PERSONALITY_MAGIC);
    out.extend_from_slice(&PERSONALITY_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&serialize_params(&p.params));
    let sum = checksum32(&out);
    out.extend_from_slice(&sum);
    out
}

pub fn personality_from_bytes(bytes: &[u8]) -> Result<Personality, TrainError> {
    if bytes.len() < 12 + 4 {
        return Err(TrainError::Truncated);
    }
    if &bytes[0..4] != PERSONALITY_MAGIC {
        return Err(TrainError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PERSONALITY_VERSION {
        return Err(TrainError::UnsupportedVersion(version));
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + meta_len + 4 {
        return Err(TrainError::Truncated);
    }
    let body = &bytes[..bytes.len() - 4];
    let stored: [u8; 4] = bytes[bytes.len() - 4..].try_into().unwrap();
    if checksum32(body) != stored {
        return Err(TrainError::ChecksumMismatch);
    }
    let header: PersonalityHeader = serde_json::from_slice(&bytes[12..12 + meta_len])?;
    let params = deserialize_params(&bytes[12 + meta_len..bytes.len() - 4])?;
    Ok(Personality {
        id: header.id,
        mission_type: header.mission_type,
        params,
        meta: header.meta,
    })
}

pub fn save_personality(p: &Personality, path: &Path) -> Result<(), TrainError> {
    std::fs::write(path, personality_to_bytes(p))?;
    Ok(())
}

pub fn load_personality(path: &Path) -> Result<Personality, TrainError> {
    personality_from_bytes(&std::fs::read(path)?)
}
