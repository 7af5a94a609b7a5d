//! Simulated scoring agent plus the adversarial strategy suite.
//!
//! The scorer evaluates the frozen candidate set and attaches multi-axis
//! scores and pro/con rationales. It has no authority over membership:
//! every attack is a score or rationale perturbation, never an insertion or
//! removal. Exposure of reducer internals is modelled as an explicit
//! capability object that stays empty unless an ablation grants it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cefl::{similarity, FrozenCandidateSet};
use crate::domain::{
    AgentCandidate, Argument, Axis, AxisScores, FeatureTag, Rationale, TaskSpec, FEATURE_AXES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: AgentCandidate,
    pub scores: AxisScores,
    pub rationale: Rationale,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScorerError {
    #[error("frozen candidate set digest mismatch")]
    DigestMismatch,
    #[error("axis mismatch in task requirement vector")]
    AxisMismatch,
}

fn clip(value: f64) -> f64 {
    value.clamp(0.0, 1.0)
}

fn noise_rng(seed: u64, candidate_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"score-noise");
    hasher.update(seed.to_le_bytes());
    hasher.update(candidate_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn symmetric_noise(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (unit * 2.0 - 1.0) * scale
}

/// Ranks feature axes strongest-first, ties broken by axis declaration order.
fn axes_by_strength(candidate: &AgentCandidate) -> Vec<Axis> {
    let mut axes: Vec<Axis> = FEATURE_AXES.to_vec();
    axes.sort_by(|a, b| {
        let fa = candidate.feature(*a).unwrap_or(0.0);
        let fb = candidate.feature(*b).unwrap_or(0.0);
        fb.partial_cmp(&fa).unwrap()
    });
    axes
}

fn base_rationale(candidate: &AgentCandidate) -> Rationale {
    let ranked = axes_by_strength(candidate);
    let pro = ranked[..2]
        .iter()
        .map(|axis| Argument {
            feature_tag: FeatureTag::for_axis(*axis),
            text: format!("strong {} ({:.2})", axis, candidate.feature(*axis).unwrap_or(0.0)),
        })
        .collect();
    let weakest = *ranked.last().expect("four axes");
    let con = vec![Argument {
        feature_tag: FeatureTag::for_axis(weakest),
        text: format!("weak {} ({:.2})", weakest, candidate.feature(weakest).unwrap_or(0.0)),
    }];
    Rationale { pro, con, ordering_hint: None }
}

/// Scores the frozen set: utility is task similarity, risk-safety and
/// stability mirror the source features with bounded seeded noise. Every
/// rationale carries at least one pro and one con argument.
pub fn base_score(
    frozen: &FrozenCandidateSet,
    task: &TaskSpec,
    seed: u64,
    noise_scale: f64,
) -> Result<Vec<ScoredCandidate>, ScorerError> {
    if !frozen.verify_digest() {
        return Err(ScorerError::DigestMismatch);
    }
    let mut scored = Vec::with_capacity(frozen.len());
    for candidate in frozen.candidates() {
        let utility = clip(
            similarity(&task.requirement_vector, &candidate.features)
                .map_err(|_| ScorerError::AxisMismatch)?,
        );
        let mut rng = noise_rng(seed, &candidate.id);
        let risk_safety = clip(
            candidate.feature(Axis::RiskSafety).unwrap_or(0.0) + symmetric_noise(&mut rng, noise_scale),
        );
        let stability = clip(
            candidate.feature(Axis::Stability).unwrap_or(0.0) + symmetric_noise(&mut rng, noise_scale),
        );
        scored.push(ScoredCandidate {
            candidate: candidate.clone(),
            scores: AxisScores { utility, risk_safety, stability },
            rationale: base_rationale(candidate),
        });
    }
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttackKind {
    None,
    A1,
    A2,
    A3,
    A4,
    A5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub target_id: String,
    /// Amplification factor for deviation-from-mean scaling.
    pub alpha: f64,
    /// Bracketing margin above the assumed gate threshold.
    pub epsilon: f64,
    /// Extra pro arguments injected into the target rationale.
    pub skew: usize,
    pub phase: Phase,
}

impl AttackSpec {
    pub fn none() -> AttackSpec {
        AttackSpec {
            kind: AttackKind::None,
            target_id: String::new(),
            alpha: 1.5,
            epsilon: 0.02,
            skew: 3,
            phase: Phase::High,
        }
    }
}

/// Gate threshold the attacker assumes when the real value is not exposed.
pub const ASSUMED_GATE_THRESHOLD: f64 = 0.3;

/// Reducer internals visible to the scorer. Empty under the baseline; the
/// exposure ablations populate individual fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReducerExposure {
    /// The true per-axis gate threshold, when the constraint-exposure
    /// ablation leaks it.
    pub per_axis_threshold: Option<f64>,
    /// Raw entropy bytes, when the entropy-exposure ablation leaks them.
    pub entropy: Option<[u8; 32]>,
}

pub fn phase_factor(phase: Phase) -> f64 {
    match phase {
        Phase::High => 1.1,
        Phase::Low => 0.9,
    }
}

/// Applies an adversarial perturbation to the scored set. Membership is
/// preserved for every attack kind; an absent target makes the attack a
/// no-op and returns a warning.
pub fn apply_attack(
    scored: &[ScoredCandidate],
    spec: &AttackSpec,
    exposure: &ReducerExposure,
) -> (Vec<ScoredCandidate>, Option<String>) {
    let mut out: Vec<ScoredCandidate> = scored.to_vec();
    if spec.kind == AttackKind::None {
        return (out, None);
    }
    let needs_target = matches!(spec.kind, AttackKind::A1 | AttackKind::A3 | AttackKind::A4);
    let target_index = out.iter().position(|s| s.candidate.id == spec.target_id);
    if needs_target && target_index.is_none() {
        return (out, Some(format!("attack target {} not in scored set", spec.target_id)));
    }

    match spec.kind {
        AttackKind::None => unreachable!(),
        AttackKind::A1 => {
            let n = out.len() as f64;
            let means = crate::domain::SCORE_AXES.map(|axis| {
                out.iter().map(|s| s.scores.get(axis)).sum::<f64>() / n
            });
            let target = &mut out[target_index.expect("checked above")];
            for (axis, mean) in crate::domain::SCORE_AXES.into_iter().zip(means) {
                let s = target.scores.get(axis);
                target.scores.set(axis, clip(mean + spec.alpha * (s - mean)));
            }
        }
        AttackKind::A2 => {
            let threshold = exposure.per_axis_threshold.unwrap_or(ASSUMED_GATE_THRESHOLD);
            let value = clip(threshold + spec.epsilon);
            for entry in &mut out {
                for axis in crate::domain::SCORE_AXES {
                    entry.scores.set(axis, value);
                }
            }
        }
        AttackKind::A3 => {
            let target = &mut out[target_index.expect("checked above")];
            let skew_tags = [FeatureTag::Utility, FeatureTag::Compliance, FeatureTag::Stability];
            for i in 0..spec.skew {
                target.rationale.pro.push(Argument {
                    feature_tag: skew_tags[i % skew_tags.len()],
                    text: "added emphasis".to_string(),
                });
            }
            // one con argument stays in place: the gate minimum is honored
            debug_assert!(!target.rationale.con.is_empty());
        }
        AttackKind::A4 => {
            out[target_index.expect("checked above")].rationale.ordering_hint = Some(0);
        }
        AttackKind::A5 => {
            let factor = phase_factor(spec.phase);
            for entry in &mut out {
                for axis in crate::domain::SCORE_AXES {
                    entry.scores.set(axis, clip(entry.scores.get(axis) * factor));
                }
            }
        }
    }
    (out, None)
}
