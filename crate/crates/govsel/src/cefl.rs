//! Candidate expansion and freezing: non-agentic, overshoot-biased
//! construction of the frozen candidate set the rest of the pipeline works
//! from. Expansion is a pure function of (task, pool, stream seed, config);
//! the frozen set is digest-sealed and re-verified downstream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{AgentCandidate, Axis, FlagLevel, QualityFlag, TaskSpec};
use crate::entropy::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeflConfig {
    pub overshoot_factor: f64,
    pub jitter_scale: f64,
    /// Severity emitted when the pool is empty. The boundary ablation forces
    /// this to CRITICAL.
    pub empty_pool_flag: FlagLevel,
}

impl Default for CeflConfig {
    fn default() -> Self {
        CeflConfig { overshoot_factor: 2.0, jitter_scale: 0.05, empty_pool_flag: FlagLevel::Degraded }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CeflError {
    #[error("axis mismatch between requirement and feature vectors")]
    AxisMismatch,
}

/// Cosine similarity between a requirement vector and a feature vector over
/// identical axes. Both vectors are non-negative, so the result already lies
/// in [0, 1]; a zero-norm side yields 0.
pub fn similarity(
    requirement: &BTreeMap<Axis, f64>,
    features: &BTreeMap<Axis, f64>,
) -> Result<f64, CeflError> {
    if requirement.len() != features.len()
        || !requirement.keys().zip(features.keys()).all(|(a, b)| a == b)
    {
        return Err(CeflError::AxisMismatch);
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (axis, a) in requirement {
        let b = features[axis];
        dot += a * b;
        norm_a += a * a;
        norm_b += b * b;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// Immutable candidate set with a digest over its serialized contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenCandidateSet {
    candidates: Vec<AgentCandidate>,
    frozen_digest: String,
    task_id: String,
}

impl FrozenCandidateSet {
    pub fn candidates(&self) -> &[AgentCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn frozen_digest(&self) -> &str {
        &self.frozen_digest
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn candidate_ids(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.id.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.candidates.iter().any(|c| c.id == id)
    }

    /// Recomputes the digest and compares it to the sealed one.
    pub fn verify_digest(&self) -> bool {
        digest_candidates(&self.candidates) == self.frozen_digest
    }

    #[cfg(test)]
    pub(crate) fn tamper_for_test(&mut self) {
        if let Some(first) = self.candidates.first_mut() {
            first.category.push('x');
        }
    }
}

fn digest_candidates(candidates: &[AgentCandidate]) -> String {
    let serialized = serde_json::to_vec(candidates).expect("candidate serialization");
    hex::encode(<[u8; 32]>::from(Sha256::digest(&serialized)))
}

/// Ranks the pool by task similarity plus bounded jitter and freezes the top
/// `ceil(overshoot_factor * slots)` candidates. `slots` is the surfaced-set
/// budget (m + k). Ties break by id so the ranking is total.
pub fn expand(
    task: &TaskSpec,
    pool: &[AgentCandidate],
    stream: &mut RandomStream,
    cfg: &CeflConfig,
    slots: usize,
) -> Result<(FrozenCandidateSet, Option<QualityFlag>), CeflError> {
    debug_assert!(cfg.overshoot_factor >= 1.0);
    debug_assert_eq!(stream.label(), "cefl");
    if pool.is_empty() {
        let frozen = FrozenCandidateSet {
            candidates: Vec::new(),
            frozen_digest: digest_candidates(&[]),
            task_id: task.id.clone(),
        };
        let flag = QualityFlag {
            level: cfg.empty_pool_flag,
            source: "cefl".to_string(),
            reason: "candidate pool is empty".to_string(),
        };
        return Ok((frozen, Some(flag)));
    }

    let mut ranked: Vec<(f64, &AgentCandidate)> = Vec::with_capacity(pool.len());
    for candidate in pool {
        let base = similarity(&task.requirement_vector, &candidate.features)?;
        let jitter = cfg.jitter_scale * (stream.next_f64() - 0.5);
        ranked.push((base + jitter, candidate));
    }
    ranked.sort_by(|(sa, ca), (sb, cb)| {
        sb.partial_cmp(sa).unwrap().then_with(|| ca.id.cmp(&cb.id))
    });

    let n = ((cfg.overshoot_factor * slots as f64).ceil() as usize).min(pool.len());
    let candidates: Vec<AgentCandidate> =
        ranked.into_iter().take(n).map(|(_, c)| c.clone()).collect();
    let frozen_digest = digest_candidates(&candidates);
    let frozen = FrozenCandidateSet { candidates, frozen_digest, task_id: task.id.clone() };
    Ok((frozen, None))
}
