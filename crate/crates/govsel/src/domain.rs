//! Shared domain types: candidates, tasks, scores, rationales, quality flags
//! and run outcomes, plus the deterministic scenario pools.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Candidate feature axes. All values are stored oriented "higher is better";
/// in particular risk is stored as risk-safety.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    RiskSafety,
    Stability,
    Latency,
    Auditability,
}

pub const FEATURE_AXES: [Axis; 4] = [
    Axis::RiskSafety,
    Axis::Stability,
    Axis::Latency,
    Axis::Auditability,
];

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::RiskSafety => "risk_safety",
            Axis::Stability => "stability",
            Axis::Latency => "latency",
            Axis::Auditability => "auditability",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three axes the scorer emits and the reducer operates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreAxis {
    Utility,
    RiskSafety,
    Stability,
}

pub const SCORE_AXES: [ScoreAxis; 3] = [ScoreAxis::Utility, ScoreAxis::RiskSafety, ScoreAxis::Stability];

/// Closed six-tag vocabulary for rationale arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTag {
    Utility,
    Risk,
    Stability,
    Latency,
    Auditability,
    Compliance,
}

impl FeatureTag {
    pub fn for_axis(axis: Axis) -> FeatureTag {
        match axis {
            Axis::RiskSafety => FeatureTag::Risk,
            Axis::Stability => FeatureTag::Stability,
            Axis::Latency => FeatureTag::Latency,
            Axis::Auditability => FeatureTag::Auditability,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureTag::Utility => "utility",
            FeatureTag::Risk => "risk",
            FeatureTag::Stability => "stability",
            FeatureTag::Latency => "latency",
            FeatureTag::Auditability => "auditability",
            FeatureTag::Compliance => "compliance",
        }
    }
}

/// One pro or con argument. Each argument carries exactly one tag from the
/// closed vocabulary; the tag being an enum makes the vocabulary closed at
/// the type level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Argument {
    pub feature_tag: FeatureTag,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Rationale {
    pub pro: Vec<Argument>,
    pub con: Vec<Argument>,
    /// Attack channel: a request for a presentation position. The gate records
    /// it but never consults it for ordering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering_hint: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisScores {
    pub utility: f64,
    pub risk_safety: f64,
    pub stability: f64,
}

impl AxisScores {
    pub fn get(&self, axis: ScoreAxis) -> f64 {
        match axis {
            ScoreAxis::Utility => self.utility,
            ScoreAxis::RiskSafety => self.risk_safety,
            ScoreAxis::Stability => self.stability,
        }
    }

    pub fn set(&mut self, axis: ScoreAxis, value: f64) {
        match axis {
            ScoreAxis::Utility => self.utility = value,
            ScoreAxis::RiskSafety => self.risk_safety = value,
            ScoreAxis::Stability => self.stability = value,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.utility + self.risk_safety + self.stability) / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlagLevel {
    #[serde(rename = "NOMINAL")]
    Nominal,
    #[serde(rename = "DEGRADED")]
    Degraded,
    #[serde(rename = "CRITICAL")]
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityFlag {
    pub level: FlagLevel,
    /// Stage identifier, e.g. "cefl" or "reducer.clamp".
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    #[serde(rename = "SURFACED")]
    Surfaced,
    #[serde(rename = "NO_ACTION")]
    NoAction,
    #[serde(rename = "BLOCKED")]
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub kind: OutcomeKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCandidate {
    pub id: String,
    pub features: BTreeMap<Axis, f64>,
    pub disclosures: BTreeMap<String, String>,
    /// Diversity bucket key.
    pub category: String,
}

impl AgentCandidate {
    pub fn feature(&self, axis: Axis) -> Option<f64> {
        self.features.get(&axis).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub scenario: ScenarioId,
    pub requirement_vector: BTreeMap<Axis, f64>,
    pub description: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("{axis} out of range")]
    FeatureOutOfRange { axis: &'static str },
    #[error("missing axis {axis}")]
    MissingAxis { axis: &'static str },
    #[error("duplicate disclosure key {key}")]
    DuplicateDisclosureKey { key: String },
    #[error("duplicate candidate id {id}")]
    DuplicateCandidateId { id: String },
}

/// Checks all `AgentCandidate` invariants; the error names the violated field.
pub fn validate_candidate(candidate: &AgentCandidate) -> Result<(), ValidationError> {
    for axis in FEATURE_AXES {
        match candidate.features.get(&axis) {
            None => return Err(ValidationError::MissingAxis { axis: axis.as_str() }),
            Some(v) if !(0.0..=1.0).contains(v) => {
                return Err(ValidationError::FeatureOutOfRange { axis: axis.as_str() })
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Builds a disclosure map from key/value pairs, rejecting duplicate keys.
pub fn disclosures_from_pairs(
    pairs: &[(&str, String)],
) -> Result<BTreeMap<String, String>, ValidationError> {
    let mut map = BTreeMap::new();
    for (key, value) in pairs {
        if map.insert(key.to_string(), value.clone()).is_some() {
            return Err(ValidationError::DuplicateDisclosureKey { key: key.to_string() });
        }
    }
    Ok(map)
}

/// Validates a whole pool: per-candidate invariants plus id uniqueness.
pub fn validate_pool(pool: &[AgentCandidate]) -> Result<(), ValidationError> {
    let mut seen = std::collections::BTreeSet::new();
    for candidate in pool {
        validate_candidate(candidate)?;
        if !seen.insert(candidate.id.as_str()) {
            return Err(ValidationError::DuplicateCandidateId { id: candidate.id.clone() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    FraudDetection,
    PaymentsMonitoring,
    QbrAnalysis,
}

pub const SCENARIOS: [ScenarioId; 3] = [
    ScenarioId::FraudDetection,
    ScenarioId::PaymentsMonitoring,
    ScenarioId::QbrAnalysis,
];

impl ScenarioId {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::FraudDetection => "fraud_detection",
            ScenarioId::PaymentsMonitoring => "payments_monitoring",
            ScenarioId::QbrAnalysis => "qbr_analysis",
        }
    }

    pub fn parse(s: &str) -> Result<ScenarioId, DomainError> {
        match s {
            "fraud_detection" => Ok(ScenarioId::FraudDetection),
            "payments_monitoring" => Ok(ScenarioId::PaymentsMonitoring),
            "qbr_analysis" => Ok(ScenarioId::QbrAnalysis),
            other => Err(DomainError::UnknownScenario(other.to_string())),
        }
    }

    fn agent_prefix(self) -> &'static str {
        match self {
            ScenarioId::FraudDetection => "fd",
            ScenarioId::PaymentsMonitoring => "pm",
            ScenarioId::QbrAnalysis => "qbr",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("unknown scenario id: {0}")]
    UnknownScenario(String),
}

pub const POOL_SIZE: usize = 10;
pub const TASKS_PER_SCENARIO: usize = 5;

/// Disclosure keys every generated agent carries. `model_version` is never
/// disclosed, so a model_version requirement blocks every candidate.
pub const STANDARD_DISCLOSURES: [&str; 3] =
    ["regulatory_compliance", "latency", "auditability_score"];

/// Ceiling for the risk-safety feature in generated pools. Kept strictly
/// below 0.95 so a `risk_safety >= 0.95` hard constraint removes the entire
/// pool.
pub const MAX_POOL_RISK_SAFETY: f64 = 0.90;

const POOL_CATEGORIES: [&str; 3] = ["rules_engine", "ml_model", "hybrid"];

fn seeded_rng(domain: &str, scenario: ScenarioId, seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(domain.as_bytes());
    hasher.update(scenario.as_str().as_bytes());
    hasher.update(seed.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + unit * (hi - lo)
}

/// Deterministic pool of `POOL_SIZE` agents for a scenario. Pure in
/// `(scenario_id, seed)`.
pub fn build_scenario_pool(scenario_id: &str, seed: u64) -> Result<Vec<AgentCandidate>, DomainError> {
    let scenario = ScenarioId::parse(scenario_id)?;
    let mut rng = seeded_rng("pool", scenario, seed);
    let mut pool = Vec::with_capacity(POOL_SIZE);
    for index in 0..POOL_SIZE {
        let mut features = BTreeMap::new();
        features.insert(Axis::RiskSafety, uniform_in(&mut rng, 0.35, MAX_POOL_RISK_SAFETY));
        features.insert(Axis::Stability, uniform_in(&mut rng, 0.20, 0.95));
        features.insert(Axis::Latency, uniform_in(&mut rng, 0.30, 0.95));
        features.insert(Axis::Auditability, uniform_in(&mut rng, 0.30, 0.95));

        let mut disclosures = BTreeMap::new();
        let tier = if index % 2 == 0 { "tier_1" } else { "tier_2" };
        disclosures.insert("regulatory_compliance".to_string(), tier.to_string());
        // Disclosed values mirror source features so the gate cross-check
        // passes for honest pools, including at tolerance zero.
        disclosures.insert("latency".to_string(), features[&Axis::Latency].to_string());
        disclosures.insert(
            "auditability_score".to_string(),
            features[&Axis::Auditability].to_string(),
        );

        pool.push(AgentCandidate {
            id: format!("{}-agent-{:02}", scenario.agent_prefix(), index),
            features,
            disclosures,
            category: POOL_CATEGORIES[index % POOL_CATEGORIES.len()].to_string(),
        });
    }
    Ok(pool)
}

/// Deterministic task instances for a scenario. The requirement vector folds
/// the contextual inputs of the task into the same axis space as the
/// candidate features.
pub fn build_scenario_tasks(scenario: ScenarioId, seed: u64) -> Vec<TaskSpec> {
    let mut rng = seeded_rng("tasks", scenario, seed);
    let themes = [
        "anomaly detection",
        "compliance review",
        "risk summarization",
        "exposure triage",
        "control attestation",
    ];
    (0..TASKS_PER_SCENARIO)
        .map(|index| {
            let mut requirement_vector = BTreeMap::new();
            for axis in FEATURE_AXES {
                requirement_vector.insert(axis, uniform_in(&mut rng, 0.2, 1.0));
            }
            TaskSpec {
                id: format!("{}-task-{}", scenario.agent_prefix(), index),
                scenario,
                requirement_vector,
                description: format!("{} for {}", themes[index % themes.len()], scenario),
            }
        })
        .collect()
}
