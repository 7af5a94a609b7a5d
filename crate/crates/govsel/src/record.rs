//! Append-only run records and their JSONL serialization.
//!
//! Every run produces one schema-versioned record carrying the full audit
//! trail: commitment and reveal digests, the frozen candidate set, pre- and
//! post-attack scores, stage traces, the gate verdict, quality flags,
//! anomaly events and a sequence-numbered event list. Each record seals
//! itself with a digest over its own serialization so any later mutation is
//! detectable.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::breaker::BreakerStatus;
use crate::domain::{AxisScores, FeatureTag, OutcomeKind, QualityFlag, RunOutcome};
use crate::gate::{GateVerdict, Violation};
use crate::reducer::StageTrace;
use crate::scorer::{AttackKind, Phase};

pub const SCHEMA_VERSION: &str = "govsel/1";

/// Anomaly conditions the stages detect. Every recorded anomaly must be
/// accompanied by a DEGRADED/CRITICAL flag from the same source; the
/// visibility metric measures exactly that pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    VarianceExceeded,
    MajorityFiltered,
    EmptySet,
    DisclosureMissing,
    RationaleInvalid,
    DigestMismatch,
    BreakerTrip,
    BreakerOpen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSnapshot {
    pub id: String,
    pub scores: AxisScores,
}

/// Presented rationale summary, sufficient to recompute framing entropy and
/// the framing-skew success predicate from the log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedSummary {
    pub id: String,
    pub pro_tags: Vec<FeatureTag>,
    pub con_tags: Vec<FeatureTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub run_id: String,
    pub scenario: String,
    pub ablation: String,
    pub attack: AttackKind,
    pub task_id: String,
    pub run_index: usize,

    pub commitment: String,
    pub nonce: String,
    /// Hex of the revealed entropy; empty until reveal succeeds.
    pub entropy: String,

    pub frozen_digest: String,
    pub candidate_ids: Vec<String>,

    pub scores_pre_attack: Vec<ScoreSnapshot>,
    pub scores_post_attack: Vec<ScoreSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_phase: Option<Phase>,
    /// True when the phase was picked with leaked entropy rather than blind
    /// alternation.
    pub phase_chosen_with_entropy: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_warning: Option<String>,

    pub stage_trace: Vec<StageTrace>,
    /// Surfaced ids in execution order.
    pub surfaced_ids: Vec<String>,
    pub gate_verdict: GateVerdict,
    pub violations: Vec<Violation>,
    pub order_permutation: Vec<usize>,
    /// Presented entries in presented order.
    pub presented: Vec<PresentedSummary>,
    pub ordering_hint_attempts: Vec<String>,
    /// Position hints are recorded but never honored; kept explicit so the
    /// ordering-attack success predicate reads straight off the record.
    pub ordering_hint_honored: bool,

    pub flags: Vec<QualityFlag>,
    pub anomalies: Vec<Anomaly>,
    pub outcome: RunOutcome,

    pub breaker_status_before: BreakerStatus,
    pub breaker_status_after: BreakerStatus,
    pub breaker_tripped: bool,

    pub events: Vec<AuditEvent>,
    /// Hex digest over this record serialized with the field set to "".
    pub record_digest: String,
}

impl RunRecord {
    pub fn is_blocked(&self) -> bool {
        self.outcome.kind == OutcomeKind::Blocked
    }

    pub fn is_surfaced(&self) -> bool {
        self.outcome.kind == OutcomeKind::Surfaced
    }

    /// Seals the record: computes and stores the self-digest.
    pub fn seal(&mut self) {
        self.record_digest = String::new();
        let serialized = serde_json::to_vec(&*self).expect("record serialization");
        self.record_digest = hex::encode(<[u8; 32]>::from(Sha256::digest(&serialized)));
    }

    pub fn digest_is_valid(&self) -> bool {
        let mut copy = self.clone();
        let claimed = std::mem::take(&mut copy.record_digest);
        let serialized = serde_json::to_vec(&copy).expect("record serialization");
        hex::encode(<[u8; 32]>::from(Sha256::digest(&serialized))) == claimed
    }

    pub fn event_seq(&self, kind: &str) -> Option<u64> {
        self.events.iter().find(|e| e.kind == kind).map(|e| e.seq)
    }
}

/// Operator reset of a cell breaker, logged alongside the run records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetRecord {
    pub schema: String,
    pub kind: String,
    pub scenario: String,
    pub ablation: String,
    pub attack: String,
    pub operator_note: String,
    pub record_digest: String,
}

impl ResetRecord {
    pub fn new(scenario: &str, ablation: &str, attack: &str, note: &str) -> ResetRecord {
        let mut record = ResetRecord {
            schema: SCHEMA_VERSION.to_string(),
            kind: "breaker_reset".to_string(),
            scenario: scenario.to_string(),
            ablation: ablation.to_string(),
            attack: attack.to_string(),
            operator_note: note.to_string(),
            record_digest: String::new(),
        };
        record.seal();
        record
    }

    pub fn seal(&mut self) {
        self.record_digest = String::new();
        let serialized = serde_json::to_vec(&*self).expect("record serialization");
        self.record_digest = hex::encode(<[u8; 32]>::from(Sha256::digest(&serialized)));
    }

    pub fn digest_is_valid(&self) -> bool {
        let mut copy = self.clone();
        let claimed = std::mem::take(&mut copy.record_digest);
        let serialized = serde_json::to_vec(&copy).expect("record serialization");
        hex::encode(<[u8; 32]>::from(Sha256::digest(&serialized))) == claimed
    }
}

/// One line of a cell log file.
// run records dwarf reset records, but lines are parsed into short-lived
// vectors, so boxing would only add noise at every construction site
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record_type", rename_all = "snake_case")]
pub enum LogLine {
    Run(RunRecord),
    BreakerReset(ResetRecord),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}:{line}: corrupt audit log line: {source}")]
    Corrupt {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses a JSONL audit log. A corrupt line is a hard error carrying file
/// and line number: partially trusted audit logs are worse than none.
pub fn parse_log(path: &std::path::Path) -> Result<Vec<LogLine>, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(line).map_err(|source| LogError::Corrupt {
            path: path.display().to_string(),
            line: index + 1,
            source,
        })?;
        lines.push(parsed);
    }
    Ok(lines)
}

pub fn write_log(path: &std::path::Path, lines: &[LogLine]) -> Result<(), LogError> {
    let mut buffer = String::new();
    for line in lines {
        buffer.push_str(&serde_json::to_string(line).expect("log serialization"));
        buffer.push('\n');
    }
    std::fs::write(path, buffer).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })
}
