//! Audit verification: re-checks every record in a log directory —
//! self-digest, commitment recomputation, event ordering, and stage-trace
//! monotonicity. Any violation is a hard failure naming the run.

use std::path::Path;

use thiserror::Error;

use crate::entropy::recompute_commitment_hex;
use crate::record::{parse_log, LogError, LogLine, RunRecord, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no run logs found in {0}")]
    NoLogs(String),
    #[error("record {run_id}: {reason}")]
    Violation { run_id: String, reason: String },
}

fn violation(record: &RunRecord, reason: impl Into<String>) -> VerifyError {
    VerifyError::Violation { run_id: record.run_id.clone(), reason: reason.into() }
}

/// All integrity checks for one run record.
pub fn verify_record(record: &RunRecord) -> Result<(), VerifyError> {
    if record.schema != SCHEMA_VERSION {
        return Err(violation(record, format!("unknown schema {:?}", record.schema)));
    }
    if !record.digest_is_valid() {
        return Err(violation(record, "record digest mismatch"));
    }
    match recompute_commitment_hex(&record.entropy, &record.nonce) {
        Some(commitment) if commitment == record.commitment => {}
        Some(_) => return Err(violation(record, "commitment does not match revealed entropy")),
        None => return Err(violation(record, "malformed entropy or nonce field")),
    }

    // commit < score < reveal < reduce on logged sequence numbers
    let mut previous = None;
    for kind in ["commit", "score", "reveal", "reduce"] {
        let seq = record
            .event_seq(kind)
            .ok_or_else(|| violation(record, format!("missing {kind} event")))?;
        if let Some((prev_kind, prev_seq)) = previous {
            if seq <= prev_seq {
                return Err(violation(
                    record,
                    format!("event order violation: {kind} (seq {seq}) not after {prev_kind} (seq {prev_seq})"),
                ));
            }
        }
        previous = Some((kind, seq));
    }
    let mut last_seq = None;
    for event in &record.events {
        if let Some(last) = last_seq {
            if event.seq <= last {
                return Err(violation(record, "event sequence numbers not strictly increasing"));
            }
        }
        last_seq = Some(event.seq);
    }

    // stage trace: each stage survives a subset of what entered, and the
    // next stage enters exactly what survived
    let mut expected_entering: Option<&[String]> = None;
    for stage in &record.stage_trace {
        if let Some(expected) = expected_entering {
            if expected != stage.entering.as_slice() {
                return Err(violation(
                    record,
                    format!("stage {} entering set does not chain from previous stage", stage.stage),
                ));
            }
        }
        for id in &stage.surviving {
            if !stage.entering.contains(id) {
                return Err(violation(
                    record,
                    format!("stage {} surviving id {id} never entered", stage.stage),
                ));
            }
        }
        expected_entering = Some(&stage.surviving);
    }

    for id in &record.surfaced_ids {
        if !record.candidate_ids.contains(id) {
            return Err(violation(record, format!("surfaced id {id} not in frozen set")));
        }
    }
    if record.ordering_hint_honored {
        return Err(violation(record, "ordering hint marked honored"));
    }
    Ok(())
}

/// Verifies every record in every JSONL log under `dir`. Returns the number
/// of run records checked.
pub fn verify_dir(dir: &Path) -> Result<usize, VerifyError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|source| VerifyError::Io { path: dir.display().to_string(), source })?;
    let mut checked = 0usize;
    for entry in entries {
        let entry = entry
            .map_err(|source| VerifyError::Io { path: dir.display().to_string(), source })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
            continue;
        }
        for line in parse_log(&path)? {
            match line {
                LogLine::Run(record) => {
                    verify_record(&record)?;
                    checked += 1;
                }
                LogLine::BreakerReset(reset) => {
                    if !reset.digest_is_valid() {
                        return Err(VerifyError::Violation {
                            run_id: format!("breaker_reset {}/{}/{}", reset.scenario, reset.ablation, reset.attack),
                            reason: "record digest mismatch".to_string(),
                        });
                    }
                }
            }
        }
    }
    if checked == 0 {
        return Err(VerifyError::NoLogs(dir.display().to_string()));
    }
    Ok(checked)
}
