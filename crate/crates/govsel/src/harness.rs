//! Grid executor: builds (scenario, ablation, attack) cells, runs the full
//! pipeline per task with commit-reveal ordering, and writes one JSONL audit
//! log per cell plus a manifest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::breaker::{BreakerState, BreakerStatus};
use crate::cefl::expand;
use crate::config::{ablation_settings, attack_as_str, AblationId, GridConfig, RunSettings};
use crate::domain::{
    build_scenario_pool, build_scenario_tasks, AgentCandidate, FlagLevel, OutcomeKind,
    QualityFlag, RunOutcome, ScenarioId, TaskSpec,
};
use crate::entropy::EntropyEnvelope;
use crate::gate::{gate, GateVerdict};
use crate::record::{
    Anomaly, AnomalyKind, AuditEvent, LogLine, PresentedSummary, RunRecord, ScoreSnapshot,
    SCHEMA_VERSION,
};
use crate::reducer::reduce;
use crate::scorer::{
    apply_attack, base_score, AttackKind, AttackSpec, Phase, ReducerExposure, ScoredCandidate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: ScenarioId,
    pub ablation: AblationId,
    pub attack: AttackKind,
}

impl Cell {
    pub fn id(&self) -> String {
        format!(
            "{}__{}__{}",
            self.scenario.as_str(),
            self.ablation.as_str(),
            attack_as_str(self.attack)
        )
    }

    pub fn file_name(&self) -> String {
        format!("{}.jsonl", self.id())
    }
}

/// The full cross product of the configured dimensions.
pub fn build_grid(cfg: &GridConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for scenario in &cfg.scenarios {
        for ablation in &cfg.ablations {
            for attack in &cfg.attacks {
                cells.push(Cell { scenario: *scenario, ablation: *ablation, attack: *attack });
            }
        }
    }
    cells
}

/// Execution knobs beyond the grid config. `suppress_flag_source` drops
/// quality flags from the named source before recording — a fault-injection
/// hook for proving the visibility metric actually detects silent failures.
#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub suppress_flag_source: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("refusing to overwrite {0}; pass --force to replace existing logs")]
    WouldOverwrite(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn score_seed(master_seed: u64, run_id: &str) -> u64 {
    let digest = Sha256::digest(
        [b"score-seed".as_slice(), &master_seed.to_le_bytes(), run_id.as_bytes()].concat(),
    );
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn snapshot(scored: &[ScoredCandidate]) -> Vec<ScoreSnapshot> {
    scored
        .iter()
        .map(|s| ScoreSnapshot { id: s.candidate.id.clone(), scores: s.scores })
        .collect()
}

fn min_axis(scored: &ScoredCandidate) -> f64 {
    scored
        .scores
        .utility
        .min(scored.scores.risk_safety)
        .min(scored.scores.stability)
}

/// Attack target selection, per attack rationale. The top candidate
/// surfaces on merit anyway, so the adversary promotes a weaker one:
/// score-shaping attacks take the robust runner-up (enough headroom for
/// amplification to flip the ranking, no weak axis to trip a threshold);
/// the equalizer and the probing attack take the median candidate, an
/// otherwise unremarkable option that benefits most from a level field or
/// a favourable phase.
fn select_target(scored: &[ScoredCandidate], attack: AttackKind) -> Option<String> {
    if scored.is_empty() {
        return None;
    }
    let mut ranked: Vec<&ScoredCandidate> = scored.iter().collect();
    ranked.sort_by(|a, b| {
        b.scores
            .mean()
            .partial_cmp(&a.scores.mean())
            .unwrap()
            .then_with(|| a.candidate.id.cmp(&b.candidate.id))
    });
    if matches!(attack, AttackKind::A1 | AttackKind::A3 | AttackKind::A4) && ranked.len() > 1 {
        // robust runner-up: the non-leading candidate with the strongest
        // weakest axis, so deviation amplification helps on every axis
        let runner_up = ranked[1..]
            .iter()
            .max_by(|a, b| {
                min_axis(a)
                    .partial_cmp(&min_axis(b))
                    .unwrap()
                    .then_with(|| b.candidate.id.cmp(&a.candidate.id))
            })
            .unwrap();
        return Some(runner_up.candidate.id.clone());
    }
    Some(ranked[ranked.len() / 2].candidate.id.clone())
}

/// Entropy-informed phase choice for the probing attack: with the leaked
/// entropy the attacker simulates the reducer under both phases and keeps
/// the one where the target surfaces.
fn choose_phase_with_entropy(
    pre_attack: &[ScoredCandidate],
    frozen: &crate::cefl::FrozenCandidateSet,
    spec: &AttackSpec,
    exposure: &ReducerExposure,
    settings: &RunSettings,
    envelope: &EntropyEnvelope,
    target: &str,
) -> Phase {
    for phase in [Phase::High, Phase::Low] {
        let mut probe = spec.clone();
        probe.phase = phase;
        let (attacked, _) = apply_attack(pre_attack, &probe, exposure);
        let mut stream = envelope.committed_stream("lottery");
        if let Ok(out) = reduce(frozen, attacked, &settings.reducer, &mut stream) {
            if out.surfaced.contains(target) {
                return phase;
            }
        }
    }
    Phase::High
}

#[allow(clippy::too_many_arguments)]
fn execute_run(
    cfg: &GridConfig,
    cell: &Cell,
    settings: &RunSettings,
    pool: &[AgentCandidate],
    task: &TaskSpec,
    run_index: usize,
    cell_run_counter: usize,
    breaker: &mut BreakerState,
    opts: &ExecOptions,
) -> RunRecord {
    let run_id = format!("{}:{}:r{}", cell.id(), task.id, run_index);
    // Entropy is derived without the ablation id: paired cells that differ
    // only in governance configuration see identical randomness, so ablation
    // comparisons use common random numbers instead of resampling noise.
    let entropy_id = format!(
        "{}__{}:{}:r{}",
        cell.scenario.as_str(),
        attack_as_str(cell.attack),
        task.id,
        run_index
    );
    let breaker_status_before = breaker.status();
    let mut events: Vec<AuditEvent> = Vec::new();
    let mut seq = 0u64;
    let mut push_event = |events: &mut Vec<AuditEvent>, kind: &str, payload: serde_json::Value| {
        events.push(AuditEvent { seq, kind: kind.to_string(), payload });
        seq += 1;
    };

    // 1. Commit entropy before any scoring.
    let mut envelope = EntropyEnvelope::commit(cfg.master_seed, &entropy_id);
    push_event(&mut events, "commit", json!({ "commitment": envelope.commitment_hex() }));

    // 2. Candidate expansion against the committed entropy.
    let mut cefl_stream = envelope.committed_stream("cefl");
    let slots = settings.reducer.slots();
    let (frozen, cefl_flag) =
        expand(task, pool, &mut cefl_stream, &settings.cefl, slots).expect("axis-aligned pool");
    push_event(
        &mut events,
        "cefl_freeze",
        json!({ "frozen_digest": frozen.frozen_digest(), "count": frozen.len() }),
    );

    // 3. Unconstrained scoring; the scorer never sees the envelope.
    let seed = score_seed(cfg.master_seed, &entropy_id);
    let pre_attack =
        base_score(&frozen, task, seed, settings.noise_scale).expect("digest verified");
    push_event(&mut events, "score", json!({ "count": pre_attack.len() }));

    // 4. Adversarial perturbation.
    let exposure = ReducerExposure {
        per_axis_threshold: settings
            .thresholds_exposed
            .then_some(settings.reducer.per_axis_threshold),
        entropy: settings.entropy_exposed.then(|| envelope.leak_for_exposure_ablation()),
    };
    let attack_target = if cell.attack == AttackKind::None {
        None
    } else {
        select_target(&pre_attack, cell.attack)
    };
    let mut spec = AttackSpec {
        kind: cell.attack,
        target_id: attack_target.clone().unwrap_or_default(),
        alpha: settings.alpha,
        epsilon: settings.epsilon,
        skew: settings.skew,
        phase: if cell_run_counter.is_multiple_of(2) { Phase::High } else { Phase::Low },
    };
    let mut phase_chosen_with_entropy = false;
    if cell.attack == AttackKind::A5 && settings.entropy_exposed {
        if let Some(target) = &attack_target {
            spec.phase = choose_phase_with_entropy(
                &pre_attack,
                &frozen,
                &spec,
                &exposure,
                settings,
                &envelope,
                target,
            );
            phase_chosen_with_entropy = true;
        }
    }
    let (post_attack, attack_warning) = apply_attack(&pre_attack, &spec, &exposure);
    push_event(
        &mut events,
        "attack",
        json!({
            "kind": attack_as_str(cell.attack),
            "target": attack_target,
            "phase": if cell.attack == AttackKind::A5 { Some(spec.phase) } else { None },
        }),
    );

    // 5. Reveal only after the scorer's output is on the record.
    let verified = envelope.reveal().expect("honest envelope");
    push_event(&mut events, "reveal", json!({ "entropy": verified.hex() }));

    // 6. Governed reduction with the revealed lottery stream.
    let mut flags: Vec<QualityFlag> = cefl_flag.into_iter().collect();
    let mut anomalies: Vec<Anomaly> = Vec::new();
    let mut lottery = verified.stream("lottery");
    let reduce_out =
        reduce(&frozen, post_attack.clone(), &settings.reducer, &mut lottery).expect("digest ok");
    flags.extend(reduce_out.flags.clone());
    anomalies.extend(reduce_out.anomalies.clone());
    push_event(&mut events, "reduce", json!({ "surfaced": reduce_out.surfaced.ids() }));

    // 7. Presentation gate (skipped outputs still log an event).
    let mut ordering = verified.stream("ordering");
    let gate_out = gate(&reduce_out.surfaced, &settings.gate, &mut ordering);
    push_event(&mut events, "gate", json!({ "verdict": gate_out.presented.gate_verdict }));
    let gate_blocked = !reduce_out.no_action
        && gate_out.presented.gate_verdict == GateVerdict::Blocked;
    if gate_blocked {
        flags.extend(gate_out.flags.clone());
        anomalies.extend(gate_out.anomalies.clone());
    }

    // Fault-injection hook: silently drop flags from one source to prove the
    // visibility metric catches the suppression.
    if let Some(suppressed) = &opts.suppress_flag_source {
        flags.retain(|f| &f.source != suppressed);
    }

    // 8. Breaker update from pipeline flags, then outcome resolution. An
    // open breaker halts output: would-be SURFACED runs become BLOCKED,
    // while NO_ACTION and BLOCKED runs pass through (nothing to halt).
    let breaker_tripped = breaker.record_run_flags(&flags);
    if breaker_tripped {
        anomalies.push(Anomaly { kind: AnomalyKind::BreakerTrip, source: "breaker".to_string() });
        flags.push(QualityFlag {
            level: FlagLevel::Critical,
            source: "breaker".to_string(),
            reason: "critical-flag threshold reached in window".to_string(),
        });
    }
    push_event(
        &mut events,
        "breaker",
        json!({ "status": breaker.status(), "tripped": breaker_tripped }),
    );

    let outcome = if reduce_out.no_action {
        RunOutcome {
            kind: OutcomeKind::NoAction,
            detail: "empty eligible set after reduction".to_string(),
        }
    } else if gate_blocked {
        RunOutcome { kind: OutcomeKind::Blocked, detail: "presentation gate violation".to_string() }
    } else if breaker_status_before == BreakerStatus::Open {
        anomalies.push(Anomaly { kind: AnomalyKind::BreakerOpen, source: "breaker".to_string() });
        flags.push(QualityFlag {
            level: FlagLevel::Critical,
            source: "breaker".to_string(),
            reason: "output halted: breaker open pending review".to_string(),
        });
        RunOutcome { kind: OutcomeKind::Blocked, detail: "breaker open".to_string() }
    } else {
        RunOutcome { kind: OutcomeKind::Surfaced, detail: String::new() }
    };
    push_event(&mut events, "outcome", json!({ "kind": outcome.kind }));

    let presented_blocked = outcome.kind != OutcomeKind::Surfaced;
    let presented = if presented_blocked {
        Vec::new()
    } else {
        gate_out
            .presented
            .entries
            .iter()
            .map(|e| PresentedSummary {
                id: e.candidate_id.clone(),
                pro_tags: e.rationale.pro.iter().map(|a| a.feature_tag).collect(),
                con_tags: e.rationale.con.iter().map(|a| a.feature_tag).collect(),
            })
            .collect()
    };

    let mut record = RunRecord {
        schema: SCHEMA_VERSION.to_string(),
        run_id,
        scenario: cell.scenario.as_str().to_string(),
        ablation: cell.ablation.as_str().to_string(),
        attack: cell.attack,
        task_id: task.id.clone(),
        run_index,
        commitment: events[0].payload["commitment"].as_str().unwrap().to_string(),
        nonce: envelope.nonce_hex(),
        entropy: verified.hex(),
        frozen_digest: frozen.frozen_digest().to_string(),
        candidate_ids: frozen.candidate_ids(),
        scores_pre_attack: snapshot(&pre_attack),
        scores_post_attack: snapshot(&post_attack),
        attack_target,
        attack_phase: (cell.attack == AttackKind::A5).then_some(spec.phase),
        phase_chosen_with_entropy,
        attack_warning,
        stage_trace: reduce_out.stage_trace,
        surfaced_ids: reduce_out.surfaced.ids(),
        gate_verdict: gate_out.presented.gate_verdict,
        violations: gate_out.violations,
        order_permutation: gate_out.presented.order_permutation,
        presented,
        ordering_hint_attempts: gate_out.ordering_hint_attempts,
        ordering_hint_honored: false,
        flags,
        anomalies,
        outcome,
        breaker_status_before,
        breaker_status_after: breaker.status(),
        breaker_tripped,
        events,
        record_digest: String::new(),
    };
    record.seal();
    record
}

/// Runs one cell sequentially (the breaker window is an ordered sequence).
pub fn execute_cell(cfg: &GridConfig, cell: &Cell, opts: &ExecOptions) -> CellResult {
    let settings = ablation_settings(cell.ablation);
    let pool: Vec<AgentCandidate> = if settings.empty_pool {
        Vec::new()
    } else {
        build_scenario_pool(cell.scenario.as_str(), cfg.master_seed).expect("known scenario")
    };
    let tasks = build_scenario_tasks(cell.scenario, cfg.master_seed);
    let mut breaker = BreakerState::new(settings.breaker_threshold, settings.breaker_window);
    let mut records = Vec::with_capacity(tasks.len() * cfg.runs_per_task);
    let mut counter = 0usize;
    for task in &tasks {
        for run_index in 0..cfg.runs_per_task {
            records.push(execute_run(
                cfg,
                cell,
                &settings,
                &pool,
                task,
                run_index,
                counter,
                &mut breaker,
                opts,
            ));
            counter += 1;
        }
    }
    CellResult { cell: *cell, records }
}

/// Executes the whole grid, cells in parallel.
pub fn execute_grid(cfg: &GridConfig, opts: &ExecOptions) -> Vec<CellResult> {
    build_grid(cfg).par_iter().map(|cell| execute_cell(cfg, cell, opts)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub master_seed: u64,
    pub config_digest: String,
    pub runs_per_task: usize,
    pub scenarios: Vec<String>,
    pub ablations: Vec<String>,
    pub attacks: Vec<String>,
    pub cells: usize,
    pub total_runs: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Executes the grid and writes one JSONL file per cell plus the manifest.
/// Refuses to overwrite existing cell logs unless `force` is set.
pub fn write_grid(
    cfg: &GridConfig,
    out_dir: &std::path::Path,
    opts: &ExecOptions,
    force: bool,
) -> Result<Manifest, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let cells = build_grid(cfg);
    if !force {
        for cell in &cells {
            let path = out_dir.join(cell.file_name());
            if path.exists() {
                return Err(HarnessError::WouldOverwrite(path.display().to_string()));
            }
        }
    }
    let results = execute_grid(cfg, opts);
    let mut total_runs = 0usize;
    for result in &results {
        total_runs += result.records.len();
        let lines: Vec<LogLine> =
            result.records.iter().cloned().map(LogLine::Run).collect();
        let path = out_dir.join(result.cell.file_name());
        crate::record::write_log(&path, &lines).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION.to_string(),
        master_seed: cfg.master_seed,
        config_digest: cfg.digest(),
        runs_per_task: cfg.runs_per_task,
        scenarios: cfg.scenarios.iter().map(|s| s.as_str().to_string()).collect(),
        ablations: cfg.ablations.iter().map(|a| a.as_str().to_string()).collect(),
        attacks: cfg.attacks.iter().map(|a| attack_as_str(*a).to_string()).collect(),
        cells: cells.len(),
        total_runs,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap()).map_err(
        |source| HarnessError::Io { path: manifest_path.display().to_string(), source },
    )?;
    Ok(manifest)
}
