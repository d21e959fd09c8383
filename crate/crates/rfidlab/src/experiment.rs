//! Monte-Carlo experiment runner and report writer. Owns all randomness:
//! every trial gets its own stream derived from the experiment seed and the
//! trial index, so reports are byte-identical across reruns and independent
//! of how trials are scheduled.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{
    self, decide_same_pair, fingerprints_from_knowledge, same_pair_score, yu_msb_flip_script,
    zhuo_replay_script, Fingerprint, TagRole,
};
use crate::channel::{
    run_yu_session, run_zhuo_session, AdversaryScript, SessionOutcome, TranscriptEntry, Verdict,
};
use crate::hash::{make_hash, HashFunction};
use crate::rng::{TrialRng, WordRng};
use crate::word::{validate_protocol_width, Word};
use crate::yu::{IdsUpdateParse, KeyUpdateOrder, YuCredentials, YuFlags, YuTagState};
use crate::zhuo::{ZhuoServerRecord, ZhuoTagState};
use crate::Variant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Zhuo,
    Yu,
}

/// CLI-visible attack names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackName {
    ZhuoReplay,
    YuMsbflipA,
    YuMsbflipB,
    YuTracking,
}

impl AttackName {
    pub fn protocol(self) -> Protocol {
        match self {
            AttackName::ZhuoReplay => Protocol::Zhuo,
            _ => Protocol::Yu,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UsageError {
    #[error("k must be even and within 8..=128, got {0}")]
    InvalidWidth(u16),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("sessions per trial must be at least {minimum}")]
    TooFewSessions { minimum: u64 },
    #[error("attack {attack:?} does not apply to protocol {protocol:?}")]
    AttackProtocolMismatch {
        attack: AttackName,
        protocol: Protocol,
    },
    #[error("bit budget {budget} outside 1..={width}")]
    BitBudgetOutOfRange { budget: u16, width: u16 },
    #[error("bit budget only applies to the tracking attack")]
    BitBudgetWithoutTracking,
    #[error("the toy hash supports k <= 64, got {0}")]
    ToyHashWidth(u16),
}

/// Everything that defines an experiment. Identical configs produce
/// byte-identical summary reports.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub variant: Variant,
    pub k: u16,
    pub trials: u64,
    pub sessions_per_trial: u64,
    pub attack: Option<AttackName>,
    pub seed: u64,
    pub ids_update_parse: IdsUpdateParse,
    pub key_update_order: KeyUpdateOrder,
    pub toy_hash: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bit_budget: Option<u16>,
}

impl ExperimentConfig {
    /// An honest-session run: one credential set, many consecutive sessions.
    pub fn honest(protocol: Protocol, variant: Variant, k: u16, sessions: u64, seed: u64) -> Self {
        Self {
            protocol,
            variant,
            k,
            trials: 1,
            sessions_per_trial: sessions,
            attack: None,
            seed,
            ids_update_parse: IdsUpdateParse::default(),
            key_update_order: KeyUpdateOrder::default(),
            toy_hash: false,
            bit_budget: None,
        }
    }

    /// An attack run: fresh credentials per trial, each trial scheduled as
    /// warm-up, attack, probe (tracking trials instead run observation
    /// sessions over two independently provisioned pairs).
    pub fn attack(name: AttackName, variant: Variant, k: u16, trials: u64, seed: u64) -> Self {
        let sessions_per_trial = match name {
            AttackName::YuTracking => 20,
            _ => 3,
        };
        Self {
            protocol: name.protocol(),
            variant,
            k,
            trials,
            sessions_per_trial,
            attack: Some(name),
            seed,
            ids_update_parse: IdsUpdateParse::default(),
            key_update_order: KeyUpdateOrder::default(),
            toy_hash: false,
            bit_budget: match name {
                AttackName::YuTracking => Some(1),
                _ => None,
            },
        }
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if validate_protocol_width(self.k).is_err() {
            return Err(UsageError::InvalidWidth(self.k));
        }
        if self.toy_hash && self.k > 64 {
            return Err(UsageError::ToyHashWidth(self.k));
        }
        if self.trials == 0 {
            return Err(UsageError::NoTrials);
        }
        let min_sessions = match self.attack {
            Some(AttackName::YuTracking) => 2,
            Some(_) => 3,
            None => 1,
        };
        if self.sessions_per_trial < min_sessions {
            return Err(UsageError::TooFewSessions {
                minimum: min_sessions,
            });
        }
        if let Some(attack) = self.attack {
            if attack.protocol() != self.protocol {
                return Err(UsageError::AttackProtocolMismatch {
                    attack,
                    protocol: self.protocol,
                });
            }
        }
        match (self.bit_budget, self.attack) {
            (Some(budget), Some(AttackName::YuTracking)) => {
                if budget == 0 || budget > self.k {
                    return Err(UsageError::BitBudgetOutOfRange {
                        budget,
                        width: self.k,
                    });
                }
            }
            (Some(_), _) => return Err(UsageError::BitBudgetWithoutTracking),
            (None, _) => {}
        }
        Ok(())
    }

    fn yu_flags(&self) -> YuFlags {
        YuFlags {
            ids_parse: self.ids_update_parse,
            update_order: self.key_update_order,
        }
    }
}

/// Session verdicts, tallied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SessionCounts {
    pub accepted: u64,
    pub rejected_at_server: u64,
    pub rejected_at_tag: u64,
    pub blocked: u64,
}

impl SessionCounts {
    fn tally(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::Accepted => self.accepted += 1,
            Verdict::RejectedAtServer => self.rejected_at_server += 1,
            Verdict::RejectedAtTag => self.rejected_at_tag += 1,
            Verdict::Blocked => self.blocked += 1,
        }
    }

    fn absorb(&mut self, other: &SessionCounts) {
        self.accepted += other.accepted;
        self.rejected_at_server += other.rejected_at_server;
        self.rejected_at_tag += other.rejected_at_tag;
        self.blocked += other.blocked;
    }

    pub fn total(&self) -> u64 {
        self.accepted + self.rejected_at_server + self.rejected_at_tag + self.blocked
    }
}

/// Aggregated results of one experiment.
///
/// Rate semantics: for honest runs `desync_rate` is the fraction of sessions
/// after which the credentials were out of sync; for attack runs the attack
/// fields are per-trial fractions (attack session accepted, attacked tag
/// desynchronized, probe session rejected). For the tracking attack
/// `attack_success_rate` equals the distinguisher accuracy. Wall time is
/// measured but kept out of the serialized summary so reruns are
/// byte-identical.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub counts: SessionCounts,
    pub total_sessions: u64,
    pub attack_success_rate: f64,
    pub desync_rate: f64,
    pub next_session_reject_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_counts: Option<SessionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_bit_agreement: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_word_agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub whitebox_identity_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub same_pair_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff_pair_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinguisher_accuracy: Option<f64>,
    pub oracle_mismatches: u64,
    #[serde(skip)]
    pub wall_time_ms: u128,
}

#[derive(Default)]
struct TrialOutput {
    counts: SessionCounts,
    attack_counts: SessionCounts,
    desynced_sessions: u64,
    attack_accepted: Option<bool>,
    attack_desynced: Option<bool>,
    probe_rejected: Option<bool>,
    tracking: Option<TrackingTrial>,
    transcript_lines: Vec<String>,
}

struct TrackingTrial {
    fingerprints_first: Vec<Word>,
    fingerprints_second: Vec<Word>,
    whitebox_holds: u64,
    whitebox_total: u64,
    same_score: f64,
    diff_score: f64,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    trial: u64,
    session: u64,
    phase: &'a str,
    #[serde(flatten)]
    entry: &'a TranscriptEntry,
}

fn record_transcript(
    lines: &mut Vec<String>,
    want: bool,
    trial: u64,
    session: u64,
    phase: &str,
    outcome: &SessionOutcome,
) {
    if !want {
        return;
    }
    for entry in &outcome.transcript {
        let line = TranscriptLine {
            trial,
            session,
            phase,
            entry,
        };
        lines.push(serde_json::to_string(&line).expect("transcript entries serialize"));
    }
}

fn provision_zhuo(
    rng: &mut dyn WordRng,
    k: u16,
    hash: &dyn HashFunction,
) -> (ZhuoTagState, ZhuoServerRecord) {
    let key = rng.draw(k);
    let serial = rng.draw(k);
    let secret = rng.draw(k);
    (
        ZhuoTagState::new(key, serial, secret),
        ZhuoServerRecord::provision(key, serial, hash),
    )
}

fn provision_yu(
    rng: &mut dyn WordRng,
    k: u16,
) -> (YuTagState, YuTagState, YuCredentials, YuCredentials) {
    let draw_creds = |rng: &mut dyn WordRng| YuCredentials {
        ids: rng.draw(k),
        id: rng.draw(k),
        x: rng.draw(k),
        k1: rng.draw(k),
        k2: rng.draw(k),
    };
    let a = draw_creds(rng);
    let mut b = draw_creds(rng);
    while b.ids == a.ids {
        b.ids = rng.draw(k);
    }
    (YuTagState::new(a), YuTagState::new(b), a, b)
}

fn synced(outcome: &SessionOutcome) -> bool {
    outcome.sync_after.tag && outcome.sync_after.partner.unwrap_or(true)
}

fn honest_trial(
    cfg: &ExperimentConfig,
    trial: u64,
    hash: &dyn HashFunction,
    want_transcripts: bool,
) -> TrialOutput {
    let mut out = TrialOutput::default();
    let mut rng = TrialRng::for_trial(cfg.seed, trial);
    let flags = cfg.yu_flags();
    match cfg.protocol {
        Protocol::Zhuo => {
            let (mut tag, mut record) = provision_zhuo(&mut rng, cfg.k, hash);
            let mut script = AdversaryScript::passive();
            for session in 0..cfg.sessions_per_trial {
                let outcome = run_zhuo_session(
                    &mut tag,
                    &mut record,
                    &mut script,
                    &mut rng,
                    cfg.variant,
                    hash,
                );
                out.counts.tally(outcome.verdict);
                if !synced(&outcome) {
                    out.desynced_sessions += 1;
                }
                record_transcript(
                    &mut out.transcript_lines,
                    want_transcripts,
                    trial,
                    session,
                    "honest",
                    &outcome,
                );
            }
        }
        Protocol::Yu => {
            let (mut tag_a, mut tag_b, mut rec_a, mut rec_b) = provision_yu(&mut rng, cfg.k);
            let mut script = AdversaryScript::passive();
            for session in 0..cfg.sessions_per_trial {
                let outcome = run_yu_session(
                    &mut tag_a,
                    &mut tag_b,
                    &mut rec_a,
                    &mut rec_b,
                    &mut script,
                    &mut rng,
                    cfg.variant,
                    &flags,
                );
                out.counts.tally(outcome.verdict);
                if !synced(&outcome) {
                    out.desynced_sessions += 1;
                }
                record_transcript(
                    &mut out.transcript_lines,
                    want_transcripts,
                    trial,
                    session,
                    "honest",
                    &outcome,
                );
            }
        }
    }
    out
}

fn replay_trial(
    cfg: &ExperimentConfig,
    trial: u64,
    hash: &dyn HashFunction,
    want_transcripts: bool,
) -> TrialOutput {
    let mut out = TrialOutput::default();
    let mut rng = TrialRng::for_trial(cfg.seed, trial);
    let (mut tag, mut record) = provision_zhuo(&mut rng, cfg.k, hash);
    let mut script = zhuo_replay_script();

    script.active = false;
    let warmup = run_zhuo_session(
        &mut tag,
        &mut record,
        &mut script,
        &mut rng,
        cfg.variant,
        hash,
    );
    out.counts.tally(warmup.verdict);
    record_transcript(
        &mut out.transcript_lines,
        want_transcripts,
        trial,
        0,
        "warmup",
        &warmup,
    );

    script.active = true;
    let attack = run_zhuo_session(
        &mut tag,
        &mut record,
        &mut script,
        &mut rng,
        cfg.variant,
        hash,
    );
    out.counts.tally(attack.verdict);
    out.attack_counts.tally(attack.verdict);
    out.attack_accepted = Some(attack.verdict == Verdict::Accepted);
    out.attack_desynced = Some(!attack.sync_after.tag);
    record_transcript(
        &mut out.transcript_lines,
        want_transcripts,
        trial,
        1,
        "attack",
        &attack,
    );

    script.active = false;
    let probe = run_zhuo_session(
        &mut tag,
        &mut record,
        &mut script,
        &mut rng,
        cfg.variant,
        hash,
    );
    out.counts.tally(probe.verdict);
    out.probe_rejected = Some(probe.verdict != Verdict::Accepted);
    record_transcript(
        &mut out.transcript_lines,
        want_transcripts,
        trial,
        2,
        "probe",
        &probe,
    );
    out
}

fn msb_flip_trial(
    cfg: &ExperimentConfig,
    trial: u64,
    target: TagRole,
    want_transcripts: bool,
) -> TrialOutput {
    let mut out = TrialOutput::default();
    let mut rng = TrialRng::for_trial(cfg.seed, trial);
    let flags = cfg.yu_flags();
    let (mut tag_a, mut tag_b, mut rec_a, mut rec_b) = provision_yu(&mut rng, cfg.k);
    let mut script = yu_msb_flip_script(target);

    script.active = false;
    let warmup = run_yu_session(
        &mut tag_a,
        &mut tag_b,
        &mut rec_a,
        &mut rec_b,
        &mut script,
        &mut rng,
        cfg.variant,
        &flags,
    );
    out.counts.tally(warmup.verdict);
    record_transcript(
        &mut out.transcript_lines,
        want_transcripts,
        trial,
        0,
        "warmup",
        &warmup,
    );

    script.active = true;
    let attack = run_yu_session(
        &mut tag_a,
        &mut tag_b,
        &mut rec_a,
        &mut rec_b,
        &mut script,
        &mut rng,
        cfg.variant,
        &flags,
    );
    out.counts.tally(attack.verdict);
    out.attack_counts.tally(attack.verdict);
    out.attack_accepted = Some(attack.verdict == Verdict::Accepted);
    let target_synced = match target {
        TagRole::A => attack.sync_after.tag,
        TagRole::B => attack.sync_after.partner.unwrap_or(true),
    };
    out.attack_desynced = Some(!target_synced);
    record_transcript(
        &mut out.transcript_lines,
        want_transcripts,
        trial,
        1,
        "attack",
        &attack,
    );

    script.active = false;
    let probe = run_yu_session(
        &mut tag_a,
        &mut tag_b,
        &mut rec_a,
        &mut rec_b,
        &mut script,
        &mut rng,
        cfg.variant,
        &flags,
    );
    out.counts.tally(probe.verdict);
    out.probe_rejected = Some(probe.verdict != Verdict::Accepted);
    record_transcript(
        &mut out.transcript_lines,
        want_transcripts,
        trial,
        2,
        "probe",
        &probe,
    );
    out
}

// Carry-free identity behind the tracker: over the original formulas the
// fingerprint equals (ID_a + ID_b + X_a + X_b) - 2*(S_a AND S_b) mod 2^k,
// where S_a and S_b are the two modular sums inside the responses.
fn whitebox_identity_holds(
    proof: &crate::yu::BindingProof,
    creds_a: &YuCredentials,
    creds_b: &YuCredentials,
    fingerprint: Word,
) -> bool {
    let s_a = proof
        .ids_a
        .wrapping_add(proof.ids_b)
        .wrapping_add(creds_a.id)
        .wrapping_add(creds_a.x);
    let s_b = proof.m_a.wrapping_add(creds_b.id).wrapping_add(creds_b.x);
    let constant = creds_a
        .id
        .wrapping_add(creds_b.id)
        .wrapping_add(creds_a.x)
        .wrapping_add(creds_b.x);
    let correction = (s_a & s_b).wrapping_add(s_a & s_b);
    fingerprint == constant.wrapping_sub(correction)
}

fn tracking_observation_run(
    cfg: &ExperimentConfig,
    rng: &mut dyn WordRng,
    sessions: u64,
    counts: &mut SessionCounts,
    whitebox: &mut (u64, u64),
) -> Vec<Fingerprint> {
    let flags = cfg.yu_flags();
    let (mut tag_a, mut tag_b, mut rec_a, mut rec_b) = provision_yu(rng, cfg.k);
    let static_a = tag_a.creds;
    let static_b = tag_b.creds;
    let mut observer = AdversaryScript::passive();
    for _ in 0..sessions {
        let outcome = run_yu_session(
            &mut tag_a,
            &mut tag_b,
            &mut rec_a,
            &mut rec_b,
            &mut observer,
            rng,
            cfg.variant,
            &flags,
        );
        counts.tally(outcome.verdict);
        if cfg.variant == Variant::Original {
            let proof = outcome.proof.expect("honest run produced a proof");
            let fp = attacks::tracking_fingerprint(&proof, 0).value;
            whitebox.1 += 1;
            if whitebox_identity_holds(&proof, &static_a, &static_b, fp) {
                whitebox.0 += 1;
            }
        }
    }
    fingerprints_from_knowledge(&observer.knowledge)
}

fn tracking_trial(cfg: &ExperimentConfig, trial: u64) -> TrialOutput {
    let mut out = TrialOutput::default();
    let mut rng = TrialRng::for_trial(cfg.seed, trial);
    let budget = cfg.bit_budget.unwrap_or(1);
    let sessions = cfg.sessions_per_trial;
    let mut whitebox = (0u64, 0u64);

    // One observed pair, plus an independent pair for the different-pair
    // side of the distinguisher.
    let fps_first =
        tracking_observation_run(cfg, &mut rng, sessions, &mut out.counts, &mut whitebox);
    let fps_second =
        tracking_observation_run(cfg, &mut rng, sessions, &mut out.counts, &mut whitebox);

    let half = fps_first.len() / 2;
    let same_score =
        same_pair_score(&fps_first[..half], &fps_first[half..], budget).expect("non-empty halves");
    let diff_score = same_pair_score(&fps_first, &fps_second, budget).expect("non-empty sets");

    out.tracking = Some(TrackingTrial {
        fingerprints_first: fps_first.iter().map(|f| f.value).collect(),
        fingerprints_second: fps_second.iter().map(|f| f.value).collect(),
        whitebox_holds: whitebox.0,
        whitebox_total: whitebox.1,
        same_score,
        diff_score,
    });
    out
}

fn run_trial(
    cfg: &ExperimentConfig,
    trial: u64,
    hash: &dyn HashFunction,
    want_transcripts: bool,
) -> TrialOutput {
    match cfg.attack {
        None => honest_trial(cfg, trial, hash, want_transcripts),
        Some(AttackName::ZhuoReplay) => replay_trial(cfg, trial, hash, want_transcripts),
        Some(AttackName::YuMsbflipA) => msb_flip_trial(cfg, trial, TagRole::A, want_transcripts),
        Some(AttackName::YuMsbflipB) => msb_flip_trial(cfg, trial, TagRole::B, want_transcripts),
        Some(AttackName::YuTracking) => tracking_trial(cfg, trial),
    }
}

fn agreement_stats(k: u16, sets: &[&[Word]]) -> (Vec<f64>, f64) {
    let mut pairs = 0u64;
    let mut bit_agree = vec![0u64; usize::from(k)];
    let mut full_agree = 0u64;
    for set in sets {
        for i in 0..set.len() {
            for j in (i + 1)..set.len() {
                pairs += 1;
                if set[i] == set[j] {
                    full_agree += 1;
                }
                for (bit, slot) in bit_agree.iter_mut().enumerate() {
                    if set[i].bit(bit as u16) == set[j].bit(bit as u16) {
                        *slot += 1;
                    }
                }
            }
        }
    }
    let per_bit = bit_agree.iter().map(|&n| n as f64 / pairs as f64).collect();
    (per_bit, full_agree as f64 / pairs as f64)
}

/// Runs every trial (in parallel; aggregation is order-independent) and
/// aggregates the report. Optionally returns the JSON-lines transcript log.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    want_transcripts: bool,
) -> Result<(ExperimentReport, Option<String>), UsageError> {
    cfg.validate()?;
    let started = Instant::now();
    let hash = make_hash(cfg.k, cfg.toy_hash);

    let trial_outputs: Vec<TrialOutput> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, trial, &*hash, want_transcripts))
        .collect();

    let mut counts = SessionCounts::default();
    let mut attack_counts = SessionCounts::default();
    let mut desynced_sessions = 0u64;
    let mut attack_accepted = 0u64;
    let mut attack_desynced = 0u64;
    let mut probe_rejected = 0u64;
    let mut attack_trials = 0u64;
    let mut transcript_lines: Vec<String> = Vec::new();

    let mut fingerprint_sets: Vec<&[Word]> = Vec::new();
    let mut whitebox_holds = 0u64;
    let mut whitebox_total = 0u64;
    let mut same_scores: Vec<f64> = Vec::new();
    let mut diff_scores: Vec<f64> = Vec::new();

    for output in &trial_outputs {
        counts.absorb(&output.counts);
        attack_counts.absorb(&output.attack_counts);
        desynced_sessions += output.desynced_sessions;
        if let Some(accepted) = output.attack_accepted {
            attack_trials += 1;
            attack_accepted += u64::from(accepted);
            attack_desynced += u64::from(output.attack_desynced.unwrap_or(false));
            probe_rejected += u64::from(output.probe_rejected.unwrap_or(false));
        }
        if let Some(tracking) = &output.tracking {
            fingerprint_sets.push(&tracking.fingerprints_first);
            fingerprint_sets.push(&tracking.fingerprints_second);
            whitebox_holds += tracking.whitebox_holds;
            whitebox_total += tracking.whitebox_total;
            same_scores.push(tracking.same_score);
            diff_scores.push(tracking.diff_score);
        }
        transcript_lines.extend_from_slice(&output.transcript_lines);
    }

    let total_sessions = counts.total();
    let is_tracking = cfg.attack == Some(AttackName::YuTracking);

    let mut report = ExperimentReport {
        config: cfg.clone(),
        counts,
        total_sessions,
        attack_success_rate: 0.0,
        desync_rate: 0.0,
        next_session_reject_rate: 0.0,
        attack_counts: None,
        per_bit_agreement: None,
        full_word_agreement: None,
        whitebox_identity_rate: None,
        same_pair_score: None,
        diff_pair_score: None,
        distinguisher_accuracy: None,
        oracle_mismatches: 0,
        wall_time_ms: 0,
    };

    if cfg.attack.is_none() {
        report.desync_rate = desynced_sessions as f64 / total_sessions as f64;
    } else if is_tracking {
        let budget = cfg.bit_budget.unwrap_or(1);
        let (per_bit, full_word) = agreement_stats(cfg.k, &fingerprint_sets);
        let trials = cfg.trials as f64;
        let correct_same = same_scores
            .iter()
            .filter(|&&s| decide_same_pair(s, budget))
            .count();
        let correct_diff = diff_scores
            .iter()
            .filter(|&&s| !decide_same_pair(s, budget))
            .count();
        let accuracy = (correct_same + correct_diff) as f64 / (2.0 * trials);
        report.per_bit_agreement = Some(per_bit);
        report.full_word_agreement = Some(full_word);
        if whitebox_total > 0 {
            report.whitebox_identity_rate = Some(whitebox_holds as f64 / whitebox_total as f64);
        }
        report.same_pair_score = Some(same_scores.iter().sum::<f64>() / trials);
        report.diff_pair_score = Some(diff_scores.iter().sum::<f64>() / trials);
        report.distinguisher_accuracy = Some(accuracy);
        report.attack_success_rate = accuracy;
    } else {
        let trials = attack_trials as f64;
        report.attack_success_rate = attack_accepted as f64 / trials;
        report.desync_rate = attack_desynced as f64 / trials;
        report.next_session_reject_rate = probe_rejected as f64 / trials;
        report.attack_counts = Some(attack_counts);
    }

    report.wall_time_ms = started.elapsed().as_millis();
    let transcripts = want_transcripts.then(|| {
        let mut body = transcript_lines.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        body
    });
    Ok((report, transcripts))
}

/// Stable textual form of the summary document.
pub fn render_report(report: &ExperimentReport) -> String {
    let mut body = serde_json::to_string_pretty(report).expect("report serializes");
    body.push('\n');
    body
}

pub enum ReportDestination<'a> {
    Stdout,
    File(&'a Path),
}

/// Writes the summary document. The body is rendered before any I/O, so an
/// unwritable destination produces no partial output.
pub fn write_report(
    report: &ExperimentReport,
    destination: ReportDestination<'_>,
) -> std::io::Result<()> {
    let body = render_report(report);
    match destination {
        ReportDestination::Stdout => std::io::stdout().write_all(body.as_bytes()),
        ReportDestination::File(path) => std::fs::write(path, body),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let mut cfg = ExperimentConfig::honest(Protocol::Zhuo, Variant::Original, 64, 10, 1);
        cfg.k = 63;
        assert_eq!(cfg.validate(), Err(UsageError::InvalidWidth(63)));
        cfg.k = 64;
        cfg.trials = 0;
        assert_eq!(cfg.validate(), Err(UsageError::NoTrials));
        cfg.trials = 1;
        cfg.toy_hash = true;
        cfg.k = 128;
        assert_eq!(cfg.validate(), Err(UsageError::ToyHashWidth(128)));

        let mut cfg = ExperimentConfig::attack(AttackName::YuTracking, Variant::Original, 16, 5, 1);
        cfg.bit_budget = Some(17);
        assert_eq!(
            cfg.validate(),
            Err(UsageError::BitBudgetOutOfRange {
                budget: 17,
                width: 16
            })
        );

        let mut cfg = ExperimentConfig::attack(AttackName::ZhuoReplay, Variant::Original, 64, 5, 1);
        cfg.protocol = Protocol::Yu;
        assert_eq!(
            cfg.validate(),
            Err(UsageError::AttackProtocolMismatch {
                attack: AttackName::ZhuoReplay,
                protocol: Protocol::Yu
            })
        );
        cfg.protocol = Protocol::Zhuo;
        cfg.bit_budget = Some(1);
        assert_eq!(cfg.validate(), Err(UsageError::BitBudgetWithoutTracking));
    }

    #[test]
    fn honest_runs_report_no_attack_activity() {
        for protocol in [Protocol::Zhuo, Protocol::Yu] {
            let cfg = ExperimentConfig::honest(protocol, Variant::Original, 32, 50, 7);
            let (report, _) = run_experiment(&cfg, false).unwrap();
            assert_eq!(report.counts.accepted, 50);
            assert_eq!(report.total_sessions, 50);
            assert_eq!(report.attack_success_rate, 0.0);
            assert_eq!(report.desync_rate, 0.0);
        }
    }

    #[test]
    fn counts_sum_to_total_sessions() {
        let cfg = ExperimentConfig::attack(AttackName::YuMsbflipA, Variant::Original, 32, 20, 9);
        let (report, _) = run_experiment(&cfg, false).unwrap();
        assert_eq!(report.counts.total(), report.total_sessions);
        assert_eq!(report.total_sessions, 60);
    }

    #[test]
    fn replay_attack_report_matches_expectations() {
        let cfg = ExperimentConfig::attack(AttackName::ZhuoReplay, Variant::Original, 64, 25, 3);
        let (report, _) = run_experiment(&cfg, false).unwrap();
        assert_eq!(report.attack_success_rate, 1.0);
        assert_eq!(report.desync_rate, 1.0);
        assert_eq!(report.next_session_reject_rate, 1.0);

        let cfg = ExperimentConfig::attack(AttackName::ZhuoReplay, Variant::Hardened, 64, 25, 3);
        let (report, _) = run_experiment(&cfg, false).unwrap();
        assert_eq!(report.attack_success_rate, 0.0);
        assert_eq!(report.desync_rate, 0.0);
        assert_eq!(report.next_session_reject_rate, 0.0);
    }

    #[test]
    fn tracking_report_has_k_bit_agreement_entries() {
        let cfg = ExperimentConfig::attack(AttackName::YuTracking, Variant::Original, 16, 10, 5);
        let (report, _) = run_experiment(&cfg, false).unwrap();
        let per_bit = report.per_bit_agreement.unwrap();
        assert_eq!(per_bit.len(), 16);
        assert_eq!(per_bit[0], 1.0);
        // Higher bits stay informative without being invariant.
        assert!(
            per_bit[1] > 0.5 && per_bit[1] < 1.0,
            "bit 1 agreement {}",
            per_bit[1]
        );
        assert_eq!(report.whitebox_identity_rate, Some(1.0));
        assert_eq!(report.same_pair_score, Some(1.0));
    }

    #[test]
    fn single_session_report_has_a_valid_schema() {
        let cfg = ExperimentConfig::honest(Protocol::Yu, Variant::Original, 64, 1, 1);
        let (report, _) = run_experiment(&cfg, false).unwrap();
        assert_eq!(report.counts.total(), 1);
        assert_eq!(report.total_sessions, 1);
        let value: serde_json::Value = serde_json::from_str(&render_report(&report)).unwrap();
        assert!(value.get("config").is_some());
        assert!(value.get("counts").is_some());
    }

    #[test]
    fn identical_seeds_render_identical_reports() {
        let cfg = ExperimentConfig::attack(AttackName::YuMsbflipB, Variant::Original, 32, 10, 42);
        let (first, _) = run_experiment(&cfg, false).unwrap();
        let (second, _) = run_experiment(&cfg, false).unwrap();
        assert_eq!(render_report(&first), render_report(&second));
    }

    #[test]
    fn transcript_log_is_one_json_object_per_edge() {
        let cfg = ExperimentConfig::honest(Protocol::Zhuo, Variant::Original, 32, 2, 1);
        let (_, transcripts) = run_experiment(&cfg, true).unwrap();
        let body = transcripts.unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 10); // five edges per session
        for line in lines {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(value.get("edge").is_some());
            assert!(value.get("action").is_some());
        }
    }

    #[test]
    fn unwritable_destination_fails_without_partial_output() {
        let cfg = ExperimentConfig::honest(Protocol::Zhuo, Variant::Original, 32, 1, 1);
        let (report, _) = run_experiment(&cfg, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("no-such-dir").join("report.json");
        assert!(write_report(&report, ReportDestination::File(&missing)).is_err());
        assert!(!missing.exists());
    }
}
