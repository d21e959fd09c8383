//! The published attacks, as pure transformations plus prebuilt adversary
//! scripts: a replay forgery against the mutual-authentication scheme, an
//! MSB-flip de-synchronization against either tag of the binding proof, and
//! a transcript fingerprint that links sessions of the same tag pair.

use serde::Serialize;
use thiserror::Error;

use crate::channel::{AdversaryScript, Edge, Hook, Knowledge, Message};
use crate::word::Word;
use crate::yu::{BindingProof, YuChallenge};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttackError {
    #[error("fingerprint lists must be non-empty")]
    EmptyFingerprints,
    #[error("bit budget {budget} outside 1..={width}")]
    BitBudgetOutOfRange { budget: u16, width: u16 },
}

/// Values eavesdropped from one legitimate authentication run, all taken
/// from wire messages only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZhuoCapture {
    pub r: Word,
    pub ids: Word,
    pub a: Word,
    pub m_left: Word,
}

/// The replay forgery: answer a fresh challenge `r_new` with the captured
/// reply, shifting the tag nonce so that `r_new ⊕ a' == r ⊕ a`. The xor
/// fold inside the original `m` formula then collides exactly.
pub fn forge_zhuo_reply(capture: &ZhuoCapture, r_new: Word) -> (Word, Word, Word) {
    (capture.ids, r_new ^ capture.r ^ capture.a, capture.m_left)
}

/// Scans the knowledge store for the most recent completed reply on the
/// tag-to-reader link and pairs it with the challenge that preceded it.
pub fn latest_capture(knowledge: &Knowledge) -> Option<ZhuoCapture> {
    let seen = knowledge.seen();
    let (reply_index, (ids, a, m_left)) =
        seen.iter()
            .enumerate()
            .rev()
            .find_map(|(i, (edge, msg))| match (edge, msg) {
                (Edge::ZhuoReplyToReader, Message::ZhuoTagReply { ids, a, m_left }) => {
                    Some((i, (*ids, *a, *m_left)))
                }
                _ => None,
            })?;
    let r = seen[..reply_index]
        .iter()
        .rev()
        .find_map(|(edge, msg)| match (edge, msg) {
            (Edge::ZhuoChallengeToTag, Message::ZhuoChallenge { r }) => Some(*r),
            _ => None,
        })?;
    Some(ZhuoCapture { r, ids, a, m_left })
}

/// The most recent challenge seen on the reader-to-tag link — during an
/// interception that is the challenge of the session in progress.
pub fn latest_challenge(knowledge: &Knowledge) -> Option<Word> {
    knowledge
        .seen()
        .iter()
        .rev()
        .find_map(|(edge, msg)| match (edge, msg) {
            (Edge::ZhuoChallengeToTag, Message::ZhuoChallenge { r }) => Some(*r),
            _ => None,
        })
}

/// Full replay-forgery script: intercept the fresh challenge before it
/// reaches the tag, answer the reader from captured values, and absorb the
/// server's final message (the real tag has no run in progress).
pub fn zhuo_replay_script() -> AdversaryScript {
    let mut script = AdversaryScript::passive();
    script.set(Edge::ZhuoChallengeToTag, Hook::Block);
    script.set(
        Edge::ZhuoReplyToReader,
        Hook::Impersonate(Box::new(|knowledge| {
            let capture = latest_capture(knowledge)?;
            let r_new = latest_challenge(knowledge)?;
            let (ids, a, m_left) = forge_zhuo_reply(&capture, r_new);
            Some(Message::ZhuoTagReply { ids, a, m_left })
        })),
    );
    script.set(Edge::ZhuoFinalToTag, Hook::Block);
    script
}

/// Flips the most-significant bit of both challenge components; the
/// partner pseudonym is left alone.
pub fn msb_flip_challenge(challenge: &YuChallenge) -> YuChallenge {
    YuChallenge {
        a: challenge.a.msb_flip(),
        b: challenge.b.msb_flip(),
        partner_ids: challenge.partner_ids,
    }
}

/// Flips the response back so the server-side check passes with its own
/// nonce while the tag has already updated with the shifted one.
pub fn msb_restore_m(m_observed: Word) -> Word {
    m_observed.msb_flip()
}

/// Which tag of a binding-proof session the flip targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TagRole {
    A,
    B,
}

/// MSB-flip de-synchronization script for one tag: flip its challenge on
/// the way in, restore its response on the way out.
pub fn yu_msb_flip_script(target: TagRole) -> AdversaryScript {
    let (challenge_edge, response_edge) = match target {
        TagRole::A => (Edge::YuChallengeToA, Edge::YuFirstResponseToReader),
        TagRole::B => (Edge::YuChallengeToB, Edge::YuSecondResponseToReader),
    };
    let mut script = AdversaryScript::passive();
    script.set(
        challenge_edge,
        Hook::Replace(Box::new(|msg, _| match msg {
            Message::YuChallengeMsg { challenge } => Message::YuChallengeMsg {
                challenge: msb_flip_challenge(challenge),
            },
            other => *other,
        })),
    );
    script.set(
        response_edge,
        Hook::Replace(Box::new(|msg, _| match msg {
            Message::YuFirstResponse { m_a } => Message::YuFirstResponse {
                m_a: msb_restore_m(*m_a),
            },
            Message::YuSecondResponse { m_b } => Message::YuSecondResponse {
                m_b: msb_restore_m(*m_b),
            },
            other => *other,
        })),
    );
    script
}

/// A session fingerprint computed from public transcript values only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Fingerprint {
    pub value: Word,
    pub session: u64,
}

/// `((m_a ⊕ m_b) − IDS_a − IDS_b − m_a) mod 2^k`, evaluated left to right
/// over the public proof tuple.
pub fn tracking_fingerprint(proof: &BindingProof, session: u64) -> Fingerprint {
    let value = (proof.m_a ^ proof.m_b)
        .wrapping_sub(proof.ids_a)
        .wrapping_sub(proof.ids_b)
        .wrapping_sub(proof.m_a);
    Fingerprint { value, session }
}

/// Fingerprints for every proof the adversary has observed, in order.
pub fn fingerprints_from_knowledge(knowledge: &Knowledge) -> Vec<Fingerprint> {
    knowledge
        .seen()
        .iter()
        .filter_map(|(edge, msg)| match (edge, msg) {
            (Edge::YuProofToServer, Message::YuProof { proof }) => Some(proof),
            _ => None,
        })
        .enumerate()
        .map(|(i, proof)| tracking_fingerprint(proof, i as u64))
        .collect()
}

/// Fraction of cross-pairs from the two sets that agree on the low
/// `bit_budget` bits of the fingerprint.
pub fn same_pair_score(
    one: &[Fingerprint],
    two: &[Fingerprint],
    bit_budget: u16,
) -> Result<f64, AttackError> {
    if one.is_empty() || two.is_empty() {
        return Err(AttackError::EmptyFingerprints);
    }
    let width = one[0].value.width();
    if bit_budget == 0 || bit_budget > width {
        return Err(AttackError::BitBudgetOutOfRange {
            budget: bit_budget,
            width,
        });
    }
    let mut agree = 0usize;
    for f1 in one {
        for f2 in two {
            if f1.value.low_bits(bit_budget) == f2.value.low_bits(bit_budget) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (one.len() * two.len()) as f64)
}

/// Agreement level a pair of unrelated fingerprints reaches by chance.
pub fn chance_level(bit_budget: u16) -> f64 {
    0.5f64.powi(i32::from(bit_budget))
}

/// Threshold rule: call the sets same-pair when the score clears the
/// midpoint between chance and certainty.
pub fn decide_same_pair(score: f64, bit_budget: u16) -> bool {
    score > (chance_level(bit_budget) + 1.0) / 2.0
}
