//! Session orchestration over a typed message channel with man-in-the-middle
//! hooks. Every arrow of the two communication-flow diagrams is an [`Edge`];
//! an [`AdversaryScript`] can observe, block, replace, or outright answer on
//! any of them. Sessions produce a verdict, a per-tag synchronization status
//! (a white-box check for tests and the harness, never visible to the
//! adversary), and a full transcript.

use std::collections::HashMap;

use serde::Serialize;

use crate::hash::HashFunction;
use crate::rng::WordRng;
use crate::word::Word;
use crate::yu::{self, BindingProof, YuChallenge, YuFlags, YuServerRecord, YuTagState};
use crate::zhuo::{ZhuoServerRecord, ZhuoTagState};
use crate::Variant;

/// One arrow of a communication-flow diagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Edge {
    // Mutual authentication (five wire edges).
    ZhuoChallengeToTag,
    ZhuoReplyToReader,
    ZhuoAuthToServer,
    ZhuoServerToReader,
    ZhuoFinalToTag,
    // Binding proof (twelve wire edges).
    YuHelloToA,
    YuHelloToB,
    YuIdsFromA,
    YuIdsFromB,
    YuIdsToServer,
    YuChallengesToReader,
    YuChallengeToA,
    YuChallengeToB,
    YuFirstResponseToReader,
    YuFirstResponseToTagB,
    YuSecondResponseToReader,
    YuProofToServer,
}

/// Every wire message of both protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Message {
    ZhuoChallenge {
        r: Word,
    },
    ZhuoTagReply {
        ids: Word,
        a: Word,
        m_left: Word,
    },
    ZhuoAuthRequest {
        r: Word,
        ids: Word,
        a: Word,
        m_left: Word,
    },
    ZhuoServerReply {
        server_nonce: Word,
        n_right: Word,
    },
    YuHello,
    YuIds {
        ids: Word,
    },
    YuIdsPair {
        ids_a: Word,
        ids_b: Word,
    },
    YuChallenges {
        to_a: YuChallenge,
        to_b: YuChallenge,
    },
    YuChallengeMsg {
        challenge: YuChallenge,
    },
    YuFirstResponse {
        m_a: Word,
    },
    YuSecondResponse {
        m_b: Word,
    },
    YuProof {
        proof: BindingProof,
    },
}

/// What the adversary did on an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionTag {
    Pass,
    Block,
    Replace,
    Impersonate,
}

/// One transcript row: the arrow, what the honest sender put on the wire
/// (if anything), and what actually arrived.
#[derive(Clone, Debug, Serialize)]
pub struct TranscriptEntry {
    pub edge: Edge,
    pub action: ActionTag,
    pub original: Option<Message>,
    pub delivered: Option<Message>,
}

/// Everything the adversary has seen on the wire, across sessions. Grows
/// monotonically; scripts derive whatever they need from it.
#[derive(Default)]
pub struct Knowledge {
    seen: Vec<(Edge, Message)>,
}

impl Knowledge {
    pub fn record(&mut self, edge: Edge, message: &Message) {
        self.seen.push((edge, *message));
    }

    pub fn seen(&self) -> &[(Edge, Message)] {
        &self.seen
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

pub type ReplaceFn = Box<dyn Fn(&Message, &mut Knowledge) -> Message + Send + Sync>;
pub type ForgeFn = Box<dyn Fn(&mut Knowledge) -> Option<Message> + Send + Sync>;

/// Per-edge adversary behaviour. `Replace` sees the observed message;
/// `Impersonate` produces the message with the honest sender cut out
/// entirely (its state is never touched).
pub enum Hook {
    Pass,
    Block,
    Replace(ReplaceFn),
    Impersonate(ForgeFn),
}

/// A scripted man-in-the-middle for one or more sessions. Hooks only fire
/// while `active`; observation into the knowledge store happens regardless,
/// so a script can eavesdrop an honest warm-up session and strike later.
/// Hooks see wire messages and the knowledge store only, never honest
/// parties' secret state.
pub struct AdversaryScript {
    hooks: HashMap<Edge, Hook>,
    pub knowledge: Knowledge,
    pub active: bool,
}

impl AdversaryScript {
    /// All edges pass untouched (but are still observed).
    pub fn passive() -> Self {
        Self {
            hooks: HashMap::new(),
            knowledge: Knowledge::default(),
            active: true,
        }
    }

    pub fn set(&mut self, edge: Edge, hook: Hook) {
        self.hooks.insert(edge, hook);
    }

    /// True when the honest sender on `edge` must not be invoked.
    pub fn impersonates(&self, edge: Edge) -> bool {
        self.active && matches!(self.hooks.get(&edge), Some(Hook::Impersonate(_)))
    }

    /// Runs the hook for one edge. `original` is what the honest sender put
    /// on the wire; `None` when it produced nothing (cut out or blocked
    /// upstream). Returns what gets delivered.
    pub fn apply(
        &mut self,
        edge: Edge,
        original: Option<Message>,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Option<Message> {
        if let Some(msg) = &original {
            self.knowledge.record(edge, msg);
        }
        let hook = if self.active {
            self.hooks.get(&edge)
        } else {
            None
        };
        let (action, delivered) = match hook {
            None | Some(Hook::Pass) => (ActionTag::Pass, original),
            Some(Hook::Block) => (ActionTag::Block, None),
            Some(Hook::Replace(f)) => match &original {
                Some(msg) => (ActionTag::Replace, Some(f(msg, &mut self.knowledge))),
                None => (ActionTag::Replace, None),
            },
            Some(Hook::Impersonate(f)) => (ActionTag::Impersonate, f(&mut self.knowledge)),
        };
        transcript.push(TranscriptEntry {
            edge,
            action,
            original,
            delivered,
        });
        delivered
    }
}

/// How a session ended, as observed at the protocol endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Accepted,
    RejectedAtServer,
    RejectedAtTag,
    Blocked,
}

/// White-box synchronization status after a session; `partner` is present
/// only for the two-tag protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SyncStatus {
    pub tag: bool,
    pub partner: Option<bool>,
}

/// Verdict, synchronization, transcript, and (for the binding proof) the
/// proof tuple the reader assembled.
#[derive(Debug)]
pub struct SessionOutcome {
    pub verdict: Verdict,
    pub sync_after: SyncStatus,
    pub transcript: Vec<TranscriptEntry>,
    pub proof: Option<BindingProof>,
}

/// White-box check: the tag's key matches one of the server's slots.
pub fn zhuo_synchronized(
    tag: &ZhuoTagState,
    record: &ZhuoServerRecord,
    hash: &dyn HashFunction,
) -> bool {
    let ids = hash.hash_word(&tag.key);
    [record.prev, record.curr]
        .iter()
        .any(|slot| slot.key == tag.key && slot.ids == ids)
}

/// White-box check: all five persistent fields agree.
pub fn yu_synchronized(tag: &YuTagState, record: &YuServerRecord) -> bool {
    tag.creds == *record
}

/// Runs the six-step mutual-authentication flow once, applying the
/// adversary hook at every edge. All failure modes are verdicts.
pub fn run_zhuo_session(
    tag: &mut ZhuoTagState,
    record: &mut ZhuoServerRecord,
    adversary: &mut AdversaryScript,
    rng: &mut dyn WordRng,
    variant: Variant,
    hash: &dyn HashFunction,
) -> SessionOutcome {
    let mut transcript = Vec::new();
    let width = record.curr.key.width();

    let finish = |verdict: Verdict,
                  transcript: Vec<TranscriptEntry>,
                  tag: &ZhuoTagState,
                  record: &ZhuoServerRecord| SessionOutcome {
        verdict,
        sync_after: SyncStatus {
            tag: zhuo_synchronized(tag, record, hash),
            partner: None,
        },
        transcript,
        proof: None,
    };

    // Step 1: the reader's challenge.
    let challenge = rng.draw(width);
    let delivered = adversary.apply(
        Edge::ZhuoChallengeToTag,
        Some(Message::ZhuoChallenge { r: challenge }),
        &mut transcript,
    );

    // Step 2: the tag's reply, unless the adversary answers in its place.
    let mut tag_engaged = false;
    let reply = if adversary.impersonates(Edge::ZhuoReplyToReader) {
        None
    } else if let Some(Message::ZhuoChallenge { r }) = delivered {
        tag_engaged = true;
        let reply = tag.begin(r, variant, hash);
        Some(Message::ZhuoTagReply {
            ids: reply.ids,
            a: reply.a,
            m_left: reply.m_left,
        })
    } else {
        None
    };
    let Some(Message::ZhuoTagReply { ids, a, m_left }) =
        adversary.apply(Edge::ZhuoReplyToReader, reply, &mut transcript)
    else {
        return finish(Verdict::Blocked, transcript, tag, record);
    };

    // Step 3: the reader forwards the reply with its own challenge.
    let auth = Message::ZhuoAuthRequest {
        r: challenge,
        ids,
        a,
        m_left,
    };
    let Some(Message::ZhuoAuthRequest { r, ids, a, m_left }) =
        adversary.apply(Edge::ZhuoAuthToServer, Some(auth), &mut transcript)
    else {
        return finish(Verdict::Blocked, transcript, tag, record);
    };

    // Step 4: server-side verification and slot roll.
    let Some(answer) = record.authenticate(r, ids, a, m_left, rng, variant, hash) else {
        return finish(Verdict::RejectedAtServer, transcript, tag, record);
    };
    let reply4 = Message::ZhuoServerReply {
        server_nonce: answer.server_nonce,
        n_right: answer.n_right,
    };
    let delivered4 = adversary.apply(Edge::ZhuoServerToReader, Some(reply4), &mut transcript);

    // Step 5: the reader forwards the answer to the tag.
    let forward5 = if adversary.impersonates(Edge::ZhuoFinalToTag) {
        None
    } else {
        delivered4.filter(|m| matches!(m, Message::ZhuoServerReply { .. }))
    };
    let delivered5 = adversary.apply(Edge::ZhuoFinalToTag, forward5, &mut transcript);

    if !tag_engaged {
        // The adversary was the tag-side endpoint; the server's acceptance
        // completed the run.
        return finish(Verdict::Accepted, transcript, tag, record);
    }

    // Step 6: the tag checks the answer against its pending run.
    let Some(Message::ZhuoServerReply {
        server_nonce,
        n_right,
    }) = delivered5
    else {
        return finish(Verdict::Blocked, transcript, tag, record);
    };
    let verdict = match tag
        .confirm(server_nonce, n_right, hash)
        .expect("tag engaged this run")
    {
        true => Verdict::Accepted,
        false => Verdict::RejectedAtTag,
    };
    finish(verdict, transcript, tag, record)
}

/// Runs the eight-step binding-proof flow once. The second tag's challenge
/// is delivered at step 3 and held until the first response arrives; held
/// challenges do not survive the session.
#[allow(clippy::too_many_arguments)]
pub fn run_yu_session(
    tag_a: &mut YuTagState,
    tag_b: &mut YuTagState,
    rec_a: &mut YuServerRecord,
    rec_b: &mut YuServerRecord,
    adversary: &mut AdversaryScript,
    rng: &mut dyn WordRng,
    variant: Variant,
    flags: &YuFlags,
) -> SessionOutcome {
    let mut transcript = Vec::new();
    let width = rec_a.ids.width();
    let mut proof_out: Option<BindingProof> = None;

    macro_rules! finish {
        ($verdict:expr) => {
            return SessionOutcome {
                verdict: $verdict,
                sync_after: SyncStatus {
                    tag: yu_synchronized(tag_a, rec_a),
                    partner: Some(yu_synchronized(tag_b, rec_b)),
                },
                transcript,
                proof: proof_out,
            }
        };
    }

    // Step 1: hello broadcast.
    let hello_a = adversary.apply(Edge::YuHelloToA, Some(Message::YuHello), &mut transcript);
    let hello_b = adversary.apply(Edge::YuHelloToB, Some(Message::YuHello), &mut transcript);

    // Step 2: pseudonym replies.
    let ids_reply_a = if adversary.impersonates(Edge::YuIdsFromA) {
        None
    } else {
        hello_a.map(|_| Message::YuIds {
            ids: tag_a.creds.ids,
        })
    };
    let ids_reply_b = if adversary.impersonates(Edge::YuIdsFromB) {
        None
    } else {
        hello_b.map(|_| Message::YuIds {
            ids: tag_b.creds.ids,
        })
    };
    let got_a = adversary.apply(Edge::YuIdsFromA, ids_reply_a, &mut transcript);
    let got_b = adversary.apply(Edge::YuIdsFromB, ids_reply_b, &mut transcript);
    let (Some(Message::YuIds { ids: ids_a }), Some(Message::YuIds { ids: ids_b })) = (got_a, got_b)
    else {
        finish!(Verdict::Blocked);
    };

    // Step 3: the reader hands both pseudonyms to the server, which looks
    // them up, draws the session nonce, and builds both challenges.
    let Some(Message::YuIdsPair {
        ids_a: lookup_a,
        ids_b: lookup_b,
    }) = adversary.apply(
        Edge::YuIdsToServer,
        Some(Message::YuIdsPair { ids_a, ids_b }),
        &mut transcript,
    )
    else {
        finish!(Verdict::Blocked);
    };
    if lookup_a != rec_a.ids || lookup_b != rec_b.ids {
        finish!(Verdict::RejectedAtServer);
    }
    let r = rng.draw(width);
    let (ch_a, ch_b) = yu::server_challenge(rec_a, rec_b, r, variant);
    let Some(Message::YuChallenges { to_a, to_b }) = adversary.apply(
        Edge::YuChallengesToReader,
        Some(Message::YuChallenges {
            to_a: ch_a,
            to_b: ch_b,
        }),
        &mut transcript,
    ) else {
        finish!(Verdict::Blocked);
    };
    let challenge_a = adversary.apply(
        Edge::YuChallengeToA,
        Some(Message::YuChallengeMsg { challenge: to_a }),
        &mut transcript,
    );
    // Tag B holds its challenge until the first response arrives.
    let challenge_b = adversary.apply(
        Edge::YuChallengeToB,
        Some(Message::YuChallengeMsg { challenge: to_b }),
        &mut transcript,
    );

    // Step 4: the first tag verifies and responds, updating its keys.
    let response_a = if adversary.impersonates(Edge::YuFirstResponseToReader) {
        None
    } else if let Some(Message::YuChallengeMsg { challenge }) = challenge_a {
        match tag_a.respond_first(&challenge, variant, flags) {
            Some(m_a) => Some(Message::YuFirstResponse { m_a }),
            None => finish!(Verdict::RejectedAtTag),
        }
    } else {
        None
    };
    let Some(Message::YuFirstResponse { m_a }) =
        adversary.apply(Edge::YuFirstResponseToReader, response_a, &mut transcript)
    else {
        finish!(Verdict::Blocked);
    };

    // Step 5: the reader relays the first response to the second tag.
    let relayed = adversary.apply(
        Edge::YuFirstResponseToTagB,
        Some(Message::YuFirstResponse { m_a }),
        &mut transcript,
    );

    // Step 6: the second tag verifies its held challenge and responds.
    let response_b = if adversary.impersonates(Edge::YuSecondResponseToReader) {
        None
    } else if let (
        Some(Message::YuChallengeMsg { challenge }),
        Some(Message::YuFirstResponse { m_a: m_a_at_b }),
    ) = (challenge_b, relayed)
    {
        match tag_b.respond_second(&challenge, m_a_at_b, variant, flags) {
            Some(m_b) => Some(Message::YuSecondResponse { m_b }),
            None => finish!(Verdict::RejectedAtTag),
        }
    } else {
        None
    };
    let Some(Message::YuSecondResponse { m_b }) =
        adversary.apply(Edge::YuSecondResponseToReader, response_b, &mut transcript)
    else {
        finish!(Verdict::Blocked);
    };

    // Step 7: the reader assembles the proof from what it saw.
    let proof = BindingProof {
        ids_a,
        ids_b,
        m_a,
        m_b,
    };
    proof_out = Some(proof);
    let Some(Message::YuProof {
        proof: delivered_proof,
    }) = adversary.apply(
        Edge::YuProofToServer,
        Some(Message::YuProof { proof }),
        &mut transcript,
    )
    else {
        finish!(Verdict::Blocked);
    };

    // Step 8: verification and, on success, the shared key update.
    if yu::server_verify_and_update(rec_a, rec_b, r, &delivered_proof, variant, flags) {
        finish!(Verdict::Accepted);
    }
    finish!(Verdict::RejectedAtServer);
}

/// Builds a script that forces every edge to deliver exactly what a
/// recorded transcript delivered. Replaying against clones of the original
/// initial states (and the same session randomness) reproduces the outcome.
pub fn replay_script(transcript: &[TranscriptEntry]) -> AdversaryScript {
    let mut script = AdversaryScript::passive();
    for entry in transcript {
        let hook = match (&entry.original, &entry.delivered) {
            (Some(_), Some(delivered)) => {
                let forced = *delivered;
                Hook::Replace(Box::new(move |_, _| forced))
            }
            (None, Some(delivered)) => {
                let forced = *delivered;
                Hook::Impersonate(Box::new(move |_| Some(forced)))
            }
            (_, None) => Hook::Block,
        };
        script.set(entry.edge, hook);
    }
    script
}
