//! Independent reference evaluator and cross-checker.
//!
//! Everything here is a second, straight-line implementation of both
//! protocols over plain integers with explicit `mod 2^k` masks — no word
//! module, no shared hash code. The cross-check runs real sessions through
//! the channel, replays the recorded randomness through this evaluator, and
//! counts disagreements on every wire value and every state transition. A
//! non-zero count means one of the two implementations misreads a formula.

use serde::Serialize;
use thiserror::Error;

use crate::channel::{
    run_yu_session, run_zhuo_session, AdversaryScript, Edge, Message, SessionOutcome, Verdict,
};
use crate::rng::{RecordingRng, TrialRng, WordRng};
use crate::word::Word;
use crate::yu::{IdsUpdateParse, KeyUpdateOrder, YuCredentials, YuFlags, YuTagState};
use crate::zhuo::{ZhuoServerRecord, ZhuoTagState};
use crate::Variant;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("reference evaluator supports even widths 8..=16, got {0}")]
    UnsupportedWidth(u16),
}

fn mask(bits: u16) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

fn add(k: u16, x: u128, y: u128) -> u128 {
    (x + y) & mask(k)
}

fn sub(k: u16, x: u128, y: u128) -> u128 {
    (x + (mask(k) - y) + 1) & mask(k)
}

fn rotl(k: u16, x: u128, n: u32) -> u128 {
    let kb = u32::from(k);
    let s = n % kb;
    if s == 0 {
        return x;
    }
    ((x << s) | (x >> (kb - s))) & mask(k)
}

// Independent copy of the toy-hash definition: absorb the canonical input
// bytes (big-endian width prefix, then big-endian value bytes) into a
// 64-bit state with four xor-rotate-add rounds per byte, then xor-fold the
// state down to the output width.
fn toy_permute(mut s: u64) -> u64 {
    const XOR: [u64; 4] = [
        0x9e37_79b9_7f4a_7c15,
        0xbf58_476d_1ce4_e5b9,
        0x94d0_49bb_1331_11eb,
        0x2545_f491_4f6c_dd1d,
    ];
    const ROT: [u32; 4] = [7, 19, 31, 43];
    const ADD: [u64; 4] = [
        0x1656_67b1_9e37_79f9,
        0x27d4_eb2f_1656_67c5,
        0x85eb_ca77_c2b2_ae63,
        0xc2b2_ae3d_27d4_eb4f,
    ];
    for i in 0..4 {
        s ^= XOR[i];
        s = s.rotate_left(ROT[i]);
        s = s.wrapping_add(ADD[i]);
    }
    s
}

/// The toy hash of a `width`-bit value, folded to `out` bits.
pub fn toy_hash_value(value: u128, width: u16, out: u16) -> u128 {
    let mut state: u64 = 0x6a09_e667_f3bc_c908;
    let absorb = |byte: u8, state: &mut u64| {
        *state ^= u64::from(byte);
        *state = toy_permute(*state);
    };
    for byte in width.to_be_bytes() {
        absorb(byte, &mut state);
    }
    let nbytes = width.div_ceil(8);
    for i in (0..nbytes).rev() {
        absorb((value >> (8 * u32::from(i))) as u8, &mut state);
    }
    let out_mask = if out >= 64 {
        u64::MAX
    } else {
        (1u64 << out) - 1
    };
    let folds = 64u32.div_ceil(u32::from(out)) - 1;
    let mut v = state;
    for _ in 0..folds {
        v = (v >> out) ^ (v & out_mask);
    }
    u128::from(v & out_mask)
}

// ---------------------------------------------------------------------
// Mutual-authentication evaluator.
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct RefZhuoState {
    pub key: u128,
    pub serial: u128,
    pub secret: u128,
    pub prev: (u128, u128),
    pub curr: (u128, u128),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RefZhuoSession {
    pub ids: u128,
    pub a: u128,
    pub m: u128,
    pub m_left: u128,
    pub server_nonce: u128,
    pub n_right: u128,
    pub accepted: bool,
}

fn ref_zhuo_m(k: u16, variant: Variant, key: u128, r: u128, serial: u128, a: u128) -> u128 {
    match variant {
        Variant::Original => toy_hash_value(key ^ r ^ a ^ serial, k, k),
        Variant::Hardened => toy_hash_value(((key ^ r ^ serial) << k) | a, 2 * k, k),
    }
}

/// One honest six-step run, evolving `state` in place. `server_nonce` is
/// consumed only when the server accepts.
pub fn ref_zhuo_session(
    k: u16,
    variant: Variant,
    state: &mut RefZhuoState,
    r: u128,
    server_nonce: u128,
) -> RefZhuoSession {
    let half = k / 2;
    let mut out = RefZhuoSession::default();

    // Tag, step 2.
    out.ids = toy_hash_value(state.key, k, k);
    out.a = toy_hash_value(state.secret ^ r, k, k);
    out.m = ref_zhuo_m(k, variant, state.key, r, state.serial, out.a);
    out.m_left = out.m >> half;
    let m_right = out.m & mask(half);
    state.secret = toy_hash_value(state.secret ^ m_right, k, k);

    // Server, step 4: current slot first, then the old one.
    for slot in [state.curr, state.prev] {
        let (slot_key, slot_ids) = slot;
        if slot_ids != out.ids {
            continue;
        }
        let expected_left = ref_zhuo_m(k, variant, slot_key, r, state.serial, out.a) >> half;
        if expected_left != out.m_left {
            continue;
        }
        let n = toy_hash_value(slot_key ^ server_nonce ^ out.a, k, k);
        out.server_nonce = server_nonce;
        out.n_right = n & mask(half);
        let new_key = slot_key ^ (n >> half);
        state.prev = slot;
        state.curr = (new_key, toy_hash_value(new_key, k, k));
        out.accepted = true;
        break;
    }

    // Tag, step 6.
    if out.accepted {
        let n = toy_hash_value(state.key ^ out.server_nonce ^ out.a, k, k);
        debug_assert_eq!(n & mask(half), out.n_right);
        state.key ^= n >> half;
    }
    out
}

// ---------------------------------------------------------------------
// Binding-proof evaluator.
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefYuCreds {
    pub ids: u128,
    pub id: u128,
    pub x: u128,
    pub k1: u128,
    pub k2: u128,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RefYuSession {
    pub a_a: u128,
    pub b_a: u128,
    pub a_b: u128,
    pub b_b: u128,
    pub m_a: u128,
    pub m_b: u128,
    pub fingerprint: u128,
}

fn ref_yu_challenge(k: u16, variant: Variant, c: &RefYuCreds, r: u128) -> (u128, u128) {
    match variant {
        Variant::Original => (c.ids ^ c.k1 ^ r, add(k, c.ids | c.k2, r)),
        Variant::Hardened => (
            add(k, rotl(k, c.ids ^ c.k1 ^ r, 4), c.k2),
            add(k, rotl(k, add(k, c.ids, r), 2), c.k2),
        ),
    }
}

fn ref_yu_first(k: u16, variant: Variant, c: &RefYuCreds, partner_ids: u128, r: u128) -> u128 {
    let sum = add(k, add(k, add(k, c.ids, partner_ids), c.id), c.x);
    match variant {
        Variant::Original => sum ^ r,
        Variant::Hardened => add(k, sum, r) ^ r,
    }
}

fn ref_yu_second(k: u16, variant: Variant, c: &RefYuCreds, m_a: u128, r: u128) -> u128 {
    match variant {
        Variant::Original => add(k, add(k, m_a, c.id), c.x) ^ r,
        Variant::Hardened => add(k, add(k, c.x | r, c.id), m_a) ^ r,
    }
}

fn ref_yu_update(
    k: u16,
    c: &mut RefYuCreds,
    r: u128,
    parse: IdsUpdateParse,
    order: KeyUpdateOrder,
) {
    let ids_of = |k2: u128, ids: u128, id: u128| match parse {
        IdsUpdateParse::Left => add(k, ids, k2 ^ r) ^ id,
        IdsUpdateParse::Right => add(k, ids, k2 ^ r ^ id),
    };
    match order {
        KeyUpdateOrder::Simultaneous => {
            let k1 = c.k1 ^ r ^ add(k, c.k2, c.id);
            let k2 = c.k2 ^ r ^ add(k, c.k1, c.id);
            let ids = ids_of(c.k2, c.ids, c.id);
            c.k1 = k1;
            c.k2 = k2;
            c.ids = ids;
        }
        KeyUpdateOrder::Sequential => {
            c.k1 = c.k1 ^ r ^ add(k, c.k2, c.id);
            c.k2 = c.k2 ^ r ^ add(k, c.k1, c.id);
            c.ids = ids_of(c.k2, c.ids, c.id);
        }
    }
}

/// One honest eight-step run over a synchronized pair, evolving both
/// credential sets in place.
pub fn ref_yu_session(
    k: u16,
    variant: Variant,
    parse: IdsUpdateParse,
    order: KeyUpdateOrder,
    a: &mut RefYuCreds,
    b: &mut RefYuCreds,
    r: u128,
) -> RefYuSession {
    let mut out = RefYuSession::default();
    (out.a_a, out.b_a) = ref_yu_challenge(k, variant, a, r);
    (out.a_b, out.b_b) = ref_yu_challenge(k, variant, b, r);

    // Tag-side nonce recovery must reproduce r exactly.
    let r_at_a = match variant {
        Variant::Original => out.a_a ^ a.ids ^ a.k1,
        Variant::Hardened => rotl(k, sub(k, out.a_a, a.k2), u32::from(k) - 4) ^ a.ids ^ a.k1,
    };
    debug_assert_eq!(r_at_a, r);

    out.m_a = ref_yu_first(k, variant, a, b.ids, r);
    out.m_b = ref_yu_second(k, variant, b, out.m_a, r);
    out.fingerprint = sub(k, sub(k, sub(k, out.m_a ^ out.m_b, a.ids), b.ids), out.m_a);
    ref_yu_update(k, a, r, parse, order);
    ref_yu_update(k, b, r, parse, order);
    out
}

// ---------------------------------------------------------------------
// Cross-check driver.
// ---------------------------------------------------------------------

/// Tallies per-value comparisons between the implementation and the
/// reference evaluator.
#[derive(Debug, Default)]
pub struct Comparator {
    pub comparisons: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<String>,
}

impl Comparator {
    pub fn check(&mut self, label: &str, actual: u128, expected: u128) {
        self.comparisons += 1;
        if actual != expected {
            self.mismatches += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(format!(
                    "{label}: impl {actual:#x} vs reference {expected:#x}"
                ));
            }
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CrosscheckReport {
    pub k: u16,
    pub seed: u64,
    pub sessions_per_combo: u64,
    pub total_sessions: u64,
    pub comparisons: u64,
    pub mismatches: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_mismatch: Option<String>,
}

// Re-provision this often so chains exercise long key evolutions while
// still covering many distinct credential draws.
const CHAIN_LEN: u64 = 50;

fn find_message(outcome: &SessionOutcome, edge: Edge) -> Option<Message> {
    outcome
        .transcript
        .iter()
        .find(|e| e.edge == edge)
        .and_then(|e| e.delivered)
}

fn v(word: Word) -> u128 {
    word.as_u128()
}

fn crosscheck_zhuo(
    k: u16,
    variant: Variant,
    sessions: u64,
    seed: u64,
    trial: u64,
    cmp: &mut Comparator,
) {
    let hash = crate::hash::ToyHash::new(k);
    let mut rng = TrialRng::for_trial(seed, trial);
    let mut remaining = sessions;
    while remaining > 0 {
        let key = rng.draw(k);
        let serial = rng.draw(k);
        let secret = rng.draw(k);
        let mut tag = ZhuoTagState::new(key, serial, secret);
        let mut record = ZhuoServerRecord::provision(key, serial, &hash);
        let mut reference = RefZhuoState {
            key: v(key),
            serial: v(serial),
            secret: v(secret),
            prev: (v(key), toy_hash_value(v(key), k, k)),
            curr: (v(key), toy_hash_value(v(key), k, k)),
        };
        let mut script = AdversaryScript::passive();
        for _ in 0..CHAIN_LEN.min(remaining) {
            let mut recorder = RecordingRng::new(&mut rng);
            let outcome = run_zhuo_session(
                &mut tag,
                &mut record,
                &mut script,
                &mut recorder,
                variant,
                &hash,
            );
            assert_eq!(outcome.verdict, Verdict::Accepted, "honest run must accept");
            let draws = recorder.log();
            let session = ref_zhuo_session(k, variant, &mut reference, v(draws[0]), v(draws[1]));

            let Some(Message::ZhuoTagReply { ids, a, m_left }) =
                find_message(&outcome, Edge::ZhuoReplyToReader)
            else {
                unreachable!("honest transcript carries the tag reply")
            };
            cmp.check("ids", v(ids), session.ids);
            cmp.check("a", v(a), session.a);
            cmp.check("m_left", v(m_left), session.m_left);
            let Some(Message::ZhuoServerReply {
                server_nonce,
                n_right,
            }) = find_message(&outcome, Edge::ZhuoServerToReader)
            else {
                unreachable!("honest transcript carries the server reply")
            };
            cmp.check("server_nonce", v(server_nonce), session.server_nonce);
            cmp.check("n_right", v(n_right), session.n_right);

            cmp.check("tag.key", v(tag.key), reference.key);
            cmp.check("tag.secret", v(tag.tag_secret), reference.secret);
            cmp.check("server.prev.key", v(record.prev.key), reference.prev.0);
            cmp.check("server.prev.ids", v(record.prev.ids), reference.prev.1);
            cmp.check("server.curr.key", v(record.curr.key), reference.curr.0);
            cmp.check("server.curr.ids", v(record.curr.ids), reference.curr.1);
        }
        remaining -= CHAIN_LEN.min(remaining);
    }
}

fn crosscheck_yu(
    k: u16,
    variant: Variant,
    sessions: u64,
    seed: u64,
    trial: u64,
    cmp: &mut Comparator,
) {
    let flags = YuFlags::default();
    let mut rng = TrialRng::for_trial(seed, trial);
    let mut remaining = sessions;
    while remaining > 0 {
        let draw_creds = |rng: &mut dyn WordRng| YuCredentials {
            ids: rng.draw(k),
            id: rng.draw(k),
            x: rng.draw(k),
            k1: rng.draw(k),
            k2: rng.draw(k),
        };
        let creds_a = draw_creds(&mut rng);
        let mut creds_b = draw_creds(&mut rng);
        while creds_b.ids == creds_a.ids {
            creds_b.ids = rng.draw(k);
        }
        let mut tag_a = YuTagState::new(creds_a);
        let mut tag_b = YuTagState::new(creds_b);
        let mut rec_a = creds_a;
        let mut rec_b = creds_b;
        let to_ref = |c: &YuCredentials| RefYuCreds {
            ids: v(c.ids),
            id: v(c.id),
            x: v(c.x),
            k1: v(c.k1),
            k2: v(c.k2),
        };
        let mut ref_a = to_ref(&creds_a);
        let mut ref_b = to_ref(&creds_b);
        let mut script = AdversaryScript::passive();
        for _ in 0..CHAIN_LEN.min(remaining) {
            let mut recorder = RecordingRng::new(&mut rng);
            let outcome = run_yu_session(
                &mut tag_a,
                &mut tag_b,
                &mut rec_a,
                &mut rec_b,
                &mut script,
                &mut recorder,
                variant,
                &flags,
            );
            assert_eq!(outcome.verdict, Verdict::Accepted, "honest run must accept");
            let r = v(recorder.log()[0]);
            let session = ref_yu_session(
                k,
                variant,
                flags.ids_parse,
                flags.update_order,
                &mut ref_a,
                &mut ref_b,
                r,
            );

            let Some(Message::YuChallenges { to_a, to_b }) =
                find_message(&outcome, Edge::YuChallengesToReader)
            else {
                unreachable!("honest transcript carries the challenges")
            };
            cmp.check("a_a", v(to_a.a), session.a_a);
            cmp.check("b_a", v(to_a.b), session.b_a);
            cmp.check("a_b", v(to_b.a), session.a_b);
            cmp.check("b_b", v(to_b.b), session.b_b);

            let proof = outcome.proof.expect("accepted run produced a proof");
            cmp.check("m_a", v(proof.m_a), session.m_a);
            cmp.check("m_b", v(proof.m_b), session.m_b);
            let fingerprint = crate::attacks::tracking_fingerprint(&proof, 0).value;
            cmp.check("fingerprint", v(fingerprint), session.fingerprint);

            for (label, creds, reference) in [
                ("tag_a", &tag_a.creds, &ref_a),
                ("tag_b", &tag_b.creds, &ref_b),
                ("rec_a", &rec_a, &ref_a),
                ("rec_b", &rec_b, &ref_b),
            ] {
                cmp.check(&format!("{label}.ids"), v(creds.ids), reference.ids);
                cmp.check(&format!("{label}.id"), v(creds.id), reference.id);
                cmp.check(&format!("{label}.x"), v(creds.x), reference.x);
                cmp.check(&format!("{label}.k1"), v(creds.k1), reference.k1);
                cmp.check(&format!("{label}.k2"), v(creds.k2), reference.k2);
            }
        }
        remaining -= CHAIN_LEN.min(remaining);
    }
}

/// Re-executes `sessions_per_combo` honest sessions for every protocol and
/// variant through the reference evaluator and counts disagreements.
pub fn crosscheck(
    k: u16,
    sessions_per_combo: u64,
    seed: u64,
) -> Result<CrosscheckReport, OracleError> {
    if !k.is_multiple_of(2) || !(8..=16).contains(&k) {
        return Err(OracleError::UnsupportedWidth(k));
    }
    let mut cmp = Comparator::default();
    let mut trial = 0u64;
    for variant in [Variant::Original, Variant::Hardened] {
        crosscheck_zhuo(k, variant, sessions_per_combo, seed, trial, &mut cmp);
        trial += 1;
        crosscheck_yu(k, variant, sessions_per_combo, seed, trial, &mut cmp);
        trial += 1;
    }
    Ok(CrosscheckReport {
        k,
        seed,
        sessions_per_combo,
        total_sessions: sessions_per_combo * 4,
        comparisons: cmp.comparisons,
        mismatches: cmp.mismatches,
        first_mismatch: cmp.first_mismatch,
    })
}
