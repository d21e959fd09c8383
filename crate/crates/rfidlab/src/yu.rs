//! Two-tag binding-proof protocol: the server challenges both tags through
//! the reader, each tag recovers the session nonce from its challenge,
//! checks it, and contributes a response; the pair of responses proves both
//! tags were present. Afterwards tags and server run the same key-update
//! step over `{k1, k2, IDS}`; the identity `ID` and secret `X` never change.
//!
//! The hardened variant rotates the challenge formulas (so a flipped
//! most-significant bit no longer survives the consistency check) and mixes
//! the nonce into both responses (so transcripts stop being linkable).

use serde::Serialize;

use crate::word::Word;
use crate::Variant;

/// How the published IDS-update expression is grouped. The formula reads
/// `IDS + (k2 ⊕ r) ⊕ ID (mod 2^k)`; left-to-right application attaches the
/// modulus to the addition and xors `ID` afterwards, which is the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdsUpdateParse {
    /// `((IDS + (k2 ⊕ r)) mod 2^k) ⊕ ID`
    #[default]
    Left,
    /// `(IDS + (k2 ⊕ r ⊕ ID)) mod 2^k`
    Right,
}

/// Whether the three update formulas all read pre-update values
/// (simultaneous) or each sees the previous formula's result (sequential).
/// Simultaneous is the default; it keeps tag and server symmetric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyUpdateOrder {
    #[default]
    Simultaneous,
    Sequential,
}

/// Interpretation switches for the underspecified corners of the scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct YuFlags {
    pub ids_parse: IdsUpdateParse,
    pub update_order: KeyUpdateOrder,
}

/// The five persistent fields a tag shares with its server record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct YuCredentials {
    pub ids: Word,
    pub id: Word,
    pub x: Word,
    pub k1: Word,
    pub k2: Word,
}

/// Server-side mirror of a tag's persistent fields. A single copy: there
/// are no old/new slots in this scheme.
pub type YuServerRecord = YuCredentials;

/// A per-tag challenge, carried on the wire as `A ∥ B ∥ partner-IDS`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct YuChallenge {
    pub a: Word,
    pub b: Word,
    pub partner_ids: Word,
}

/// The tuple the reader finally submits to prove both tags were present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BindingProof {
    pub ids_a: Word,
    pub ids_b: Word,
    pub m_a: Word,
    pub m_b: Word,
}

/// A tag: its credentials plus the response behaviour.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YuTagState {
    pub creds: YuCredentials,
}

fn challenge_for(
    creds: &YuCredentials,
    partner_ids: Word,
    r: Word,
    variant: Variant,
) -> YuChallenge {
    match variant {
        Variant::Original => YuChallenge {
            a: creds.ids ^ creds.k1 ^ r,
            b: (creds.ids | creds.k2).wrapping_add(r),
            partner_ids,
        },
        Variant::Hardened => YuChallenge {
            a: (creds.ids ^ creds.k1 ^ r)
                .rotate_left(4)
                .wrapping_add(creds.k2),
            b: creds
                .ids
                .wrapping_add(r)
                .rotate_left(2)
                .wrapping_add(creds.k2),
            partner_ids,
        },
    }
}

/// Step 3: the server draws `r` once and builds both challenges, each
/// carrying the partner's pseudonym.
pub fn server_challenge(
    rec_a: &YuServerRecord,
    rec_b: &YuServerRecord,
    r: Word,
    variant: Variant,
) -> (YuChallenge, YuChallenge) {
    (
        challenge_for(rec_a, rec_b.ids, r, variant),
        challenge_for(rec_b, rec_a.ids, r, variant),
    )
}

/// Extracts the session nonce from a challenge and verifies it against the
/// `B` component. `None` means the challenge failed the consistency check.
pub fn recover_r(creds: &YuCredentials, challenge: &YuChallenge, variant: Variant) -> Option<Word> {
    let r = match variant {
        Variant::Original => challenge.a ^ creds.ids ^ creds.k1,
        Variant::Hardened => {
            let k = u32::from(creds.ids.width());
            challenge.a.wrapping_sub(creds.k2).rotate_left(k - 4) ^ creds.ids ^ creds.k1
        }
    };
    let expected_b = challenge_for(creds, challenge.partner_ids, r, variant).b;
    (expected_b == challenge.b).then_some(r)
}

/// The first tag's response.
///
/// Original: `((IDS_a + IDS_b + ID_a + X_a) mod 2^k) ⊕ r`.
/// Hardened: `((IDS_a + IDS_b + ID_a + X_a + r) mod 2^k) ⊕ r`.
pub fn first_response(creds: &YuCredentials, partner_ids: Word, r: Word, variant: Variant) -> Word {
    let sum = creds
        .ids
        .wrapping_add(partner_ids)
        .wrapping_add(creds.id)
        .wrapping_add(creds.x);
    match variant {
        Variant::Original => sum ^ r,
        Variant::Hardened => sum.wrapping_add(r) ^ r,
    }
}

/// The second tag's response.
///
/// Original: `((m_a + ID_b + X_b) mod 2^k) ⊕ r`.
/// Hardened: `(((X_b ∨ r) + ID_b + m_a) mod 2^k) ⊕ r`.
pub fn second_response(creds: &YuCredentials, m_a: Word, r: Word, variant: Variant) -> Word {
    match variant {
        Variant::Original => m_a.wrapping_add(creds.id).wrapping_add(creds.x) ^ r,
        Variant::Hardened => (creds.x | r).wrapping_add(creds.id).wrapping_add(m_a) ^ r,
    }
}

impl YuCredentials {
    /// The shared key-update step: `k1`, `k2` and `IDS` evolve from the
    /// session nonce; `ID` and `X` stay fixed.
    pub fn key_update(&mut self, r: Word, flags: &YuFlags) {
        match flags.update_order {
            KeyUpdateOrder::Simultaneous => {
                let k1 = self.k1 ^ r ^ self.k2.wrapping_add(self.id);
                let k2 = self.k2 ^ r ^ self.k1.wrapping_add(self.id);
                let ids = ids_update(self.ids, self.k2, r, self.id, flags.ids_parse);
                self.k1 = k1;
                self.k2 = k2;
                self.ids = ids;
            }
            KeyUpdateOrder::Sequential => {
                self.k1 = self.k1 ^ r ^ self.k2.wrapping_add(self.id);
                self.k2 = self.k2 ^ r ^ self.k1.wrapping_add(self.id);
                self.ids = ids_update(self.ids, self.k2, r, self.id, flags.ids_parse);
            }
        }
    }
}

fn ids_update(ids: Word, k2: Word, r: Word, id: Word, parse: IdsUpdateParse) -> Word {
    match parse {
        IdsUpdateParse::Left => ids.wrapping_add(k2 ^ r) ^ id,
        IdsUpdateParse::Right => ids.wrapping_add(k2 ^ r ^ id),
    }
}

impl YuTagState {
    pub fn new(creds: YuCredentials) -> Self {
        Self { creds }
    }

    /// Step 4: verify the challenge, emit the first response, and update
    /// keys immediately with the recovered nonce. `None` on a failed
    /// consistency check, with no update.
    pub fn respond_first(
        &mut self,
        challenge: &YuChallenge,
        variant: Variant,
        flags: &YuFlags,
    ) -> Option<Word> {
        let r = recover_r(&self.creds, challenge, variant)?;
        let m = first_response(&self.creds, challenge.partner_ids, r, variant);
        self.creds.key_update(r, flags);
        Some(m)
    }

    /// Step 6: the partner's response arrives; verify the held challenge,
    /// emit the second response, update keys with the recovered nonce.
    pub fn respond_second(
        &mut self,
        challenge: &YuChallenge,
        m_a: Word,
        variant: Variant,
        flags: &YuFlags,
    ) -> Option<Word> {
        let r = recover_r(&self.creds, challenge, variant)?;
        let m = second_response(&self.creds, m_a, r, variant);
        self.creds.key_update(r, flags);
        Some(m)
    }
}

/// Steps 7-8: recompute both expected responses from the records and the
/// issued nonce; on a full match update both records. A reject leaves the
/// records unchanged.
pub fn server_verify_and_update(
    rec_a: &mut YuServerRecord,
    rec_b: &mut YuServerRecord,
    r: Word,
    proof: &BindingProof,
    variant: Variant,
    flags: &YuFlags,
) -> bool {
    if proof.ids_a != rec_a.ids || proof.ids_b != rec_b.ids {
        return false;
    }
    let expected_m_a = first_response(rec_a, rec_b.ids, r, variant);
    if proof.m_a != expected_m_a {
        return false;
    }
    let expected_m_b = second_response(rec_b, expected_m_a, r, variant);
    if proof.m_b != expected_m_b {
        return false;
    }
    rec_a.key_update(r, flags);
    rec_b.key_update(r, flags);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{TrialRng, WordRng};
    use proptest::prelude::*;

    fn w(value: u128, width: u16) -> Word {
        Word::new(value, width).unwrap()
    }

    fn creds_a() -> YuCredentials {
        YuCredentials {
            ids: w(0x12, 8),
            id: w(0x03, 8),
            x: w(0x40, 8),
            k1: w(0x34, 8),
            k2: w(0x0f, 8),
        }
    }

    fn creds_b() -> YuCredentials {
        YuCredentials {
            ids: w(0x21, 8),
            id: w(0x05, 8),
            x: w(0x80, 8),
            k1: w(0x55, 8),
            k2: w(0x66, 8),
        }
    }

    fn random_creds(rng: &mut dyn WordRng, k: u16) -> YuCredentials {
        YuCredentials {
            ids: rng.draw(k),
            id: rng.draw(k),
            x: rng.draw(k),
            k1: rng.draw(k),
            k2: rng.draw(k),
        }
    }

    #[test]
    fn original_challenge_worked_example() {
        let ch = challenge_for(&creds_a(), w(0x21, 8), w(0x56, 8), Variant::Original);
        assert_eq!(ch.a, w(0x70, 8));
        assert_eq!(ch.b, w(0x75, 8));
        assert_eq!(ch.partner_ids, w(0x21, 8));
    }

    #[test]
    fn original_challenge_with_zero_nonce_and_key_exposes_ids() {
        let mut creds = creds_a();
        creds.k1 = w(0, 8);
        let ch = challenge_for(&creds, w(0x21, 8), w(0, 8), Variant::Original);
        assert_eq!(ch.a, creds.ids);
    }

    #[test]
    fn hardened_challenge_worked_example() {
        let ch = challenge_for(&creds_a(), w(0x21, 8), w(0x56, 8), Variant::Hardened);
        // ROT(0x70, 4) = 0x07, plus k2 = 0x0f.
        assert_eq!(ch.a, w(0x16, 8));
    }

    #[test]
    fn first_response_worked_examples() {
        assert_eq!(
            first_response(&creds_a(), w(0x21, 8), w(0x56, 8), Variant::Original),
            w(0x20, 8)
        );
        assert_eq!(
            first_response(&creds_a(), w(0x21, 8), w(0x56, 8), Variant::Hardened),
            w(0x9a, 8)
        );
        let zeros = YuCredentials {
            ids: w(0, 8),
            id: w(0, 8),
            x: w(0, 8),
            k1: w(0, 8),
            k2: w(0, 8),
        };
        assert_eq!(
            first_response(&zeros, w(0, 8), w(0, 8), Variant::Original),
            w(0, 8)
        );
    }

    #[test]
    fn second_response_worked_examples() {
        assert_eq!(
            second_response(&creds_b(), w(0x20, 8), w(0x56, 8), Variant::Original),
            w(0xf3, 8)
        );
        assert_eq!(
            second_response(&creds_b(), w(0x20, 8), w(0x56, 8), Variant::Hardened),
            w(0xad, 8)
        );
        let zeros = YuCredentials {
            ids: w(0, 8),
            id: w(0, 8),
            x: w(0, 8),
            k1: w(0, 8),
            k2: w(0, 8),
        };
        assert_eq!(
            second_response(&zeros, w(0, 8), w(0, 8), Variant::Original),
            w(0, 8)
        );
    }

    #[test]
    fn key_update_worked_example() {
        let mut creds = creds_a();
        creds.key_update(w(0x56, 8), &YuFlags::default());
        assert_eq!(creds.k1, w(0x70, 8));
        assert_eq!(creds.k2, w(0x6e, 8));
        assert_eq!(creds.ids, w(0x68, 8));
        assert_eq!(creds.id, w(0x03, 8));
        assert_eq!(creds.x, w(0x40, 8));
    }

    #[test]
    fn key_update_degenerate_identity() {
        let mut creds = YuCredentials {
            ids: w(0x12, 8),
            id: w(0, 8),
            x: w(0, 8),
            k1: w(0, 8),
            k2: w(0, 8),
        };
        creds.key_update(w(0, 8), &YuFlags::default());
        assert_eq!(creds.k1, w(0, 8));
        assert_eq!(creds.k2, w(0, 8));
        assert_eq!(creds.ids, w(0x12, 8));
    }

    #[test]
    fn key_update_is_not_an_involution() {
        let flags = YuFlags::default();
        let mut twice = creds_a();
        twice.key_update(w(0x56, 8), &flags);
        twice.key_update(w(0x56, 8), &flags);
        assert_ne!(twice, creds_a());

        // Sweep the nonce space at k = 8: returning to the start must be
        // the exception, not the rule.
        let mut returns = 0;
        for r in 0..=0xffu128 {
            let mut c = creds_a();
            c.key_update(w(r, 8), &flags);
            c.key_update(w(r, 8), &flags);
            if c == creds_a() {
                returns += 1;
            }
        }
        assert!(returns < 256);
    }

    #[test]
    fn ids_update_parses_differ() {
        let left = ids_update(
            w(0x12, 8),
            w(0x0f, 8),
            w(0x56, 8),
            w(0x03, 8),
            IdsUpdateParse::Left,
        );
        let right = ids_update(
            w(0x12, 8),
            w(0x0f, 8),
            w(0x56, 8),
            w(0x03, 8),
            IdsUpdateParse::Right,
        );
        assert_eq!(left, w(0x68, 8));
        assert_eq!(right, w(0x6c, 8));
    }

    #[test]
    fn update_order_flag_changes_the_result() {
        let mut sim = creds_a();
        sim.key_update(
            w(0x56, 8),
            &YuFlags {
                update_order: KeyUpdateOrder::Simultaneous,
                ..Default::default()
            },
        );
        let mut seq = creds_a();
        seq.key_update(
            w(0x56, 8),
            &YuFlags {
                update_order: KeyUpdateOrder::Sequential,
                ..Default::default()
            },
        );
        assert_ne!(sim.k2, seq.k2);
    }

    #[test]
    fn honest_challenge_round_trips_in_both_variants() {
        let mut rng = TrialRng::for_trial(21, 0);
        for variant in [Variant::Original, Variant::Hardened] {
            for _ in 0..200 {
                let creds = random_creds(&mut rng, 16);
                let partner = rng.draw(16);
                let r = rng.draw(16);
                let ch = challenge_for(&creds, partner, r, variant);
                assert_eq!(recover_r(&creds, &ch, variant), Some(r));
            }
        }
    }

    #[test]
    fn flipped_challenge_fools_the_original_check_and_shifts_the_nonce() {
        let mut rng = TrialRng::for_trial(22, 0);
        for _ in 0..500 {
            let creds = random_creds(&mut rng, 8);
            let r = rng.draw(8);
            let ch = challenge_for(&creds, rng.draw(8), r, Variant::Original);
            let flipped = YuChallenge {
                a: ch.a.msb_flip(),
                b: ch.b.msb_flip(),
                partner_ids: ch.partner_ids,
            };
            let recovered = recover_r(&creds, &flipped, Variant::Original);
            assert_eq!(recovered, Some(r.msb_flip()));
        }
    }

    #[test]
    fn flipped_consistency_check_identity_is_exhaustive_at_k8() {
        // The check compares B against (IDS ∨ k2) + r; flipping the top bit
        // of both B and r preserves it for every operand pair.
        for or_part in 0..=0xffu128 {
            for r in 0..=0xffu128 {
                let b = w(or_part, 8).wrapping_add(w(r, 8));
                assert_eq!(b.msb_flip(), w(or_part, 8).wrapping_add(w(r, 8).msb_flip()));
            }
        }
    }

    fn honest_session(
        tag_a: &mut YuTagState,
        tag_b: &mut YuTagState,
        rec_a: &mut YuServerRecord,
        rec_b: &mut YuServerRecord,
        r: Word,
        variant: Variant,
        flags: &YuFlags,
    ) -> bool {
        let (ch_a, ch_b) = server_challenge(rec_a, rec_b, r, variant);
        let m_a = tag_a.respond_first(&ch_a, variant, flags).unwrap();
        let m_b = tag_b.respond_second(&ch_b, m_a, variant, flags).unwrap();
        let proof = BindingProof {
            ids_a: proof_ids(rec_a),
            ids_b: proof_ids(rec_b),
            m_a,
            m_b,
        };
        server_verify_and_update(rec_a, rec_b, r, &proof, variant, flags)
    }

    fn proof_ids(rec: &YuServerRecord) -> Word {
        rec.ids
    }

    #[test]
    fn honest_sessions_keep_all_fields_synchronized() {
        let parses = [IdsUpdateParse::Left, IdsUpdateParse::Right];
        let orders = [KeyUpdateOrder::Simultaneous, KeyUpdateOrder::Sequential];
        for variant in [Variant::Original, Variant::Hardened] {
            for parse in parses {
                for order in orders {
                    let flags = YuFlags {
                        ids_parse: parse,
                        update_order: order,
                    };
                    let mut rng = TrialRng::for_trial(23, 0);
                    let mut tag_a = YuTagState::new(random_creds(&mut rng, 16));
                    let mut tag_b = YuTagState::new(random_creds(&mut rng, 16));
                    let mut rec_a = tag_a.creds;
                    let mut rec_b = tag_b.creds;
                    for _ in 0..50 {
                        let r = rng.draw(16);
                        assert!(honest_session(
                            &mut tag_a, &mut tag_b, &mut rec_a, &mut rec_b, r, variant, &flags
                        ));
                        assert_eq!(tag_a.creds, rec_a);
                        assert_eq!(tag_b.creds, rec_b);
                    }
                }
            }
        }
    }

    #[test]
    fn tampered_proof_is_rejected() {
        let flags = YuFlags::default();
        let mut rng = TrialRng::for_trial(24, 0);
        let tag_a = YuTagState::new(random_creds(&mut rng, 16));
        let tag_b = YuTagState::new(random_creds(&mut rng, 16));
        let mut rec_a = tag_a.creds;
        let mut rec_b = tag_b.creds;
        let r = rng.draw(16);
        let (ch_a, ch_b) = server_challenge(&rec_a, &rec_b, r, Variant::Original);
        let m_a = tag_a
            .clone()
            .respond_first(&ch_a, Variant::Original, &flags)
            .unwrap();
        let m_b = tag_b
            .clone()
            .respond_second(&ch_b, m_a, Variant::Original, &flags)
            .unwrap();
        let proof = BindingProof {
            ids_a: rec_a.ids,
            ids_b: rec_b.ids,
            m_a,
            m_b: m_b ^ w(1, 16),
        };
        let before = (rec_a, rec_b);
        assert!(!server_verify_and_update(
            &mut rec_a,
            &mut rec_b,
            r,
            &proof,
            Variant::Original,
            &flags
        ));
        assert_eq!((rec_a, rec_b), before);
    }

    #[test]
    fn rejected_challenge_leaves_tag_keys_alone() {
        let flags = YuFlags::default();
        let mut rng = TrialRng::for_trial(25, 0);
        let mut tag = YuTagState::new(random_creds(&mut rng, 16));
        let before = tag.creds;
        let bogus = YuChallenge {
            a: rng.draw(16),
            b: rng.draw(16),
            partner_ids: rng.draw(16),
        };
        // A random challenge should practically never verify at k = 16.
        assert_eq!(tag.respond_first(&bogus, Variant::Original, &flags), None);
        assert_eq!(tag.creds, before);
    }

    proptest! {
        #[test]
        fn same_nonce_recovered_by_both_tags(seed in any::<u64>()) {
            let mut rng = TrialRng::for_trial(seed, 0);
            let a = random_creds(&mut rng, 16);
            let b = random_creds(&mut rng, 16);
            let r = rng.draw(16);
            for variant in [Variant::Original, Variant::Hardened] {
                let (ch_a, ch_b) = server_challenge(&a, &b, r, variant);
                prop_assert_eq!(recover_r(&a, &ch_a, variant), Some(r));
                prop_assert_eq!(recover_r(&b, &ch_b, variant), Some(r));
            }
        }

        #[test]
        fn flipped_first_response_shifts_by_the_top_bit(seed in any::<u64>()) {
            // With the original formulas, answering a flipped challenge
            // yields exactly the msb-flipped response.
            let mut rng = TrialRng::for_trial(seed, 1);
            let creds = random_creds(&mut rng, 8);
            let partner = rng.draw(8);
            let r = rng.draw(8);
            let ch = challenge_for(&creds, partner, r, Variant::Original);
            let flipped = YuChallenge { a: ch.a.msb_flip(), b: ch.b.msb_flip(), partner_ids: ch.partner_ids };
            let r_shifted = recover_r(&creds, &flipped, Variant::Original).unwrap();
            let m = first_response(&creds, partner, r, Variant::Original);
            let m_shifted = first_response(&creds, partner, r_shifted, Variant::Original);
            prop_assert_eq!(m_shifted, m.msb_flip());
        }
    }
}
