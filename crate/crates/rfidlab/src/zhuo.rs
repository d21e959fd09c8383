//! Mutual-authentication protocol between a passive tag and a backend
//! server, with a pass-through reader. The tag proves itself with the left
//! half of a keyed hash, the server answers with the right half of a second
//! one, and both sides then xor the opposite halves into the shared key. The
//! server keeps old and new `{key, IDS}` slots so a lost final message does
//! not strand a tag.
//!
//! The hardened variant changes only the `m` formula: the tag nonce moves
//! out of the XOR fold and into a concatenated hash input, which is what
//! blocks the replay forgery.

use thiserror::Error;

use crate::hash::HashFunction;
use crate::word::Word;
use crate::Variant;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ZhuoError {
    /// A final server message arrived with no run in progress.
    #[error("no authentication run in progress")]
    NoSession,
}

/// Values the tag keeps between emitting its reply and the server's answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZhuoSession {
    /// The reader challenge this run answers.
    pub r: Word,
    /// Tag nonce `H(T ⊕ r)`, computed from the pre-update tag secret.
    pub a: Word,
}

/// Persistent tag state: the shared key, the serial number (also held by
/// the server), and a tag-only secret that feeds the per-session nonce.
/// The pseudonym is never stored; it is recomputed as `H(key)` each run.
#[derive(Clone, Debug)]
pub struct ZhuoTagState {
    pub key: Word,
    pub serial: Word,
    pub tag_secret: Word,
    pub session: Option<ZhuoSession>,
}

/// One `{key, IDS}` credential slot on the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZhuoSlot {
    pub key: Word,
    pub ids: Word,
}

/// Server-side record for one tag: the serial number plus old and new
/// credential slots, both looked up by pseudonym.
#[derive(Clone, Debug)]
pub struct ZhuoServerRecord {
    pub serial: Word,
    pub prev: ZhuoSlot,
    pub curr: ZhuoSlot,
}

/// The tag's step-2 reply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TagReply {
    pub ids: Word,
    pub a: Word,
    pub m_left: Word,
}

/// The server's step-4 answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerReply {
    pub server_nonce: Word,
    pub n_right: Word,
}

/// The authentication parameter `m`.
///
/// Original: `H(key ⊕ r ⊕ a ⊕ C)`, a k-bit hash input.
/// Hardened: `H((key ⊕ r ⊕ C) ∥ a)`, a 2k-bit hash input.
pub fn compute_m(
    variant: Variant,
    key: Word,
    r: Word,
    serial: Word,
    a: Word,
    hash: &dyn HashFunction,
) -> Word {
    match variant {
        Variant::Original => hash.hash_word(&(key ^ r ^ a ^ serial)),
        Variant::Hardened => {
            let input = (key ^ r ^ serial)
                .concat(a)
                .expect("2k-bit hash input within bound");
            hash.hash_word(&input)
        }
    }
}

// Half-width halves are zero-extended before xoring into full-width
// secrets; both sides use the same rule, so synchronization is unaffected.
fn xor_half(full: Word, half: Word) -> Word {
    full ^ half.zero_extend(full.width())
}

impl ZhuoTagState {
    pub fn new(key: Word, serial: Word, tag_secret: Word) -> Self {
        Self {
            key,
            serial,
            tag_secret,
            session: None,
        }
    }

    /// Step 2: answer a reader challenge. Emits `{IDS, a, m-left}`, updates
    /// the tag secret with `m-right`, and remembers `{r, a}` for step 6.
    /// A new challenge while a run is pending aborts the pending run.
    pub fn begin(&mut self, r: Word, variant: Variant, hash: &dyn HashFunction) -> TagReply {
        self.session = None;
        let ids = hash.hash_word(&self.key);
        let a = hash.hash_word(&(self.tag_secret ^ r));
        let m = compute_m(variant, self.key, r, self.serial, a, hash);
        let (m_left, m_right) = m.split_halves().expect("even protocol width");
        self.tag_secret = hash.hash_word(&xor_half(self.tag_secret, m_right));
        self.session = Some(ZhuoSession { r, a });
        TagReply { ids, a, m_left }
    }

    /// Step 6: check the server's answer against the pending run. On a
    /// match the key absorbs `n-left`; either way the run ends.
    pub fn confirm(
        &mut self,
        server_nonce: Word,
        n_right: Word,
        hash: &dyn HashFunction,
    ) -> Result<bool, ZhuoError> {
        let session = self.session.take().ok_or(ZhuoError::NoSession)?;
        let n = hash.hash_word(&(self.key ^ server_nonce ^ session.a));
        let (n_left, expected_right) = n.split_halves().expect("even protocol width");
        if expected_right == n_right {
            self.key = xor_half(self.key, n_left);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn has_session(&self) -> bool {
        self.session.is_some()
    }
}

impl ZhuoServerRecord {
    /// Fresh provisioning: both slots hold the shared key.
    pub fn provision(key: Word, serial: Word, hash: &dyn HashFunction) -> Self {
        let slot = ZhuoSlot {
            key,
            ids: hash.hash_word(&key),
        };
        Self {
            serial,
            prev: slot,
            curr: slot,
        }
    }

    /// Step 4: look the pseudonym up in both slots (current first), verify
    /// `m-left`, and on success answer with a fresh nonce while rolling the
    /// slots: the matched slot becomes `prev`, its update becomes `curr`.
    /// `None` is an authentication failure and leaves the record unchanged.
    #[allow(clippy::too_many_arguments)]
    pub fn authenticate(
        &mut self,
        r: Word,
        ids: Word,
        a: Word,
        m_left: Word,
        rng: &mut dyn crate::rng::WordRng,
        variant: Variant,
        hash: &dyn HashFunction,
    ) -> Option<ServerReply> {
        for slot in [self.curr, self.prev] {
            if slot.ids != ids {
                continue;
            }
            let m = compute_m(variant, slot.key, r, self.serial, a, hash);
            let (expected_left, _) = m.split_halves().expect("even protocol width");
            if expected_left != m_left {
                continue;
            }
            let server_nonce = rng.draw(slot.key.width());
            let n = hash.hash_word(&(slot.key ^ server_nonce ^ a));
            let (n_left, n_right) = n.split_halves().expect("even protocol width");
            let new_key = xor_half(slot.key, n_left);
            self.prev = slot;
            self.curr = ZhuoSlot {
                key: new_key,
                ids: hash.hash_word(&new_key),
            };
            return Some(ServerReply {
                server_nonce,
                n_right,
            });
        }
        None
    }
}
