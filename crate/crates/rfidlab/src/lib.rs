//! Cryptanalysis workbench for two lightweight RFID protocols: a hash-based
//! mutual-authentication scheme with old/new credential slots on the server,
//! and a two-tag binding-proof scheme with a shared key-update step. Both are
//! implemented in their published form and in a hardened variant, together
//! with a scriptable man-in-the-middle adversary, the known replay / MSB-flip
//! de-synchronization attacks, a transcript-fingerprint tracker, and a seeded
//! Monte-Carlo experiment runner that measures attack success empirically.

pub mod attacks;
pub mod channel;
pub mod experiment;
pub mod hash;
pub mod oracle;
pub mod rng;
pub mod word;
pub mod yu;
pub mod zhuo;

use serde::{Deserialize, Serialize};

/// Selects between a protocol as published and its hardened fix.
///
/// For the mutual-authentication scheme the variant changes only the `m`
/// formula (XOR fold vs. concatenated hash input); for the binding-proof
/// scheme it changes the challenge formulas (rotation-based) and the
/// response formulas (randomized).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Original,
    Hardened,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Original => write!(f, "original"),
            Variant::Hardened => write!(f, "hardened"),
        }
    }
}
