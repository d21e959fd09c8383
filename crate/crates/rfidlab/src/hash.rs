//! Injectable one-way functions from words (up to 256 bits) to k-bit words.
//!
//! Both hashes consume the same canonical input encoding: two big-endian
//! width bytes followed by the word's big-endian value bytes. The default is
//! SHA-256 truncated to the protocol width; a small xor-rotate-add hash is
//! available for exhaustive work at tiny widths.

use sha2::{Digest, Sha256};

use crate::word::Word;

/// A deterministic one-way function with a fixed output width.
pub trait HashFunction: Send + Sync {
    fn output_width(&self) -> u16;
    fn hash_word(&self, input: &Word) -> Word;
}

/// Canonical hash-input encoding: width prefix plus value bytes.
pub fn hash_input_bytes(input: &Word) -> Vec<u8> {
    let mut bytes = input.width().to_be_bytes().to_vec();
    bytes.extend_from_slice(&input.to_be_bytes());
    bytes
}

/// SHA-256 truncated to the top `width` bits of the digest.
pub struct Sha256Hash {
    width: u16,
}

impl Sha256Hash {
    pub fn new(width: u16) -> Self {
        assert!((1..=128).contains(&width), "hash output width out of range");
        Self { width }
    }
}

impl HashFunction for Sha256Hash {
    fn output_width(&self) -> u16 {
        self.width
    }

    fn hash_word(&self, input: &Word) -> Word {
        let digest = Sha256::digest(hash_input_bytes(input));
        let mut first = [0u8; 16];
        first.copy_from_slice(&digest[..16]);
        let value = u128::from_be_bytes(first) >> (128 - u32::from(self.width));
        Word::new(value, self.width).expect("truncated digest fits")
    }
}

// Toy-hash constants. The absorb step xors one input byte into a 64-bit
// state and applies four xor-rotate-add rounds; the state is then
// xor-folded down to the output width.
pub(crate) const TOY_INIT: u64 = 0x6a09_e667_f3bc_c908;
pub(crate) const TOY_XOR: [u64; 4] = [
    0x9e37_79b9_7f4a_7c15,
    0xbf58_476d_1ce4_e5b9,
    0x94d0_49bb_1331_11eb,
    0x2545_f491_4f6c_dd1d,
];
pub(crate) const TOY_ROT: [u32; 4] = [7, 19, 31, 43];
pub(crate) const TOY_ADD: [u64; 4] = [
    0x1656_67b1_9e37_79f9,
    0x27d4_eb2f_1656_67c5,
    0x85eb_ca77_c2b2_ae63,
    0xc2b2_ae3d_27d4_eb4f,
];

pub(crate) fn toy_permute(mut state: u64) -> u64 {
    for i in 0..4 {
        state ^= TOY_XOR[i];
        state = state.rotate_left(TOY_ROT[i]);
        state = state.wrapping_add(TOY_ADD[i]);
    }
    state
}

pub(crate) fn toy_fold(state: u64, width: u16) -> u64 {
    let mask = if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    let folds = (64u32).div_ceil(u32::from(width)) - 1;
    let mut v = state;
    for _ in 0..folds {
        v = (v >> width) ^ (v & mask);
    }
    v & mask
}

/// A fixed 4-round xor-rotate-add permutation folded to the output width.
/// Exhaustively testable at k = 8; not meant to resist anything.
pub struct ToyHash {
    width: u16,
}

impl ToyHash {
    pub fn new(width: u16) -> Self {
        assert!(
            (1..=64).contains(&width),
            "toy hash output width out of range"
        );
        Self { width }
    }
}

impl HashFunction for ToyHash {
    fn output_width(&self) -> u16 {
        self.width
    }

    fn hash_word(&self, input: &Word) -> Word {
        let mut state = TOY_INIT;
        for byte in hash_input_bytes(input) {
            state ^= u64::from(byte);
            state = toy_permute(state);
        }
        Word::new(u128::from(toy_fold(state, self.width)), self.width).expect("folded value fits")
    }
}

/// Builds the configured hash for a protocol width.
pub fn make_hash(width: u16, toy: bool) -> Box<dyn HashFunction> {
    if toy {
        Box::new(ToyHash::new(width))
    } else {
        Box::new(Sha256Hash::new(width))
    }
}
