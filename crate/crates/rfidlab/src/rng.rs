//! Seeded, splittable randomness. Every random protocol value in an
//! experiment flows from one of these streams, so identical configurations
//! reproduce identical transcripts, independent of trial scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use crate::word::Word;

/// Source of uniform k-bit words.
pub trait WordRng {
    fn draw(&mut self, width: u16) -> Word;
}

/// One deterministic stream, derived as a pure function of the experiment
/// seed and the trial index.
pub struct TrialRng(ChaCha8Rng);

impl TrialRng {
    pub fn for_trial(seed: u64, trial: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"rfidlab.trial");
        hasher.update(seed.to_be_bytes());
        hasher.update(trial.to_be_bytes());
        Self(ChaCha8Rng::from_seed(hasher.finalize().into()))
    }
}

impl WordRng for TrialRng {
    fn draw(&mut self, width: u16) -> Word {
        assert!((1..=128).contains(&width), "draw width out of range");
        let value = (u128::from(self.0.next_u64()) << 64) | u128::from(self.0.next_u64());
        let masked = if width == 128 {
            value
        } else {
            value & ((1u128 << width) - 1)
        };
        Word::new(masked, width).expect("masked value fits")
    }
}

/// Wrapper that logs every draw, so a reference evaluator can replay the
/// exact random values a session consumed.
pub struct RecordingRng<'a> {
    inner: &'a mut dyn WordRng,
    log: Vec<Word>,
}

impl<'a> RecordingRng<'a> {
    pub fn new(inner: &'a mut dyn WordRng) -> Self {
        Self {
            inner,
            log: Vec::new(),
        }
    }

    pub fn log(&self) -> &[Word] {
        &self.log
    }
}

impl WordRng for RecordingRng<'_> {
    fn draw(&mut self, width: u16) -> Word {
        let word = self.inner.draw(width);
        self.log.push(word);
        word
    }
}
