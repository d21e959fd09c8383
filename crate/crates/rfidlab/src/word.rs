//! Fixed-width words: the algebra every protocol quantity is built from.
//!
//! A [`Word`] is an unsigned value of an explicit bit width. XOR, OR, AND,
//! addition and subtraction reduce modulo `2^width`, rotation is circular,
//! and words can be split into high/low halves or concatenated (high word
//! first). Protocol parameters use widths of 8..=128 bits; concatenation may
//! produce hash inputs of up to [`MAX_WIDTH`] bits, and half-splitting may
//! produce words as narrow as 4 bits, so the type itself accepts any width
//! in `1..=256`.

use std::fmt;
use std::ops::{BitAnd, BitOr, BitXor};

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Upper bound on any word width; chosen so two maximum-width protocol
/// words can still be concatenated into one hash input.
pub const MAX_WIDTH: u16 = 256;

/// Smallest and largest widths allowed for a protocol parameter `k`.
pub const MIN_PROTOCOL_WIDTH: u16 = 8;
pub const MAX_PROTOCOL_WIDTH: u16 = 128;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WordError {
    #[error("word width {width} outside 1..={MAX_WIDTH}")]
    InvalidWidth { width: u16 },
    #[error("value does not fit in {width} bits")]
    ValueTooWide { width: u16 },
    #[error("operand widths differ: {left} vs {right}")]
    WidthMismatch { left: u16, right: u16 },
    #[error("cannot split a word of odd width {width}")]
    OddWidth { width: u16 },
    #[error("concatenated width {total} exceeds {MAX_WIDTH}")]
    ConcatTooWide { total: u16 },
    #[error("protocol width {width} must be even and within {MIN_PROTOCOL_WIDTH}..={MAX_PROTOCOL_WIDTH}")]
    InvalidProtocolWidth { width: u16 },
}

/// Checks a protocol parameter `k`: even (required by half-splitting) and
/// within the supported range.
pub fn validate_protocol_width(k: u16) -> Result<(), WordError> {
    if !k.is_multiple_of(2) || !(MIN_PROTOCOL_WIDTH..=MAX_PROTOCOL_WIDTH).contains(&k) {
        return Err(WordError::InvalidProtocolWidth { width: k });
    }
    Ok(())
}

/// An unsigned value of exactly `width` bits, stored in two 128-bit limbs.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word {
    hi: u128,
    lo: u128,
    width: u16,
}

fn low_mask(bits: u16) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

impl Word {
    /// Builds a word from a value that fits in 128 bits. Wider words arise
    /// only through [`Word::concat`].
    pub fn new(value: u128, width: u16) -> Result<Self, WordError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(WordError::InvalidWidth { width });
        }
        if width < 128 && value >> width != 0 {
            return Err(WordError::ValueTooWide { width });
        }
        Ok(Self {
            hi: 0,
            lo: value,
            width,
        })
    }

    /// The all-zero word of a given width.
    pub fn zero(width: u16) -> Self {
        Self::new(0, width).expect("valid width")
    }

    /// A word with only the most-significant bit set.
    pub fn msb_mask(width: u16) -> Self {
        let mut w = Self::zero(width);
        if width <= 128 {
            w.lo = 1u128 << (width - 1);
        } else {
            w.hi = 1u128 << (width - 1 - 128);
        }
        w
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    /// The value of a word no wider than 128 bits.
    pub fn as_u128(&self) -> u128 {
        debug_assert!(self.width <= 128, "word wider than 128 bits");
        self.lo
    }

    pub fn bit(&self, index: u16) -> bool {
        assert!(index < self.width, "bit index out of range");
        if index < 128 {
            self.lo >> index & 1 == 1
        } else {
            self.hi >> (index - 128) & 1 == 1
        }
    }

    fn masked(mut self) -> Self {
        if self.width <= 128 {
            self.lo &= low_mask(self.width);
            self.hi = 0;
        } else {
            self.hi &= low_mask(self.width - 128);
        }
        self
    }

    fn require_same_width(&self, rhs: &Self) {
        assert_eq!(
            self.width, rhs.width,
            "word width mismatch: {} vs {}",
            self.width, rhs.width
        );
    }

    /// Addition modulo `2^width`.
    pub fn wrapping_add(self, rhs: Self) -> Self {
        self.require_same_width(&rhs);
        let (lo, carry) = self.lo.overflowing_add(rhs.lo);
        let hi = self.hi.wrapping_add(rhs.hi).wrapping_add(carry as u128);
        Self {
            hi,
            lo,
            width: self.width,
        }
        .masked()
    }

    /// Subtraction modulo `2^width`.
    pub fn wrapping_sub(self, rhs: Self) -> Self {
        self.require_same_width(&rhs);
        let (lo, borrow) = self.lo.overflowing_sub(rhs.lo);
        let hi = self.hi.wrapping_sub(rhs.hi).wrapping_sub(borrow as u128);
        Self {
            hi,
            lo,
            width: self.width,
        }
        .masked()
    }

    // Raw 256-bit shifts; the result still carries this word's width and
    // must be masked by the caller.
    fn shl_raw(&self, n: u32) -> (u128, u128) {
        match n {
            0 => (self.hi, self.lo),
            1..=127 => ((self.hi << n) | (self.lo >> (128 - n)), self.lo << n),
            128 => (self.lo, 0),
            129..=255 => (self.lo << (n - 128), 0),
            _ => (0, 0),
        }
    }

    fn shr_raw(&self, n: u32) -> (u128, u128) {
        match n {
            0 => (self.hi, self.lo),
            1..=127 => (self.hi >> n, (self.lo >> n) | (self.hi << (128 - n))),
            128 => (0, self.hi),
            129..=255 => (0, self.hi >> (n - 128)),
            _ => (0, 0),
        }
    }

    /// Circular left rotation by `n mod width` positions.
    pub fn rotate_left(self, n: u32) -> Self {
        let width = u32::from(self.width);
        let shift = n % width;
        if shift == 0 {
            return self;
        }
        let (lh, ll) = self.shl_raw(shift);
        let (rh, rl) = self.shr_raw(width - shift);
        Self {
            hi: lh | rh,
            lo: ll | rl,
            width: self.width,
        }
        .masked()
    }

    /// Splits into (high half, low half). Requires an even width.
    pub fn split_halves(self) -> Result<(Self, Self), WordError> {
        if !self.width.is_multiple_of(2) {
            return Err(WordError::OddWidth { width: self.width });
        }
        let half = self.width / 2;
        let right = self.low_bits(half);
        let (hh, hl) = self.shr_raw(u32::from(half));
        let left = Self {
            hi: hh,
            lo: hl,
            width: half,
        }
        .masked();
        Ok((left, right))
    }

    /// Concatenation with `self` in the high-order bits.
    pub fn concat(self, rhs: Self) -> Result<Self, WordError> {
        let total = self.width + rhs.width;
        if total > MAX_WIDTH {
            return Err(WordError::ConcatTooWide { total });
        }
        let widened = Self {
            hi: self.hi,
            lo: self.lo,
            width: total,
        };
        let (sh, sl) = widened.shl_raw(u32::from(rhs.width));
        Ok(Self {
            hi: sh | rhs.hi,
            lo: sl | rhs.lo,
            width: total,
        }
        .masked())
    }

    /// Flips the most-significant bit; equal to adding `2^(width-1)` mod
    /// `2^width`, which is what the MSB-flip attack relies on.
    pub fn msb_flip(self) -> Self {
        self ^ Self::msb_mask(self.width)
    }

    /// Same value, wider word.
    pub fn zero_extend(self, width: u16) -> Self {
        assert!(
            (self.width..=MAX_WIDTH).contains(&width),
            "cannot zero-extend {} bits to {}",
            self.width,
            width
        );
        Self {
            hi: self.hi,
            lo: self.lo,
            width,
        }
    }

    /// The low `n` bits as an `n`-bit word.
    pub fn low_bits(self, n: u16) -> Self {
        assert!(n >= 1 && n <= self.width, "low_bits width out of range");
        Self {
            hi: self.hi,
            lo: self.lo,
            width: n,
        }
        .masked()
    }

    /// Big-endian bytes, `ceil(width / 8)` of them.
    pub fn to_be_bytes(&self) -> Vec<u8> {
        let nbytes = usize::from(self.width.div_ceil(8));
        let mut buf = [0u8; 32];
        buf[..16].copy_from_slice(&self.hi.to_be_bytes());
        buf[16..].copy_from_slice(&self.lo.to_be_bytes());
        buf[32 - nbytes..].to_vec()
    }

    /// Lowercase hex, `ceil(width / 4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = usize::from(self.width).div_ceil(4);
        let full = format!("{:032x}{:032x}", self.hi, self.lo);
        full[64 - digits..].to_string()
    }
}

impl BitXor for Word {
    type Output = Self;
    fn bitxor(self, rhs: Self) -> Self {
        self.require_same_width(&rhs);
        Self {
            hi: self.hi ^ rhs.hi,
            lo: self.lo ^ rhs.lo,
            width: self.width,
        }
    }
}

impl BitOr for Word {
    type Output = Self;
    fn bitor(self, rhs: Self) -> Self {
        self.require_same_width(&rhs);
        Self {
            hi: self.hi | rhs.hi,
            lo: self.lo | rhs.lo,
            width: self.width,
        }
    }
}

impl BitAnd for Word {
    type Output = Self;
    fn bitand(self, rhs: Self) -> Self {
        self.require_same_width(&rhs);
        Self {
            hi: self.hi & rhs.hi,
            lo: self.lo & rhs.lo,
            width: self.width,
        }
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word<{}>(0x{})", self.width, self.to_hex())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}/{}", self.to_hex(), self.width)
    }
}

// Reports serialize words as lowercase hex with an explicit width.
impl Serialize for Word {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("Word", 2)?;
        st.serialize_field("width", &self.width)?;
        st.serialize_field("hex", &self.to_hex())?;
        st.end()
    }
}

/// The four binary operators grouped under one checked entry point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithKind {
    Xor,
    Or,
    Add,
    Sub,
}

/// Checked binary arithmetic: rejects operand width mismatches instead of
/// coercing.
pub fn arith(kind: ArithKind, x: Word, y: Word) -> Result<Word, WordError> {
    if x.width() != y.width() {
        return Err(WordError::WidthMismatch {
            left: x.width(),
            right: y.width(),
        });
    }
    Ok(match kind {
        ArithKind::Xor => x ^ y,
        ArithKind::Or => x | y,
        ArithKind::Add => x.wrapping_add(y),
        ArithKind::Sub => x.wrapping_sub(y),
    })
}
