//! Arithmetic over binary extension fields GF(2^b).
//!
//! Elements are stored as machine integers whose bit `i` is the coefficient
//! of `x^i`. Each field is described by its width `b` and the low part of a
//! monic irreducible modulus `x^b + tail`. The moduli for the widths used by
//! sketches are fixed here, and since every sketch syndrome is reduced by
//! them they are part of the sketch wire format:
//!
//! | b  | modulus                          |
//! |----|----------------------------------|
//! | 8  | x^8 + x^4 + x^3 + x + 1          |
//! | 16 | x^16 + x^5 + x^3 + x + 1         |
//! | 32 | x^32 + x^7 + x^3 + x^2 + 1       |
//! | 64 | x^64 + x^4 + x^3 + x + 1         |

pub(crate) mod clmul;
pub mod poly;

pub use poly::{
    berlekamp_massey, berlekamp_massey_with_length, find_roots, find_roots_hinted, split_roots, sweep_roots,
    FieldPoly, RootError,
};

use std::fmt;

use thiserror::Error;

/// Widths accepted for sketches and short identifiers.
pub const SUPPORTED_WIDTHS: [u32; 4] = [8, 16, 32, 64];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("unsupported field width {0} (supported: 8, 16, 32, 64)")]
    UnsupportedWidth(u32),
    #[error("invalid modulus tail {tail:#x} for a {bits}-bit field")]
    InvalidModulus { bits: u32, tail: u64 },
    #[error("value {value:#x} does not fit in a {bits}-bit field")]
    OutOfRange { bits: u32, value: u64 },
    #[error("field mismatch: {left} vs {right}")]
    FieldMismatch { left: Field, right: Field },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// A binary extension field GF(2^bits) with modulus `x^bits + tail`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Field {
    bits: u32,
    tail: u64,
}

impl Field {
    /// The standard field for one of [`SUPPORTED_WIDTHS`].
    pub fn new(bits: u32) -> Result<Field, GfError> {
        let tail = match bits {
            8 => 0x1b,
            16 => 0x2b,
            32 => 0x8d,
            64 => 0x1b,
            _ => return Err(GfError::UnsupportedWidth(bits)),
        };
        Ok(Field { bits, tail })
    }

    /// A field with a caller-chosen modulus `x^bits + tail`.
    ///
    /// Irreducibility is not checked here; products are still well defined
    /// but inverses and root finding require an irreducible modulus.
    pub fn with_modulus(bits: u32, tail: u64) -> Result<Field, GfError> {
        if !(2..=64).contains(&bits) {
            return Err(GfError::UnsupportedWidth(bits));
        }
        let field = Field { bits, tail };
        // Constant term must be set (otherwise x divides the modulus) and the
        // tail must have degree below `bits`.
        if tail & 1 == 0 || tail & !field.mask() != 0 {
            return Err(GfError::InvalidModulus { bits, tail });
        }
        Ok(field)
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Low part of the modulus (the modulus without its `x^bits` term).
    #[inline]
    pub fn modulus_tail(&self) -> u64 {
        self.tail
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    /// Number of elements, `2^bits`, as a `u128`.
    pub fn order(&self) -> u128 {
        1u128 << self.bits
    }

    #[inline]
    pub fn contains(&self, value: u64) -> bool {
        value & !self.mask() == 0
    }

    pub fn element(&self, value: u64) -> Result<FieldElement, GfError> {
        if !self.contains(value) {
            return Err(GfError::OutOfRange { bits: self.bits, value });
        }
        Ok(FieldElement { value, field: *self })
    }

    /// Reduce a carry-less product (degree < 2·bits) modulo the field polynomial.
    #[inline]
    fn reduce(&self, product: u128) -> u64 {
        let bits = self.bits;
        let mask = self.mask() as u128;
        // With deg(tail) <= bits/2 two folds always suffice, which holds for
        // every standard modulus.
        if 128 - (self.tail as u128).leading_zeros() <= bits / 2 + 1 {
            let folded = (product & mask) ^ clmul::clmul((product >> bits) as u64, self.tail);
            let high = (folded >> bits) as u64;
            return ((folded & mask) as u64) ^ (clmul::clmul(high, self.tail) as u64);
        }
        let mut rem = product;
        // Each fold lowers the degree by at least `bits - deg(tail)`.
        loop {
            let high = (rem >> bits) as u64;
            if high == 0 {
                return rem as u64;
            }
            rem = (rem & mask) ^ clmul::clmul(high, self.tail);
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        if self.bits == 64 && self.tail >> 32 == 0 {
            return clmul::mul_mod64(a, b, self.tail);
        }
        self.reduce(clmul::clmul(a, b))
    }

    #[inline]
    pub fn sqr(&self, a: u64) -> u64 {
        self.mul(a, a)
    }

    /// Reduce an accumulated sum of products.
    #[inline]
    pub(crate) fn reduce_wide(&self, wide: clmul::Wide) -> u64 {
        if self.bits == 64 && self.tail >> 32 == 0 {
            return wide.reduce64(self.tail);
        }
        self.reduce(wide.value())
    }

    /// `Σ a_i·b_i`, reduced once.
    #[inline]
    pub(crate) fn dot(&self, pairs: impl Iterator<Item = (u64, u64)>) -> u64 {
        let mut acc = clmul::Wide::zero();
        for (a, b) in pairs {
            acc.mac(a, b);
        }
        self.reduce_wide(acc)
    }

    pub fn pow(&self, base: u64, mut exp: u128) -> u64 {
        let mut result = 1u64;
        let mut base = base;
        while exp != 0 {
            if exp & 1 == 1 {
                result = self.mul(result, base);
            }
            base = self.sqr(base);
            exp >>= 1;
        }
        result
    }

    /// Multiplicative inverse `a^(2^bits - 2)`; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        if a == 0 {
            return None;
        }
        // Itoh-Tsujii: build a^(2^k - 1) for k = bits - 1 by walking the
        // binary expansion of k, then square once.
        let target = self.bits - 1;
        let mut k = 1u32;
        let mut acc = a;
        for bit in (0..31 - target.leading_zeros()).rev() {
            let mut t = acc;
            for _ in 0..k {
                t = self.sqr(t);
            }
            acc = self.mul(t, acc);
            k *= 2;
            if target >> bit & 1 == 1 {
                acc = self.mul(self.sqr(acc), a);
                k += 1;
            }
        }
        debug_assert_eq!(k, target);
        Some(self.sqr(acc))
    }

    /// Absolute trace `a + a^2 + a^4 + ... + a^(2^(bits-1))`, always 0 or 1.
    pub fn trace(&self, a: u64) -> u64 {
        let mut acc = a;
        let mut term = a;
        for _ in 1..self.bits {
            term = self.sqr(term);
            acc ^= term;
        }
        acc
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{}; tail {:#x})", self.bits, self.tail)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{})", self.bits)
    }
}

/// A value tagged with the field it belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    field: Field,
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn same_field(&self, other: &FieldElement) -> Result<(), GfError> {
        if self.field != other.field {
            return Err(GfError::FieldMismatch { left: self.field, right: other.field });
        }
        Ok(())
    }

    /// Field addition (XOR).
    pub fn add(self, rhs: FieldElement) -> Result<FieldElement, GfError> {
        self.same_field(&rhs)?;
        Ok(FieldElement { value: self.value ^ rhs.value, field: self.field })
    }

    pub fn mul(self, rhs: FieldElement) -> Result<FieldElement, GfError> {
        self.same_field(&rhs)?;
        Ok(FieldElement { value: self.field.mul(self.value, rhs.value), field: self.field })
    }

    pub fn inv(self) -> Result<FieldElement, GfError> {
        let value = self.field.inv(self.value).ok_or(GfError::ZeroInverse)?;
        Ok(FieldElement { value, field: self.field })
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}@{}", self.value, self.field)
    }
}
