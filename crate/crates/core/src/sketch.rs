//! PinSketch set checksums.
//!
//! A sketch of capacity `c` over GF(2^b) stores the odd power sums
//! `s_1, s_3, ..., s_(2c-1)` of the inserted elements. XOR of two sketches is
//! the sketch of the symmetric difference of their sets, and any set of at
//! most `c` elements is recovered exactly by syndrome decoding.

use std::fmt;

use thiserror::Error;

use crate::gf::{self, Field, GfError, RootError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SketchError {
    #[error("sketch capacity must be at least 1")]
    ZeroCapacity,
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("the zero element cannot be stored in a sketch")]
    ZeroElement,
    #[error("sketch shapes differ: {left_bits}x{left_capacity} vs {right_bits}x{right_capacity}")]
    ShapeMismatch { left_bits: u32, left_capacity: usize, right_bits: u32, right_capacity: usize },
    #[error("serialized sketch has {got} bytes, expected {expected}")]
    BadLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("set difference exceeds the sketch capacity")]
    CapacityExceeded,
    #[error("locator has no valid root set: {0}")]
    Roots(#[from] RootError),
    #[error("recovered set does not reproduce the sketch")]
    VerificationFailed,
}

/// Half-open interval `[start, end)` of the b-bit identifier space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IdRange {
    start: u128,
    end: u128,
}

impl IdRange {
    pub fn new(start: u128, end: u128) -> IdRange {
        assert!(start <= end, "empty-or-inverted range {start}..{end}");
        IdRange { start, end }
    }

    pub fn full(bits: u32) -> IdRange {
        IdRange { start: 0, end: 1u128 << bits }
    }

    /// `[0, 2^(b-1))`.
    pub fn low_half(bits: u32) -> IdRange {
        IdRange::full(bits).halves().0
    }

    /// `[2^(b-1), 2^b)`.
    pub fn high_half(bits: u32) -> IdRange {
        IdRange::full(bits).halves().1
    }

    pub fn halves(self) -> (IdRange, IdRange) {
        let mid = self.start + (self.end - self.start) / 2;
        (IdRange { start: self.start, end: mid }, IdRange { start: mid, end: self.end })
    }

    /// `2^depth` equal consecutive ranges covering the whole space: repeated
    /// bisection.
    pub fn partition(bits: u32, depth: u32) -> Vec<IdRange> {
        let mut ranges = vec![IdRange::full(bits)];
        for _ in 0..depth {
            ranges = ranges
                .into_iter()
                .flat_map(|r| {
                    let (lo, hi) = r.halves();
                    [lo, hi]
                })
                .collect();
        }
        ranges
    }

    pub fn start(&self) -> u128 {
        self.start
    }

    pub fn end(&self) -> u128 {
        self.end
    }

    #[inline]
    pub fn contains(&self, value: u64) -> bool {
        let v = value as u128;
        self.start <= v && v < self.end
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Sketch {
    field: Field,
    syndromes: Vec<u64>,
}

impl fmt::Debug for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sketch({}, cap {}, {:x?})", self.field, self.capacity(), self.syndromes)
    }
}

impl Sketch {
    /// Empty sketch over the standard field of width `bits`.
    pub fn new(bits: u32, capacity: usize) -> Result<Sketch, SketchError> {
        Sketch::with_field(Field::new(bits)?, capacity)
    }

    pub fn with_field(field: Field, capacity: usize) -> Result<Sketch, SketchError> {
        if capacity == 0 {
            return Err(SketchError::ZeroCapacity);
        }
        Ok(Sketch { field, syndromes: vec![0; capacity] })
    }

    pub fn from_elements<I>(field: Field, capacity: usize, elements: I) -> Result<Sketch, SketchError>
    where
        I: IntoIterator<Item = u64>,
    {
        let mut sketch = Sketch::with_field(field, capacity)?;
        for e in elements {
            sketch.add(e)?;
        }
        Ok(sketch)
    }

    /// Sketch of only those elements that fall inside `range`.
    pub fn subset<I>(field: Field, capacity: usize, elements: I, range: IdRange) -> Result<Sketch, SketchError>
    where
        I: IntoIterator<Item = u64>,
    {
        Sketch::from_elements(field, capacity, elements.into_iter().filter(|&e| range.contains(e)))
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn bits(&self) -> u32 {
        self.field.bits()
    }

    pub fn capacity(&self) -> usize {
        self.syndromes.len()
    }

    /// Odd power sums `s_1, s_3, ...` in ascending order.
    pub fn syndromes(&self) -> &[u64] {
        &self.syndromes
    }

    pub fn is_empty(&self) -> bool {
        self.syndromes.iter().all(|&s| s == 0)
    }

    /// Toggle `element` in the underlying set.
    pub fn add(&mut self, element: u64) -> Result<(), SketchError> {
        if element == 0 {
            return Err(SketchError::ZeroElement);
        }
        if !self.field.contains(element) {
            return Err(GfError::OutOfRange { bits: self.bits(), value: element }.into());
        }
        let field = self.field;
        let square = field.sqr(element);
        let mut power = element;
        for s in self.syndromes.iter_mut() {
            *s ^= power;
            power = field.mul(power, square);
        }
        Ok(())
    }

    fn check_shape(&self, other: &Sketch) -> Result<(), SketchError> {
        if self.field != other.field || self.capacity() != other.capacity() {
            return Err(SketchError::ShapeMismatch {
                left_bits: self.bits(),
                left_capacity: self.capacity(),
                right_bits: other.bits(),
                right_capacity: other.capacity(),
            });
        }
        Ok(())
    }

    /// XOR `other` into `self`: the result sketches the symmetric difference.
    pub fn merge(&mut self, other: &Sketch) -> Result<(), SketchError> {
        self.check_shape(other)?;
        for (a, b) in self.syndromes.iter_mut().zip(&other.syndromes) {
            *a ^= b;
        }
        Ok(())
    }

    pub fn merged(&self, other: &Sketch) -> Result<Sketch, SketchError> {
        let mut out = self.clone();
        out.merge(other)?;
        Ok(out)
    }

    /// Recover the underlying set, in ascending order.
    ///
    /// A successful result always re-sketches to `self`.
    pub fn decode(&self) -> Result<Vec<u64>, DecodeError> {
        self.decode_hinted(&[])
    }

    /// [`decode`](Self::decode) for a caller that expects some of the
    /// elements to come from `hints` (for instance its own half of a merged
    /// sketch). The result does not depend on the hints, only the speed.
    pub fn decode_hinted(&self, hints: &[u64]) -> Result<Vec<u64>, DecodeError> {
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let field = self.field;
        let capacity = self.capacity();
        // Full sequence s_1..s_2c, with s_2k = s_k^2.
        let mut full = vec![0u64; 2 * capacity];
        for (i, &s) in self.syndromes.iter().enumerate() {
            full[2 * i] = s;
        }
        for k in (2..=2 * capacity).step_by(2) {
            full[k - 1] = field.sqr(full[k / 2 - 1]);
        }
        let (locator, length) = gf::berlekamp_massey_with_length(field, &full);
        if length > capacity || locator.degree() != Some(length) {
            return Err(DecodeError::CapacityExceeded);
        }
        let elements = gf::find_roots_hinted(&locator, hints)?;
        if elements.contains(&0) {
            return Err(DecodeError::VerificationFailed);
        }
        let check = Sketch::from_elements(field, capacity, elements.iter().copied())
            .map_err(|_| DecodeError::VerificationFailed)?;
        if check.syndromes != self.syndromes {
            return Err(DecodeError::VerificationFailed);
        }
        Ok(elements)
    }

    /// `ceil(bits * capacity / 8)`.
    pub fn serialized_len(bits: u32, capacity: usize) -> usize {
        (bits as usize * capacity).div_ceil(8)
    }

    /// Odd syndromes in ascending order, each as a little-endian `b`-bit
    /// integer, packed back to back.
    pub fn to_bytes(&self) -> Vec<u8> {
        let bits = self.bits() as usize;
        let mut out = vec![0u8; Sketch::serialized_len(self.bits(), self.capacity())];
        if bits % 8 == 0 {
            let width = bits / 8;
            for (chunk, s) in out.chunks_exact_mut(width).zip(&self.syndromes) {
                chunk.copy_from_slice(&s.to_le_bytes()[..width]);
            }
            return out;
        }
        let mut pos = 0usize;
        for &s in &self.syndromes {
            for i in 0..bits {
                if (s >> i) & 1 == 1 {
                    out[pos / 8] |= 1 << (pos % 8);
                }
                pos += 1;
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], bits: u32, capacity: usize) -> Result<Sketch, SketchError> {
        Sketch::from_bytes_in(bytes, Field::new(bits)?, capacity)
    }

    pub fn from_bytes_in(bytes: &[u8], field: Field, capacity: usize) -> Result<Sketch, SketchError> {
        let mut sketch = Sketch::with_field(field, capacity)?;
        let expected = Sketch::serialized_len(field.bits(), capacity);
        if bytes.len() != expected {
            return Err(SketchError::BadLength { expected, got: bytes.len() });
        }
        let bits = field.bits() as usize;
        if bits % 8 == 0 {
            let width = bits / 8;
            for (chunk, s) in bytes.chunks_exact(width).zip(sketch.syndromes.iter_mut()) {
                let mut word = [0u8; 8];
                word[..width].copy_from_slice(chunk);
                *s = u64::from_le_bytes(word);
            }
        } else {
            let mut pos = 0usize;
            for s in sketch.syndromes.iter_mut() {
                for i in 0..bits {
                    if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                        *s |= 1 << i;
                    }
                    pos += 1;
                }
            }
            // Padding bits in the final byte must be clear.
            if pos % 8 != 0 && bytes[pos / 8] >> (pos % 8) != 0 {
                return Err(GfError::OutOfRange { bits: field.bits(), value: bytes[pos / 8] as u64 }.into());
            }
        }
        Ok(sketch)
    }
}
