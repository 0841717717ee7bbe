//! Carry-less 64x64 -> 128 bit multiplication.

#[cfg(all(target_arch = "x86_64", target_feature = "pclmulqdq"))]
#[inline(always)]
pub(crate) fn clmul(a: u64, b: u64) -> u128 {
    use core::arch::x86_64::{_mm_clmulepi64_si128, _mm_cvtsi128_si64, _mm_cvtsi64_si128, _mm_unpackhi_epi64};
    // SAFETY: the `pclmulqdq` target feature is enabled at compile time.
    unsafe {
        let product = _mm_clmulepi64_si128(_mm_cvtsi64_si128(a as i64), _mm_cvtsi64_si128(b as i64), 0);
        let lo = _mm_cvtsi128_si64(product) as u64;
        let hi = _mm_cvtsi128_si64(_mm_unpackhi_epi64(product, product)) as u64;
        ((hi as u128) << 64) | lo as u128
    }
}

/// `a·b mod (x^64 + tail)` for `deg(tail) < 32`, kept in vector registers.
#[cfg(all(target_arch = "x86_64", target_feature = "pclmulqdq"))]
#[inline(always)]
pub(crate) fn mul_mod64(a: u64, b: u64, tail: u64) -> u64 {
    use core::arch::x86_64::{_mm_clmulepi64_si128, _mm_cvtsi128_si64, _mm_cvtsi64_si128, _mm_xor_si128};
    // SAFETY: the `pclmulqdq` target feature is enabled at compile time.
    unsafe {
        let t = _mm_cvtsi64_si128(tail as i64);
        let p = _mm_clmulepi64_si128(_mm_cvtsi64_si128(a as i64), _mm_cvtsi64_si128(b as i64), 0x00);
        // high(p)·tail, then the few bits that spill past x^64 once more.
        let r1 = _mm_clmulepi64_si128(p, t, 0x01);
        let r2 = _mm_clmulepi64_si128(r1, t, 0x01);
        _mm_cvtsi128_si64(_mm_xor_si128(_mm_xor_si128(p, r1), r2)) as u64
    }
}

/// A running XOR of unreduced carry-less products.
#[cfg(all(target_arch = "x86_64", target_feature = "pclmulqdq"))]
#[derive(Clone, Copy)]
pub(crate) struct Wide(core::arch::x86_64::__m128i);

#[cfg(all(target_arch = "x86_64", target_feature = "pclmulqdq"))]
impl Wide {
    #[inline(always)]
    pub(crate) fn zero() -> Wide {
        // SAFETY: SSE2 is part of the x86_64 baseline.
        Wide(unsafe { core::arch::x86_64::_mm_setzero_si128() })
    }

    #[inline(always)]
    pub(crate) fn mac(&mut self, a: u64, b: u64) {
        use core::arch::x86_64::{_mm_clmulepi64_si128, _mm_cvtsi64_si128, _mm_xor_si128};
        // SAFETY: the `pclmulqdq` target feature is enabled at compile time.
        unsafe {
            let p = _mm_clmulepi64_si128(_mm_cvtsi64_si128(a as i64), _mm_cvtsi64_si128(b as i64), 0x00);
            self.0 = _mm_xor_si128(self.0, p);
        }
    }

    #[inline(always)]
    pub(crate) fn reduce64(self, tail: u64) -> u64 {
        use core::arch::x86_64::{_mm_clmulepi64_si128, _mm_cvtsi128_si64, _mm_cvtsi64_si128, _mm_xor_si128};
        // SAFETY: the `pclmulqdq` target feature is enabled at compile time.
        unsafe {
            let t = _mm_cvtsi64_si128(tail as i64);
            let r1 = _mm_clmulepi64_si128(self.0, t, 0x01);
            let r2 = _mm_clmulepi64_si128(r1, t, 0x01);
            _mm_cvtsi128_si64(_mm_xor_si128(_mm_xor_si128(self.0, r1), r2)) as u64
        }
    }

    #[inline(always)]
    pub(crate) fn value(self) -> u128 {
        use core::arch::x86_64::{_mm_cvtsi128_si64, _mm_unpackhi_epi64};
        // SAFETY: SSE2 is part of the x86_64 baseline.
        unsafe {
            let lo = _mm_cvtsi128_si64(self.0) as u64;
            let hi = _mm_cvtsi128_si64(_mm_unpackhi_epi64(self.0, self.0)) as u64;
            ((hi as u128) << 64) | lo as u128
        }
    }
}

#[cfg(not(all(target_arch = "x86_64", target_feature = "pclmulqdq")))]
#[derive(Clone, Copy)]
pub(crate) struct Wide(u128);

#[cfg(not(all(target_arch = "x86_64", target_feature = "pclmulqdq")))]
impl Wide {
    #[inline(always)]
    pub(crate) fn zero() -> Wide {
        Wide(0)
    }

    #[inline(always)]
    pub(crate) fn mac(&mut self, a: u64, b: u64) {
        self.0 ^= clmul_portable(a, b);
    }

    #[inline(always)]
    pub(crate) fn reduce64(self, tail: u64) -> u64 {
        let r1 = clmul_portable((self.0 >> 64) as u64, tail);
        let r2 = clmul_portable((r1 >> 64) as u64, tail);
        (self.0 ^ r1 ^ r2) as u64
    }

    #[inline(always)]
    pub(crate) fn value(self) -> u128 {
        self.0
    }
}

#[cfg(not(all(target_arch = "x86_64", target_feature = "pclmulqdq")))]
#[inline(always)]
pub(crate) fn mul_mod64(a: u64, b: u64, tail: u64) -> u64 {
    let p = clmul_portable(a, b);
    let r1 = clmul_portable((p >> 64) as u64, tail);
    let r2 = clmul_portable((r1 >> 64) as u64, tail);
    (p ^ r1 ^ r2) as u64
}

#[cfg(not(all(target_arch = "x86_64", target_feature = "pclmulqdq")))]
#[inline(always)]
pub(crate) fn clmul(a: u64, b: u64) -> u128 {
    clmul_portable(a, b)
}

#[allow(dead_code)]
#[inline]
pub(crate) fn clmul_portable(a: u64, b: u64) -> u128 {
    let (small, large) = if a.count_ones() < b.count_ones() { (a, b) } else { (b, a) };
    let large = large as u128;
    let mut bits = small;
    let mut acc = 0u128;
    while bits != 0 {
        acc ^= large << bits.trailing_zeros();
        bits &= bits - 1;
    }
    acc
}
