//! Dense polynomials over GF(2^b) and the pieces of a syndrome decoder:
//! Berlekamp-Massey and root extraction.

use thiserror::Error;

use super::clmul::Wide;
use super::{Field, GfError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RootError {
    #[error("the zero polynomial has no finite root set")]
    ZeroPolynomial,
    #[error("locator has a zero constant term")]
    NotALocator,
    #[error("polynomial does not split into distinct linear factors")]
    NotSplit,
    #[error("exhaustive root sweep is limited to fields of at most 20 bits, got {0}")]
    SweepTooWide(u32),
}

/// Polynomial with coefficients in a binary field, lowest degree first.
///
/// The coefficient list never ends in a zero, so the zero polynomial has
/// an empty list.
#[derive(Clone, PartialEq, Eq)]
pub struct FieldPoly {
    field: Field,
    coeffs: Vec<u64>,
}

impl std::fmt::Debug for FieldPoly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FieldPoly({}, {:x?})", self.field, self.coeffs)
    }
}

fn trim(coeffs: &mut Vec<u64>) {
    while coeffs.last() == Some(&0) {
        coeffs.pop();
    }
}

impl FieldPoly {
    pub fn new(field: Field, mut coeffs: Vec<u64>) -> Result<FieldPoly, GfError> {
        if let Some(&bad) = coeffs.iter().find(|&&c| !field.contains(c)) {
            return Err(GfError::OutOfRange { bits: field.bits(), value: bad });
        }
        trim(&mut coeffs);
        Ok(FieldPoly { field, coeffs })
    }

    fn from_raw(field: Field, mut coeffs: Vec<u64>) -> FieldPoly {
        trim(&mut coeffs);
        FieldPoly { field, coeffs }
    }

    pub fn zero(field: Field) -> FieldPoly {
        FieldPoly { field, coeffs: Vec::new() }
    }

    pub fn one(field: Field) -> FieldPoly {
        FieldPoly { field, coeffs: vec![1] }
    }

    /// The monic polynomial `(x + r_1)(x + r_2)...` over the given roots.
    pub fn from_roots(field: Field, roots: &[u64]) -> FieldPoly {
        let mut coeffs = vec![1u64];
        for &r in roots {
            coeffs.push(0);
            for i in (1..coeffs.len()).rev() {
                coeffs[i] = coeffs[i - 1] ^ field.mul(coeffs[i], r);
            }
            coeffs[0] = field.mul(coeffs[0], r);
        }
        FieldPoly::from_raw(field, coeffs)
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: u64) -> u64 {
        self.coeffs.iter().rev().fold(0, |acc, &c| self.field.mul(acc, x) ^ c)
    }

    /// Coefficients in reverse order: `x^deg · p(1/x)`.
    pub fn reversed(&self) -> FieldPoly {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        FieldPoly::from_raw(self.field, coeffs)
    }

    pub fn mul(&self, other: &FieldPoly) -> FieldPoly {
        if self.is_zero() || other.is_zero() {
            return FieldPoly::zero(self.field);
        }
        let mut out = vec![0u64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] ^= self.field.mul(a, b);
            }
        }
        FieldPoly::from_raw(self.field, out)
    }
}

/// Scale so the leading coefficient is one. `p` must be nonzero.
fn make_monic(field: &Field, p: &mut [u64]) {
    let lead = *p.last().expect("nonzero polynomial");
    if lead != 1 {
        let inv = field.inv(lead).expect("nonzero leading coefficient");
        for c in p.iter_mut() {
            *c = field.mul(*c, inv);
        }
    }
}

/// `a mod m` in place for monic `m`; the result is trimmed.
fn rem_monic(field: &Field, a: &mut Vec<u64>, m: &[u64]) {
    let dm = m.len() - 1;
    if a.len() > dm {
        for k in (dm..a.len()).rev() {
            let c = a[k];
            if c != 0 {
                let base = k - dm;
                for (j, &mj) in m[..dm].iter().enumerate() {
                    a[base + j] ^= field.mul(c, mj);
                }
                a[k] = 0;
            }
        }
        a.truncate(dm);
    }
    trim(a);
}

/// Quotient of `a / m` for monic `m` (remainder discarded).
fn div_monic(field: &Field, a: &[u64], m: &[u64]) -> Vec<u64> {
    let dm = m.len() - 1;
    if a.len() <= dm {
        return Vec::new();
    }
    let mut rem = a.to_vec();
    let mut quot = vec![0u64; a.len() - dm];
    for k in (dm..rem.len()).rev() {
        let c = rem[k];
        if c != 0 {
            let base = k - dm;
            quot[base] = c;
            for (j, &mj) in m[..dm].iter().enumerate() {
                rem[base + j] ^= field.mul(c, mj);
            }
            rem[k] = 0;
        }
    }
    trim(&mut quot);
    quot
}

/// A gcd up to a scalar factor; both inputs trimmed, at least one nonzero.
fn gcd(field: &Field, a: &[u64], b: &[u64]) -> Vec<u64> {
    let (mut x, mut y) = if a.len() >= b.len() { (a.to_vec(), b.to_vec()) } else { (b.to_vec(), a.to_vec()) };
    while !y.is_empty() {
        rem_scaled(field, &mut x, &y);
        std::mem::swap(&mut x, &mut y);
    }
    x
}

/// A nonzero scalar multiple of `a mod m`, computed without inversions.
fn rem_scaled(field: &Field, a: &mut Vec<u64>, m: &[u64]) {
    let dm = m.len() - 1;
    let lead = m[dm];
    while a.len() > dm {
        let top = a.len() - 1;
        let c = a[top];
        let base = top - dm;
        if lead != 1 {
            for x in a[..top].iter_mut() {
                *x = field.mul(*x, lead);
            }
        }
        for (x, &mj) in a[base..top].iter_mut().zip(&m[..dm]) {
            *x ^= field.mul(c, mj);
        }
        a.pop();
        trim(a);
    }
}

/// `x^(2i) mod m` for `i < deg m`, as consecutive rows of length `deg m`.
fn square_table(field: &Field, m: &[u64]) -> Vec<u64> {
    let n = m.len() - 1;
    let mut rows = Vec::with_capacity(n * n);
    let mut row = vec![0u64; n];
    row[0] = 1;
    for _ in 0..n {
        rows.extend_from_slice(&row);
        for _ in 0..2 {
            // row *= x, folding x^n back with the monic modulus.
            let carry = row[n - 1];
            row.copy_within(0..n - 1, 1);
            row[0] = 0;
            if carry != 0 {
                for (r, &mj) in row.iter_mut().zip(&m[..n]) {
                    *r ^= field.mul(carry, mj);
                }
            }
        }
    }
    rows
}

/// `out = p^2 mod m` given [`square_table`] of `m`; all slices have length
/// `deg m`.
fn sqr_with_table(field: &Field, p: &[u64], squares: &[u64], acc: &mut [Wide], out: &mut [u64]) {
    let n = out.len();
    acc.fill(Wide::zero());
    // Squaring is coefficient-wise in characteristic 2.
    for (&c, row) in p.iter().zip(squares.chunks_exact(n)) {
        if c != 0 {
            let c2 = field.sqr(c);
            for (a, &r) in acc.iter_mut().zip(row) {
                a.mac(c2, r);
            }
        }
    }
    for (o, &a) in out.iter_mut().zip(acc.iter()) {
        *o = field.reduce_wide(a);
    }
}

/// Minimal connection polynomial of a syndrome sequence.
///
/// Returns the polynomial `C(x) = 1 + c_1 x + ... ` generating `syndromes`
/// (index 0 holds s_1) together with its linear complexity `L`. The degree
/// of `C` can be below `L`, which the decoder treats as a failure.
pub fn berlekamp_massey_with_length(field: Field, syndromes: &[u64]) -> (FieldPoly, usize) {
    // Inversion-free form: C <- δ_prev·C - δ·x^shift·B keeps C a scalar
    // multiple of the usual iterate, normalised once at the end.
    let mut current = vec![1u64];
    let mut previous = vec![1u64];
    let mut length = 0usize;
    let mut shift = 1usize;
    let mut prev_discrepancy = 1u64;

    for n in 0..syndromes.len() {
        let taps = length.min(current.len() - 1);
        let discrepancy = field.dot((0..=taps).map(|i| (current[i], syndromes[n - i])));
        if discrepancy == 0 {
            shift += 1;
            continue;
        }
        let needed = previous.len() + shift;
        let snapshot = if 2 * length <= n { Some(current.clone()) } else { None };
        if current.len() < needed {
            current.resize(needed, 0);
        }
        if prev_discrepancy != 1 {
            for c in current.iter_mut() {
                *c = field.mul(*c, prev_discrepancy);
            }
        }
        for (i, &b) in previous.iter().enumerate() {
            current[i + shift] ^= field.mul(discrepancy, b);
        }
        match snapshot {
            Some(old) => {
                length = n + 1 - length;
                previous = old;
                prev_discrepancy = discrepancy;
                shift = 1;
            }
            None => shift += 1,
        }
    }
    let scale = field.inv(current[0]).expect("constant term stays nonzero");
    if scale != 1 {
        for c in current.iter_mut() {
            *c = field.mul(*c, scale);
        }
    }
    (FieldPoly::from_raw(field, current), length)
}

/// Minimal connection (error-locator) polynomial of a syndrome sequence.
pub fn berlekamp_massey(field: Field, syndromes: &[u64]) -> FieldPoly {
    berlekamp_massey_with_length(field, syndromes).0
}

/// Elements whose reciprocals are the roots of an error locator
/// `C(x) = Π (1 + r·x)`, i.e. the set `{r}`.
///
/// Fails unless the locator splits into distinct linear factors; a partial
/// root set is never returned.
pub fn find_roots(locator: &FieldPoly) -> Result<Vec<u64>, RootError> {
    match locator.coeffs.first() {
        None => Err(RootError::ZeroPolynomial),
        Some(0) => Err(RootError::NotALocator),
        Some(_) => split_roots(&locator.reversed()),
    }
}

/// Same result as [`find_roots`], but candidates in `hints` are tried by
/// evaluation first and divided out, so only the remaining factor needs
/// splitting. Cheap when most roots are known in advance.
pub fn find_roots_hinted(locator: &FieldPoly, hints: &[u64]) -> Result<Vec<u64>, RootError> {
    match locator.coeffs.first() {
        None => return Err(RootError::ZeroPolynomial),
        Some(0) => return Err(RootError::NotALocator),
        Some(_) => {}
    }
    let field = locator.field;
    let mut f = locator.reversed().coeffs;
    make_monic(&field, &mut f);
    let mut found = Vec::new();
    for &h in hints {
        if f.len() <= 2 {
            break;
        }
        if f.iter().rev().fold(0, |acc, &c| field.mul(acc, h) ^ c) != 0 {
            continue;
        }
        // Synthetic division by (x + h), in place.
        let n = f.len() - 1;
        let mut carry = f[n];
        for i in (0..n).rev() {
            let next = f[i] ^ field.mul(carry, h);
            f[i] = carry;
            carry = next;
        }
        f.pop();
        found.push(h);
    }
    let mut roots = split_roots(&FieldPoly { field, coeffs: f })?;
    roots.extend(found);
    roots.sort_unstable();
    Ok(roots)
}

/// All roots of `poly` if it is a product of distinct linear factors.
///
/// Uses the Frobenius test `x^(2^b) ≡ x (mod f)` followed by recursive
/// splitting with `gcd(f, Tr(β·x) mod f)` over the polynomial basis β = x^j.
/// Roots are returned in ascending order.
pub fn split_roots(poly: &FieldPoly) -> Result<Vec<u64>, RootError> {
    let field = poly.field;
    let mut f = poly.coeffs.clone();
    if f.is_empty() {
        return Err(RootError::ZeroPolynomial);
    }
    make_monic(&field, &mut f);
    let n = f.len() - 1;
    match n {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![f[0]]),
        _ => {}
    }

    // Row i of frob is x^(2^i) mod f, for i = 0..=b. Squaring mod f is
    // linear, so each step is a product with the table of x^(2i) mod f.
    let bits = field.bits() as usize;
    let squares = square_table(&field, &f);
    let mut frob = vec![0u64; (bits + 1) * n];
    frob[1] = 1;
    let mut acc = vec![Wide::zero(); n];
    for i in 0..bits {
        let (done, rest) = frob.split_at_mut((i + 1) * n);
        sqr_with_table(&field, &done[i * n..], &squares, &mut acc, &mut rest[..n]);
    }
    if frob[bits * n + 1] != 1 || frob[bits * n..].iter().enumerate().any(|(k, &c)| k != 1 && c != 0) {
        return Err(RootError::NotSplit);
    }
    frob.truncate(bits * n);

    let mut roots = Vec::with_capacity(n);
    let mut traces = vec![None; bits];
    if !split_recursive(&field, &f, &frob, &mut traces, 0, &mut roots) {
        return Err(RootError::NotSplit);
    }
    roots.sort_unstable();
    Ok(roots)
}

/// `Tr(β·x) mod f` as a combination of the precomputed Frobenius powers,
/// stored as rows of length `deg f`.
fn trace_poly(field: &Field, beta: u64, frob: &[u64], n: usize) -> Vec<u64> {
    let mut acc = vec![Wide::zero(); n];
    let mut coef = beta;
    for power in frob.chunks_exact(n) {
        for (a, &p) in acc.iter_mut().zip(power) {
            a.mac(coef, p);
        }
        coef = field.sqr(coef);
    }
    let mut out: Vec<u64> = acc.into_iter().map(|a| field.reduce_wide(a)).collect();
    trim(&mut out);
    out
}

fn split_recursive(
    field: &Field,
    g: &[u64],
    frob: &[u64],
    traces: &mut [Option<Vec<u64>>],
    start: usize,
    roots: &mut Vec<u64>,
) -> bool {
    let n = g.len() - 1;
    if n == 1 {
        roots.push(g[0]);
        return true;
    }
    for j in start..field.bits() as usize {
        // Traces for basis element x^j, reduced modulo the full polynomial,
        // are shared by every branch of the recursion.
        let mut t = traces[j].get_or_insert_with(|| trace_poly(field, 1u64 << j, frob, frob.len() / field.bits() as usize)).clone();
        rem_monic(field, &mut t, g);
        if t.is_empty() {
            continue;
        }
        if n == 2 {
            // t = t1·x + t0 splits g exactly when t1 != 0; the roots of g
            // sum to its middle coefficient.
            if t.len() == 2 {
                let r = field.mul(t[0], field.inv(t[1]).expect("nonzero"));
                roots.extend([r, r ^ g[1]]);
                return true;
            }
            continue;
        }
        let mut h = gcd(field, g, &t);
        let dh = h.len() - 1;
        if dh == 0 || dh == n {
            continue;
        }
        make_monic(field, &mut h);
        let other = div_monic(field, g, &h);
        return split_recursive(field, &h, frob, traces, j + 1, roots)
            && split_recursive(field, &other, frob, traces, j + 1, roots);
    }
    false
}

/// Root finding by evaluating every field element; the reference for
/// [`split_roots`] on small fields.
pub fn sweep_roots(poly: &FieldPoly) -> Result<Vec<u64>, RootError> {
    let field = poly.field;
    if field.bits() > 20 {
        return Err(RootError::SweepTooWide(field.bits()));
    }
    let degree = poly.degree().ok_or(RootError::ZeroPolynomial)?;
    let roots: Vec<u64> = (0..(1u64 << field.bits())).filter(|&x| poly.eval(x) == 0).collect();
    if roots.len() == degree {
        Ok(roots)
    } else {
        Err(RootError::NotSplit)
    }
}
