//! Effective (phase-free) Pauli algebra, stabilizer codes, syndromes and
//! logical classes.
//!
//! Pauli strings use the symplectic encoding: qubit `i` carries a pair of
//! bits `(x_i, z_i)` with `X = (1,0)`, `Z = (0,1)` and `Y = (1,1)`.
//! Multiplication is component-wise XOR and two strings commute iff
//! `a.x·b.z + a.z·b.x = 0 (mod 2)`. Phases are never tracked.
//!
//! Qubits are indexed from 0 in the API; in text form the leftmost letter is
//! the first qubit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::Bits;
use crate::error::{check_dim, Error, Result};

/// Largest code size accepted by the exhaustive `4^n` enumerations.
pub const MAX_ENUMERATION_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    pub const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    /// `I = 0, X = 1, Y = 2, Z = 3`; used to index per-qubit rate arrays.
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Pauli {
        Pauli::ALL[i & 3]
    }

    #[inline]
    pub fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    #[inline]
    pub fn x_bit(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    #[inline]
    pub fn z_bit(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }

    #[inline]
    pub fn mul(self, other: Pauli) -> Pauli {
        Pauli::from_bits(self.x_bit() ^ other.x_bit(), self.z_bit() ^ other.z_bit())
    }

    #[inline]
    pub fn commutes(self, other: Pauli) -> bool {
        (self.x_bit() & other.z_bit()) == (self.z_bit() & other.x_bit())
    }

    pub fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_letter(c: char) -> Result<Pauli> {
        match c {
            'I' | 'i' | '_' => Ok(Pauli::I),
            'X' | 'x' => Ok(Pauli::X),
            'Y' | 'y' => Ok(Pauli::Y),
            'Z' | 'z' => Ok(Pauli::Z),
            other => Err(Error::invalid(format!("bad Pauli letter {other:?}"))),
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Which non-trivial single-qubit errors are in play. Perfectness and the
/// weight-distribution machinery are defined relative to an alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    /// X, Y and Z on every qubit.
    Pauli,
    /// X only (classical bit flips).
    BitFlip,
}

impl Alphabet {
    pub fn non_identity(self) -> &'static [Pauli] {
        match self {
            Alphabet::Pauli => &Pauli::NON_IDENTITY,
            Alphabet::BitFlip => &[Pauli::X],
        }
    }

    /// Including the identity, in index order.
    pub fn letters(self) -> &'static [Pauli] {
        match self {
            Alphabet::Pauli => &Pauli::ALL,
            Alphabet::BitFlip => &[Pauli::I, Pauli::X],
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    x: Bits,
    z: Bits,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString { x: Bits::zeros(n), z: Bits::zeros(n) }
    }

    /// `p` acting on qubit `qubit`, identity elsewhere.
    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut out = PauliString::identity(n);
        out.set(qubit, p);
        out
    }

    pub fn from_paulis(paulis: &[Pauli]) -> Self {
        let mut out = PauliString::identity(paulis.len());
        for (i, &p) in paulis.iter().enumerate() {
            out.set(i, p);
        }
        out
    }

    pub fn from_bits(x: Bits, z: Bits) -> Result<Self> {
        check_dim(x.len(), z.len())?;
        Ok(PauliString { x, z })
    }

    /// Packed form for `n <= 64`: bit `i` of each word is qubit `i`.
    pub fn from_packed(n: usize, x: u64, z: u64) -> Self {
        PauliString { x: Bits::from_u64(n, x), z: Bits::from_u64(n, z) }
    }

    pub fn packed(&self) -> Option<(u64, u64)> {
        Some((self.x.to_u64()?, self.z.to_u64()?))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x_bits(&self) -> &Bits {
        &self.x
    }

    pub fn z_bits(&self) -> &Bits {
        &self.z
    }

    #[inline]
    pub fn get(&self, qubit: usize) -> Pauli {
        Pauli::from_bits(self.x.get(qubit), self.z.get(qubit))
    }

    #[inline]
    pub fn set(&mut self, qubit: usize, p: Pauli) {
        self.x.set(qubit, p.x_bit());
        self.z.set(qubit, p.z_bit());
    }

    pub fn paulis(&self) -> impl Iterator<Item = Pauli> + '_ {
        (0..self.n()).map(|i| self.get(i))
    }

    pub fn weight(&self) -> usize {
        self.x
            .words()
            .iter()
            .zip(self.z.words())
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    pub fn mul_assign(&mut self, other: &PauliString) {
        self.x.xor_assign(&other.x);
        self.z.xor_assign(&other.z);
    }

    pub fn mul(&self, other: &PauliString) -> Result<PauliString> {
        check_dim(self.n(), other.n())?;
        let mut out = self.clone();
        out.mul_assign(other);
        Ok(out)
    }

    /// Symplectic commutation test without the length check.
    #[inline]
    pub fn commutes_unchecked(&self, other: &PauliString) -> bool {
        self.x.and_parity(&other.z) == self.z.and_parity(&other.x)
    }

    /// Restriction to the qubits in `range`.
    pub fn slice(&self, start: usize, len: usize) -> PauliString {
        PauliString { x: self.x.slice(start, len), z: self.z.slice(start, len) }
    }
}

/// True iff `a` and `b` commute (symplectic product zero).
pub fn commutes(a: &PauliString, b: &PauliString) -> Result<bool> {
    check_dim(a.n(), b.n())?;
    Ok(a.commutes_unchecked(b))
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.paulis() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let paulis = s.trim().chars().map(Pauli::from_letter).collect::<Result<Vec<_>>>()?;
        Ok(PauliString::from_paulis(&paulis))
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Measured syndrome bits; bit `i` belongs to generator `i`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Syndrome(Bits);

impl Syndrome {
    pub fn zeros(l: usize) -> Self {
        Syndrome(Bits::zeros(l))
    }

    pub fn from_bits(bits: Bits) -> Self {
        Syndrome(bits)
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Syndrome(Bits::from_bools(bits))
    }

    /// Bit `i` of the syndrome is bit `i` of `index`.
    pub fn from_index(l: usize, index: u64) -> Self {
        Syndrome(Bits::from_u64(l, index))
    }

    pub fn index(&self) -> Option<u64> {
        self.0.to_u64()
    }

    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn bits_mut(&mut self) -> &mut Bits {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0.get(i)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn xor(&self, other: &Syndrome) -> Result<Syndrome> {
        check_dim(self.len(), other.len())?;
        Ok(Syndrome(self.0.xor(&other.0)))
    }

    pub fn weight(&self) -> usize {
        self.0.count_ones()
    }
}

impl fmt::Display for Syndrome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for Syndrome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Syndrome({})", self.0)
    }
}

impl FromStr for Syndrome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Syndrome(s.parse()?))
    }
}

impl Serialize for Syndrome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Syndrome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Element of `P_1^k`: the action of an error on the encoded qubits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LogicalClass(PauliString);

impl LogicalClass {
    pub fn trivial(k: usize) -> Self {
        LogicalClass(PauliString::identity(k))
    }

    pub fn from_pauli(p: Pauli) -> Self {
        LogicalClass(PauliString::from_paulis(&[p]))
    }

    pub fn as_string(&self) -> &PauliString {
        &self.0
    }

    /// The single logical Pauli of a `k = 1` code.
    pub fn as_single(&self) -> Option<Pauli> {
        (self.0.n() == 1).then(|| self.0.get(0))
    }

    pub fn is_trivial(&self) -> bool {
        self.0.is_identity()
    }

    pub fn mul(&self, other: &LogicalClass) -> Result<LogicalClass> {
        Ok(LogicalClass(self.0.mul(&other.0)?))
    }
}

impl fmt::Display for LogicalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// On-disk code description: `{"n":5,"generators":[...],"logicals":[["X..","Z.."]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeFile {
    pub n: usize,
    pub generators: Vec<PauliString>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub logicals: Vec<(PauliString, PauliString)>,
}

#[derive(Debug, Clone)]
pub struct StabilizerCode {
    n: usize,
    generators: Vec<PauliString>,
    logicals: Vec<(PauliString, PauliString)>,
    // (x, z) masks when n <= 64, for the packed syndrome fast path
    packed: Option<Vec<(u64, u64)>>,
    perfect: bool,
}

impl StabilizerCode {
    /// Validates commutation of the generators, their independence, and the
    /// symplectic structure of the logical operators when given.
    pub fn new(
        n: usize,
        generators: Vec<PauliString>,
        logicals: Vec<(PauliString, PauliString)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("code needs at least one qubit"));
        }
        for g in &generators {
            check_dim(n, g.n())?;
        }
        for (a, b) in &logicals {
            check_dim(n, a.n())?;
            check_dim(n, b.n())?;
        }
        for (i, a) in generators.iter().enumerate() {
            for (j, b) in generators.iter().enumerate().skip(i + 1) {
                if !a.commutes_unchecked(b) {
                    return Err(Error::invalid(format!("generators {i} and {j} anti-commute")));
                }
            }
        }
        if f2_rank(&generators) != generators.len() {
            return Err(Error::invalid("generators are not independent"));
        }
        if !logicals.is_empty() && logicals.len() != n - generators.len() {
            return Err(Error::invalid(format!(
                "expected {} logical pairs, got {}",
                n - generators.len(),
                logicals.len()
            )));
        }
        for (j, (xl, zl)) in logicals.iter().enumerate() {
            for (i, g) in generators.iter().enumerate() {
                if !g.commutes_unchecked(xl) || !g.commutes_unchecked(zl) {
                    return Err(Error::invalid(format!(
                        "logical pair {j} anti-commutes with generator {i}"
                    )));
                }
            }
            if xl.commutes_unchecked(zl) {
                return Err(Error::invalid(format!("logical pair {j}: X_L and Z_L commute")));
            }
            for (k, (xk, zk)) in logicals.iter().enumerate().skip(j + 1) {
                let ok = xl.commutes_unchecked(xk)
                    && xl.commutes_unchecked(zk)
                    && zl.commutes_unchecked(xk)
                    && zl.commutes_unchecked(zk);
                if !ok {
                    return Err(Error::invalid(format!("logical pairs {j} and {k} interact")));
                }
            }
        }
        let packed = (n <= 64 && generators.len() <= 64).then(|| {
            generators.iter().map(|g| g.packed().expect("n <= 64")).collect()
        });
        let mut code = StabilizerCode { n, generators, logicals, packed, perfect: false };
        code.perfect = code.is_perfect_for(Alphabet::Pauli);
        Ok(code)
    }

    pub fn from_file(file: CodeFile) -> Result<Self> {
        StabilizerCode::new(file.n, file.generators, file.logicals)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        StabilizerCode::from_file(serde_json::from_str(text)?)
    }

    pub fn to_file(&self) -> CodeFile {
        CodeFile { n: self.n, generators: self.generators.clone(), logicals: self.logicals.clone() }
    }

    /// Keeps only the listed generators; logical operators are dropped since
    /// they no longer form a complete set.
    pub fn with_generators(&self, indices: &[usize]) -> Result<Self> {
        let gens = indices
            .iter()
            .map(|&i| {
                self.generators
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("no generator {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        StabilizerCode::new(self.n, gens, Vec::new())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of generators.
    #[inline]
    pub fn l(&self) -> usize {
        self.generators.len()
    }

    /// Number of encoded qubits.
    pub fn k(&self) -> usize {
        self.n - self.l()
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn logicals(&self) -> &[(PauliString, PauliString)] {
        &self.logicals
    }

    /// Perfect single-error-correcting for the full Pauli alphabet, checked
    /// by enumeration of single-qubit errors at construction.
    pub fn is_perfect(&self) -> bool {
        self.perfect
    }

    /// Non-trivial single errors from `alphabet` map bijectively onto the
    /// non-zero syndromes.
    pub fn is_perfect_for(&self, alphabet: Alphabet) -> bool {
        let l = self.l();
        if l >= 64 {
            return false;
        }
        let singles = self.n * alphabet.non_identity().len();
        if singles as u64 != (1u64 << l) - 1 {
            return false;
        }
        let mut seen = std::collections::HashSet::new();
        for q in 0..self.n {
            for &p in alphabet.non_identity() {
                let s = self.syndrome_unchecked(&PauliString::single(self.n, q, p));
                if s.is_zero() || !seen.insert(s) {
                    return false;
                }
            }
        }
        true
    }

    pub fn syndrome(&self, e: &PauliString) -> Result<Syndrome> {
        check_dim(self.n, e.n())?;
        Ok(self.syndrome_unchecked(e))
    }

    pub fn syndrome_unchecked(&self, e: &PauliString) -> Syndrome {
        let mut s = Bits::zeros(self.l());
        for (i, g) in self.generators.iter().enumerate() {
            if !g.commutes_unchecked(e) {
                s.set(i, true);
            }
        }
        Syndrome(s)
    }

    /// Syndrome of a packed error as an integer (bit `i` = generator `i`).
    /// Requires `n <= 64` and `l <= 64`.
    #[inline]
    pub fn syndrome_packed(&self, x: u64, z: u64) -> u64 {
        let masks = self.packed.as_ref().expect("packed syndrome needs n, l <= 64");
        let mut s = 0u64;
        for (i, &(gx, gz)) in masks.iter().enumerate() {
            let parity = ((gx & z).count_ones() ^ (gz & x).count_ones()) & 1;
            s |= (parity as u64) << i;
        }
        s
    }

    pub fn supports_packed(&self) -> bool {
        self.packed.is_some()
    }

    /// Commutation pattern with the logical operators. For each pair `j`
    /// the class carries `X` when `e` anti-commutes with `Z_L`, and `Z` when
    /// it anti-commutes with `X_L`. Canonical syndrome representatives are
    /// taken from the subspace commuting with every logical, so this pattern
    /// is exactly the coset of `e` relative to that representative.
    pub fn logical_class(&self, e: &PauliString) -> Result<LogicalClass> {
        if self.logicals.is_empty() {
            return Err(Error::Unsupported("code has no logical operators".into()));
        }
        check_dim(self.n, e.n())?;
        Ok(self.logical_class_unchecked(e))
    }

    pub fn logical_class_unchecked(&self, e: &PauliString) -> LogicalClass {
        let paulis: Vec<Pauli> = self
            .logicals
            .iter()
            .map(|(xl, zl)| Pauli::from_bits(!e.commutes_unchecked(zl), !e.commutes_unchecked(xl)))
            .collect();
        LogicalClass(PauliString::from_paulis(&paulis))
    }

    /// The unique weight-one error with syndrome `s` on a perfect code.
    pub fn syndrome_inverse(&self, s: &Syndrome) -> Result<PauliString> {
        self.syndrome_inverse_for(Alphabet::Pauli, s)
    }

    pub fn syndrome_inverse_for(&self, alphabet: Alphabet, s: &Syndrome) -> Result<PauliString> {
        check_dim(self.l(), s.len())?;
        if !self.is_perfect_for(alphabet) {
            return Err(Error::Unsupported(format!(
                "code is not perfect for the {alphabet:?} alphabet"
            )));
        }
        if s.is_zero() {
            return Err(Error::invalid("the zero syndrome has no single-error preimage"));
        }
        for q in 0..self.n {
            for &p in alphabet.non_identity() {
                let e = PauliString::single(self.n, q, p);
                if &self.syndrome_unchecked(&e) == s {
                    return Ok(e);
                }
            }
        }
        Err(Error::Internal("perfect code missing a syndrome preimage".into()))
    }

    /// All errors with syndrome `s`, in packed enumeration order.
    pub fn enumerate_coset(&self, s: &Syndrome) -> Result<Vec<PauliString>> {
        check_dim(self.l(), s.len())?;
        check_enumeration_budget(self.n)?;
        let target = s.index().expect("l <= n <= 12");
        let mut out = Vec::with_capacity(1usize << (2 * self.n - self.l()));
        for_each_packed(self.n, |x, z| {
            if self.syndrome_packed(x, z) == target {
                out.push(PauliString::from_packed(self.n, x, z));
            }
        });
        Ok(out)
    }
}

pub(crate) fn check_enumeration_budget(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_QUBITS {
        return Err(Error::Budget {
            required: 1u128 << (2 * n.min(63)),
            limit: 1u128 << (2 * MAX_ENUMERATION_QUBITS),
        });
    }
    Ok(())
}

/// Visits all `4^n` packed Pauli strings `(x, z)`.
pub(crate) fn for_each_packed(n: usize, mut f: impl FnMut(u64, u64)) {
    let limit = 1u64 << n;
    for x in 0..limit {
        for z in 0..limit {
            f(x, z);
        }
    }
}

/// Rank over F2 of the symplectic vectors `(x | z)`.
pub(crate) fn f2_rank(strings: &[PauliString]) -> usize {
    let mut rows: Vec<Vec<u64>> = strings
        .iter()
        .map(|s| s.x_bits().words().iter().chain(s.z_bits().words()).copied().collect())
        .collect();
    let width = rows.first().map_or(0, |r| r.len() * 64);
    let mut rank = 0;
    for col in 0..width {
        let (w, b) = (col / 64, col % 64);
        let Some(pivot) = (rank..rows.len()).find(|&r| (rows[r][w] >> b) & 1 == 1) else {
            continue;
        };
        rows.swap(rank, pivot);
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && (row[w] >> b) & 1 == 1 {
                for (a, p) in row.iter_mut().zip(&pivot_row) {
                    *a ^= p;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::five_qubit_code;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    // 2x2 complex matrices as [[re, im]; 4] in row-major order.
    type M2 = [[f64; 2]; 4];

    fn matrix(p: Pauli) -> M2 {
        match p {
            Pauli::I => [[1., 0.], [0., 0.], [0., 0.], [1., 0.]],
            Pauli::X => [[0., 0.], [1., 0.], [1., 0.], [0., 0.]],
            Pauli::Y => [[0., 0.], [0., -1.], [0., 1.], [0., 0.]],
            Pauli::Z => [[1., 0.], [0., 0.], [0., 0.], [-1., 0.]],
        }
    }

    fn kron(a: &[[f64; 2]], da: usize, b: &[[f64; 2]], db: usize) -> Vec<[f64; 2]> {
        let d = da * db;
        let mut out = vec![[0.0; 2]; d * d];
        for i in 0..da {
            for j in 0..da {
                for k in 0..db {
                    for l in 0..db {
                        let (x, y) = (a[i * da + j], b[k * db + l]);
                        out[(i * db + k) * d + j * db + l] =
                            [x[0] * y[0] - x[1] * y[1], x[0] * y[1] + x[1] * y[0]];
                    }
                }
            }
        }
        out
    }

    fn dense(s: &PauliString) -> Vec<[f64; 2]> {
        let mut m = vec![[1.0, 0.0]];
        let mut d = 1;
        for p in s.paulis() {
            m = kron(&m, d, &matrix(p), 2);
            d *= 2;
        }
        m
    }

    fn matmul(a: &[[f64; 2]], b: &[[f64; 2]], d: usize) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = [0.0, 0.0];
                for k in 0..d {
                    let (x, y) = (a[i * d + k], b[k * d + j]);
                    acc[0] += x[0] * y[0] - x[1] * y[1];
                    acc[1] += x[0] * y[1] + x[1] * y[0];
                }
                out[i * d + j] = acc;
            }
        }
        out
    }

    fn matrix_commutes(a: &PauliString, b: &PauliString) -> bool {
        let d = 1 << a.n();
        let (ma, mb) = (dense(a), dense(b));
        let ab = matmul(&ma, &mb, d);
        let ba = matmul(&mb, &ma, d);
        ab.iter().zip(&ba).all(|(x, y)| (x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12)
    }

    #[test]
    fn commutation_examples() {
        assert!(commutes(&ps("XI"), &ps("XI")).unwrap());
        assert!(!commutes(&ps("XI"), &ps("ZI")).unwrap());
        assert!(commutes(&ps("XZ"), &ps("ZX")).unwrap());
        assert!(matrix_commutes(&ps("XZ"), &ps("ZX")));
        assert!(matches!(commutes(&ps("X"), &ps("XX")), Err(Error::Dimension { .. })));
    }

    #[test]
    fn symplectic_matches_matrix_products_exhaustively() {
        for n in 1..=2usize {
            let all: Vec<PauliString> = (0..1u64 << n)
                .flat_map(|x| (0..1u64 << n).map(move |z| PauliString::from_packed(n, x, z)))
                .collect();
            for a in &all {
                for b in &all {
                    assert_eq!(a.commutes_unchecked(b), matrix_commutes(a, b), "{a} {b}");
                    assert_eq!(a.commutes_unchecked(b), b.commutes_unchecked(a));
                    for c in &all {
                        // bilinearity in the first argument
                        let ab = a.mul(b).unwrap();
                        let lhs = !ab.commutes_unchecked(c);
                        let rhs = (!a.commutes_unchecked(c)) ^ (!b.commutes_unchecked(c));
                        assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn pauli_multiplication_table() {
        assert_eq!(Pauli::X.mul(Pauli::Z), Pauli::Y);
        assert_eq!(Pauli::Z.mul(Pauli::X), Pauli::Y);
        for p in Pauli::ALL {
            assert_eq!(p.mul(Pauli::I), p);
            assert_eq!(p.mul(p), Pauli::I);
        }
    }

    #[test]
    fn five_qubit_syndromes() {
        let code = five_qubit_code();
        assert_eq!(code.syndrome(&ps("XXXII")).unwrap().to_string(), "0101");
        assert_eq!(code.syndrome(&ps("XIZZI")).unwrap().to_string(), "1010");
        assert!(code.syndrome(&ps("IIIII")).unwrap().is_zero());
        assert!(code.syndrome(&ps("XX")).is_err());
    }

    #[test]
    fn syndrome_is_linear_exhaustive() {
        let code = five_qubit_code();
        let n = code.n();
        // all pairs would be 2^20 products; fix f over a spanning set
        let basis: Vec<(u64, u64)> =
            (0..n).flat_map(|q| [(1u64 << q, 0u64), (0u64, 1u64 << q)]).collect();
        for_each_packed(n, |x, z| {
            let se = code.syndrome_packed(x, z);
            for &(bx, bz) in &basis {
                let sf = code.syndrome_packed(bx, bz);
                assert_eq!(code.syndrome_packed(x ^ bx, z ^ bz), se ^ sf);
            }
        });
    }

    #[test]
    fn weight_one_syndromes_are_bijective() {
        let code = five_qubit_code();
        let mut seen = std::collections::HashSet::new();
        seen.insert(0u64);
        for q in 0..5 {
            for p in Pauli::NON_IDENTITY {
                let (x, z) = PauliString::single(5, q, p).packed().unwrap();
                assert!(seen.insert(code.syndrome_packed(x, z)));
            }
        }
        assert_eq!(seen.len(), 16);
        assert!(code.is_perfect());
    }

    #[test]
    fn syndrome_inverse_examples() {
        let code = five_qubit_code();
        let e = code.syndrome_inverse(&"1100".parse().unwrap()).unwrap();
        assert_eq!(e, PauliString::single(5, 2, Pauli::X));
        let e = code.syndrome_inverse(&"0011".parse().unwrap()).unwrap();
        assert_eq!(e, PauliString::single(5, 4, Pauli::X));
        assert!(matches!(code.syndrome_inverse(&Syndrome::zeros(4)), Err(Error::Invalid(_))));
        let mut singles = std::collections::HashSet::new();
        for s in 1..16 {
            let e = code.syndrome_inverse(&Syndrome::from_index(4, s)).unwrap();
            assert_eq!(e.weight(), 1);
            assert!(singles.insert(e));
        }
        let rep = crate::codes::repetition_code(3).unwrap();
        assert!(matches!(
            rep.syndrome_inverse(&"10".parse().unwrap()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn logical_classes() {
        let code = five_qubit_code();
        for g in code.generators() {
            assert!(code.logical_class(g).unwrap().is_trivial());
        }
        let (xl, zl) = code.logicals()[0].clone();
        assert_eq!(code.logical_class(&xl).unwrap().as_single(), Some(Pauli::X));
        assert_eq!(code.logical_class(&zl).unwrap().as_single(), Some(Pauli::Z));
        let g1x = code.generators()[0].mul(&xl).unwrap();
        assert_eq!(code.logical_class(&g1x).unwrap().as_single(), Some(Pauli::X));
        let bare = code.with_generators(&[0, 1]).unwrap();
        assert!(matches!(bare.logical_class(&xl), Err(Error::Unsupported(_))));
    }

    #[test]
    fn logical_class_matches_coset_table() {
        // Oracle: build the stabilizer group, then group all 4^5 errors into
        // cosets of <S, canonical representatives>; the class must be constant
        // on stabilizer cosets and distinguish the four logical cosets.
        let code = five_qubit_code();
        let n = code.n();
        let gens: Vec<(u64, u64)> =
            code.generators().iter().map(|g| g.packed().unwrap()).collect();
        let mut group = Vec::new();
        for mask in 0..16u32 {
            let (mut x, mut z) = (0u64, 0u64);
            for (i, &(gx, gz)) in gens.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    x ^= gx;
                    z ^= gz;
                }
            }
            group.push((x, z));
        }
        let (xl, zl) = code.logicals()[0].clone();
        let (lxx, lxz) = xl.packed().unwrap();
        let (lzx, lzz) = zl.packed().unwrap();
        for_each_packed(n, |x, z| {
            let e = PauliString::from_packed(n, x, z);
            let class = code.logical_class(&e).unwrap();
            for &(sx, sz) in &group {
                let f = PauliString::from_packed(n, x ^ sx, z ^ sz);
                assert_eq!(code.logical_class(&f).unwrap(), class);
            }
            // multiplying by X_L (or Z_L) moves to a different class
            let ex = PauliString::from_packed(n, x ^ lxx, z ^ lxz);
            let ez = PauliString::from_packed(n, x ^ lzx, z ^ lzz);
            let cx = code.logical_class(&ex).unwrap();
            let cz = code.logical_class(&ez).unwrap();
            assert_eq!(cx, class.mul(&LogicalClass::from_pauli(Pauli::X)).unwrap());
            assert_eq!(cz, class.mul(&LogicalClass::from_pauli(Pauli::Z)).unwrap());
        });
    }

    #[test]
    fn coset_enumeration_partitions() {
        let code = five_qubit_code();
        let mut total = std::collections::HashSet::new();
        for s in 0..16 {
            let syn = Syndrome::from_index(4, s);
            let coset = code.enumerate_coset(&syn).unwrap();
            assert_eq!(coset.len(), 64);
            if s == 0 {
                assert!(coset.contains(&PauliString::identity(5)));
            }
            for e in coset {
                assert_eq!(code.syndrome(&e).unwrap(), syn);
                assert!(total.insert(e));
            }
        }
        assert_eq!(total.len(), 1024);
    }

    #[test]
    fn coset_enumeration_budget() {
        let n = 13;
        let code = StabilizerCode::new(n, vec![PauliString::single(n, 0, Pauli::Z)], vec![])
            .unwrap();
        assert!(matches!(
            code.enumerate_coset(&Syndrome::zeros(1)),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_codes() {
        let bad = StabilizerCode::new(2, vec![ps("XI"), ps("ZI")], vec![]);
        assert!(matches!(bad, Err(Error::Invalid(_))));
        let dependent = StabilizerCode::new(2, vec![ps("ZZ"), ps("ZZ")], vec![]);
        assert!(dependent.is_err());
        let bad_logical = StabilizerCode::new(2, vec![ps("ZZ")], vec![(ps("XI"), ps("ZI"))]);
        assert!(bad_logical.is_err());
    }

    #[test]
    fn code_file_roundtrip() {
        let text = r#"{"n":5,"generators":["XZZXI","IXZZX","XIXZZ","ZXIXZ"],"logicals":[["XXXXX","ZZZZZ"]]}"#;
        let code = StabilizerCode::from_json(text).unwrap();
        assert!(code.is_perfect());
        let again = serde_json::to_string(&code.to_file()).unwrap();
        assert_eq!(again, text);
    }
}
