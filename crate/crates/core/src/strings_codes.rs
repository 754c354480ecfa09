//! Finite strings over the naturals, Cantor pairing, and the canonical coding
//! of strings as numbers.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("arithmetic overflow while coding")]
    Overflow,
}

/// A finite sequence of naturals. The derived `Ord` is the lexicographic
/// order in which a proper prefix comes first.
///
/// Serialized as its space-separated line so it can key JSON maps; an array
/// of numbers is accepted on input too.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FinString(pub Vec<u64>);

impl Serialize for FinString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_line())
    }
}

impl<'de> Deserialize<'de> for FinString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Line(String),
            Entries(Vec<u64>),
        }
        match Repr::deserialize(d)? {
            Repr::Line(s) => FinString::parse_line(&s).map_err(serde::de::Error::custom),
            Repr::Entries(v) => Ok(FinString(v)),
        }
    }
}

impl FinString {
    pub fn empty() -> Self {
        FinString(Vec::new())
    }

    pub fn from_slice(v: &[u64]) -> Self {
        FinString(v.to_vec())
    }

    /// `⟨i⟩ⁿ`
    pub fn repeat(i: u64, n: usize) -> Self {
        FinString(vec![i; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<u64> {
        self.0.get(i).copied()
    }

    pub fn last(&self) -> Option<u64> {
        self.0.last().copied()
    }

    pub fn entries(&self) -> &[u64] {
        &self.0
    }

    pub fn pred(&self) -> Option<FinString> {
        if self.0.is_empty() {
            None
        } else {
            Some(FinString(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn push(&self, i: u64) -> FinString {
        let mut v = self.0.clone();
        v.push(i);
        FinString(v)
    }

    pub fn concat(&self, other: &FinString) -> FinString {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        FinString(v)
    }

    pub fn restrict(&self, l: usize) -> FinString {
        FinString(self.0[..l.min(self.0.len())].to_vec())
    }

    /// `self ⊑ other`
    pub fn is_prefix_of(&self, other: &FinString) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn compatible(&self, other: &FinString) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    pub fn incompatible(&self, other: &FinString) -> bool {
        !self.compatible(other)
    }

    /// All prefixes, shortest first, including ε and `self`.
    pub fn prefixes(&self) -> impl Iterator<Item = FinString> + '_ {
        (0..=self.0.len()).map(move |l| self.restrict(l))
    }

    pub fn common_prefix_len(&self, other: &FinString) -> usize {
        self.0.iter().zip(&other.0).take_while(|(a, b)| a == b).count()
    }

    pub fn max_entry(&self) -> Option<u64> {
        self.0.iter().copied().max()
    }

    /// Space-separated entries; ε renders as the empty string.
    pub fn to_line(&self) -> String {
        self.0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn parse_line(s: &str) -> Result<FinString, std::num::ParseIntError> {
        s.split_whitespace()
            .map(|t| t.parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map(FinString)
    }
}

impl fmt::Debug for FinString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "⟩")
    }
}

impl fmt::Display for FinString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<Vec<u64>> for FinString {
    fn from(v: Vec<u64>) -> Self {
        FinString(v)
    }
}

impl From<&[u64]> for FinString {
    fn from(v: &[u64]) -> Self {
        FinString(v.to_vec())
    }
}

/// Shorthand for building strings in tests and scenario code.
#[macro_export]
macro_rules! s {
    () => { $crate::strings_codes::FinString(Vec::new()) };
    ($($x:expr),+ $(,)?) => { $crate::strings_codes::FinString(vec![$($x as u64),+]) };
}

/// `½(x+y)(x+y+1) + y`, checked.
pub fn pair(x: u64, y: u64) -> Result<u64, CodeError> {
    let t = x.checked_add(y).ok_or(CodeError::Overflow)?;
    let (a, b) = if t % 2 == 0 {
        (t / 2, t.checked_add(1).ok_or(CodeError::Overflow)?)
    } else {
        (t, t.div_ceil(2))
    };
    a.checked_mul(b)
        .and_then(|tri| tri.checked_add(y))
        .ok_or(CodeError::Overflow)
}

fn tri(w: u64) -> u128 {
    let w = w as u128;
    w * (w + 1) / 2
}

pub fn unpair(n: u64) -> (u64, u64) {
    // largest w with w(w+1)/2 <= n
    let mut w = (((8.0 * n as f64 + 1.0).sqrt() - 1.0) / 2.0) as u64;
    while tri(w) > n as u128 {
        w -= 1;
    }
    while tri(w + 1) <= n as u128 {
        w += 1;
    }
    let y = (n as u128 - tri(w)) as u64;
    (w - y, y)
}

/// `⌜ε⌝ = 0`, `⌜σ⌢i⌝ = pair(⌜σ⌝, i) + 1`.
pub fn encode(s: &FinString) -> Result<u64, CodeError> {
    let mut c = 0u64;
    for &i in &s.0 {
        c = pair(c, i)?.checked_add(1).ok_or(CodeError::Overflow)?;
    }
    Ok(c)
}

/// Code used where only a comparison against a stage is needed; saturates
/// instead of failing, so deep strings are simply "very late".
pub fn code_sat(s: &FinString) -> u64 {
    encode(s).unwrap_or(u64::MAX)
}

pub fn decode(c: u64) -> FinString {
    let mut rev = Vec::new();
    let mut c = c;
    while c > 0 {
        let (parent, i) = unpair(c - 1);
        rev.push(i);
        c = parent;
    }
    rev.reverse();
    FinString(rev)
}

/// `A ⊕ B` up to the longest prefix on which the interleaving is defined.
pub fn join(a: &FinString, b: &FinString) -> FinString {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0.. {
        match a.get(i) {
            Some(x) => out.push(x),
            None => break,
        }
        match b.get(i) {
            Some(y) => out.push(y),
            None => break,
        }
    }
    FinString(out)
}

/// Column `n` of a two-fold join (`n` is 0 or 1; larger n gives ε).
pub fn column(x: &FinString, n: usize) -> FinString {
    if n > 1 {
        return FinString::empty();
    }
    FinString(x.0.iter().skip(n).step_by(2).copied().collect())
}

/// Column `n` of a `k`-fold interleaving.
pub fn column_k(x: &FinString, n: usize, k: usize) -> FinString {
    assert!(k > 0 && n < k);
    FinString(x.0.iter().skip(n).step_by(k).copied().collect())
}

/// Every string of length ≤ `max_len` with entries ≤ `max_entry`, shortest first.
pub fn all_strings(max_len: usize, max_entry: u64) -> Vec<FinString> {
    let mut out = vec![FinString::empty()];
    let mut frontier = vec![FinString::empty()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for i in 0..=max_entry {
                next.push(s.push(i));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_examples() {
        assert_eq!(pair(0, 0), Ok(0));
        assert_eq!(pair(1, 2), Ok(8));
        assert_eq!(pair(2, 1), Ok(7));
        assert_eq!(unpair(0), (0, 0));
        assert_eq!(unpair(8), (1, 2));
        assert_eq!(unpair(7), (2, 1));
    }

    #[test]
    fn pair_overflow_is_reported() {
        assert_eq!(pair(u64::MAX, 1), Err(CodeError::Overflow));
        assert_eq!(pair(1 << 33, 1 << 33), Err(CodeError::Overflow));
    }

    #[test]
    fn unpair_large() {
        for n in [u64::MAX, u64::MAX - 1, 1 << 63, (1 << 62) + 12345] {
            let (x, y) = unpair(n);
            assert_eq!(pair(x, y), Ok(n));
        }
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode(&s![]), Ok(0));
        assert_eq!(encode(&s![0]), Ok(1));
        assert_eq!(encode(&s![0, 0]), Ok(2));
        assert_eq!(decode(2), s![0, 0]);
    }

    #[test]
    fn deep_strings_overflow() {
        assert_eq!(encode(&FinString::repeat(9, 40)), Err(CodeError::Overflow));
        assert_eq!(code_sat(&FinString::repeat(9, 40)), u64::MAX);
    }

    #[test]
    fn join_examples() {
        assert_eq!(join(&s![], &s![]), s![]);
        assert_eq!(join(&s![1, 1], &s![0, 0]), s![1, 0, 1, 0]);
        assert_eq!(join(&s![1, 1], &s![0]), s![1, 0, 1]);
        assert_eq!(column(&s![1, 0, 1, 0], 1), s![0, 0]);
        assert_eq!(column(&s![1, 0, 1, 0], 0), s![1, 1]);
    }

    #[test]
    fn string_helpers() {
        let a = s![1, 2, 3];
        assert!(s![1, 2].is_prefix_of(&a));
        assert!(s![1, 3].incompatible(&a));
        assert_eq!(a.pred(), Some(s![1, 2]));
        assert_eq!(s![].pred(), None);
        assert_eq!(a.prefixes().count(), 4);
        assert_eq!(FinString::parse_line("1 2 3").unwrap(), a);
        assert_eq!(a.to_line(), "1 2 3");
        assert_eq!(format!("{a}"), "⟨1,2,3⟩");
    }
}
