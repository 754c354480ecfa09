//! Ordinal notations below and including ω², with fundamental sequences,
//! minimal 𝒪-paths, and copy-length bookkeeping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrdinalError {
    #[error("cannot parse notation {0:?}")]
    Parse(String),
    #[error("{target} is not below {top}")]
    NotBelow { target: Notation, top: Notation },
    #[error("{0} is not a limit notation")]
    NotLimit(Notation),
    #[error("copy data is not defined at the top notation {0}")]
    AtTop(Notation),
    #[error("no further element of the β-sequence below m = {0}")]
    Exhausted(u64),
}

/// `ω·a + b`, or `ω²`. The derived order is the ordinal order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Notation {
    Below { a: u64, b: u64 },
    OmegaSq,
}

pub use Notation::OmegaSq;

impl Notation {
    pub const ZERO: Notation = Notation::Below { a: 0, b: 0 };
    pub const OMEGA: Notation = Notation::Below { a: 1, b: 0 };

    pub fn new(a: u64, b: u64) -> Notation {
        Notation::Below { a, b }
    }

    pub fn fin(n: u64) -> Notation {
        Notation::new(0, n)
    }

    pub fn is_zero(self) -> bool {
        self == Self::ZERO
    }

    pub fn is_limit(self) -> bool {
        match self {
            Notation::Below { a, b } => a > 0 && b == 0,
            Notation::OmegaSq => true,
        }
    }

    pub fn is_successor(self) -> bool {
        matches!(self, Notation::Below { b, .. } if b > 0)
    }

    pub fn pred(self) -> Option<Notation> {
        match self {
            Notation::Below { a, b } if b > 0 => Some(Notation::new(a, b - 1)),
            _ => None,
        }
    }

    pub fn succ(self) -> Notation {
        match self {
            Notation::Below { a, b } => Notation::new(a, b + 1),
            Notation::OmegaSq => panic!("ω²+1 is outside the supported family"),
        }
    }

    /// `Λ_λ(n)`
    pub fn fundamental(self, n: u64) -> Option<Notation> {
        match self {
            Notation::Below { a, b: 0 } if a > 0 => Some(Notation::new(a - 1, 2 * n)),
            Notation::OmegaSq => Some(Notation::new(n + 1, 0)),
            _ => None,
        }
    }

    /// `λ + 2k` with λ zero or a limit.
    pub fn is_even(self) -> bool {
        match self {
            Notation::Below { b, .. } => b % 2 == 0,
            Notation::OmegaSq => true,
        }
    }

    /// Least `m` with `Λ_self(m) ⊵ target`.
    pub fn least_index_above(self, target: Notation) -> Option<u64> {
        if !self.is_limit() || target >= self {
            return None;
        }
        let m = match (self, target) {
            (Notation::Below { a, .. }, Notation::Below { a: ta, b: tb }) => {
                if ta < a - 1 {
                    0
                } else {
                    tb.div_ceil(2)
                }
            }
            (Notation::OmegaSq, Notation::Below { a: ta, b: tb }) => {
                if tb > 0 {
                    ta
                } else {
                    ta.saturating_sub(1)
                }
            }
            _ => unreachable!(),
        };
        Some(m)
    }
}

pub fn o_less(k: Notation, v: Notation) -> bool {
    k < v
}

impl fmt::Display for Notation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Notation::OmegaSq => write!(f, "w^2"),
            Notation::Below { a: 0, b } => write!(f, "{b}"),
            Notation::Below { a, b } => {
                if a == 1 {
                    write!(f, "w")?;
                } else {
                    write!(f, "w*{a}")?;
                }
                if b > 0 {
                    write!(f, "+{b}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Debug for Notation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Notation {
    type Err = OrdinalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || OrdinalError::Parse(s.to_string());
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t == "w^2" {
            return Ok(Notation::OmegaSq);
        }
        let num = |x: &str| x.parse::<u64>().map_err(|_| err());
        let Some(rest) = t.strip_prefix('w') else {
            return num(&t).map(Notation::fin);
        };
        let (a_part, b_part) = match rest.split_once('+') {
            Some((a, b)) => (a, Some(b)),
            None => (rest, None),
        };
        let a = match a_part {
            "" => 1,
            x => num(x.strip_prefix('*').ok_or_else(err)?)?,
        };
        let b = match b_part {
            Some(x) => num(x)?,
            None => 0,
        };
        if a == 0 {
            return Err(err());
        }
        Ok(Notation::new(a, b))
    }
}

impl TryFrom<String> for Notation {
    type Error = OrdinalError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Notation> for String {
    fn from(n: Notation) -> String {
        n.to_string()
    }
}

/// One admissible step of an 𝒪-path.
pub fn is_path_step(from: Notation, to: Notation) -> bool {
    match from.pred() {
        Some(p) => to == p,
        None => in_fundamental_range(from, to),
    }
}

/// `x ∈ rng Λ_λ`
pub fn in_fundamental_range(lambda: Notation, x: Notation) -> bool {
    match (lambda, x) {
        (Notation::Below { a, b: 0 }, Notation::Below { a: xa, b: xb }) if a > 0 => {
            xa == a - 1 && xb % 2 == 0
        }
        (Notation::OmegaSq, Notation::Below { a: xa, b: xb }) => xa >= 1 && xb == 0,
        _ => false,
    }
}

pub fn minimal_o_path(alpha: Notation, beta: Notation) -> Result<Vec<Notation>, OrdinalError> {
    if beta > alpha {
        return Err(OrdinalError::NotBelow { target: beta, top: alpha });
    }
    let mut path = vec![alpha];
    let mut cur = alpha;
    while cur != beta {
        cur = match cur.pred() {
            Some(p) => p,
            None => {
                let m = cur.least_index_above(beta).expect("limit strictly above target");
                cur.fundamental(m).expect("limit")
            }
        };
        path.push(cur);
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyData {
    pub copyord: Notation,
    pub copylen: u64,
}

/// `copyord`/`copylen` of β relative to the top notation α.
pub fn copy_data(alpha: Notation, beta: Notation) -> Result<CopyData, OrdinalError> {
    if !alpha.is_limit() {
        return Err(OrdinalError::NotLimit(alpha));
    }
    if beta == alpha {
        return Err(OrdinalError::AtTop(alpha));
    }
    let path = minimal_o_path(alpha, beta)?;
    // data for path[i], i ≥ 1; `None` stands for α itself (copylen 0)
    let mut prev: Option<CopyData> = None;
    for w in path.windows(2) {
        let (gamma, cur) = (w[0], w[1]);
        let gamma_len = prev.map_or(0, |d| d.copylen);
        let data = if gamma.is_successor() {
            let copyord = if gamma.is_even() {
                gamma
            } else {
                prev.expect("an odd successor is never the top").copyord
            };
            CopyData { copyord, copylen: gamma_len }
        } else {
            let m = gamma.least_index_above(cur).expect("limit step");
            CopyData { copyord: gamma, copylen: gamma_len + m }
        };
        prev = Some(data);
    }
    Ok(prev.expect("path has at least two entries"))
}

/// Even notations `β₁ ⋖ β₂ ⋖ …` below λ with `copyord(βₙ) = λ` and
/// `n ≤ copylen(β₁) < copylen(β₂) < …`.
pub fn beta_sequence(
    lambda: Notation,
    alpha: Notation,
    count: usize,
) -> Result<Vec<(Notation, u64)>, OrdinalError> {
    if !lambda.is_limit() {
        return Err(OrdinalError::NotLimit(lambda));
    }
    if lambda > alpha {
        return Err(OrdinalError::NotBelow { target: lambda, top: alpha });
    }
    const SCAN_CAP: u64 = 1 << 16;
    let mut out: Vec<(Notation, u64)> = Vec::with_capacity(count);
    let mut m = 0;
    while out.len() < count {
        if m > SCAN_CAP {
            return Err(OrdinalError::Exhausted(m));
        }
        let raw = lambda.fundamental(m).expect("limit");
        m += 1;
        let cand = if raw.is_even() { raw } else { raw.pred().expect("odd is successor") };
        let data = copy_data(alpha, cand)?;
        let n = out.len() as u64 + 1;
        let fresh = out.last().is_none_or(|&(b, l)| cand > b && data.copylen > l);
        if data.copyord == lambda && fresh && data.copylen >= n {
            out.push((cand, data.copylen));
        }
    }
    Ok(out)
}

/// Every notation `≤ top` of the form `ω·a + b` with `b ≤ max_b`, plus `ω²`
/// when `top` is `ω²`.
pub fn family_below(top: Notation, max_b: u64) -> Vec<Notation> {
    let max_a = match top {
        Notation::Below { a, .. } => a,
        Notation::OmegaSq => 3,
    };
    let mut out = Vec::new();
    for a in 0..=max_a {
        for b in 0..=max_b {
            let n = Notation::new(a, b);
            if n <= top {
                out.push(n);
            }
        }
    }
    if top == Notation::OmegaSq {
        out.push(Notation::OmegaSq);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Notation {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_print() {
        for s in ["0", "7", "w", "w+3", "w*2", "w*2+4", "w^2"] {
            assert_eq!(n(s).to_string(), s);
        }
        assert_eq!(n("w*1+2"), n("w+2"));
        for bad in ["", "x", "w*", "w+", "w*0+1", "w^3", "-1"] {
            assert!(bad.parse::<Notation>().is_err(), "{bad}");
        }
        let j = serde_json::to_string(&n("w*2+1")).unwrap();
        assert_eq!(j, "\"w*2+1\"");
        assert_eq!(serde_json::from_str::<Notation>(&j).unwrap(), n("w*2+1"));
    }

    #[test]
    fn order_and_parity() {
        assert!(n("0").is_even());
        assert!(!n("w+3").is_even());
        assert!(n("w*2").is_even());
        assert!(o_less(n("w+5"), n("w*2")));
        assert!(o_less(n("w*9+9"), OmegaSq));
        assert!(!o_less(n("w"), n("w")));
    }

    #[test]
    fn fundamental_sequences() {
        assert_eq!(n("w").fundamental(3), Some(n("6")));
        assert_eq!(n("w*2").fundamental(1), Some(n("w+2")));
        assert_eq!(OmegaSq.fundamental(0), Some(n("w")));
        assert_eq!(n("w+1").fundamental(0), None);
        assert_eq!(n("w").least_index_above(n("4")), Some(2));
        assert_eq!(n("w").least_index_above(n("3")), Some(2));
        assert_eq!(OmegaSq.least_index_above(n("w*2")), Some(1));
        assert_eq!(OmegaSq.least_index_above(n("w*2+1")), Some(2));
    }

    #[test]
    fn path_examples() {
        assert_eq!(minimal_o_path(n("w"), n("w")).unwrap(), vec![n("w")]);
        assert_eq!(
            minimal_o_path(n("w*2"), n("3")).unwrap(),
            vec![n("w*2"), n("w"), n("4"), n("3")]
        );
        assert_eq!(minimal_o_path(n("w"), n("4")).unwrap(), vec![n("w"), n("4")]);
        assert!(minimal_o_path(n("4"), n("w")).is_err());
    }

    #[test]
    fn copy_examples() {
        let cd = |a, b| copy_data(n(a), n(b)).unwrap();
        assert_eq!(cd("w", "4"), CopyData { copyord: n("w"), copylen: 2 });
        assert_eq!(cd("w", "3"), CopyData { copyord: n("4"), copylen: 2 });
        assert_eq!(cd("w*2", "w"), CopyData { copyord: n("w*2"), copylen: 0 });
        assert_eq!(copy_data(n("w"), n("w")), Err(OrdinalError::AtTop(n("w"))));
        assert!(copy_data(n("w+1"), n("3")).is_err());
    }

    #[test]
    fn beta_examples() {
        assert_eq!(
            beta_sequence(n("w"), n("w"), 3).unwrap(),
            vec![(n("2"), 1), (n("4"), 2), (n("6"), 3)]
        );
        assert_eq!(beta_sequence(n("w"), n("w*2"), 2).unwrap(), vec![(n("2"), 1), (n("4"), 2)]);
        assert!(beta_sequence(n("w"), n("w"), 0).unwrap().is_empty());
    }
}
