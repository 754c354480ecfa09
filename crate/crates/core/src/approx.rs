//! Scripted double-limit approximations `ρ(σ, s₁, s₀)` and tree
//! uniformization against a β-sequence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ordinals::Notation;
use crate::strings_codes::FinString;
use crate::trees::Tree;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApproxError {
    #[error("β-sequence is not strictly increasing at index {0}")]
    NonMonotoneBetas(usize),
    #[error("β-sequence too short: last level {last} does not exceed depth {depth}")]
    InsufficientBetas { last: u64, depth: usize },
    #[error("schedule for {0} has a record with value other than 0 or 1")]
    NonBinary(FinString),
    #[error("{0}")]
    Invalid(String),
}

/// From stage `(s1, s0)` onward (in both coordinates) the value is `value`,
/// unless a later record also applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub s1: u64,
    pub s0: u64,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Records(Vec<Record>),
    /// `ρ(σ, s₁, s₀) = s₁ mod 2`: the inner limit exists, the outer does not.
    Oscillating,
}

impl Schedule {
    pub fn constant(v: u8) -> Schedule {
        Schedule::Records(vec![Record { s1: 0, s0: 0, value: v }])
    }

    fn eval(&self, s1: u64, s0: u64) -> u8 {
        match self {
            Schedule::Oscillating => (s1 % 2) as u8,
            Schedule::Records(rs) => rs
                .iter()
                .rev()
                .find(|r| s1 >= r.s1 && s0 >= r.s0)
                .map_or(0, |r| r.value),
        }
    }

    fn inner_settle(&self) -> u64 {
        match self {
            Schedule::Oscillating => 0,
            Schedule::Records(rs) => rs.iter().map(|r| r.s0).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stable {
    Value(u8),
    Divergent,
}

/// A total binary `ρ`. Strings without their own schedule take `default`,
/// except that extensions of a `dead` string are constantly 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleApprox {
    #[serde(default = "one")]
    pub default: u8,
    #[serde(default)]
    pub dead: BTreeSet<FinString>,
    #[serde(default)]
    pub schedules: BTreeMap<FinString, Schedule>,
}

fn one() -> u8 {
    1
}

impl OracleApprox {
    pub fn constant(v: u8) -> OracleApprox {
        OracleApprox { default: v, dead: BTreeSet::new(), schedules: BTreeMap::new() }
    }

    /// Stable 1 exactly on `members`.
    pub fn from_members(members: &BTreeSet<FinString>) -> OracleApprox {
        OracleApprox {
            default: 0,
            dead: BTreeSet::new(),
            schedules: members.iter().map(|s| (s.clone(), Schedule::constant(1))).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        if self.default > 1 {
            return Err(ApproxError::Invalid(format!("default value {}", self.default)));
        }
        for (s, sch) in &self.schedules {
            if let Schedule::Records(rs) = sch {
                if rs.iter().any(|r| r.value > 1) {
                    return Err(ApproxError::NonBinary(s.clone()));
                }
            }
        }
        Ok(())
    }

    fn schedule(&self, s: &FinString) -> Option<&Schedule> {
        self.schedules.get(s)
    }

    fn is_dead(&self, s: &FinString) -> bool {
        self.dead.iter().any(|d| d.is_prefix_of(s))
    }

    pub fn rho_eval(&self, s: &FinString, s1: u64, s0: u64) -> u8 {
        match self.schedule(s) {
            Some(sch) => sch.eval(s1, s0),
            None if self.is_dead(s) => 0,
            None => self.default,
        }
    }

    /// `lim_{s₀} ρ(σ, s₁, s₀)`
    pub fn rho1(&self, s: &FinString, s1: u64) -> u8 {
        let settle = self.schedule(s).map_or(0, |sch| sch.inner_settle());
        self.rho_eval(s, s1, settle)
    }

    pub fn stable_value(&self, s: &FinString) -> Stable {
        match self.schedule(s) {
            Some(Schedule::Oscillating) => Stable::Divergent,
            Some(Schedule::Records(rs)) => Stable::Value(rs.last().map_or(0, |r| r.value)),
            None if self.is_dead(s) => Stable::Value(0),
            None => Stable::Value(self.default),
        }
    }

    /// Stage after which `ρ₁(σ, ·)` no longer changes, when it converges.
    pub fn outer_settle(&self, s: &FinString) -> Option<u64> {
        match self.schedule(s) {
            Some(Schedule::Oscillating) => None,
            Some(Schedule::Records(rs)) => Some(rs.iter().map(|r| r.s1).max().unwrap_or(0)),
            None => Some(0),
        }
    }

    /// `|{x ≤ upto : ρ(σ, s₁, x) = v}|`, computed from the schedule's
    /// breakpoints.
    pub fn count_inner(&self, s: &FinString, s1: u64, upto: u64, v: u8) -> u64 {
        let cuts: Vec<u64> = match self.schedule(s) {
            Some(Schedule::Records(rs)) => {
                let mut c: Vec<u64> =
                    rs.iter().filter(|r| r.s1 <= s1 && r.s0 <= upto).map(|r| r.s0).collect();
                c.push(0);
                c.sort_unstable();
                c.dedup();
                c
            }
            _ => vec![0],
        };
        let mut total = 0;
        for (k, &lo) in cuts.iter().enumerate() {
            let hi = cuts.get(k + 1).map_or(upto, |&n| n - 1);
            if self.rho_eval(s, s1, lo) == v {
                total += hi - lo + 1;
            }
        }
        total
    }

    /// Outer stage from which `ρ(σ, s₁, ·)` repeats with period 2 or less.
    pub fn outer_regime_start(&self, s: &FinString) -> u64 {
        match self.schedule(s) {
            Some(Schedule::Records(rs)) => rs.iter().map(|r| r.s1).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// σ with every prefix (σ included) stably 1: the scenario's ground truth.
    pub fn in_s(&self, s: &FinString) -> bool {
        s.prefixes().all(|p| self.stable_value(&p) == Stable::Value(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub reveal: u64,
    pub tag: Notation,
}

/// An ambient tree with staged exclusions: the represented tree drops every
/// extension of an excluded string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedTree {
    pub target: Tree,
    #[serde(default)]
    pub exclusions: BTreeMap<FinString, Exclusion>,
}

impl StagedTree {
    pub fn total(target: Tree) -> StagedTree {
        StagedTree { target, exclusions: BTreeMap::new() }
    }

    pub fn excluded(&self, s: &FinString) -> bool {
        s.prefixes().any(|p| self.exclusions.contains_key(&p))
    }

    pub fn tree(&self) -> Tree {
        let members = self.target.members().iter().filter(|s| !self.excluded(s)).cloned();
        Tree::new(members.collect(), self.target.depth_bound()).expect("exclusion is upward closed")
    }
}

fn check_betas(betas: &[(Notation, u64)]) -> Result<(), ApproxError> {
    for (i, w) in betas.windows(2).enumerate() {
        if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
            return Err(ApproxError::NonMonotoneBetas(i + 1));
        }
    }
    Ok(())
}

/// Greatest `n` with `len ≥ l_{n+1}` (levels are 1-indexed; `l_{n+1}` is
/// `betas[n].1`), or 0.
fn level_index(betas: &[(Notation, u64)], len: usize) -> usize {
    betas.iter().take_while(|&&(_, l)| len as u64 >= l).count().saturating_sub(1)
}

/// `σ ∉ T̃` iff some prefix was excluded with reveal stage `< n` and tag
/// `⊴ βₙ`, where `n` is the greatest index with `|σ| ≥ l_{n+1}`.
pub fn uniformize(t: &StagedTree, betas: &[(Notation, u64)]) -> Result<Tree, ApproxError> {
    check_betas(betas)?;
    let depth = t.target.depth_bound();
    let last = betas.last().map_or(0, |b| b.1);
    if last as usize <= depth {
        return Err(ApproxError::InsufficientBetas { last, depth });
    }
    let visible = |s: &FinString| {
        let n = level_index(betas, s.len());
        if n == 0 {
            return false;
        }
        let beta_n = betas[n - 1].0;
        s.prefixes().any(|p| {
            t.exclusions
                .get(&p)
                .is_some_and(|e| e.reveal < n as u64 && e.tag <= beta_n)
        })
    };
    let members = t.target.members().iter().filter(|s| !visible(s)).cloned().collect();
    Ok(Tree::new(members, depth).expect("visibility grows along extensions"))
}
