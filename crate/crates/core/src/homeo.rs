//! Baire space ↔ Cantor space: the block coding `Γ`, and the passage from a
//! Π⁰₂ set class to a tree whose paths are the interleaved witness functions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strings_codes::{column, join, FinString};
use crate::trees::Tree;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HomeoError {
    #[error("no witness y ≤ {bound} for z = {z}")]
    NoWitnessBelowBound { z: u64, bound: usize },
}

pub fn gamma_forward(s: &FinString) -> FinString {
    let mut out = Vec::new();
    for &i in s.entries() {
        out.extend(std::iter::repeat_n(1, i as usize));
        out.push(0);
    }
    FinString(out)
}

/// `None` when `t` is not a concatenation of `1ⁱ0` blocks.
pub fn gamma_inverse(t: &FinString) -> Option<FinString> {
    let mut out = Vec::new();
    let mut run = 0u64;
    for &b in t.entries() {
        match b {
            0 => {
                out.push(run);
                run = 0;
            }
            1 => run += 1,
            _ => return None,
        }
    }
    (run == 0).then_some(FinString(out))
}

/// A decidable `R(X↾y, z, y)`; the class is `{X : ∀z ∃y R(X↾y, z, y)}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Pi2Relation {
    True,
    False,
    /// holds exactly at `y = 0`
    YZero,
    YAtLeast { k: u64 },
    /// the prefix shows a 1 at some position ≥ z (infinitely many ones)
    OneBeyond,
    /// `y > z` and the prefix has 0 at z (the singleton `0^ω`)
    ZeroAt,
    /// holds on the listed triples, otherwise `default`
    Table { rows: BTreeSet<(FinString, u64, u64)>, default: bool },
}

impl Pi2Relation {
    pub fn eval(&self, prefix: &FinString, z: u64, y: u64) -> bool {
        match self {
            Pi2Relation::True => true,
            Pi2Relation::False => false,
            Pi2Relation::YZero => y == 0,
            Pi2Relation::YAtLeast { k } => y >= *k,
            Pi2Relation::OneBeyond => prefix.entries().iter().skip(z as usize).any(|&b| b == 1),
            Pi2Relation::ZeroAt => y > z && prefix.get(z as usize) == Some(0),
            Pi2Relation::Table { rows, default } => {
                if rows.contains(&(prefix.clone(), z, y)) {
                    !default
                } else {
                    *default
                }
            }
        }
    }

    pub fn catalog() -> Vec<(&'static str, Pi2Relation)> {
        vec![
            ("true", Pi2Relation::True),
            ("false", Pi2Relation::False),
            ("y_zero", Pi2Relation::YZero),
            ("y_at_least_1", Pi2Relation::YAtLeast { k: 1 }),
            ("one_beyond", Pi2Relation::OneBeyond),
            ("zero_at", Pi2Relation::ZeroAt),
        ]
    }
}

/// Whether an even-length `σ = τ ⊕ ε` is consistent with each `τ(l)` being a
/// witness for `z = l`, i.e. `R(ε↾τ(l), l, τ(l))`. Claims with `τ(l) > |ε|`
/// cannot be checked yet and are left standing, which keeps the admitted set
/// closed under prefixes.
fn admits_even(r: &Pi2Relation, sigma: &FinString) -> bool {
    let tau = column(sigma, 0);
    let eps = column(sigma, 1);
    if eps.entries().iter().any(|&b| b > 1) {
        return false;
    }
    tau.entries().iter().enumerate().all(|(l, &y)| {
        y as usize > eps.len() || r.eval(&eps.restrict(y as usize), l as u64, y)
    })
}

fn admits(r: &Pi2Relation, sigma: &FinString) -> bool {
    if sigma.len().is_multiple_of(2) {
        admits_even(r, sigma)
    } else {
        (0..2).any(|b| admits_even(r, &sigma.push(b)))
    }
}

/// The tree of interleaved witness functions, to `depth`, with witness
/// entries at most `entry_bound`.
pub fn pi2_to_tree(r: &Pi2Relation, depth: usize, entry_bound: u64) -> Tree {
    let mut members = BTreeSet::new();
    let mut frontier = vec![FinString::empty()];
    members.insert(FinString::empty());
    for len in 0..depth {
        let mut next = Vec::new();
        let top = if len % 2 == 0 { entry_bound } else { 1 };
        for s in &frontier {
            for i in 0..=top {
                let t = s.push(i);
                if admits(r, &t) {
                    next.push(t);
                }
            }
        }
        members.extend(next.iter().cloned());
        frontier = next;
    }
    Tree::new(members, depth).expect("admissibility is prefix-closed")
}

/// `out(2z)` = least `y ≤ |X|` with `R(X↾y, z, y)`, `out(2z+1) = X(z)`, for
/// `z ≤ z_max`.
pub fn pi2_witness_map(
    r: &Pi2Relation,
    x: &FinString,
    z_max: u64,
) -> Result<FinString, HomeoError> {
    let mut ys = Vec::new();
    for z in 0..=z_max {
        let y = (0..=x.len() as u64)
            .find(|&y| r.eval(&x.restrict(y as usize), z, y))
            .ok_or(HomeoError::NoWitnessBelowBound { z, bound: x.len() })?;
        ys.push(y);
    }
    Ok(join(&FinString(ys), &x.restrict(z_max as usize + 1)))
}
