//! Finite towers of trees glued level by level: each even level copies a
//! higher tree up to its copy length and runs the engine above that.
//!
//! Levels are evaluated once, top-down, and memoized; anything past the
//! horizon or depth budget is reported as truncated.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{uniformize, ApproxError, StagedTree};
use crate::engine::{run_engine, EngineConfig, EngineError};
use crate::ordinals::{beta_sequence, copy_data, CopyData, Notation, OrdinalError};
use crate::strings_codes::{code_sat, FinString};
use crate::trees::{FTree, Tree};

#[derive(Debug, Error)]
pub enum TowerError {
    #[error("level {0} is not an even notation below the top")]
    BadLevel(Notation),
    #[error("level {level} copies from {copyord}, which is neither the top nor a configured level")]
    MissingCopy { level: Notation, copyord: Notation },
    #[error("{0} is not a configured level")]
    NotMaterialized(Notation),
    #[error("{to} is not below {from}")]
    Order { from: Notation, to: Notation },
    #[error(transparent)]
    Ordinal(#[from] OrdinalError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn d_horizon() -> u64 {
    300
}
fn d_depth() -> usize {
    3
}
fn d_branch() -> u64 {
    3
}
fn d_engine_depth() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub alpha: Notation,
    pub top: StagedTree,
    pub levels: Vec<Notation>,
    /// stages per engine instance
    #[serde(default = "d_horizon")]
    pub horizon: u64,
    /// longest string any level is materialized to
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default = "d_branch")]
    pub max_branch: u64,
    #[serde(default = "d_engine_depth")]
    pub max_depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    In,
    Out,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GammaValue {
    Defined(FinString),
    Undefined,
    Truncated,
}

/// One engine run above a copied string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    /// the string of copy length it sits above
    pub base: FinString,
    /// rank-relabeled upper subtree the engine ran on, with the actual tails
    pub labels: BTreeMap<FinString, FinString>,
    pub tree: BTreeSet<FinString>,
    pub ht: FTree,
    pub last_stage: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub beta: Notation,
    pub copy: CopyData,
    /// the topmost configured level copies everything
    pub copy_only: bool,
    pub tree: Tree,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerHandle {
    pub cfg: TowerConfig,
    pub top: Tree,
    pub betas: Vec<(Notation, u64)>,
    pub levels: BTreeMap<Notation, Level>,
}

fn validate(cfg: &TowerConfig) -> Result<Vec<Notation>, TowerError> {
    let mut levels = cfg.levels.clone();
    levels.sort();
    levels.dedup();
    for &b in &levels {
        if !b.is_even() || b >= cfg.alpha {
            return Err(TowerError::BadLevel(b));
        }
        let d = copy_data(cfg.alpha, b)?;
        if d.copyord != cfg.alpha && !levels.contains(&d.copyord) {
            return Err(TowerError::MissingCopy { level: b, copyord: d.copyord });
        }
    }
    Ok(levels)
}

pub fn build_tower(cfg: &TowerConfig) -> Result<TowerHandle, TowerError> {
    let order = validate(cfg)?;
    let betas = beta_sequence(cfg.alpha, cfg.alpha, cfg.top.target.depth_bound() + 2)?;
    let top = uniformize(&cfg.top, &betas)?;
    let mut h = TowerHandle { cfg: cfg.clone(), top, betas, levels: BTreeMap::new() };
    for (i, &beta) in order.iter().enumerate().rev() {
        let copy = copy_data(cfg.alpha, beta)?;
        let above = order.get(i + 1).copied().filter(|&a| a == beta.succ().succ());
        let source = h.copy_tree(copy.copyord).clone();
        let Some(upper) = above else {
            let tree = source.restrict(cfg.depth);
            h.levels.insert(beta, Level { beta, copy, copy_only: true, tree, instances: vec![] });
            continue;
        };
        let cl = copy.copylen as usize;
        let mut members: BTreeSet<FinString> =
            source.members().iter().filter(|s| s.len() <= cl.min(cfg.depth)).cloned().collect();
        let mut instances = vec![];
        let bases: Vec<FinString> = members.iter().filter(|s| s.len() == cl).cloned().collect();
        for base in bases {
            let inst = h.run_instance(upper, &base)?;
            for t in &inst.tree {
                let full = base.concat(t);
                if full.len() <= cfg.depth {
                    members.insert(full);
                }
            }
            instances.push(inst);
        }
        let tree = Tree::new(members, cfg.depth).expect("copied prefix plus subtrees is a tree");
        h.levels.insert(beta, Level { beta, copy, copy_only: false, tree, instances });
    }
    Ok(h)
}

impl TowerHandle {
    fn copy_tree(&self, copyord: Notation) -> &Tree {
        if copyord == self.cfg.alpha {
            &self.top
        } else {
            &self.levels[&copyord].tree
        }
    }

    /// Children of `x` in a materialized level, in entry order.
    fn children(&self, beta: Notation, x: &FinString) -> Vec<FinString> {
        self.levels[&beta].tree.children(x).cloned().collect()
    }

    fn run_instance(&self, upper: Notation, base: &FinString) -> Result<Instance, TowerError> {
        let cfg = &self.cfg;
        // relabel the upper subtree above `base` by child rank
        let mut labels = BTreeMap::from([(FinString::empty(), FinString::empty())]);
        let mut frontier = vec![FinString::empty()];
        while let Some(rho) = frontier.pop() {
            if rho.len() >= cfg.max_depth {
                continue;
            }
            let actual = base.concat(&labels[&rho]);
            for (r, c) in self.children(upper, &actual).into_iter().take(cfg.max_branch as usize).enumerate() {
                let child = rho.push(r as u64);
                labels.insert(child.clone(), FinString(c.entries()[base.len()..].to_vec()));
                frontier.push(child);
            }
        }
        let ecfg = EngineConfig {
            s_table: Some(labels.keys().cloned().collect()),
            horizon: cfg.horizon,
            max_branch: cfg.max_branch,
            max_depth: cfg.max_depth,
            ..EngineConfig::default()
        };
        let e = run_engine(&ecfg)?;
        Ok(Instance {
            base: base.clone(),
            labels,
            tree: e.tree().members().clone(),
            ht: e.ht(),
            last_stage: e.stage().saturating_sub(1),
        })
    }

    fn level(&self, beta: Notation) -> Result<&Level, TowerError> {
        self.levels.get(&beta).ok_or(TowerError::NotMaterialized(beta))
    }

    pub fn membership(&self, beta: Notation, x: &FinString) -> Result<Membership, TowerError> {
        let lv = self.level(beta)?;
        if x.len() > self.cfg.depth {
            return Ok(Membership::Truncated);
        }
        if lv.tree.contains(x) {
            return Ok(Membership::In);
        }
        let cl = lv.copy.copylen as usize;
        if lv.copy_only || x.len() <= cl {
            return Ok(Membership::Out);
        }
        let Some(inst) = lv.instances.iter().find(|i| i.base == x.restrict(cl)) else {
            return Ok(Membership::Out);
        };
        // the engine could still enumerate a tail whose deadline is ahead
        let tail = FinString(x.entries()[cl..].to_vec());
        let open = tail.prefixes().any(|p| !inst.tree.contains(&p) && code_sat(&p) > inst.last_stage);
        Ok(if open { Membership::Truncated } else { Membership::Out })
    }

    /// `Γ^{β+2}_β(x)`.
    fn step_down(&self, beta: Notation, x: &FinString) -> Result<GammaValue, TowerError> {
        let upper = beta.succ().succ();
        let lv = self.level(beta)?;
        let cl = lv.copy.copylen as usize;
        if x.len() <= cl {
            return Ok(match self.membership(upper, x)? {
                Membership::In => GammaValue::Defined(x.clone()),
                Membership::Out => GammaValue::Undefined,
                Membership::Truncated => GammaValue::Truncated,
            });
        }
        let base = x.restrict(cl);
        match self.membership(upper, &base)? {
            Membership::Out => return Ok(GammaValue::Undefined),
            Membership::Truncated => return Ok(GammaValue::Truncated),
            Membership::In => {}
        }
        let Some(inst) = lv.instances.iter().find(|i| i.base == base) else {
            return Ok(GammaValue::Truncated);
        };
        let tail = FinString(x.entries()[cl..].to_vec());
        let Some((rho, _)) = inst.labels.iter().find(|(_, t)| **t == tail) else {
            return Ok(match self.membership(upper, x)? {
                Membership::Out => GammaValue::Undefined,
                _ => GammaValue::Truncated,
            });
        };
        Ok(match inst.ht.get(rho) {
            Some(img) => GammaValue::Defined(base.concat(img)),
            None => GammaValue::Truncated,
        })
    }

    /// `Γ^{from}_{to}(σ)`, composed from adjacent steps; from the top it
    /// goes through the `βₘ` with least `m ≥ |σ|` and `to ⊴ βₘ`.
    pub fn gamma_compose(&self, from: Notation, to: Notation, sigma: &FinString) -> Result<GammaValue, TowerError> {
        if to > from {
            return Err(TowerError::Order { from, to });
        }
        self.level(to)?;
        let (mut cur, mut x) = (from, sigma.clone());
        if from == self.cfg.alpha {
            let Some(&(bm, _)) =
                self.betas.iter().enumerate().find(|&(m, &(b, _))| sigma.len() <= m + 1 && to <= b).map(|(_, p)| p)
            else {
                return Ok(GammaValue::Truncated);
            };
            if !self.levels.contains_key(&bm) {
                return Ok(GammaValue::Truncated);
            }
            if !self.top.contains(sigma) {
                return Ok(if sigma.len() > self.top.depth_bound() {
                    GammaValue::Truncated
                } else {
                    GammaValue::Undefined
                });
            }
            cur = bm;
        } else {
            self.level(from)?;
        }
        while cur > to {
            let next = cur.pred().and_then(Notation::pred).ok_or(TowerError::BadLevel(cur))?;
            if !self.levels.contains_key(&next) {
                return Ok(GammaValue::Truncated);
            }
            match self.step_down(next, &x)? {
                GammaValue::Defined(y) => x = y,
                other => return Ok(other),
            }
            cur = next;
        }
        Ok(GammaValue::Defined(x))
    }

    /// Strings of a level up to its copy length missing from the tree it
    /// copies.
    pub fn boundary_disagreements(&self) -> Vec<(Notation, FinString)> {
        let mut out = vec![];
        for lv in self.levels.values() {
            let src = self.copy_tree(lv.copy.copyord);
            for s in lv.tree.members() {
                if s.len() <= lv.copy.copylen as usize && !src.contains(s) {
                    out.push((lv.beta, s.clone()));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tower serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::s;

    fn cfg(levels: &[u64]) -> TowerConfig {
        TowerConfig {
            alpha: Notation::OMEGA,
            top: StagedTree::total(Tree::full(3, 3)),
            levels: levels.iter().map(|&n| Notation::fin(n)).collect(),
            horizon: 200,
            depth: 3,
            max_branch: 3,
            max_depth: 2,
        }
    }

    #[test]
    fn odd_levels_are_rejected() {
        assert!(matches!(build_tower(&cfg(&[1])), Err(TowerError::BadLevel(_))));
    }

    #[test]
    fn from_equals_to_is_identity() {
        let h = build_tower(&cfg(&[0, 2])).unwrap();
        let x = s![2, 1];
        assert_eq!(h.gamma_compose(Notation::fin(2), Notation::fin(2), &x).unwrap(), GammaValue::Defined(x));
        assert!(h.gamma_compose(Notation::fin(0), Notation::fin(2), &s![]).is_err());
    }

    #[test]
    fn copy_lengths_on_omega() {
        let h = build_tower(&cfg(&[0, 2, 4])).unwrap();
        for n in [0u64, 2, 4] {
            assert_eq!(h.levels[&Notation::fin(n)].copy.copylen, n / 2);
        }
        assert!(h.levels[&Notation::fin(4)].copy_only);
        assert_eq!(h.levels[&Notation::fin(2)].instances.len(), 3);
    }
}
