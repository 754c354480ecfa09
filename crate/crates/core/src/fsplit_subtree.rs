//! Splitting subtree selection: from an f-tree `T` and a splitting relation,
//! build `V` so that sibling images of `T∘V` pairwise split.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strings_codes::{code_sat, FinString};
use crate::trees::FTree;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsplitError {
    #[error("no splitting pair above {tau}")]
    NoSplit { tau: FinString },
    #[error("at {sigma}: option sides have {sizes:?} members, {threshold} needed")]
    BelowThreshold { sigma: FinString, sizes: [usize; 2], threshold: usize },
    #[error("no options left above {sigma}")]
    Exhausted { sigma: FinString },
    #[error("source tree has no image at {0}")]
    Undefined(FinString),
}

/// The tree being thinned. `Full` is the identity on every string of the
/// given shape, left implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Full { branching: u64, depth: usize },
    Table { map: FTree },
}

impl Source {
    pub fn image(&self, x: &FinString) -> Option<FinString> {
        match self {
            Source::Full { branching, depth } => {
                (x.len() <= *depth && x.entries().iter().all(|v| v < branching)).then(|| x.clone())
            }
            Source::Table { map } => map.get(x).cloned(),
        }
    }

    fn children(&self, x: &FinString) -> Vec<FinString> {
        match self {
            Source::Full { branching, depth } => {
                if x.len() < *depth {
                    (0..*branching).map(|m| x.push(m)).collect()
                } else {
                    vec![]
                }
            }
            Source::Table { map } => map
                .range(x.clone()..)
                .take_while(|(k, _)| x.is_prefix_of(k))
                .filter(|(k, _)| k.len() == x.len() + 1)
                .map(|(k, _)| k.clone())
                .collect(),
        }
    }

    /// Domain strings extending `x` by at most `reach` entries, shortlex.
    fn extensions(&self, x: &FinString, reach: usize) -> Vec<FinString> {
        let mut out = vec![];
        let mut q = VecDeque::from([x.clone()]);
        while let Some(y) = q.pop_front() {
            if y.len() < x.len() + reach {
                q.extend(self.children(&y));
            }
            out.push(y);
        }
        out
    }
}

pub trait SplitOracle {
    /// Symmetric, and false on equal arguments.
    fn splits(&self, a: &FinString, b: &FinString) -> bool;

    /// Domain extensions `τ₀, τ₁ ⊒ τ` whose images split; the first pair in
    /// shortlex order within `reach` extra entries.
    fn find_split(&self, t: &Source, tau: &FinString, reach: usize) -> Option<(FinString, FinString)> {
        let ext: Vec<(FinString, FinString)> =
            t.extensions(tau, reach).into_iter().filter_map(|x| t.image(&x).map(|i| (x, i))).collect();
        for (i, (a, ia)) in ext.iter().enumerate() {
            for (b, ib) in &ext[i + 1..] {
                if self.splits(ia, ib) {
                    return Some((a.clone(), b.clone()));
                }
            }
        }
        None
    }

    /// For each `u`, the shortlex-least ⊑-minimal extension whose image
    /// splits with `T(τᵢ)`; then the least side with at least `threshold`
    /// members, with its option set.
    fn side_classify(
        &self,
        t: &Source,
        us: &[FinString],
        sides: [&FinString; 2],
        threshold: usize,
        reach: usize,
    ) -> ([usize; 2], Option<(usize, Vec<FinString>)>) {
        let mut sets: [Vec<FinString>; 2] = [vec![], vec![]];
        for (i, side) in sides.iter().enumerate() {
            let Some(target) = t.image(side) else { continue };
            for u in us {
                let hit = t
                    .extensions(u, reach)
                    .into_iter()
                    .find(|x| t.image(x).is_some_and(|img| self.splits(&img, &target)));
                sets[i].extend(hit);
            }
        }
        let sizes = [sets[0].len(), sets[1].len()];
        let pick = (0..2).find(|&i| sizes[i] >= threshold).map(|i| (i, std::mem::take(&mut sets[i])));
        (sizes, pick)
    }
}

/// Bundled relations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Catalog {
    /// any two distinct strings split
    Direct,
    /// strings split when they branch apart on entries {0, 1}, or when
    /// neither carries a 1 past the branch point
    OneSided,
    /// strings split when their entries mod `modulus` are incompatible
    Residue { modulus: u64 },
}

impl Catalog {
    pub fn all() -> Vec<(&'static str, Catalog)> {
        vec![
            ("direct", Catalog::Direct),
            ("one-sided", Catalog::OneSided),
            ("parity", Catalog::Residue { modulus: 2 }),
            ("mod-3", Catalog::Residue { modulus: 3 }),
        ]
    }
}

fn residues(a: &FinString, m: u64) -> FinString {
    FinString(a.entries().iter().map(|v| v % m).collect())
}

impl SplitOracle for Catalog {
    fn splits(&self, a: &FinString, b: &FinString) -> bool {
        match self {
            Catalog::Direct => a != b,
            Catalog::OneSided => {
                if !a.incompatible(b) {
                    return false;
                }
                let k = a.common_prefix_len(b);
                let (x, y) = (a.get(k).unwrap(), b.get(k).unwrap());
                if x.min(y) == 0 && x.max(y) == 1 {
                    return true;
                }
                let clean = |s: &FinString| s.entries()[k + 1..].iter().all(|&v| v != 1);
                clean(a) && clean(b)
            }
            Catalog::Residue { modulus } => residues(a, *modulus).incompatible(&residues(b, *modulus)),
        }
    }
}

fn d_reach() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsplitConfig {
    pub depth: usize,
    pub width: u64,
    /// fixed surrogate for "infinitely many options"; by default the number
    /// of siblings still to be placed
    #[serde(default)]
    pub threshold: Option<usize>,
    /// how far searches look above a string
    #[serde(default = "d_reach")]
    pub reach: usize,
}

/// One placement step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsplitStep {
    pub node: FinString,
    pub tau: FinString,
    pub pair: (FinString, FinString),
    pub sizes: [usize; 2],
    pub side: usize,
    pub value: FinString,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsplitResult {
    pub v: FTree,
    pub t_hat: FTree,
    pub steps: Vec<FsplitStep>,
}

pub fn build_splitting_subtree<O: SplitOracle + ?Sized>(
    t: &Source,
    oracle: &O,
    cfg: &FsplitConfig,
) -> Result<FsplitResult, FsplitError> {
    let mut nodes = crate::strings_codes::all_strings(cfg.depth, cfg.width.saturating_sub(1));
    nodes.sort_by_key(|x| (code_sat(x), x.clone()));
    let mut v = FTree::new();
    let mut options: BTreeMap<FinString, Vec<FinString>> = BTreeMap::new();
    let mut steps = vec![];
    let seed = |v: &FinString| t.children(v);
    for node in nodes {
        let Some(n) = node.last() else {
            v.insert(node.clone(), FinString::empty());
            options.insert(node, seed(&FinString::empty()));
            continue;
        };
        let parent = node.pred().unwrap();
        let opts = options.get_mut(&parent).unwrap();
        if opts.is_empty() {
            return Err(FsplitError::Exhausted { sigma: parent });
        }
        // lexicographically least option
        let at = (0..opts.len()).min_by(|&a, &b| opts[a].cmp(&opts[b])).unwrap();
        let tau = opts.remove(at);
        let us = std::mem::take(opts);
        let (t0, t1) = oracle.find_split(t, &tau, cfg.reach).ok_or(FsplitError::NoSplit { tau: tau.clone() })?;
        let threshold = cfg.threshold.unwrap_or((cfg.width - n - 1) as usize);
        let (sizes, pick) = oracle.side_classify(t, &us, [&t0, &t1], threshold, cfg.reach);
        let Some((side, rest)) = pick else {
            return Err(FsplitError::BelowThreshold { sigma: node, sizes, threshold });
        };
        let value = if side == 0 { t0.clone() } else { t1.clone() };
        *options.get_mut(&parent).unwrap() = rest;
        options.insert(node.clone(), seed(&value));
        steps.push(FsplitStep { node: node.clone(), tau, pair: (t0, t1), sizes, side, value: value.clone() });
        v.insert(node, value);
    }
    let mut t_hat = FTree::new();
    for (k, x) in &v {
        t_hat.insert(k.clone(), t.image(x).ok_or_else(|| FsplitError::Undefined(x.clone()))?);
    }
    Ok(FsplitResult { v, t_hat, steps })
}

/// Sibling pairs of `T̂` whose images fail to split.
pub fn unsplit_siblings<O: SplitOracle + ?Sized>(t_hat: &FTree, oracle: &O) -> Vec<(FinString, FinString)> {
    let mut out = vec![];
    for (a, ia) in t_hat {
        for (b, ib) in t_hat.range(a.clone()..).skip(1) {
            if a.len() == b.len() && !a.is_empty() && a.pred() == b.pred() && !oracle.splits(ia, ib) {
                out.push((a.clone(), b.clone()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::s;

    fn full(depth: usize) -> Source {
        Source::Full { branching: 4, depth }
    }

    #[test]
    fn catalog_relations_are_symmetric_and_irreflexive() {
        let xs = crate::strings_codes::all_strings(3, 2);
        for (_, o) in Catalog::all() {
            for a in &xs {
                assert!(!o.splits(a, a));
                for b in &xs {
                    assert_eq!(o.splits(a, b), o.splits(b, a));
                }
            }
        }
    }

    #[test]
    fn direct_takes_the_options_themselves() {
        let cfg = FsplitConfig { depth: 2, width: 3, threshold: None, reach: 2 };
        let r = build_splitting_subtree(&full(4), &Catalog::Direct, &cfg).unwrap();
        for st in &r.steps {
            assert_eq!(st.value, st.tau);
        }
        assert_eq!(r.v[&s![1]], s![1]);
    }

    #[test]
    fn one_sided_always_takes_side_zero() {
        let cfg = FsplitConfig { depth: 2, width: 4, threshold: None, reach: 2 };
        let r = build_splitting_subtree(&full(6), &Catalog::OneSided, &cfg).unwrap();
        assert!(r.steps.iter().all(|st| st.side == 0));
        assert!(r.steps.iter().any(|st| st.sizes[1] < st.sizes[0]));
    }

    #[test]
    fn too_few_options_is_reported() {
        let cfg = FsplitConfig { depth: 1, width: 6, threshold: None, reach: 1 };
        let err = build_splitting_subtree(&full(3), &Catalog::Direct, &cfg).unwrap_err();
        assert!(matches!(err, FsplitError::BelowThreshold { .. } | FsplitError::Exhausted { .. }));
    }
}
