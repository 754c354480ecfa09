//! Finite trees of strings, f-trees, and the operators on them.
//!
//! Every tree carries an explicit depth bound; "paths" are members whose
//! length reaches the bound.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strings_codes::FinString;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("member set is not closed under prefixes: {0} missing")]
    NotClosed(FinString),
    #[error("member {0} is longer than the depth bound {1}")]
    TooDeep(FinString, usize),
    #[error("{0} is not a member")]
    NotMember(FinString),
    #[error("level {l} exceeds majorizer length {g}")]
    LevelBeyondMajorizer { l: usize, g: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tree {
    members: BTreeSet<FinString>,
    depth_bound: usize,
}

pub fn is_tree(members: &BTreeSet<FinString>) -> bool {
    first_gap(members).is_none()
}

fn first_gap(members: &BTreeSet<FinString>) -> Option<FinString> {
    members
        .iter()
        .filter_map(|s| s.pred())
        .find(|p| !members.contains(p))
}

impl Tree {
    pub fn new(members: BTreeSet<FinString>, depth_bound: usize) -> Result<Tree, TreeError> {
        if let Some(gap) = first_gap(&members) {
            return Err(TreeError::NotClosed(gap));
        }
        if let Some(s) = members.iter().find(|s| s.len() > depth_bound) {
            return Err(TreeError::TooDeep(s.clone(), depth_bound));
        }
        Ok(Tree { members, depth_bound })
    }

    pub fn empty(depth_bound: usize) -> Tree {
        Tree { members: BTreeSet::new(), depth_bound }
    }

    /// Downward closure of the given strings.
    pub fn closure<I: IntoIterator<Item = FinString>>(strings: I, depth_bound: usize) -> Tree {
        let mut members = BTreeSet::new();
        for s in strings {
            assert!(s.len() <= depth_bound, "{s} deeper than bound {depth_bound}");
            for p in s.prefixes() {
                members.insert(p);
            }
        }
        Tree { members, depth_bound }
    }

    /// All strings of length ≤ depth with entries < branching.
    pub fn full(branching: u64, depth: usize) -> Tree {
        let members = if branching == 0 {
            std::iter::once(FinString::empty()).collect()
        } else {
            crate::strings_codes::all_strings(depth, branching - 1).into_iter().collect()
        };
        Tree { members, depth_bound: depth }
    }

    pub fn members(&self) -> &BTreeSet<FinString> {
        &self.members
    }

    pub fn depth_bound(&self) -> usize {
        self.depth_bound
    }

    pub fn contains(&self, s: &FinString) -> bool {
        self.members.contains(s)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// Adds `s` (whose predecessor must already be a member).
    pub fn insert(&mut self, s: FinString) -> Result<bool, TreeError> {
        if let Some(p) = s.pred() {
            if !self.members.contains(&p) {
                return Err(TreeError::NotClosed(p));
            }
        }
        if s.len() > self.depth_bound {
            self.depth_bound = s.len();
        }
        Ok(self.members.insert(s))
    }

    pub fn children<'a>(&'a self, s: &'a FinString) -> impl Iterator<Item = &'a FinString> + 'a {
        let n = s.len();
        self.members
            .range(s.clone()..)
            .take_while(move |t| s.is_prefix_of(t))
            .filter(move |t| t.len() == n + 1)
    }

    pub fn is_terminal(&self, s: &FinString) -> bool {
        self.contains(s) && self.children(s).next().is_none()
    }

    pub fn is_branching(&self, s: &FinString) -> bool {
        self.children(s).nth(1).is_some()
    }

    /// Members extending `s`, including `s` itself.
    pub fn extensions<'a>(&'a self, s: &'a FinString) -> impl Iterator<Item = &'a FinString> + 'a {
        self.members.range(s.clone()..).take_while(move |t| s.is_prefix_of(t))
    }

    pub fn level(&self, k: usize) -> impl Iterator<Item = &FinString> {
        self.members.iter().filter(move |s| s.len() == k)
    }

    /// Surrogate for `[T]`: members at the depth bound.
    pub fn paths(&self) -> impl Iterator<Item = &FinString> {
        self.level(self.depth_bound)
    }

    /// `T↾l`
    pub fn restrict(&self, l: usize) -> Tree {
        Tree {
            members: self.members.iter().filter(|s| s.len() <= l).cloned().collect(),
            depth_bound: l.min(self.depth_bound),
        }
    }

    /// `T/σ = {τ : σ⌢τ ∈ T}`
    pub fn relocate(&self, sigma: &FinString) -> Tree {
        let n = sigma.len();
        Tree {
            members: self
                .extensions(sigma)
                .map(|t| FinString(t.0[n..].to_vec()))
                .collect(),
            depth_bound: self.depth_bound.saturating_sub(n),
        }
    }

    /// `σ∗T`: prefixes of σ together with σ⌢τ for τ ∈ T.
    pub fn prepend(&self, sigma: &FinString) -> Tree {
        let mut members: BTreeSet<FinString> = if self.members.is_empty() {
            BTreeSet::new()
        } else {
            sigma.prefixes().collect()
        };
        members.extend(self.members.iter().map(|t| sigma.concat(t)));
        Tree { members, depth_bound: self.depth_bound + sigma.len() }
    }

    /// `σ∗(T/σ)`
    pub fn subtree_above(&self, sigma: &FinString) -> Result<Tree, TreeError> {
        if !self.contains(sigma) {
            return Err(TreeError::NotMember(sigma.clone()));
        }
        let mut t = self.relocate(sigma).prepend(sigma);
        t.depth_bound = self.depth_bound;
        Ok(t)
    }

    /// Members with an extension of length exactly `d`.
    pub fn prune_bounded(&self, d: usize) -> Tree {
        let mut members = BTreeSet::new();
        for t in self.level(d) {
            for p in t.prefixes() {
                members.insert(p);
            }
        }
        Tree { members, depth_bound: self.depth_bound }
    }

    /// One member per line, entries separated by spaces, in sorted order.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.members {
            out.push_str(&s.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str, depth_bound: usize) -> Result<Tree, TreeError> {
        let mut members = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let s = FinString::parse_line(line)
                .map_err(|e| TreeError::Parse { line: i + 1, msg: e.to_string() })?;
            members.insert(s);
        }
        Tree::new(members, depth_bound)
    }
}

/// Majorizer-guided path computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MajorizerResult {
    Found(FinString),
    Inconclusive,
}

/// Thins `t` by pointwise `≤ g` (positions past `|g|` are unconstrained) and
/// looks for a level all of whose members agree up to length `l`.
pub fn compute_from_majorizer(
    t: &Tree,
    g: &FinString,
    l: usize,
) -> Result<MajorizerResult, TreeError> {
    if l > g.len() {
        return Err(TreeError::LevelBeyondMajorizer { l, g: g.len() });
    }
    let majorized = |s: &FinString| s.0.iter().zip(&g.0).all(|(a, b)| a <= b);
    let thinned: Vec<&FinString> = t.members.iter().filter(|s| majorized(s)).collect();
    for k in l..=t.depth_bound {
        let mut level = thinned.iter().filter(|s| s.len() == k);
        let Some(first) = level.next() else { continue };
        let sigma = first.restrict(l);
        if level.all(|s| sigma.is_prefix_of(s)) {
            return Ok(MajorizerResult::Found(sigma));
        }
    }
    Ok(MajorizerResult::Inconclusive)
}

pub type FTree = BTreeMap<FinString, FinString>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FTreeViolation {
    /// `child` is in the domain but its predecessor is not.
    DomainNotClosed { parent: FinString, child: FinString },
    /// The child's image does not properly extend the parent's image.
    NotExtending { parent: FinString, child: FinString },
    /// Sibling images are compatible.
    SiblingsCompatible { left: FinString, right: FinString },
    /// Branching values of siblings are not increasing with the sibling index.
    BranchingNotMonotone { left: FinString, right: FinString },
}

impl FTreeViolation {
    pub fn witnesses(&self) -> (&FinString, &FinString) {
        match self {
            FTreeViolation::DomainNotClosed { parent, child }
            | FTreeViolation::NotExtending { parent, child } => (parent, child),
            FTreeViolation::SiblingsCompatible { left, right }
            | FTreeViolation::BranchingNotMonotone { left, right } => (left, right),
        }
    }
}

pub fn ftree_check(f: &FTree) -> Vec<FTreeViolation> {
    let mut out = Vec::new();
    let mut by_parent: BTreeMap<FinString, Vec<(&FinString, &FinString)>> = BTreeMap::new();
    for (sigma, image) in f {
        let Some(parent) = sigma.pred() else { continue };
        let Some(pimg) = f.get(&parent) else {
            out.push(FTreeViolation::DomainNotClosed { parent, child: sigma.clone() });
            continue;
        };
        if !(pimg.is_prefix_of(image) && image.len() > pimg.len()) {
            out.push(FTreeViolation::NotExtending { parent: parent.clone(), child: sigma.clone() });
        }
        by_parent.entry(parent).or_default().push((sigma, image));
    }
    for (parent, kids) in &by_parent {
        let at = f[parent].len();
        for (i, (a, ia)) in kids.iter().enumerate() {
            for (b, ib) in &kids[i + 1..] {
                // keys iterate in ≤lex order, so `a` has the smaller last entry
                if ia.compatible(ib) {
                    out.push(FTreeViolation::SiblingsCompatible {
                        left: (*a).clone(),
                        right: (*b).clone(),
                    });
                    continue;
                }
                match (ia.get(at), ib.get(at)) {
                    (Some(x), Some(y)) if x < y => {}
                    _ => out.push(FTreeViolation::BranchingNotMonotone {
                        left: (*a).clone(),
                        right: (*b).clone(),
                    }),
                }
            }
        }
    }
    out
}

/// The tree generated by the range of `f`.
pub fn range_tree(f: &FTree) -> Tree {
    let depth = f.values().map(|s| s.len()).max().unwrap_or(0);
    Tree::closure(f.values().cloned(), depth)
}

/// `(F∘G)(σ) = F(G(σ))` where both are defined.
pub fn compose(f: &FTree, g: &FTree) -> FTree {
    g.iter()
        .filter_map(|(k, v)| f.get(v).map(|w| (k.clone(), w.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::s;

    fn tree(strings: &[FinString], d: usize) -> Tree {
        Tree::new(strings.iter().cloned().collect(), d).unwrap()
    }

    #[test]
    fn construction_rejects_gaps() {
        let m: BTreeSet<_> = [s![], s![0, 0]].into_iter().collect();
        assert_eq!(Tree::new(m.clone(), 3), Err(TreeError::NotClosed(s![0])));
        assert!(!is_tree(&m));
        let m: BTreeSet<_> = [s![], s![0]].into_iter().collect();
        assert!(matches!(Tree::new(m, 0), Err(TreeError::TooDeep(..))));
    }

    #[test]
    fn restrict_relocate_subtree() {
        let t = tree(&[s![], s![0], s![0, 0]], 2);
        assert_eq!(t.restrict(1).members(), tree(&[s![], s![0]], 1).members());

        let t = tree(&[s![], s![1], s![1, 2]], 2);
        assert_eq!(t.relocate(&s![1]).members(), tree(&[s![], s![2]], 1).members());

        let t = tree(&[s![], s![0], s![1], s![1, 2]], 2);
        let sub = t.subtree_above(&s![1]).unwrap();
        assert_eq!(sub.members(), tree(&[s![], s![1], s![1, 2]], 2).members());
        assert_eq!(t.subtree_above(&s![2]), Err(TreeError::NotMember(s![2])));
    }

    #[test]
    fn prune_examples() {
        let t = tree(&[s![], s![0], s![1], s![0, 0]], 2);
        assert_eq!(t.prune_bounded(2).members(), tree(&[s![], s![0], s![0, 0]], 2).members());
        let full = Tree::full(2, 3);
        assert_eq!(full.prune_bounded(3), full);
        let t = tree(&[s![], s![2]], 2);
        assert!(t.prune_bounded(2).is_empty());
    }

    #[test]
    fn children_and_levels() {
        let full = Tree::full(3, 2);
        assert_eq!(full.len(), 1 + 3 + 9);
        let kids: Vec<_> = full.children(&s![1]).cloned().collect();
        assert_eq!(kids, vec![s![1, 0], s![1, 1], s![1, 2]]);
        assert!(full.is_terminal(&s![1, 1]));
        assert_eq!(full.paths().count(), 9);
    }

    #[test]
    fn lines_round_trip() {
        let full = Tree::full(2, 2);
        let text = full.to_lines();
        assert!(text.starts_with("\n0\n0 0\n"));
        assert_eq!(Tree::from_lines(&text, 2).unwrap(), full);
    }

    #[test]
    fn majorizer_examples() {
        let t = Tree::closure([FinString::repeat(0, 5)], 5);
        assert_eq!(
            compute_from_majorizer(&t, &s![9, 9, 9], 2),
            Ok(MajorizerResult::Found(s![0, 0]))
        );
        let t = Tree::closure([s![0, 1, 2, 3], s![0, 9, 9], s![0, 1, 9], s![7]], 4);
        assert_eq!(
            compute_from_majorizer(&t, &s![0, 1, 2, 3], 3),
            Ok(MajorizerResult::Found(s![0, 1, 2]))
        );
        let t = Tree::full(2, 3);
        assert_eq!(compute_from_majorizer(&t, &s![1, 1, 1], 1), Ok(MajorizerResult::Inconclusive));
        assert!(compute_from_majorizer(&t, &s![1], 2).is_err());
    }

    fn fmap(pairs: &[(FinString, FinString)]) -> FTree {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn ftree_examples() {
        let id = fmap(&[(s![], s![]), (s![0], s![0]), (s![1], s![1])]);
        assert!(ftree_check(&id).is_empty());

        let bad = fmap(&[(s![], s![]), (s![0], s![5]), (s![1], s![5, 1])]);
        assert_eq!(
            ftree_check(&bad),
            vec![FTreeViolation::SiblingsCompatible { left: s![0], right: s![1] }]
        );

        let bad = fmap(&[(s![], s![]), (s![0], s![7]), (s![1], s![3])]);
        assert_eq!(
            ftree_check(&bad),
            vec![FTreeViolation::BranchingNotMonotone { left: s![0], right: s![1] }]
        );

        let bad = fmap(&[(s![0], s![1])]);
        assert!(matches!(ftree_check(&bad)[0], FTreeViolation::DomainNotClosed { .. }));
    }

    #[test]
    fn range_is_tree() {
        let f = fmap(&[(s![], s![2]), (s![0], s![2, 0, 4]), (s![1], s![2, 3])]);
        assert!(ftree_check(&f).is_empty());
        let r = range_tree(&f);
        assert!(is_tree(r.members()));
        assert!(r.contains(&s![2, 0]));
    }
}
