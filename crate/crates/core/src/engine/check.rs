//! Replays a trace and re-verifies the construction's contracts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{ModuleKind, SetEvent, TraceRecord};
use crate::strings_codes::{code_sat, FinString};
use crate::trees::{ftree_check, FTree};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    pub stage: u64,
    pub node: Option<usize>,
    pub detail: String,
}

fn by_stage(trace: &[TraceRecord]) -> BTreeMap<u64, Vec<&TraceRecord>> {
    let mut m: BTreeMap<u64, Vec<&TraceRecord>> = BTreeMap::new();
    for r in trace {
        m.entry(r.stage).or_default().push(r);
    }
    m
}

/// `ĥT_s` for every recorded stage: Mout of each visited node whose parent
/// runs an H module. Once anything else is defined, `ĥT_s(ε)` is the
/// root's Mout.
pub fn ht_tables(trace: &[TraceRecord]) -> BTreeMap<u64, FTree> {
    let mut modules: HashMap<usize, ModuleKind> = HashMap::new();
    by_stage(trace).into_iter().map(|(s, recs)| (s, stage_ht(&mut modules, &recs).0)).collect()
}

/// `ĥT_s` from one stage's records, with the node defining each entry.
fn stage_ht(
    modules: &mut HashMap<usize, ModuleKind>,
    recs: &[&TraceRecord],
) -> (FTree, Vec<(FinString, usize)>) {
    let mut table = FTree::new();
    let mut owners = Vec::new();
    let mut root = None;
    for r in recs {
        modules.entry(r.node).or_insert_with(|| r.module.clone());
        let Some(m) = &r.mout else { continue };
        match r.parent {
            None => root = Some((m.clone(), r.node)),
            Some(p) => {
                if let Some(ModuleKind::H { sigma }) = modules.get(&p) {
                    table.insert(sigma.clone(), m.clone());
                    owners.push((sigma.clone(), r.node));
                }
            }
        }
    }
    if let (false, Some((m, id))) = (table.is_empty(), root) {
        table.insert(FinString::empty(), m);
        owners.push((FinString::empty(), id));
    }
    (table, owners)
}

struct Report(Vec<Violation>);

impl Report {
    fn add(&mut self, condition: &str, stage: u64, node: Option<usize>, detail: String) {
        self.0.push(Violation { condition: condition.into(), stage, node, detail });
    }
}

/// Every violated contract, in stage order. Empty on a clean run.
pub fn check_conditions(trace: &[TraceRecord]) -> Vec<Violation> {
    let mut rep = Report(Vec::new());
    // member -> stage of enumeration; ε is there from the start
    let mut tree: HashMap<FinString, u64> = HashMap::from([(FinString::empty(), 0)]);
    let mut mout: HashMap<usize, FinString> = HashMap::new();
    let mut kvals: HashMap<usize, BTreeMap<u64, (u64, FinString)>> = HashMap::new();
    let mut modules: HashMap<usize, ModuleKind> = HashMap::new();
    // visited children not yet passed on the left, per parent, by outcome
    let mut live: HashMap<usize, BTreeMap<u64, Vec<usize>>> = HashMap::new();
    let mut dead_since: HashMap<usize, u64> = HashMap::new();
    let mut seen: BTreeSet<usize> = BTreeSet::new();

    for (s, recs) in by_stage(trace) {
        let in_ts = |tree: &HashMap<FinString, u64>, x: &FinString| {
            tree.get(x).is_some_and(|&t| t < s || x.is_empty())
        };
        for r in &recs {
            for x in &r.enumerated {
                let pred_ok = x.pred().is_some_and(|p| in_ts(&tree, &p));
                if !pred_ok {
                    rep.add("tree", s, Some(r.node), format!("{x} enumerated without its predecessor in T_s"));
                }
                if code_sat(x) <= s {
                    rep.add("deadline", s, Some(r.node), format!("{x} enumerated at stage {s} past its code"));
                }
                match &r.mout {
                    Some(m) if m.is_prefix_of(x) && m != x => {}
                    _ => rep.add(
                        "mod-separation",
                        s,
                        Some(r.node),
                        format!("{x} does not properly extend the node's Mout"),
                    ),
                }
                tree.entry(x.clone()).or_insert(s);
            }
        }

        // no-reinit
        let mut least: HashMap<usize, u64> = HashMap::new();
        for r in &recs {
            if let (Some(p), Some(o)) = (r.parent, r.edge) {
                let e = least.entry(p).or_insert(o);
                *e = (*e).min(o);
            }
        }
        for r in &recs {
            if let Some(&d) = dead_since.get(&r.node) {
                rep.add(
                    "no-reinit",
                    s,
                    Some(r.node),
                    format!("visited again after the path passed to its left at stage {d}"),
                );
            }
        }
        for (p, lo) in &least {
            if let Some(kids) = live.get_mut(p) {
                let right = kids.split_off(&(lo + 1));
                for (_, ids) in right {
                    for id in ids {
                        dead_since.entry(id).or_insert(s);
                    }
                }
            }
        }
        for r in &recs {
            if let (Some(p), Some(o)) = (r.parent, r.edge) {
                if !seen.contains(&r.node) {
                    live.entry(p).or_default().entry(o).or_default().push(r.node);
                }
            }
            seen.insert(r.node);
        }

        // output
        for r in &recs {
            modules.entry(r.node).or_insert_with(|| r.module.clone());
            match (&r.mout, mout.get(&r.node)) {
                (None, _) => rep.add("output", s, Some(r.node), "visited without Mout".into()),
                (Some(m), Some(k)) if m != k => {
                    rep.add("output", s, Some(r.node), format!("Mout changed from {k} to {m}"))
                }
                (Some(m), None) => {
                    mout.insert(r.node, m.clone());
                }
                _ => {}
            }
            if r.visit == 0 {
                if let Some(m) = &r.mout {
                    if !tree.contains_key(m) {
                        rep.add("output", s, Some(r.node), format!("Mout {m} not in T_(s+1)"));
                    }
                }
            }
            if let (Some(p), Some(m)) = (r.parent, &r.mout) {
                if let Some(pm) = mout.get(&p) {
                    if !pm.is_prefix_of(m) {
                        rep.add("output", s, Some(r.node), format!("Mout {m} does not extend parent Mout {pm}"));
                    }
                }
            }
            for ev in &r.sets {
                match ev {
                    SetEvent::Mout { node, value } => match mout.get(node) {
                        Some(old) if old != value => rep.add(
                            "output",
                            s,
                            Some(*node),
                            format!("Mout reset from {old} to {value}"),
                        ),
                        Some(_) => {}
                        None => {
                            mout.insert(*node, value.clone());
                        }
                    },
                    SetEvent::Mext { node, n, value } => {
                        if !tree.contains_key(value) {
                            rep.add("output", s, Some(*node), format!("Mext {n} = {value} not in T_(s+1)"));
                        }
                        let Some(base) = mout.get(node) else {
                            rep.add("output", s, Some(*node), format!("Mext {n} set before Mout"));
                            continue;
                        };
                        if !(base.is_prefix_of(value) && value.len() > base.len()) {
                            rep.add("output", s, Some(*node), format!("Mext {n} = {value} does not extend Mout {base}"));
                            continue;
                        }
                        let k = value.get(base.len()).unwrap();
                        let ks = kvals.entry(*node).or_default();
                        if let Some((_, old)) = ks.get(n) {
                            if old != value {
                                rep.add("output", s, Some(*node), format!("Mext {n} changed from {old} to {value}"));
                            }
                        }
                        let below = ks.range(..*n).next_back().map(|(_, v)| v.0);
                        let above = ks.range(n + 1..).next().map(|(_, v)| v.0);
                        if below.is_some_and(|b| b >= k) || above.is_some_and(|a| a <= k) {
                            rep.add("output", s, Some(*node), format!("branch value {k} of Mext {n} not monotone"));
                        }
                        ks.insert(*n, (k, value.clone()));
                    }
                }
            }
        }
        for r in &recs {
            if let ModuleKind::S { .. } = r.module {
                let have = kvals.get(&r.node).map_or(0, |m| m.len() as u64);
                if have <= r.visit {
                    rep.add(
                        "output",
                        s,
                        Some(r.node),
                        format!("Mext {} missing at the end of the stage", r.visit),
                    );
                }
            }
        }

        // ĥT_s
        let (ht, owners) = stage_ht(&mut modules, &recs);
        let mut once = BTreeSet::new();
        for (sigma, node) in owners {
            let m = &ht[&sigma];
            if !once.insert(sigma.clone()) {
                rep.add("hT-unique", s, Some(node), format!("two nodes define hT({sigma})"));
            }
            if !tree.contains_key(m) {
                rep.add("hT-range", s, Some(node), format!("hT({sigma}) = {m} outside T"));
            }
            if m.len() < sigma.len() {
                rep.add("hT-length", s, Some(node), format!("|hT({sigma})| < |{sigma}|"));
            }
        }
        for v in ftree_check(&ht) {
            let (a, b) = v.witnesses();
            rep.add("hT-ftree", s, None, format!("{v:?} at {a}, {b}"));
        }
    }
    rep.0
}
