use std::collections::BTreeSet;

use ptree_core::engine::{
    check_conditions, ht_tables, run_engine, scenarios, successors, trace_from_jsonl, trace_to_jsonl,
    Engine, EngineConfig, ModuleKind, Outcome, SetEvent, Successors, TraceRecord, ROOT,
};
use ptree_core::s;
use ptree_core::strings_codes::FinString;

fn run(name: &str, horizon: u64) -> Engine {
    let mut cfg = scenarios::bundled(name).unwrap();
    cfg.horizon = horizon;
    run_engine(&cfg).unwrap()
}

fn last_stage(e: &Engine) -> Vec<&TraceRecord> {
    let s = e.stage() - 1;
    e.trace().iter().filter(|r| r.stage == s).collect()
}

#[test]
fn stage_zero_visits_only_the_root() {
    let mut e = Engine::new(EngineConfig::default()).unwrap();
    e.run_stage().unwrap();
    assert_eq!(e.tpath(0), vec![ROOT]);
    assert_eq!(e.trace()[0].outcome, None);
    assert!(e.ht().is_empty());
}

#[test]
fn module_assignment_examples() {
    let e = run("full-S-no-splits", 12);
    assert_eq!(e.node(ROOT).unwrap().module, ModuleKind::HPlus { sigma: s![] });
    let first_child = (1..e.node_count()).find(|&i| e.node(i).unwrap().parent == Some(ROOT)).unwrap();
    assert_eq!(e.node(first_child).unwrap().module, ModuleKind::S { n: 0, e: 0 });
    // the ⟨0⟩-successor of the first branching module
    let branch = (0..e.node_count())
        .find(|&i| e.node(i).unwrap().module == ModuleKind::S { n: 0, e: -1 })
        .unwrap();
    let left = (0..e.node_count())
        .find(|&i| {
            let n = e.node(i).unwrap();
            n.parent == Some(branch) && n.sigma == s![0]
        })
        .unwrap();
    assert_eq!(e.node(left).unwrap().module, ModuleKind::P { e: 0 });
}

#[test]
fn module_order_along_a_branch() {
    let e = run("splitting-rich", 60);
    let h = (0..e.node_count())
        .find(|&i| e.node(i).unwrap().module == ModuleKind::H { sigma: s![0, 0] })
        .expect("H module for ⟨0,0⟩ reached");
    let mut kinds = Vec::new();
    let mut c = Some(h);
    while let Some(i) = c {
        let n = e.node(i).unwrap();
        if n.sigma != s![0, 0] {
            break;
        }
        kinds.push(n.module.to_string());
        c = n.parent;
    }
    kinds.reverse();
    assert_eq!(kinds, vec!["P[1]", "L[1]", "L[0]^0", "H⟨0,0⟩"]);
}

#[test]
fn successor_sets() {
    assert_eq!(successors(&ModuleKind::P { e: 3 }), Successors::Finite(vec![(0, None), (1, None)]));
    assert_eq!(
        successors(&ModuleKind::S { n: 2, e: -1 }),
        Successors::Finite(vec![(0, Some(2)), (0, None)])
    );
    assert_eq!(successors(&ModuleKind::Link { m: 0, i: 1 }), Successors::Finite(vec![(0, None)]));
    assert!(matches!(successors(&ModuleKind::S { n: 0, e: 0 }), Successors::Family(_)));
}

#[test]
fn outcome_numbering_is_injective_on_a_grid() {
    let mut seen = BTreeSet::new();
    seen.insert(Outcome::Flat.number().unwrap());
    seen.insert(Outcome::Bot0.number().unwrap());
    for n in 0..30 {
        assert!(seen.insert(Outcome::Bot1 { n }.number().unwrap()));
        for m in 0..30 {
            assert!(seen.insert(Outcome::Div { n, m }.number().unwrap()));
        }
    }
    let mut h = BTreeSet::new();
    for i in 0..2 {
        for n in 0..30 {
            for m in 0..30 {
                assert!(h.insert(Outcome::H { i, n, m }.number().unwrap()));
            }
        }
    }
}

#[test]
fn no_splittings_gives_flat_outcomes() {
    let e = run("full-S-no-splits", 200);
    let mut count = 0;
    for r in last_stage(&e) {
        if let ModuleKind::S { e: k, .. } = r.module {
            if k >= 0 && r.visit > 0 {
                assert_eq!(r.outcome, Some(Outcome::Flat), "node {}", r.node);
                count += 1;
            }
        }
    }
    assert!(count > 0);
    assert!(check_conditions(e.trace()).is_empty());
}

#[test]
fn oscillating_node_never_settles() {
    let e = run("oscillating", 300);
    let tables = ht_tables(e.trace());
    let values: BTreeSet<FinString> =
        tables.range(150..).filter_map(|(_, t)| t.get(&s![0]).cloned()).collect();
    assert!(values.len() > 10, "hT(⟨0⟩) took {} values", values.len());
    let outcomes: BTreeSet<u64> = e
        .trace()
        .iter()
        .filter(|r| r.stage >= 250 && r.module == ModuleKind::H { sigma: s![0] })
        .filter_map(|r| r.outcome.and_then(|o| o.number()))
        .collect();
    assert!(outcomes.len() > 5);
    assert!(check_conditions(e.trace()).is_empty());
}

#[test]
fn stable_ht_at_epsilon() {
    let e = run("full-S-no-splits", 200);
    let tables = ht_tables(e.trace());
    let eps: BTreeSet<_> = tables.range(100..).filter_map(|(_, t)| t.get(&s![]).cloned()).collect();
    assert_eq!(eps, BTreeSet::from([s![]]));
}

#[test]
fn dead_node_is_a_dead_end() {
    let e = run("dead-node", 300);
    let ht = e.ht();
    let t = e.tree();
    let dead = &ht[&s![1]];
    assert!(t.is_terminal(dead));
    assert!(!ht.contains_key(&s![1, 0]));
    assert!(!t.is_terminal(&ht[&s![0]]));
}

#[test]
fn p_success_outcomes_are_incompatible() {
    let e = run("p-success", 300);
    let cfg = e.config().clone();
    let mut taken = 0;
    for r in e.trace() {
        if let (ModuleKind::P { e: k }, Some(Outcome::Neq)) = (&r.module, r.outcome) {
            let phi = cfg.functionals.get(*k as usize).map_or(s![], |f| f.eval_oracle(&cfg.x, r.stage).unwrap());
            let child = e
                .trace()
                .iter()
                .find(|c| c.parent == Some(r.node) && c.edge == Some(0))
                .unwrap();
            assert!(child.mout.as_ref().unwrap().incompatible(&phi));
            taken += 1;
        }
    }
    assert!(taken > 0);
}

#[test]
fn budget_truncation_is_reported() {
    let mut cfg = scenarios::bundled("full-S-no-splits").unwrap();
    cfg.horizon = 40;
    cfg.node_budget = 5;
    let e = run_engine(&cfg).unwrap();
    assert!(!e.truncated_stages().is_empty());
    assert!(e.trace().iter().all(|r| e.tpath(r.stage).len() <= 5));
}

#[test]
fn invalid_configs_are_rejected() {
    let cfg = EngineConfig { s_table: Some(vec![s![], s![0, 1]]), ..Default::default() };
    assert!(Engine::new(cfg).is_err());
    let cfg = EngineConfig { x: s![0, 2], ..Default::default() };
    assert!(Engine::new(cfg).is_err());
}

#[test]
fn s_table_drives_membership() {
    let cfg = EngineConfig {
        s_table: Some(vec![s![], s![0], s![2], s![2, 1]]),
        horizon: 250,
        ..Default::default()
    };
    let e = run_engine(&cfg).unwrap();
    assert!(check_conditions(e.trace()).is_empty());
    let ht = e.ht();
    for sigma in [s![], s![0], s![1], s![2], s![0, 0], s![2, 0], s![2, 1]] {
        assert!(ht.contains_key(&sigma), "{sigma}");
    }
    assert!(!ht.contains_key(&s![1, 0]));
}

#[test]
fn trace_round_trips_and_replays() {
    let e = run("dead-node", 80);
    let text = trace_to_jsonl(e.trace());
    let back = trace_from_jsonl(&text).unwrap();
    assert_eq!(back, e.trace());
    assert_eq!(check_conditions(&back), check_conditions(e.trace()));
}

#[test]
fn runs_are_deterministic() {
    let a = trace_to_jsonl(run("splitting-rich", 120).trace());
    let b = trace_to_jsonl(run("splitting-rich", 120).trace());
    assert_eq!(a, b);
}

fn rec(stage: u64, node: usize, parent: Option<usize>, edge: Option<u64>, mout: FinString) -> TraceRecord {
    TraceRecord {
        stage,
        node,
        parent,
        edge,
        delta: None,
        alpha: FinString::empty(),
        sigma: FinString::empty(),
        module: ModuleKind::P { e: 0 },
        visit: 0,
        mout: Some(mout),
        outcome: None,
        sets: vec![],
        enumerated: vec![],
    }
}

#[test]
fn injected_left_then_revisit_is_caught() {
    let mut t = vec![rec(0, 0, None, None, s![])];
    for s in 1..4 {
        let mut root = rec(s, 0, None, None, s![]);
        root.visit = s;
        t.push(root);
    }
    // stage 1 visits the right child, stage 2 the left one, stage 3 the right again
    t.insert(2, rec(1, 2, Some(0), Some(1), s![]));
    t.insert(4, rec(2, 1, Some(0), Some(0), s![]));
    let mut again = rec(3, 2, Some(0), Some(1), s![]);
    again.visit = 1;
    t.push(again);
    let v = check_conditions(&t);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].condition, "no-reinit");
    assert_eq!(v[0].node, Some(2));
}

#[test]
fn injected_bad_output_is_caught() {
    let mut e = run("full-S-no-splits", 30).into_trace();
    let victim = e.iter().position(|r| r.parent.is_some() && r.visit == 0).unwrap();
    let node = e[victim].node;
    let bogus = s![999_999];
    for r in e.iter_mut() {
        if r.node == node {
            r.mout = Some(bogus.clone());
        }
        for ev in r.sets.iter_mut() {
            if let SetEvent::Mout { node: n, value } = ev {
                if *n == node {
                    *value = bogus.clone();
                }
            }
        }
    }
    let v = check_conditions(&e);
    assert!(v.iter().any(|x| x.condition == "output" && x.node == Some(node)), "{v:?}");
}
