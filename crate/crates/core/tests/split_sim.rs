use ptree_core::s;
use ptree_core::split_sim::{
    nodes_without_split, pair_disagreements, rederive_phi, run_split, Fam, Flip, SplitConfig, SplitEvent,
};

fn stable() -> SplitConfig {
    SplitConfig { depth: 4, branching: 4, alphabet: Some(5), ..Default::default() }
}

#[test]
fn stable_schedule_splits_everywhere() {
    let sim = run_split(&stable()).unwrap();
    assert!(nodes_without_split(&sim).is_empty(), "{:?}", nodes_without_split(&sim));
    assert!(pair_disagreements(sim.trace()).is_empty());
    let (ok, total) = rederive_phi(sim.trace(), 4, 4);
    assert_eq!(ok, total);
    assert!(total > 300);
}

#[test]
fn fresh_pairs_are_nested() {
    let sim = run_split(&stable()).unwrap();
    let mut checked = 0;
    for ((owner, k, n), g) in sim.family() {
        if *k != Fam::G {
            continue;
        }
        let f = &sim.family()[&(owner.clone(), Fam::F, *n)];
        let (pf, pg) = (sim.get_phi(f).unwrap(), sim.get_phi(g).unwrap());
        assert!(pf.compatible(pg), "{owner}");
        if let Some(f1) = sim.family().get(&(owner.clone(), Fam::F, n + 1)) {
            assert!(sim.get_phi(f1).unwrap().compatible(pg));
        }
        checked += 1;
    }
    assert!(checked > 0);
    let (f, g) = sim.get_pair(&s![]);
    assert!(f.is_some() && g.is_some());
}

#[test]
fn single_flip_injures_once_and_rebuilds() {
    let base = run_split(&stable()).unwrap();
    let hat = s![1];
    let first = base
        .trace()
        .iter()
        .find(|r| matches!(&r.event, SplitEvent::Set { owner, .. } if hat.is_prefix_of(owner)))
        .expect("families above the flipped node")
        .stage;
    let flip = first + 5;
    let cfg = SplitConfig { flips: vec![Flip { sigma: hat.clone(), stage: flip, value: 4 }], ..stable() };
    let sim = run_split(&cfg).unwrap();
    let unset_stages: Vec<u64> = sim
        .trace()
        .iter()
        .filter_map(|r| match &r.event {
            SplitEvent::Unset { owner, .. } if hat.is_prefix_of(owner) => Some(r.stage),
            _ => None,
        })
        .collect();
    assert!(!unset_stages.is_empty());
    assert!(unset_stages.iter().all(|&s| s == flip), "{unset_stages:?}");
    assert!(sim.trace().iter().any(|r| r.stage > flip
        && matches!(&r.event, SplitEvent::Set { owner, .. } if hat.is_prefix_of(owner))));
    assert!(nodes_without_split(&sim).is_empty());
    assert!(pair_disagreements(sim.trace()).is_empty());
    let (ok, total) = rederive_phi(sim.trace(), 4, 4);
    assert_eq!(ok, total);
}
