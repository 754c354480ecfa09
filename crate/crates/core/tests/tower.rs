use ptree_core::approx::{Exclusion, StagedTree};
use ptree_core::ordinals::Notation;
use ptree_core::s;
use ptree_core::strings_codes::{all_strings, FinString};
use ptree_core::tower::{build_tower, GammaValue, Membership, TowerConfig};
use ptree_core::trees::{ftree_check, FTree, Tree};

fn cfg(levels: &[u64], top: StagedTree) -> TowerConfig {
    TowerConfig {
        alpha: Notation::OMEGA,
        top,
        levels: levels.iter().map(|&n| Notation::fin(n)).collect(),
        horizon: 200,
        depth: 3,
        max_branch: 3,
        max_depth: 2,
    }
}

fn trivial() -> StagedTree {
    StagedTree::total(Tree::full(3, 3))
}

#[test]
fn boundary_agreement_to_the_depth_budget() {
    let h = build_tower(&cfg(&[0, 2, 4], trivial())).unwrap();
    assert!(h.boundary_disagreements().is_empty());
    for (beta, lv) in &h.levels {
        for x in all_strings(3, 3) {
            if x.len() <= lv.copy.copylen as usize {
                let want = if h.top.contains(&x) { Membership::In } else { Membership::Out };
                assert_eq!(h.membership(*beta, &x).unwrap(), want, "{beta} {x}");
            }
        }
    }
}

#[test]
fn below_copy_length_is_the_identity() {
    let h = build_tower(&cfg(&[0, 2, 4], trivial())).unwrap();
    for i in 0..3 {
        let x = s![i];
        assert_eq!(h.gamma_compose(Notation::fin(4), Notation::fin(2), &x).unwrap(), GammaValue::Defined(x));
    }
    assert_eq!(
        h.gamma_compose(Notation::fin(2), Notation::fin(0), &s![]).unwrap(),
        GammaValue::Defined(s![])
    );
}

#[test]
fn two_levels_match_the_lower_engine() {
    let h = build_tower(&cfg(&[0, 2], trivial())).unwrap();
    let inst = &h.levels[&Notation::fin(0)].instances[0];
    let mut seen = 0;
    for x in all_strings(1, 2) {
        let g = h.gamma_compose(Notation::OMEGA, Notation::fin(0), &x).unwrap();
        assert_eq!(g, GammaValue::Defined(inst.ht[&x].clone()), "{x}");
        seen += 1;
    }
    assert_eq!(seen, 4);
    assert_eq!(h.gamma_compose(Notation::OMEGA, Notation::fin(0), &s![0, 0]).unwrap(), GammaValue::Truncated);
}

#[test]
fn composed_maps_are_ftrees() {
    let h = build_tower(&cfg(&[0, 2, 4], trivial())).unwrap();
    for to in [0, 2] {
        let mut f = FTree::new();
        for x in all_strings(2, 2) {
            match h.gamma_compose(Notation::fin(4), Notation::fin(to), &x).unwrap() {
                GammaValue::Defined(y) => {
                    assert!(y.len() >= x.len());
                    f.insert(x, y);
                }
                // two engine hops overrun the depth budget
                GammaValue::Truncated => assert!(to == 0 && x.len() == 2, "{x}"),
                GammaValue::Undefined => panic!("{x} is in the trivial top"),
            }
        }
        assert!(f.len() >= 4);
        assert!(ftree_check(&f).is_empty());
    }
}

#[test]
fn dead_node_in_the_top() {
    let mut top = trivial();
    top.exclusions.insert(s![1], Exclusion { reveal: 0, tag: Notation::ZERO });
    let h = build_tower(&cfg(&[0, 2], top.clone())).unwrap();
    // the exclusion only shows from length 2 on in the uniformized top
    assert!(h.top.contains(&s![1]));
    assert!(!h.top.contains(&s![1, 0]));
    for i in 0..3u64 {
        let want = if h.top.contains(&s![i]) { Membership::In } else { Membership::Out };
        assert_eq!(h.membership(Notation::fin(2), &s![i]).unwrap(), want);
    }
    assert_eq!(h.levels[&Notation::fin(0)].tree.level(0).count(), 1);
    assert!(h.boundary_disagreements().is_empty());
}

#[test]
fn runs_are_byte_identical() {
    let a = build_tower(&cfg(&[0, 2, 4], trivial())).unwrap().to_json();
    let b = build_tower(&cfg(&[0, 2, 4], trivial())).unwrap().to_json();
    assert_eq!(a, b);
    let _: FinString = s![];
}
