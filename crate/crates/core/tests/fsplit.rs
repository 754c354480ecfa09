use ptree_core::fsplit_subtree::{build_splitting_subtree, unsplit_siblings, Catalog, FsplitConfig, Source};
use ptree_core::strings_codes::FinString;
use ptree_core::trees::ftree_check;

fn cfg() -> FsplitConfig {
    FsplitConfig { depth: 3, width: 4, threshold: None, reach: 2 }
}

#[test]
fn every_catalog_yields_a_totally_splitting_subtree() {
    let src = Source::Full { branching: 4, depth: 12 };
    for (name, o) in Catalog::all() {
        let r = build_splitting_subtree(&src, &o, &cfg()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(ftree_check(&r.t_hat).is_empty(), "{name}");
        assert_eq!(r.t_hat.len(), 1 + 4 + 16 + 64, "{name}");
        assert!(unsplit_siblings(&r.t_hat, &o).is_empty(), "{name}");
    }
}

#[test]
fn sibling_pairs_checked_by_brute_force() {
    let src = Source::Full { branching: 4, depth: 12 };
    let o = Catalog::Residue { modulus: 2 };
    let r = build_splitting_subtree(&src, &o, &cfg()).unwrap();
    let parity = |x: &FinString| FinString(x.entries().iter().map(|v| v % 2).collect());
    let mut pairs = 0;
    for (a, ia) in &r.t_hat {
        for (b, ib) in &r.t_hat {
            if a < b && a.len() == b.len() && a.pred() == b.pred() && !a.is_empty() {
                assert!(parity(ia).incompatible(&parity(ib)), "{a} {b}");
                pairs += 1;
            }
        }
    }
    assert_eq!(pairs, 6 * (1 + 4 + 16));
}

#[test]
fn table_sources_compose() {
    // shift every image up by a fixed prefix
    let base = Source::Full { branching: 4, depth: 5 };
    let map = ptree_core::strings_codes::all_strings(5, 3)
        .into_iter()
        .map(|x| (x.clone(), FinString(vec![9]).concat(&x)))
        .collect();
    let src = Source::Table { map };
    let a = build_splitting_subtree(&base, &Catalog::Direct, &cfg()).unwrap();
    let b = build_splitting_subtree(&src, &Catalog::Direct, &cfg()).unwrap();
    assert_eq!(a.v, b.v);
    for (k, img) in &b.t_hat {
        assert_eq!(img.entries()[1..], a.t_hat[k].entries()[..]);
    }
}
