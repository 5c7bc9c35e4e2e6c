use std::collections::BTreeSet;

use infoalign_core::fingerprint::{atom_identifiers, cosine, identifier_set, morgan_fingerprint};
use infoalign_core::molparse::{parse_smiles, MolecularGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MOLECULES: &[&str] = &[
    "C",
    "CC",
    "CCO",
    "c1ccccc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "C[N+](C)(C)C",
    "FC(F)(F)c1ccc(Cl)cc1",
    "OCC(O)CO",
    "C1CCC2CCCCC2C1",
    "CCN(CC)C(=O)c1cccnc1",
    "[O-]C(=O)CCc1ccc(O)cc1",
];

/// Depth-`r` unfolding of the neighborhood around `v`, as a canonical string.
fn environment(g: &MolecularGraph, v: usize, r: usize) -> String {
    let a = &g.atoms()[v];
    let own = format!("{:?}/{}/{}/{}", a.element, a.formal_charge, a.aromatic, g.degree(v));
    if r == 0 {
        return own;
    }
    let mut kids: Vec<String> = g
        .neighbors(v)
        .iter()
        .map(|&(u, o)| format!("{o:?}:{}", environment(g, u, r - 1)))
        .collect();
    kids.sort();
    format!("{}[{}]", environment(g, v, r - 1), kids.join(","))
}

fn environment_count(g: &MolecularGraph, radius: usize) -> usize {
    let mut seen = BTreeSet::new();
    for r in 0..=radius {
        for v in 0..g.atom_count() {
            seen.insert((r, environment(g, v, r)));
        }
    }
    seen.len()
}

#[test]
fn identifiers_match_environment_enumeration() {
    for s in MOLECULES {
        let g = parse_smiles(s).unwrap();
        for radius in 0..=3 {
            assert_eq!(identifier_set(&g, radius).len(), environment_count(&g, radius), "{s} r={radius}");
        }
    }
}

#[test]
fn methane_and_ethane() {
    let methane = parse_smiles("C").unwrap();
    assert_eq!(morgan_fingerprint(&methane, 0, 1024).unwrap().count_ones(), 1);
    let ethane = parse_smiles("CC").unwrap();
    let ids = atom_identifiers(&ethane, 1);
    assert!(ids.iter().all(|round| round[0] == round[1]));
    assert!(morgan_fingerprint(&ethane, 1, 1024).unwrap().count_ones() <= 2);
}

#[test]
fn same_input_same_bits() {
    for s in MOLECULES {
        let g = parse_smiles(s).unwrap();
        assert_eq!(morgan_fingerprint(&g, 2, 1024).unwrap(), morgan_fingerprint(&g, 2, 1024).unwrap());
    }
}

#[test]
fn cosine_closed_forms() {
    assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    assert!((cosine(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn invariant_under_relabeling(idx in 0..MOLECULES.len(), seed in any::<u64>(), radius in 0usize..4) {
        let g = parse_smiles(MOLECULES[idx]).unwrap();
        let mut perm: Vec<usize> = (0..g.atom_count()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let h = g.permuted(&perm);
        prop_assert_eq!(morgan_fingerprint(&g, radius, 1024).unwrap(), morgan_fingerprint(&h, radius, 1024).unwrap());
    }

    #[test]
    fn identifiers_grow_with_radius(idx in 0..MOLECULES.len(), radius in 0usize..4) {
        let g = parse_smiles(MOLECULES[idx]).unwrap();
        prop_assert!(identifier_set(&g, radius).is_subset(&identifier_set(&g, radius + 1)));
    }

    #[test]
    fn folding_matches_direct(idx in 0..MOLECULES.len(), radius in 0usize..4, shift in 0u32..4) {
        let g = parse_smiles(MOLECULES[idx]).unwrap();
        let small = 64usize << shift;
        let big = morgan_fingerprint(&g, radius, small * 2).unwrap();
        prop_assert_eq!(big.fold(small).unwrap(), morgan_fingerprint(&g, radius, small).unwrap());
    }

    #[test]
    fn cosine_is_bounded(u in proptest::collection::vec(-10.0f64..10.0, 1..16), seed in any::<u64>()) {
        let mut v = u.clone();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        if let Ok(c) = cosine(&u, &v) {
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}
