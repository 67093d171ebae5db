//! The eight d = 4 covariance configurations against the general formula
//! and quadrature.

mod common;

use common::{b, closed_form, quadrature_moment, random_valid, s};
use efgm::estimate::plug_in_covariance;
use efgm::{Order, ParamVector};

const TOL: f64 = 1e-10;

/// Every pair of parameter keys in d = 4 falls into one of the eight cases.
#[test]
fn all_key_pairs_are_covered() {
    let p = ParamVector::zeros(4).unwrap();
    let keys = p.keys();
    for &(z, pm) in &keys {
        for &(r, qm) in &keys {
            assert!(
                closed_form(&p, z.index(), r.index(), pm, qm).is_some(),
                "{pm} {qm}"
            );
        }
    }
}

#[test]
fn closed_forms_match_general_covariance() {
    for seed in 0..50 {
        let p = random_valid(seed);
        assert!(p.check_validity().is_valid());
        let sigma = plug_in_covariance(&p);
        for (i, &(z, pm)) in sigma.keys().iter().enumerate() {
            for (j, &(r, qm)) in sigma.keys().iter().enumerate() {
                let e = closed_form(&p, z.index(), r.index(), pm, qm).unwrap();
                let expected = e - p.get(z, pm) * p.get(r, qm);
                let got = sigma.get(i, j);
                assert!(
                    (got - expected).abs() < TOL,
                    "seed {seed} ({z:?},{pm}) ({r:?},{qm}): {got} vs {expected}"
                );
            }
        }
    }
}

#[test]
fn closed_forms_match_quadrature() {
    for seed in 0..50 {
        let p = random_valid(1000 + seed);
        let keys = p.keys();
        for &(z, pm) in &keys {
            for &(r, qm) in &keys {
                let e = closed_form(&p, z.index(), r.index(), pm, qm).unwrap();
                let q = quadrature_moment(&p, z, r, pm, qm);
                assert!((e - q).abs() < TOL, "seed {seed} ({z:?},{pm}) ({r:?},{qm}): {e} vs {q}");
            }
        }
    }
}

#[test]
fn pair_diagonal_entry() {
    let p = random_valid(77);
    let sigma = plug_in_covariance(&p);
    let m = s(&[1, 2]);
    let i = sigma.index_of(Order::First, m).unwrap();
    let l1 = p.get(Order::First, m);
    let expected = 1.0 - l1 * l1 + 0.8 * p.get(Order::Second, m);
    assert!((sigma.get(i, i) - expected).abs() < 1e-14);
}

#[test]
fn triple_coefficient_is_two_root_five_over_seven() {
    // Case 7 at (2,2) with only λ^(2)_{1,3,4} active isolates the coefficient.
    let mut p = ParamVector::zeros(4).unwrap();
    p.set(Order::Second, s(&[1, 3, 4]), 0.1).unwrap();
    let sigma = plug_in_covariance(&p);
    let i = sigma.index_of(Order::Second, s(&[1, 2, 3])).unwrap();
    let j = sigma.index_of(Order::Second, s(&[1, 2, 4])).unwrap();
    assert!((sigma.get(i, j) - 0.1 * b()).abs() < 1e-15);
    assert!((sigma.get(i, j) - 0.1 * 2.0 * 7f64.sqrt() / 5.0).abs() > 0.04);
}
