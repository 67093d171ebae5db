//! Closed-form covariance entries for d = 4, derived by hand case by case,
//! and a direct quadrature of the same moments.

#![allow(dead_code)]

use efgm::params::param_count;
use efgm::quadrature::GaussLegendre;
use efgm::{Order, ParamVector, SubsetMask};
use rand::Rng;

pub fn a() -> f64 {
    2.0 / 5f64.sqrt()
}

pub fn b() -> f64 {
    2.0 * 5f64.sqrt() / 7.0
}

pub fn s(vars: &[usize]) -> SubsetMask {
    SubsetMask::from_vars(vars).unwrap()
}

pub fn ord(i: u8) -> Order {
    Order::from_index(i).unwrap()
}

pub fn l(p: &ParamVector, k: u8, vars: &[usize]) -> f64 {
    p.get(ord(k), s(vars))
}

pub fn random_valid(seed: u64) -> ParamVector {
    let mut rng = efgm::rng::substream(seed, 7);
    let raw: Vec<f64> = (0..param_count(4))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let p = ParamVector::from_flat(4, &raw).unwrap().project_to_valid();
    let scale: f64 = rng.random_range(0.2..1.0);
    ParamVector::from_flat(4, &p.to_flat().iter().map(|v| v * scale).collect::<Vec<_>>()).unwrap()
}

/// `E[Π_P φ_z Π_Q φ_r]` for each configuration of `(P, Q)` in dimension 4.
pub fn closed_form(p: &ParamVector, z: u8, r: u8, pm: SubsetMask, qm: SubsetMask) -> Option<f64> {
    let (a, b) = (a(), b());
    let same = z == r;
    let both = pm.intersection(qm);
    let pv: Vec<usize> = pm.vars().collect();
    let qv: Vec<usize> = qm.vars().collect();
    let only_p: Vec<usize> = pm.difference(qm).vars().collect();
    let only_q: Vec<usize> = qm.difference(pm).vars().collect();
    let common: Vec<usize> = both.vars().collect();
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    let e = match (pv.len(), qv.len(), common.len()) {
        // Case 1: P = Q.
        _ if pm == qm => {
            if same {
                let c = if z == 1 { a } else { b };
                1.0 + pm
                    .submasks()
                    .filter(|t| t.len() >= 2)
                    .map(|t| c.powi(t.len() as i32) * p.get(Order::Second, t))
                    .sum::<f64>()
            } else {
                a.powi(pv.len() as i32) * p.get(Order::First, pm)
            }
        }
        // Case 2: disjoint pairs.
        (2, 2, 0) => {
            if same {
                l(p, z, &[1, 2, 3, 4])
            } else {
                0.0
            }
        }
        // Case 3: P = {u,p}, Q = {u,q}.
        (2, 2, 1) => {
            let (pp, qq) = (only_p[0], only_q[0]);
            let pq = sorted(vec![pp, qq]);
            let upq = sorted(vec![common[0], pp, qq]);
            match (z, r) {
                (1, 1) => l(p, 1, &pq),
                (2, 2) => l(p, 2, &pq) + b * l(p, 2, &upq),
                _ => 0.0,
            }
        }
        // Case 4: P = {u,p}, Q = {u,q1,q2}, and its transpose.
        (2, 3, 1) | (3, 2, 1) => {
            let mut rest: Vec<usize> = only_p.iter().chain(&only_q).copied().collect();
            rest.sort_unstable();
            match (z, r) {
                (1, 1) => l(p, 1, &rest),
                (2, 2) => l(p, 2, &rest) + b * l(p, 2, &[1, 2, 3, 4]),
                _ => 0.0,
            }
        }
        // Case 5: P = {u,v}, Q = {u,v,q}.
        (2, 3, 2) | (3, 2, 2) => {
            // Orient so the pair carries order zz and the triple order rr.
            let (zz, rr, q) = if pv.len() == 2 { (z, r, only_q[0]) } else { (r, z, only_p[0]) };
            let (u, v) = (common[0], common[1]);
            let full = sorted(vec![u, v, q]);
            match (zz, rr) {
                (1, 1) => 0.0,
                (2, 2) => b * (l(p, 2, &sorted(vec![u, q])) + l(p, 2, &sorted(vec![v, q])))
                    + b * b * l(p, 2, &full),
                (2, 1) => a * a * l(p, 1, &full),
                _ => 0.0,
            }
        }
        // Case 6: P = {p1,p2}, Q = D.
        (2, 4, 2) | (4, 2, 2) => {
            let (zz, rr, pair) = if pv.len() == 2 { (z, r, &pv) } else { (r, z, &qv) };
            let q: Vec<usize> = (1..=4).filter(|x| !pair.contains(x)).collect();
            match (zz, rr) {
                (1, 1) => l(p, 1, &q),
                (2, 2) => {
                    l(p, 2, &q)
                        + b * (l(p, 2, &sorted(vec![pair[0], q[0], q[1]]))
                            + l(p, 2, &sorted(vec![pair[1], q[0], q[1]])))
                        + b * b * l(p, 2, &[1, 2, 3, 4])
                }
                (2, 1) => a * a * l(p, 1, &[1, 2, 3, 4]),
                _ => 0.0,
            }
        }
        // Case 7: P = {u,v,p}, Q = {u,v,q}.
        (3, 3, 2) => {
            let (u, v) = (common[0], common[1]);
            let (pp, qq) = (only_p[0], only_q[0]);
            match (z, r) {
                (1, 1) => l(p, 1, &sorted(vec![pp, qq])),
                (2, 2) => {
                    l(p, 2, &sorted(vec![pp, qq]))
                        + b * (l(p, 2, &sorted(vec![u, pp, qq])) + l(p, 2, &sorted(vec![v, pp, qq])))
                        + b * b * l(p, 2, &[1, 2, 3, 4])
                }
                _ => 0.0,
            }
        }
        // Case 8: P = {p1,p2,p3}, Q = D.
        (3, 4, 3) | (4, 3, 3) => {
            let (zz, rr, tri) = if pv.len() == 3 { (z, r, &pv) } else { (r, z, &qv) };
            let q = (1..=4).find(|x| !tri.contains(x)).unwrap();
            match (zz, rr) {
                (2, 2) => {
                    let singles: f64 = tri.iter().map(|&x| l(p, 2, &sorted(vec![x, q]))).sum();
                    let pairs: f64 = [(0, 1), (0, 2), (1, 2)]
                        .iter()
                        .map(|&(i, j)| l(p, 2, &sorted(vec![tri[i], tri[j], q])))
                        .sum();
                    b * singles + b * b * pairs + b.powi(3) * l(p, 2, &[1, 2, 3, 4])
                }
                (2, 1) => a.powi(3) * l(p, 1, &[1, 2, 3, 4]),
                _ => 0.0,
            }
        }
        _ => return None,
    };
    Some(e)
}

pub fn quadrature_moment(p: &ParamVector, z: Order, r: Order, pm: SubsetMask, qm: SubsetMask) -> f64 {
    let gl = GaussLegendre::new(5);
    gl.integrate_cube(4, |u| {
        let mut f = p.density_unchecked(u);
        for v in pm.vars() {
            f *= z.eval(u[v - 1]);
        }
        for v in qm.vars() {
            f *= r.eval(u[v - 1]);
        }
        f
    })
}
