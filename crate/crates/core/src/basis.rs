//! Shifted Legendre basis on `[0, 1]`.
//!
//! `phi(1, x)` and `phi(2, x)` are the degree-one and degree-two Legendre
//! polynomials shifted to the unit interval and normalised so that
//! `{1, phi_1, phi_2}` is orthonormal in `L2[0, 1]`. `cap_phi(k, x)` is the
//! antiderivative that vanishes at both endpoints.

use crate::error::{Error, Result};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;
pub const SQRT5: f64 = 2.236_067_977_499_79;

/// Coordinates this far outside `[0, 1]` are still accepted and clamped.
pub const DOMAIN_TOL: f64 = 1e-12;

/// `∫ φ_k φ_r φ_z` for the nonzero cases: all three of order two.
pub const TRIPLE_222: f64 = 2.0 * SQRT5 / 7.0;
/// `∫ φ_k φ_r φ_z` when exactly one index is two.
pub const TRIPLE_112: f64 = 2.0 / SQRT5;

/// Basis order: the `k` in `λ^(k)_M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    First = 1,
    Second = 2,
}

impl Order {
    pub const ALL: [Order; 2] = [Order::First, Order::Second];

    pub fn from_index(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            other => Err(Error::BadOrder(other)),
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Bound of `|φ_k|` on `[0, 1]`.
    pub fn sup(self) -> f64 {
        match self {
            Order::First => SQRT3,
            Order::Second => SQRT5,
        }
    }

    /// Unchecked evaluation, callers guarantee `x ∈ [0, 1]`.
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Order::First => SQRT3 * (2.0 * x - 1.0),
            Order::Second => SQRT5 * ((6.0 * x - 6.0) * x + 1.0),
        }
    }

    #[inline]
    pub fn eval_antiderivative(self, x: f64) -> f64 {
        match self {
            Order::First => SQRT3 * (x * x - x),
            Order::Second => SQRT5 * (((2.0 * x - 3.0) * x + 1.0) * x),
        }
    }
}

pub(crate) fn check_unit(x: f64, context: &'static str) -> Result<f64> {
    if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&x) {
        return Err(Error::Domain { value: x, context });
    }
    Ok(x.clamp(0.0, 1.0))
}

pub fn phi(k: Order, x: f64) -> Result<f64> {
    Ok(k.eval(check_unit(x, "phi")?))
}

pub fn cap_phi(k: Order, x: f64) -> Result<f64> {
    Ok(k.eval_antiderivative(check_unit(x, "cap_phi")?))
}

/// `∫₀¹ φ_r φ_z`.
pub fn pair_integral(r: Order, z: Order) -> f64 {
    if r == z {
        1.0
    } else {
        0.0
    }
}

/// `∫₀¹ φ_k φ_r φ_z`.
pub fn triple_integral(k: Order, r: Order, z: Order) -> f64 {
    let twos = [k, r, z].iter().filter(|&&o| o == Order::Second).count();
    match twos {
        3 => TRIPLE_222,
        1 => TRIPLE_112,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    #[test]
    fn point_values() {
        assert_eq!(phi(Order::First, 0.5).unwrap(), 0.0);
        assert!((phi(Order::First, 1.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!((phi(Order::Second, 0.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cap_phi(Order::First, 1.0).unwrap(), 0.0);
        assert_eq!(cap_phi(Order::Second, 0.5).unwrap(), 0.0);
        assert!((cap_phi(Order::First, 0.5).unwrap() + 3f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(phi(Order::First, -1e-9).is_err());
        assert!(phi(Order::First, 1.0 + 1e-9).is_err());
        assert!(cap_phi(Order::Second, f64::NAN).is_err());
        assert_eq!(phi(Order::First, 1.0 + 1e-13).unwrap(), SQRT3);
    }

    #[test]
    fn cap_phi_is_antiderivative() {
        let gl = GaussLegendre::new(8);
        for k in Order::ALL {
            for &x in &[0.1, 0.5, 0.73, 1.0] {
                let q = gl.integrate(0.0, x, |t| k.eval(t));
                assert!((q - k.eval_antiderivative(x)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn orthonormality_and_triples_by_quadrature() {
        let gl = GaussLegendre::new(6);
        for r in Order::ALL {
            for z in Order::ALL {
                let q = gl.integrate(0.0, 1.0, |u| r.eval(u) * z.eval(u));
                assert!((q - pair_integral(r, z)).abs() < 1e-12);
                for k in Order::ALL {
                    let q = gl.integrate(0.0, 1.0, |u| k.eval(u) * r.eval(u) * z.eval(u));
                    assert!((q - triple_integral(k, r, z)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sup_bounds() {
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            for k in Order::ALL {
                assert!(k.eval(x).abs() <= k.sup() + 1e-15);
            }
        }
    }
}
