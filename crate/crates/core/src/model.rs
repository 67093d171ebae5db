use crate::basis::{check_unit, Order};
use crate::error::{Error, Result};
use crate::params::{ParamVector, ProductScratch, Validity};
use crate::subset::SubsetMask;

/// An extended FGM copula ready for evaluation and sampling.
///
/// Built either through [`CopulaModel::new`], which enforces the sufficient
/// validity constraint, or [`CopulaModel::permissive`], which only checks
/// structure. The permissive route exists for vectors outside the
/// constraint whose density is still (almost) nonnegative, such as the
/// simulation-study vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaModel {
    params: ParamVector,
    certified: bool,
}

impl CopulaModel {
    pub fn new(params: ParamVector) -> Result<Self> {
        match params.check_validity() {
            Validity::Valid { .. } => Ok(Self {
                params,
                certified: true,
            }),
            Validity::Invalid { excess } => Err(Error::Invalid { excess }),
        }
    }

    pub fn permissive(params: ParamVector) -> Self {
        let certified = params.check_validity().is_valid();
        Self { params, certified }
    }

    pub fn independence(d: usize) -> Result<Self> {
        Self::new(ParamVector::zeros(d)?)
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    /// True when the parameters satisfy the validity constraint, which
    /// guarantees a nonnegative density.
    pub fn is_certified(&self) -> bool {
        self.certified
    }

    fn check_point(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        u.iter().map(|&x| check_unit(x, "copula argument")).collect()
    }

    pub fn density(&self, u: &[f64]) -> Result<f64> {
        let u = self.check_point(u)?;
        Ok(self.params.density_unchecked(&u))
    }

    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        let u = self.check_point(u)?;
        let d = u.len();
        let n = 1usize << d;
        let full = n - 1;
        let mut prod_u = vec![1.0; n];
        let mut prod_cap1 = vec![1.0; n];
        let mut prod_cap2 = vec![1.0; n];
        for mask in 1..n {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            prod_u[mask] = prod_u[rest] * u[low];
            prod_cap1[mask] = prod_cap1[rest] * Order::First.eval_antiderivative(u[low]);
            prod_cap2[mask] = prod_cap2[rest] * Order::Second.eval_antiderivative(u[low]);
        }
        let l1 = self.params.table(Order::First);
        let l2 = self.params.table(Order::Second);
        let mut acc = prod_u[full];
        for mask in 3..n {
            let term = l1[mask] * prod_cap1[mask] + l2[mask] * prod_cap2[mask];
            if term != 0.0 {
                acc += term * prod_u[full ^ mask];
            }
        }
        Ok(acc)
    }

    /// Marginal copula of the variables in `keep`, relabelled in order.
    pub fn subvector(&self, keep: SubsetMask) -> Result<Self> {
        let params = self.params.restrict(keep)?;
        // Restriction drops terms from the constraint sum, so certification
        // is inherited.
        let certified = self.certified || params.check_validity().is_valid();
        Ok(Self { params, certified })
    }

    /// Reusable per-row evaluator for hot loops.
    pub fn evaluator(&self) -> DensityEvaluator<'_> {
        DensityEvaluator {
            params: &self.params,
            scratch: ProductScratch::new(self.dim()),
        }
    }
}

pub struct DensityEvaluator<'a> {
    params: &'a ParamVector,
    scratch: ProductScratch,
}

impl DensityEvaluator<'_> {
    /// Callers guarantee `u ∈ [0, 1]^d`.
    pub fn density(&mut self, u: &[f64]) -> f64 {
        self.scratch.fill(u);
        self.scratch.density(self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::study_params;

    fn mask(vars: &[usize]) -> SubsetMask {
        SubsetMask::from_vars(vars).unwrap()
    }

    #[test]
    fn independence_density_and_cdf() {
        let m = CopulaModel::independence(3).unwrap();
        assert_eq!(m.density(&[0.2, 0.9, 0.4]).unwrap(), 1.0);
        let c = m.cdf(&[0.2, 0.5, 0.4]).unwrap();
        assert!((c - 0.04).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_density() {
        let mut p = ParamVector::zeros(2).unwrap();
        p.set(Order::First, SubsetMask::full(2), 0.3).unwrap();
        let m = CopulaModel::new(p).unwrap();
        assert!((m.density(&[1.0, 1.0]).unwrap() - 1.9).abs() < 1e-14);
        assert!((m.density(&[0.0, 0.0]).unwrap() - 1.9).abs() < 1e-14);
        assert!((m.density(&[0.5, 0.1]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn midpoint_kills_first_order_terms() {
        let mut p = ParamVector::zeros(4).unwrap();
        p.set(Order::First, mask(&[1, 2]), 0.1).unwrap();
        p.set(Order::First, mask(&[1, 3, 4]), -0.05).unwrap();
        let m = CopulaModel::new(p).unwrap();
        assert_eq!(m.density(&[0.5, 0.9, 0.1, 0.7]).unwrap(), 1.0);
    }

    #[test]
    fn strict_constructor_rejects_invalid() {
        assert!(matches!(
            CopulaModel::new(study_params()),
            Err(Error::Invalid { .. })
        ));
        let m = CopulaModel::permissive(study_params());
        assert!(!m.is_certified());
    }

    #[test]
    fn cdf_boundaries() {
        let m = CopulaModel::permissive(study_params());
        assert_eq!(m.cdf(&[0.3, 0.0, 0.8, 0.2]).unwrap(), 0.0);
        for j in 0..4 {
            let mut u = [1.0; 4];
            u[j] = 0.37;
            assert!((m.cdf(&u).unwrap() - 0.37).abs() < 1e-15);
        }
        assert!((m.cdf(&[1.0; 4]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn domain_and_shape_errors() {
        let m = CopulaModel::independence(2).unwrap();
        assert!(m.density(&[0.5]).is_err());
        assert!(m.density(&[0.5, 1.5]).is_err());
        assert!(m.cdf(&[-0.1, 0.5]).is_err());
    }

    #[test]
    fn subvector_identity_and_drop() {
        let m = CopulaModel::permissive(study_params());
        assert_eq!(m.subvector(SubsetMask::full(4)).unwrap(), m);
        let mut p = ParamVector::zeros(3).unwrap();
        p.set(Order::Second, SubsetMask::full(3), 0.05).unwrap();
        let m = CopulaModel::new(p).unwrap();
        let sub = m.subvector(mask(&[1, 2])).unwrap();
        assert!(sub.params().is_independence());
        assert!(m.subvector(mask(&[1])).is_err());
    }
}
