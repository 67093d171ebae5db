//! Likelihood scores, p-value driven model reduction and Rosenblatt
//! goodness-of-fit.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{fmt_f64, DataMatrix};
use crate::error::{Error, Result};
use crate::estimate::{moment_estimates, EstimationResult};
use crate::ks::{deviation_curve, ks_uniform, KsResult};
use crate::model::CopulaModel;
use crate::params::{ParamVector, ProductScratch};
use crate::sample::rosenblatt_matrix;

const CHUNK_ROWS: usize = 1024;

/// `Σ_i ln c(u_i)`. The density is evaluated without a validity check so
/// that scores of unconstrained estimates can be reported; a nonpositive
/// value is an error naming the 1-based data row.
pub fn loglik(p: &ParamVector, data: &DataMatrix) -> Result<f64> {
    if data.ncols() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: data.ncols(),
        });
    }
    if data.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    data.check_unit_cube()?;
    let n = data.nrows();
    let partials: Vec<Result<f64>> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let mut scratch = ProductScratch::new(p.dim());
            let mut sum = 0.0;
            for i in c * CHUNK_ROWS..n.min((c + 1) * CHUNK_ROWS) {
                scratch.fill(data.row(i));
                let density = scratch.density(p);
                if density.is_nan() || density <= 0.0 {
                    return Err(Error::NonPositiveDensity { row: i + 1, density });
                }
                sum += density.ln();
            }
            Ok(sum)
        })
        .collect();
    partials.into_iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelScore {
    pub loglik: f64,
    pub p_active: usize,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
}

impl ModelScore {
    pub fn new(loglik: f64, p_active: usize, n: usize) -> Self {
        let k = p_active as f64;
        Self {
            loglik,
            p_active,
            aic: -2.0 * loglik + 2.0 * k,
            bic: -2.0 * loglik + k * (n as f64).ln(),
            n,
        }
    }
}

pub fn score(p: &ParamVector, data: &DataMatrix) -> Result<ModelScore> {
    Ok(ModelScore::new(loglik(p, data)?, p.count_nonzero(), data.nrows()))
}

/// Copy of the estimate with every coefficient whose p-value exceeds
/// `alpha` set to zero.
pub fn reduce_model(res: &EstimationResult, alpha: f64) -> ParamVector {
    let mut out = res.params_hat.clone();
    let keys = out.keys();
    for ((k, m), &pv) in keys.into_iter().zip(&res.pvalues) {
        if pv > alpha {
            out.set(k, m, 0.0).expect("canonical key");
        }
    }
    out
}

/// Classical FGM fit: the first-order block kept in full, `Λ^(2) = 0`.
pub fn classical_projection(res: &EstimationResult) -> ParamVector {
    res.params_hat.classical_part()
}

/// Re-estimates on `data` keeping only the coefficients that are nonzero in
/// `support`.
pub fn refit(support: &ParamVector, data: &DataMatrix) -> Result<ParamVector> {
    let fresh = moment_estimates(data)?;
    if fresh.dim() != support.dim() {
        return Err(Error::DimensionMismatch {
            expected: support.dim(),
            found: fresh.dim(),
        });
    }
    let mut out = ParamVector::zeros(support.dim())?;
    for (k, m, v) in support.iter() {
        if v != 0.0 {
            out.set(k, m, fresh.get(k, m))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GofReport {
    /// KS result for each Rosenblatt coordinate.
    pub components: Vec<KsResult>,
    pub level: f64,
}

impl GofReport {
    pub fn rejected(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| self.level > 0.0 && c.pvalue <= self.level)
            .map(|(j, _)| j + 1)
            .collect()
    }

    pub fn passes(&self) -> bool {
        self.rejected().is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("coordinate,statistic,pvalue,reject\n");
        for (j, c) in self.components.iter().enumerate() {
            let reject = self.level > 0.0 && c.pvalue <= self.level;
            let _ = writeln!(
                out,
                "{},{},{},{}",
                j + 1,
                fmt_f64(c.statistic),
                fmt_f64(c.pvalue),
                reject
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>10}  {:>10}  {:>10}\n", "coordinate", "KS", "p-value");
        for (j, c) in self.components.iter().enumerate() {
            let _ = writeln!(out, "{:>10}  {:>10.5}  {:>10.4}", j + 1, c.statistic, c.pvalue);
        }
        let verdict = if self.passes() { "pass" } else { "reject" };
        let _ = writeln!(out, "overall at level {}: {verdict}", self.level);
        out
    }
}

/// Rosenblatt transform of `data` under `m` followed by a uniformity KS
/// test on every coordinate.
pub fn gof(m: &CopulaModel, data: &DataMatrix, level: f64) -> Result<GofReport> {
    let r = rosenblatt_matrix(m, data)?;
    Ok(gof_transformed(&r, level))
}

pub fn gof_transformed(r: &DataMatrix, level: f64) -> GofReport {
    let components = (0..r.ncols())
        .into_par_iter()
        .map(|j| ks_uniform(&r.column(j)))
        .collect();
    GofReport { components, level }
}

/// Long-format CSV `coordinate,u,deviation` of the sorted empirical CDF
/// minus the identity for each Rosenblatt coordinate.
pub fn deviation_csv(r: &DataMatrix) -> String {
    let mut out = String::from("coordinate,u,deviation\n");
    for j in 0..r.ncols() {
        for (u, dev) in deviation_curve(&r.column(j)) {
            let _ = writeln!(out, "{},{},{}", j + 1, fmt_f64(u), fmt_f64(dev));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Order;
    use crate::estimate::{inference, EstimateOptions};
    use crate::sample::sample;
    use crate::subset::SubsetMask;

    fn pair(l1: f64) -> ParamVector {
        let mut p = ParamVector::zeros(2).unwrap();
        p.set(Order::First, SubsetMask::full(2), l1).unwrap();
        p
    }

    #[test]
    fn independence_loglik_is_zero() {
        let m = CopulaModel::independence(3).unwrap();
        let s = sample(&m, 50, 2).unwrap();
        assert_eq!(loglik(m.params(), &s.data).unwrap(), 0.0);
        let sc = score(m.params(), &s.data).unwrap();
        assert_eq!((sc.aic, sc.bic, sc.p_active), (0.0, 0.0, 0));
    }

    #[test]
    fn midpoint_row_with_first_order_only() {
        let data = DataMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert_eq!(loglik(&pair(0.3), &data).unwrap(), 0.0);
    }

    #[test]
    fn hand_loglik() {
        let data = DataMatrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        let ll = loglik(&pair(0.3), &data).unwrap();
        assert!((ll - 2.0 * 1.9f64.ln()).abs() < 1e-14);
        assert!((ll - 1.2837).abs() < 1e-4);
    }

    #[test]
    fn nonpositive_density_names_row() {
        let data = DataMatrix::from_rows(&[[0.5, 0.5], [1.0, 0.0]]).unwrap();
        let err = loglik(&pair(0.5), &data).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDensity { row: 2, .. }), "{err}");
    }

    #[test]
    fn score_invariants() {
        let data = DataMatrix::from_rows(&[[0.9, 0.8], [0.1, 0.3], [0.4, 0.6]]).unwrap();
        let sc = score(&pair(0.2), &data).unwrap();
        assert_eq!(sc.aic, -2.0 * sc.loglik + 2.0);
        assert_eq!(sc.bic, -2.0 * sc.loglik + 3f64.ln());
        assert!((sc.bic - sc.aic - (3f64.ln() - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn reduction_rule() {
        let mut p = ParamVector::zeros(3).unwrap();
        p.set(Order::First, SubsetMask(0b011), 0.3).unwrap();
        p.set(Order::Second, SubsetMask(0b101), 0.01).unwrap();
        let res = inference(p, 1000, &EstimateOptions::default());
        let reduced = reduce_model(&res, 0.05);
        assert_eq!(reduced.get(Order::First, SubsetMask(0b011)), 0.3);
        assert_eq!(reduced.count_nonzero(), 1);
        let again = inference(reduced.clone(), 1000, &EstimateOptions::default());
        assert_eq!(reduce_model(&again, 0.05), reduced);
        assert!(reduce_model(&res, -1.0).is_independence());
        assert!(classical_projection(&res).is_classical());
    }

    #[test]
    fn refit_keeps_support() {
        let m = CopulaModel::new(pair(0.3)).unwrap();
        let s = sample(&m, 500, 3).unwrap();
        let fitted = refit(&pair(1e-3), &s.data).unwrap();
        assert_eq!(fitted.count_nonzero(), 1);
        assert_eq!(
            fitted.get(Order::First, SubsetMask::full(2)),
            moment_estimates(&s.data).unwrap().get(Order::First, SubsetMask::full(2))
        );
    }

    #[test]
    fn independence_fit_leaves_data_unchanged() {
        // Each Rosenblatt coordinate under independence is the raw margin,
        // which is uniform under any copula; per-coordinate KS has no power
        // against a dependent truth here.
        let truth = CopulaModel::new(pair(0.3)).unwrap();
        let s = sample(&truth, 500, 11).unwrap();
        let r = rosenblatt_matrix(&CopulaModel::independence(2).unwrap(), &s.data).unwrap();
        assert_eq!(r, s.data);
    }

    #[test]
    fn gof_power_against_wrong_model() {
        let truth = CopulaModel::new(pair(0.3)).unwrap();
        let s = sample(&truth, 5000, 11).unwrap();
        let fitted = CopulaModel::new(pair(-0.3)).unwrap();
        let rep = gof(&fitted, &s.data, 0.01).unwrap();
        assert!(rep.components[0].pvalue > 0.01);
        assert!(rep.components[1].pvalue < 0.01);
        assert_eq!(rep.rejected(), vec![2]);
    }

    #[test]
    fn gof_under_true_model() {
        let truth = CopulaModel::new(pair(0.3)).unwrap();
        let passes = (0..20)
            .filter(|&seed| {
                let s = sample(&truth, 5000, seed).unwrap();
                gof(&truth, &s.data, 0.01).unwrap().passes()
            })
            .count();
        assert!(passes >= 17, "{passes}/20");
    }

    #[test]
    fn report_outputs() {
        let m = CopulaModel::independence(2).unwrap();
        let s = sample(&m, 100, 1).unwrap();
        let rep = gof(&m, &s.data, 0.05).unwrap();
        assert_eq!(rep.to_csv().lines().count(), 3);
        assert!(rep.to_table().contains("overall at level 0.05"));
        let dev = deviation_csv(&s.data);
        assert_eq!(dev.lines().count(), 201);
    }
}
