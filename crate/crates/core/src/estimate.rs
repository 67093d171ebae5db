//! Closed-form moment estimators and their asymptotic theory.
//!
//! `λ̂^(k)_M` is the sample mean of `Π_{m∈M} φ_k(U_im)`. Its exact
//! second moments follow from the orthonormality of `{1, φ_1, φ_2}` and the
//! triple-product integrals, which gives the limiting covariance
//! `Σ^{z,r}_{P,Q} = E[Π_P φ_z Π_Q φ_r] - λ^(z)_P λ^(r)_Q` in closed form.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::basis::{pair_integral, triple_integral, Order, TRIPLE_112, TRIPLE_222};
use crate::data::{fmt_f64, DataMatrix};
use crate::error::{Error, Result};
use crate::params::{canonical_keys, ParamVector, ProductScratch};
use crate::subset::{check_dim, subsets_per_order, SubsetMask};

const CHUNK_ROWS: usize = 1024;
/// Plug-in χ² blocks with a larger condition estimate are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Variance used for standard errors, intervals and z-tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMode {
    /// `ŝ^(k)_M = 1 + Σ_{N⊆M} c_k^{|N|} λ̂^(2)_N` with `c_1 = 2/√5`,
    /// `c_2 = 2√5/7`.
    #[default]
    Remark,
    /// Diagonal of the plug-in covariance (the above minus `λ̂²`).
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Chi2Mode {
    /// Covariance of `Λ̂^(2)` evaluated under `Λ^(2) = 0`, which is exactly
    /// the identity.
    #[default]
    NullIdentity,
    /// The `(2, 2)` block of the plug-in covariance at the full estimate.
    PlugIn,
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub variance: VarianceMode,
    /// Also compute the plug-in covariance matrix.
    pub covariance: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            variance: VarianceMode::Remark,
            covariance: true,
        }
    }
}

/// Symmetric matrix indexed by canonical `(k, M)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    d: usize,
    keys: Vec<(Order, SubsetMask)>,
    values: Vec<f64>,
}

impl CovMatrix {
    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[(Order, SubsetMask)] {
        &self.keys
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.keys.len() + j]
    }

    pub fn index_of(&self, k: Order, m: SubsetMask) -> Option<usize> {
        self.keys.iter().position(|&key| key == (k, m))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.values)
    }

    /// Sub-block for one basis order.
    pub fn block(&self, k: Order) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.dim()).filter(|&i| self.keys[i].0 == k).collect();
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    /// Dense CSV; the header names the `(k, mask)` of each column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = self
            .keys
            .iter()
            .map(|(k, m)| format!("k{}_m{}", k.index(), m.bits()))
            .collect();
        let _ = writeln!(out, "key,{}", names.join(","));
        for (i, name) in names.iter().enumerate() {
            let row: Vec<String> = (0..self.dim()).map(|j| fmt_f64(self.get(i, j))).collect();
            let _ = writeln!(out, "{name},{}", row.join(","));
        }
        out
    }

    pub fn max_abs_diff(&self, other: &DMatrix<f64>) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.get(i, j) - other[(i, j)]).abs());
            }
        }
        worst
    }

    pub fn dimension(&self) -> usize {
        self.d
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub params_hat: ParamVector,
    pub n: usize,
    /// Standard errors in canonical order.
    pub se: Vec<f64>,
    /// Two-sided p-values for `λ^(k)_M = 0`, canonical order.
    pub pvalues: Vec<f64>,
    pub sigma_hat: Option<CovMatrix>,
    pub variance: VarianceMode,
}

impl EstimationResult {
    pub fn index_of(&self, k: Order, m: SubsetMask) -> Option<usize> {
        canonical_keys(self.params_hat.dim())
            .iter()
            .position(|&key| key == (k, m))
    }

    pub fn se_of(&self, k: Order, m: SubsetMask) -> Option<f64> {
        self.index_of(k, m).map(|i| self.se[i])
    }

    pub fn pvalue_of(&self, k: Order, m: SubsetMask) -> Option<f64> {
        self.index_of(k, m).map(|i| self.pvalues[i])
    }

    /// `λ̂ ± z_{α/2} · se` for one coefficient.
    pub fn confidence_interval(&self, k: Order, m: SubsetMask, alpha: f64) -> Result<(f64, f64)> {
        let i = self
            .index_of(k, m)
            .ok_or(Error::BadSubset { mask: m, d: self.params_hat.dim() })?;
        let half = normal_quantile_upper(alpha)? * self.se[i];
        let est = self.params_hat.get(k, m);
        Ok((est - half, est + half))
    }

    /// Intervals for every coefficient, canonical order.
    pub fn confidence_intervals(&self, alpha: f64) -> Result<Vec<(f64, f64)>> {
        let z = normal_quantile_upper(alpha)?;
        Ok(self
            .params_hat
            .iter()
            .zip(&self.se)
            .map(|((_, _, est), &se)| (est - z * se, est + z * se))
            .collect())
    }

    /// CSV with columns `k,mask,lambda,se,pvalue`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mask,lambda,se,pvalue\n");
        for (i, (k, m, v)) in self.params_hat.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                k.index(),
                m.bits(),
                fmt_f64(v),
                fmt_f64(self.se[i]),
                fmt_f64(self.pvalues[i])
            );
        }
        out
    }
}

pub fn confidence_interval(
    res: &EstimationResult,
    k: Order,
    m: SubsetMask,
    alpha: f64,
) -> Result<(f64, f64)> {
    res.confidence_interval(k, m, alpha)
}

/// `z_{α/2}`, the upper `α/2` standard normal quantile.
pub fn normal_quantile_upper(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("level {alpha} not in (0, 1)")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - alpha / 2.0))
}

/// Two-sided normal p-value for an observed z statistic.
pub fn two_sided_pvalue(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Raw moment estimates only; rows are summed in fixed-size chunks so the
/// result does not depend on the thread count.
pub fn moment_estimates(data: &DataMatrix) -> Result<ParamVector> {
    let d = data.ncols();
    check_dim(d)?;
    let n = data.nrows();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    data.check_unit_cube()?;
    let size = 1usize << d;
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let mut s1 = vec![0.0; size];
            let mut s2 = vec![0.0; size];
            let mut scratch = ProductScratch::new(d);
            let mut row = vec![0.0; d];
            for i in c * CHUNK_ROWS..n.min((c + 1) * CHUNK_ROWS) {
                for (dst, &x) in row.iter_mut().zip(data.row(i)) {
                    *dst = x.clamp(0.0, 1.0);
                }
                scratch.fill(&row);
                for mask in 3..size {
                    s1[mask] += scratch.first[mask];
                    s2[mask] += scratch.second[mask];
                }
            }
            (s1, s2)
        })
        .collect();
    let mut sum1 = vec![0.0; size];
    let mut sum2 = vec![0.0; size];
    for (s1, s2) in &partials {
        for mask in 0..size {
            sum1[mask] += s1[mask];
            sum2[mask] += s2[mask];
        }
    }
    let mut p = ParamVector::zeros(d)?;
    let nf = n as f64;
    for (k, m) in canonical_keys(d) {
        let s = match k {
            Order::First => sum1[m.bits() as usize],
            Order::Second => sum2[m.bits() as usize],
        };
        p.set(k, m, s / nf)?;
    }
    Ok(p)
}

pub fn estimate_params(data: &DataMatrix) -> Result<EstimationResult> {
    estimate_with(data, &EstimateOptions::default())
}

pub fn estimate_with(data: &DataMatrix, opts: &EstimateOptions) -> Result<EstimationResult> {
    if data.nrows() < 2 {
        return Err(if data.nrows() == 0 {
            Error::EmptyData
        } else {
            Error::TooFewRows {
                needed: 2,
                got: data.nrows(),
            }
        });
    }
    let params_hat = moment_estimates(data)?;
    Ok(inference(params_hat, data.nrows(), opts))
}

/// Standard errors, p-values and (optionally) the covariance for a given
/// estimate and sample size.
pub fn inference(params_hat: ParamVector, n: usize, opts: &EstimateOptions) -> EstimationResult {
    let nf = n as f64;
    let mut se = Vec::with_capacity(params_hat.len());
    let mut pvalues = Vec::with_capacity(params_hat.len());
    for (k, m, est) in params_hat.iter() {
        let var = match opts.variance {
            VarianceMode::Remark => {
                let (s1, s2) = remark_variances(&params_hat, m);
                match k {
                    Order::First => s1,
                    Order::Second => s2,
                }
            }
            VarianceMode::PlugIn => moment_e_unchecked(&params_hat, k, k, m, m) - est * est,
        };
        let s = (var.max(0.0) / nf).sqrt();
        let p = if s > 0.0 {
            two_sided_pvalue(est / s)
        } else if est == 0.0 {
            1.0
        } else {
            0.0
        };
        se.push(s);
        pvalues.push(p);
    }
    let sigma_hat = opts.covariance.then(|| plug_in_covariance(&params_hat));
    EstimationResult {
        params_hat,
        n,
        se,
        pvalues,
        sigma_hat,
        variance: opts.variance,
    }
}

/// `(ŝ^(1)_M, ŝ^(2)_M)`; both sum over `λ̂^(2)_N` for `N ⊆ M`, `|N| ≥ 2`.
pub fn remark_variances(p: &ParamVector, m: SubsetMask) -> (f64, f64) {
    let mut s1 = 1.0;
    let mut s2 = 1.0;
    for n in m.submasks() {
        if n.len() < 2 {
            continue;
        }
        let lam = p.get(Order::Second, n);
        if lam != 0.0 {
            let e = n.len() as i32;
            s1 += TRIPLE_112.powi(e) * lam;
            s2 += TRIPLE_222.powi(e) * lam;
        }
    }
    (s1, s2)
}

/// `E[Π_{s∈P} φ_z(U_s) Π_{t∈Q} φ_r(U_t)]` under the model `p`.
pub fn moment_e(p: &ParamVector, z: Order, r: Order, pm: SubsetMask, qm: SubsetMask) -> Result<f64> {
    for m in [pm, qm] {
        if !m.is_parameter_index(p.dim()) {
            return Err(Error::BadSubset { mask: m, d: p.dim() });
        }
    }
    Ok(moment_e_unchecked(p, z, r, pm, qm))
}

/// Integrating the density over the coordinates of `S = P ∪ Q` factorises
/// per coordinate. The leading `1` contributes only when `P = Q` and
/// `z = r`. A term `λ^(k)_M` contributes only if `M ⊆ S` covers the
/// symmetric difference `P Δ Q` (elsewhere `∫ φ = 0`), with weight
///
/// ```text
/// I(k,z,r)^{|M∩P∩Q|} · I(k,z)^{|M∩P∖Q|} · I(k,r)^{|M∩Q∖P|} · I(z,r)^{|(P∩Q)∖M|}
/// ```
fn moment_e_unchecked(p: &ParamVector, z: Order, r: Order, pm: SubsetMask, qm: SubsetMask) -> f64 {
    // Canonical argument order makes the result exactly symmetric.
    let (z, r, pm, qm) = if (pm.len(), pm.bits(), z) <= (qm.len(), qm.bits(), r) {
        (z, r, pm, qm)
    } else {
        (r, z, qm, pm)
    };
    let both = pm.intersection(qm);
    let p_only = pm.difference(qm);
    let q_only = qm.difference(pm);
    let sym = p_only.union(q_only);
    let izr = pair_integral(z, r);
    let mut total = if sym.is_empty() {
        izr.powi(both.len() as i32)
    } else {
        0.0
    };
    for k in Order::ALL {
        let ikz = pair_integral(k, z);
        let ikr = pair_integral(k, r);
        if (!p_only.is_empty() && ikz == 0.0) || (!q_only.is_empty() && ikr == 0.0) {
            continue;
        }
        let ikzr = triple_integral(k, z, r);
        for t in both.submasks() {
            let m = sym.union(t);
            if m.len() < 2 {
                continue;
            }
            let lam = p.get(k, m);
            if lam == 0.0 {
                continue;
            }
            let uncovered = both.difference(t).len() as i32;
            let w = ikzr.powi(t.len() as i32)
                * ikz.powi(p_only.len() as i32)
                * ikr.powi(q_only.len() as i32)
                * izr.powi(uncovered);
            total += lam * w;
        }
    }
    total
}

/// `Σ^{z,r}_{P,Q} = E^{z,r}_{P,Q} - λ^(z)_P λ^(r)_Q` over canonical keys.
pub fn plug_in_covariance(p: &ParamVector) -> CovMatrix {
    let keys = canonical_keys(p.dim());
    let n = keys.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (z, pm) = keys[i];
            (i..n)
                .map(|j| {
                    let (r, qm) = keys[j];
                    moment_e_unchecked(p, z, r, pm, qm) - p.get(z, pm) * p.get(r, qm)
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    CovMatrix {
        d: p.dim(),
        keys,
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2TestResult {
    pub statistic: f64,
    pub df: usize,
    pub pvalue: f64,
    pub mode: Chi2Mode,
}

impl Chi2TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        alpha > 0.0 && self.pvalue <= alpha
    }
}

pub fn chi2_sf(statistic: f64, df: usize) -> f64 {
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(statistic.max(0.0)).clamp(0.0, 1.0)
}

/// Wald test of `Λ^(2) = 0`: `T_n = n Λ̂^(2)' Σ_2^{-1} Λ̂^(2) → χ²(2^d - d - 1)`.
pub fn test_lambda2_zero(res: &EstimationResult, mode: Chi2Mode) -> Result<Chi2TestResult> {
    let p = &res.params_hat;
    let d = p.dim();
    let df = subsets_per_order(d);
    let lam2: Vec<f64> = p
        .iter()
        .filter(|(k, _, _)| *k == Order::Second)
        .map(|(_, _, v)| v)
        .collect();
    let nf = res.n as f64;
    let statistic = match mode {
        Chi2Mode::NullIdentity => nf * lam2.iter().map(|v| v * v).sum::<f64>(),
        Chi2Mode::PlugIn => {
            let owned;
            let sigma = match &res.sigma_hat {
                Some(s) => s,
                None => {
                    owned = plug_in_covariance(p);
                    &owned
                }
            };
            let block = sigma.block(Order::Second);
            let x = DVector::from_vec(lam2);
            let y = spd_solve(block, &x)?;
            nf * x.dot(&y)
        }
    };
    Ok(Chi2TestResult {
        statistic,
        df,
        pvalue: chi2_sf(statistic, df),
        mode,
    })
}

/// Solves `A y = b` for symmetric `A`; Cholesky first, pivoted LU as the
/// fallback. Errors when the condition estimate exceeds [`MAX_CONDITION`].
/// The estimate is taken relative to `max(‖A‖, 1)`, the unit scale of the
/// independence covariance, so a vanishing 1×1 block counts as singular.
fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.lu().solve(b).ok_or(Error::Singular { condition })
}
