//! Generalized (location-scale) Student-t marginals and the probability
//! integral transform.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::roots::newton_bisect;

const QUANTILE_TOL: f64 = 1e-12;

/// Location `a`, scale `b > 0` and degrees of freedom `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenTParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GenTParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Argument(format!("location {a} is not finite")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Argument(format!("scale {b} must be positive")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Argument(format!("degrees of freedom {c} must be positive")));
        }
        Ok(Self { a, b, c })
    }

    /// Fitted parameters for the four bearing channels 1, 3, 5 and 7.
    pub fn bearing_defaults() -> [GenTParams; 4] {
        [
            GenTParams { a: -0.119, b: 0.0877, c: 16.0 },
            GenTParams { a: -0.116, b: 0.0905, c: 26.8 },
            GenTParams { a: -0.115, b: 0.103, c: 8.28 },
            GenTParams { a: -0.116, b: 0.0743, c: 4.73 },
        ]
    }
}

/// `f_δ(x) = [1 + ((x-a)/(b√c))²]^{-(c+1)/2} / (b √c B(c/2, 1/2))`.
pub fn gent_pdf(p: GenTParams, x: f64) -> f64 {
    let t = (x - p.a) / p.b;
    let c = p.c;
    let log = -0.5 * (c + 1.0) * (t * t / c).ln_1p() - p.b.ln() - 0.5 * c.ln() - ln_beta(0.5 * c, 0.5);
    log.exp()
}

pub fn gent_cdf(p: GenTParams, x: f64) -> f64 {
    let t = (x - p.a) / p.b;
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let c = p.c;
    let t2 = t * t;
    if t2 < c {
        // Central region: F = 1/2 + sign(t) I_{t²/(c+t²)}(1/2, c/2) / 2.
        let half = 0.5 * beta_reg(0.5, 0.5 * c, t2 / (c + t2));
        if t >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    } else {
        // Tails: the smaller probability is I_{c/(c+t²)}(c/2, 1/2) / 2.
        let tail = 0.5 * beta_reg(0.5 * c, 0.5, c / (c + t2));
        if t > 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

pub fn gent_quantile(p: GenTParams, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Argument(format!("quantile level {q} not in (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(q);
    let x0 = p.a + p.b * z;
    let mut width = p.b * z.abs().max(1.0);
    let (mut lo, mut hi) = (p.a - width, p.a + width);
    while gent_cdf(p, lo) > q || gent_cdf(p, hi) < q {
        width *= 2.0;
        lo = p.a - width;
        hi = p.a + width;
        if !width.is_finite() {
            return Err(Error::Convergence { residual: q });
        }
    }
    newton_bisect(|x| (gent_cdf(p, x) - q, gent_pdf(p, x)), lo, hi, x0, QUANTILE_TOL)
}

/// How raw columns are mapped to pseudo-observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PitMode {
    /// Data are already on the unit cube.
    #[default]
    None,
    /// Known generalized-t marginals.
    GenT,
    /// Rescaled ranks `rank/(n+1)`, ties averaged.
    Ranks,
}

/// Maps column `j` through `gent_cdf(params[j], ·)`.
pub fn pit(data: &DataMatrix, params: &[GenTParams]) -> Result<DataMatrix> {
    if params.len() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            found: params.len(),
        });
    }
    let columns: Vec<Vec<f64>> = (0..data.ncols())
        .into_par_iter()
        .map(|j| data.column(j).into_iter().map(|x| gent_cdf(params[j], x)).collect())
        .collect();
    from_columns(data, &columns)
}

/// Empirical-CDF transform with `rank/(n+1)`; tied values share their
/// average rank.
pub fn pit_ranks(data: &DataMatrix) -> Result<DataMatrix> {
    let n = data.nrows();
    let columns: Vec<Vec<f64>> = (0..data.ncols())
        .into_par_iter()
        .map(|j| {
            let col = data.column(j);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| col[x].total_cmp(&col[y]));
            let mut out = vec![0.0; n];
            let mut i = 0;
            while i < n {
                let mut k = i;
                while k + 1 < n && col[order[k + 1]] == col[order[i]] {
                    k += 1;
                }
                let rank = (i + k) as f64 / 2.0 + 1.0;
                for &idx in &order[i..=k] {
                    out[idx] = rank / (n as f64 + 1.0);
                }
                i = k + 1;
            }
            out
        })
        .collect();
    from_columns(data, &columns)
}

fn from_columns(data: &DataMatrix, columns: &[Vec<f64>]) -> Result<DataMatrix> {
    let (n, d) = (data.nrows(), data.ncols());
    let mut values = vec![0.0; n * d];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[i * d + j] = v;
        }
    }
    let out = DataMatrix::from_flat(d, values)?;
    if data.header().is_empty() {
        Ok(out)
    } else {
        out.with_header(data.header().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ks::ks_uniform;
    use crate::quadrature::GaussLegendre;
    use proptest::prelude::*;
    use rand::Rng;

    const CAUCHY: GenTParams = GenTParams { a: 0.0, b: 1.0, c: 1.0 };

    #[test]
    fn cauchy_values() {
        assert!((gent_pdf(CAUCHY, 0.0) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((gent_cdf(CAUCHY, 1.0) - 0.75).abs() < 1e-15);
        assert!((gent_cdf(CAUCHY, -3.0) - (0.5 + (-3f64).atan() / std::f64::consts::PI)).abs() < 1e-15);
        assert!((gent_quantile(CAUCHY, 0.75).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn density_matches_scaled_student_t() {
        use statrs::distribution::{Continuous, StudentsT};
        for p in GenTParams::bearing_defaults() {
            let t = StudentsT::new(0.0, 1.0, p.c).unwrap();
            for x in [-0.5, -0.2, p.a, 0.0, 0.3] {
                let expect = t.pdf((x - p.a) / p.b) / p.b;
                assert!((gent_pdf(p, x) - expect).abs() < 1e-12 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let p = GenTParams::bearing_defaults()[0];
        let gl = GaussLegendre::new(30);
        // Map x = a + b tan(θ) over θ ∈ (-π/2, π/2).
        let half = std::f64::consts::FRAC_PI_2;
        let total: f64 = (0..64)
            .map(|i| {
                let lo = -half + i as f64 * 2.0 * half / 64.0;
                gl.integrate(lo, lo + 2.0 * half / 64.0, |th| {
                    let (s, c) = th.sin_cos();
                    gent_pdf(p, p.a + p.b * s / c) * p.b / (c * c)
                })
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn centre_and_symmetry() {
        for p in GenTParams::bearing_defaults() {
            assert_eq!(gent_cdf(p, p.a), 0.5);
            for t in [0.01, 0.1, 0.4] {
                assert!((gent_pdf(p, p.a + t) - gent_pdf(p, p.a - t)).abs() < 1e-13);
                assert!((gent_cdf(p, p.a + t) + gent_cdf(p, p.a - t) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn channel7_round_trip() {
        let p = GenTParams::bearing_defaults()[3];
        for i in 1..=99 {
            let q = i as f64 / 100.0;
            let x = gent_quantile(p, q).unwrap();
            assert!((gent_cdf(p, x) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn extreme_round_trip() {
        for p in GenTParams::bearing_defaults() {
            for q in [1e-6, 1e-4, 0.5, 1.0 - 1e-4, 1.0 - 1e-6] {
                let x = gent_quantile(p, q).unwrap();
                assert!((gent_cdf(p, x) - q).abs() < 1e-10, "{p:?} {q}");
            }
        }
        assert!(gent_quantile(CAUCHY, 0.0).is_err());
        assert!(gent_quantile(CAUCHY, 1.0).is_err());
    }

    #[test]
    fn derivative_matches_density() {
        for p in GenTParams::bearing_defaults() {
            for x in [-0.4, -0.15, 0.0, 0.2] {
                let h = 1e-5 * p.b;
                let fd = (gent_cdf(p, x + h) - gent_cdf(p, x - h)) / (2.0 * h);
                let f = gent_pdf(p, x);
                assert!((fd - f).abs() <= 1e-6 * f, "{p:?} {x}: {fd} vs {f}");
            }
        }
    }

    #[test]
    fn incomplete_beta_symmetry() {
        for &(a, b) in &[(8.0, 0.5), (2.365, 0.5), (0.5, 13.4), (4.14, 2.5)] {
            for x in [0.01, 0.3, 0.5, 0.77, 0.99] {
                let s = beta_reg(a, b, x) + beta_reg(b, a, 1.0 - x);
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_params() {
        assert!(GenTParams::new(0.0, 0.0, 1.0).is_err());
        assert!(GenTParams::new(0.0, 1.0, -1.0).is_err());
        assert!(GenTParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(GenTParams::new(0.0, 1.0, 4.73).is_ok());
    }

    #[test]
    fn pit_constant_and_monotone() {
        let ps = GenTParams::bearing_defaults();
        let rows: Vec<[f64; 4]> = (0..20)
            .map(|i| {
                let t = i as f64 / 20.0 - 0.5;
                [ps[0].a, t, -t, t * t]
            })
            .collect();
        let data = DataMatrix::from_rows(&rows).unwrap();
        let u = pit(&data, &ps).unwrap();
        assert!(u.column(0).iter().all(|&v| v == 0.5));
        let c1 = u.column(1);
        assert!(c1.windows(2).all(|w| w[0] < w[1]));
        let c2 = u.column(2);
        assert!(c2.windows(2).all(|w| w[0] > w[1]));
        assert!(pit(&data, &ps[..3]).is_err());
    }

    #[test]
    fn synthetic_sample_pit_is_uniform() {
        let ps = GenTParams::bearing_defaults();
        let mut rng = crate::rng::substream(21, 0);
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                ps.iter()
                    .map(|&p| gent_quantile(p, rng.random_range(1e-12..1.0)).unwrap())
                    .collect()
            })
            .collect();
        let u = pit(&DataMatrix::from_rows(&rows).unwrap(), &ps).unwrap();
        for j in 0..4 {
            assert!(ks_uniform(&u.column(j)).pvalue > 0.01);
        }
    }

    #[test]
    fn rank_transform() {
        let data = DataMatrix::from_rows(&[[3.0, 1.0], [1.0, 1.0], [2.0, 5.0]]).unwrap();
        let u = pit_ranks(&data).unwrap();
        assert_eq!(u.column(0), vec![0.75, 0.25, 0.5]);
        assert_eq!(u.column(1), vec![0.375, 0.375, 0.75]);
    }

    proptest! {
        #[test]
        fn cdf_is_strictly_increasing(x in -2.0f64..2.0, h in 1e-6f64..0.5) {
            let p = GenTParams::bearing_defaults()[2];
            prop_assert!(gent_cdf(p, x + h) > gent_cdf(p, x));
        }

        #[test]
        fn quantile_round_trip(q in 1e-6f64..(1.0 - 1e-6), k in 0usize..4) {
            let p = GenTParams::bearing_defaults()[k];
            let x = gent_quantile(p, q).unwrap();
            prop_assert!((gent_cdf(p, x) - q).abs() < 1e-10);
        }
    }
}
