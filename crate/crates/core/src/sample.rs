//! Sequential conditional inversion and the Rosenblatt transform.
//!
//! Given `u_1, …, u_{ℓ-1}`, the conditional CDF of `U_ℓ` is the cubic
//!
//! ```text
//! F(t) = t + Δ1·Φ_1(t) + Δ2·Φ_2(t)
//! ```
//!
//! where `Δk` is the sum of `λ^(k)_M Π_{m∈M∖{ℓ}} φ_k(u_m)` over subsets
//! `M ⊆ {1..ℓ}` containing `ℓ`, divided by the marginal density of the
//! prefix. Sampling inverts `F` at a uniform draw; Rosenblatt evaluates it.

use rand::Rng;
use rayon::prelude::*;

use crate::basis::{check_unit, Order, SQRT3, SQRT5};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::model::CopulaModel;
use crate::params::ParamVector;
use crate::rng::substream;
use crate::roots::newton_bisect;

/// Prefix densities at or below this are treated as a zero-density event.
pub const PREFIX_EPS: f64 = 1e-12;
/// Rosenblatt inputs are clamped to `[ROSENBLATT_EPS, 1 - ROSENBLATT_EPS]`.
pub const ROSENBLATT_EPS: f64 = 1e-15;
/// Target residual for conditional inversion.
pub const INVERT_TOL: f64 = 1e-13;
/// Rows per RNG substream when sampling.
pub const BLOCK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalCoeffs {
    pub delta1: f64,
    pub delta2: f64,
}

impl ConditionalCoeffs {
    pub const IDENTITY: ConditionalCoeffs = ConditionalCoeffs {
        delta1: 0.0,
        delta2: 0.0,
    };

    /// Cubic coefficients `(c3, c2, c1)` of `F(t) = c3 t³ + c2 t² + c1 t`.
    pub fn cubic(&self) -> (f64, f64, f64) {
        let (d1, d2) = (self.delta1, self.delta2);
        (
            2.0 * SQRT5 * d2,
            SQRT3 * d1 - 3.0 * SQRT5 * d2,
            1.0 - SQRT3 * d1 + SQRT5 * d2,
        )
    }

    /// Conditional CDF at `t`, clamped to `[0, 1]`.
    pub fn cdf(&self, t: f64) -> f64 {
        let (c3, c2, c1) = self.cubic();
        (((c3 * t + c2) * t + c1) * t).clamp(0.0, 1.0)
    }

    /// Conditional density `1 + Δ1 φ_1(t) + Δ2 φ_2(t)`.
    pub fn density(&self, t: f64) -> f64 {
        1.0 + self.delta1 * Order::First.eval(t) + self.delta2 * Order::Second.eval(t)
    }

    /// Solves `F(t) = v` on `[0, 1]`.
    pub fn invert(&self, v: f64) -> Result<f64> {
        if v <= 0.0 {
            return Ok(0.0);
        }
        if v >= 1.0 {
            return Ok(1.0);
        }
        if self.delta1 == 0.0 && self.delta2 == 0.0 {
            return Ok(v);
        }
        let (c3, c2, c1) = self.cubic();
        newton_bisect(
            |t| {
                let g = ((c3 * t + c2) * t + c1) * t - v;
                let dg = (3.0 * c3 * t + 2.0 * c2) * t + c1;
                (g, dg)
            },
            0.0,
            1.0,
            v,
            INVERT_TOL,
        )
    }
}

pub fn conditional_cdf(c: &ConditionalCoeffs, t: f64) -> Result<f64> {
    Ok(c.cdf(check_unit(t, "conditional_cdf")?))
}

pub fn invert_conditional(c: &ConditionalCoeffs, v: f64) -> Result<f64> {
    c.invert(check_unit(v, "invert_conditional")?)
}

/// Incremental state for one row: basis products over subsets of the
/// coordinates fixed so far.
struct PrefixState<'a> {
    l1: &'a [f64],
    l2: &'a [f64],
    p1: Vec<f64>,
    p2: Vec<f64>,
    fixed: usize,
}

impl<'a> PrefixState<'a> {
    fn new(params: &'a ParamVector) -> Self {
        let n = 1usize << params.dim();
        Self {
            l1: params.table(Order::First),
            l2: params.table(Order::Second),
            p1: vec![1.0; n],
            p2: vec![1.0; n],
            fixed: 0,
        }
    }

    fn reset(&mut self) {
        self.fixed = 0;
    }

    /// Fixes the next coordinate to `x`.
    fn push(&mut self, x: f64) {
        let bit = 1usize << self.fixed;
        let (f1, f2) = (Order::First.eval(x), Order::Second.eval(x));
        for s in 0..bit {
            self.p1[s | bit] = self.p1[s] * f1;
            self.p2[s | bit] = self.p2[s] * f2;
        }
        self.fixed += 1;
    }

    /// Coefficients for coordinate `fixed + 1` (1-based).
    fn coeffs(&self) -> Result<ConditionalCoeffs> {
        let bit = 1usize << self.fixed;
        let mut density = 1.0;
        let mut num1 = 0.0;
        let mut num2 = 0.0;
        for s in 1..bit {
            num1 += self.l1[s | bit] * self.p1[s];
            num2 += self.l2[s | bit] * self.p2[s];
            if s & (s - 1) != 0 {
                density += self.l1[s] * self.p1[s] + self.l2[s] * self.p2[s];
            }
        }
        if density <= PREFIX_EPS {
            return Err(Error::SingularPrefix {
                index: self.fixed + 1,
                density,
            });
        }
        Ok(ConditionalCoeffs {
            delta1: num1 / density,
            delta2: num2 / density,
        })
    }
}

/// `Δ^(1)_ℓ, Δ^(2)_ℓ` for `ℓ = prefix.len() + 1`.
pub fn conditional_coeffs(m: &CopulaModel, prefix: &[f64]) -> Result<ConditionalCoeffs> {
    let ell = prefix.len() + 1;
    if ell < 2 || ell > m.dim() {
        return Err(Error::Argument(format!(
            "conditioning index {ell} outside 2..={}",
            m.dim()
        )));
    }
    let mut st = PrefixState::new(m.params());
    for &x in prefix {
        st.push(check_unit(x, "conditioning prefix")?);
    }
    st.coeffs()
}

/// A batch of draws with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub data: DataMatrix,
    pub seed: u64,
    pub model_hash: String,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    /// CSV body preceded by a `#` metadata line.
    pub fn to_csv(&self) -> String {
        let meta = format!(
            "seed={} n={} d={} model={}",
            self.seed,
            self.n(),
            self.d(),
            self.model_hash
        );
        self.data.to_csv(&[meta])
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let (data, comments) = DataMatrix::parse_csv(text.as_bytes())?;
        let mut seed = None;
        let mut model_hash = None;
        for c in &comments {
            for field in c.split_whitespace() {
                match field.split_once('=') {
                    Some(("seed", v)) => seed = v.parse().ok(),
                    Some(("model", v)) => model_hash = Some(v.to_string()),
                    _ => {}
                }
            }
        }
        match (seed, model_hash) {
            (Some(seed), Some(model_hash)) => Ok(Self {
                data,
                seed,
                model_hash,
            }),
            _ => Err(Error::Parse("missing sample metadata line".into())),
        }
    }
}

/// Draws `n` rows. Row block `b` uses substream `(seed, b)`, so the output
/// depends only on `(model, n, seed)`.
pub fn sample(m: &CopulaModel, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::Argument("sample size must be positive".into()));
    }
    let d = m.dim();
    let blocks: Vec<Vec<f64>> = (0..n.div_ceil(BLOCK_ROWS))
        .into_par_iter()
        .map(|b| {
            let rows = BLOCK_ROWS.min(n - b * BLOCK_ROWS);
            let mut rng = substream(seed, b as u64);
            let mut st = PrefixState::new(m.params());
            let mut out = Vec::with_capacity(rows * d);
            let mut v = vec![0.0; d];
            for _ in 0..rows {
                for x in v.iter_mut() {
                    *x = rng.random::<f64>();
                }
                draw_row(&mut st, &v, &mut out)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(SampleBatch {
        data: DataMatrix::from_flat(d, blocks.concat())?,
        seed,
        model_hash: m.params().digest(),
    })
}

fn draw_row(st: &mut PrefixState<'_>, v: &[f64], out: &mut Vec<f64>) -> Result<()> {
    st.reset();
    out.push(v[0]);
    st.push(v[0]);
    for &vl in &v[1..] {
        let x = st.coeffs()?.invert(vl)?;
        out.push(x);
        st.push(x);
    }
    Ok(())
}

/// Maps independent uniforms `v` to a copula draw (the inverse of
/// [`rosenblatt`]).
pub fn inverse_rosenblatt(m: &CopulaModel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: v.len(),
        });
    }
    let v: Vec<f64> = v
        .iter()
        .map(|&x| check_unit(x, "uniform input"))
        .collect::<Result<_>>()?;
    let mut st = PrefixState::new(m.params());
    let mut out = Vec::with_capacity(v.len());
    draw_row(&mut st, &v, &mut out)?;
    Ok(out)
}

/// `R_1 = u_1`, `R_ℓ = F_ℓ(u_ℓ | u_1..u_{ℓ-1})`.
pub fn rosenblatt(m: &CopulaModel, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: u.len(),
        });
    }
    let mut st = PrefixState::new(m.params());
    rosenblatt_row(&mut st, u)
}

fn rosenblatt_row(st: &mut PrefixState<'_>, u: &[f64]) -> Result<Vec<f64>> {
    st.reset();
    let mut out = Vec::with_capacity(u.len());
    for (j, &x) in u.iter().enumerate() {
        let x = check_unit(x, "rosenblatt")?.clamp(ROSENBLATT_EPS, 1.0 - ROSENBLATT_EPS);
        out.push(if j == 0 { x } else { st.coeffs()?.cdf(x) });
        st.push(x);
    }
    Ok(out)
}

/// Row-wise Rosenblatt transform of a data matrix.
pub fn rosenblatt_matrix(m: &CopulaModel, data: &DataMatrix) -> Result<DataMatrix> {
    if data.ncols() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: data.ncols(),
        });
    }
    let n = data.nrows();
    let blocks: Vec<Vec<f64>> = (0..n.div_ceil(BLOCK_ROWS))
        .into_par_iter()
        .map(|b| {
            let mut st = PrefixState::new(m.params());
            let mut out = Vec::new();
            for i in b * BLOCK_ROWS..n.min((b + 1) * BLOCK_ROWS) {
                out.extend(rosenblatt_row(&mut st, data.row(i))?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    DataMatrix::from_flat(m.dim(), blocks.concat())
}
