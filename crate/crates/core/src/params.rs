use crate::basis::Order;
use crate::error::{Error, Result};
use crate::subset::{canonical_subsets, check_dim, subsets_per_order, SubsetMask};

/// Constraint sums up to `1 + VALIDITY_TOL` are accepted.
pub const VALIDITY_TOL: f64 = 1e-12;

/// The coefficient family `λ^(k)_M`, `k ∈ {1, 2}`, `|M| ≥ 2`.
///
/// Coefficients are stored densely by bitmask, so lookup is a single index.
/// Iteration and the flat representation follow the canonical order:
/// order `k` first, then `|M|`, then lexicographic elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    d: usize,
    first: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validity {
    Valid { margin: f64 },
    Invalid { excess: f64 },
}

impl Validity {
    pub fn is_valid(self) -> bool {
        matches!(self, Validity::Valid { .. })
    }
}

/// Canonical `(k, M)` listing for dimension `d`.
pub fn canonical_keys(d: usize) -> Vec<(Order, SubsetMask)> {
    let subsets = canonical_subsets(d);
    Order::ALL
        .iter()
        .flat_map(|&k| subsets.iter().map(move |&m| (k, m)))
        .collect()
}

/// `2^(d+1) - 2d - 2`.
pub fn param_count(d: usize) -> usize {
    2 * subsets_per_order(d)
}

impl ParamVector {
    pub fn zeros(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self {
            d,
            first: vec![0.0; 1 << d],
            second: vec![0.0; 1 << d],
        })
    }

    /// Builds from values listed in canonical order.
    pub fn from_flat(d: usize, values: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(d)?;
        if values.len() != param_count(d) {
            return Err(Error::DimensionMismatch {
                expected: param_count(d),
                found: values.len(),
            });
        }
        for ((k, m), &v) in canonical_keys(d).into_iter().zip(values) {
            p.set(k, m, v)?;
        }
        Ok(p)
    }

    /// Builds from the two per-order blocks, each in canonical subset order.
    pub fn from_blocks(d: usize, first: &[f64], second: &[f64]) -> Result<Self> {
        let flat: Vec<f64> = first.iter().chain(second).copied().collect();
        Self::from_flat(d, &flat)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        param_count(self.d)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().map(|(_, _, v)| v).collect()
    }

    pub fn keys(&self) -> Vec<(Order, SubsetMask)> {
        canonical_keys(self.d)
    }

    /// `(k, M, λ^(k)_M)` in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (Order, SubsetMask, f64)> + '_ {
        canonical_keys(self.d)
            .into_iter()
            .map(move |(k, m)| (k, m, self.get(k, m)))
    }

    /// Zero for masks that are not parameter indices.
    #[inline]
    pub fn get(&self, k: Order, m: SubsetMask) -> f64 {
        let table = self.table(k);
        table.get(m.0 as usize).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, k: Order, m: SubsetMask, value: f64) -> Result<()> {
        if !m.is_parameter_index(self.d) {
            return Err(Error::BadSubset { mask: m, d: self.d });
        }
        if !value.is_finite() {
            return Err(Error::Argument(format!("non-finite coefficient for {m}")));
        }
        match k {
            Order::First => self.first[m.0 as usize] = value,
            Order::Second => self.second[m.0 as usize] = value,
        }
        Ok(())
    }

    /// Dense coefficient table indexed by bitmask.
    #[inline]
    pub fn table(&self, k: Order) -> &[f64] {
        match k {
            Order::First => &self.first,
            Order::Second => &self.second,
        }
    }

    /// `Σ_M [√3^|M| |λ^(1)_M| + √5^|M| |λ^(2)_M|]`.
    pub fn constraint_sum(&self) -> f64 {
        let mut total = 0.0;
        for (k, m, v) in self.iter() {
            total += k.sup().powi(m.len() as i32) * v.abs();
        }
        total
    }

    pub fn check_validity(&self) -> Validity {
        let s = self.constraint_sum();
        if s <= 1.0 + VALIDITY_TOL {
            Validity::Valid { margin: 1.0 - s }
        } else {
            Validity::Invalid { excess: s - 1.0 }
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.iter().filter(|&(_, _, v)| v != 0.0).count()
    }

    pub fn is_independence(&self) -> bool {
        self.count_nonzero() == 0
    }

    /// Whether every `λ^(2)_M` is zero (the classical FGM sub-family).
    pub fn is_classical(&self) -> bool {
        self.second.iter().all(|&v| v == 0.0)
    }

    /// Copy with `Λ^(2)` set to zero.
    pub fn classical_part(&self) -> Self {
        let mut out = self.clone();
        out.second.iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// Proportional shrinkage toward zero so the validity constraint holds.
    /// Returns the vector unchanged when it already satisfies it.
    pub fn project_to_valid(&self) -> Self {
        let s = self.constraint_sum();
        if s <= 1.0 {
            return self.clone();
        }
        let factor = 1.0 / s;
        let mut out = self.clone();
        out.first.iter_mut().for_each(|v| *v *= factor);
        out.second.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Coefficients `λ^(k)_M` with `M ⊆ keep`, relabelled onto `1..=|keep|`.
    pub fn restrict(&self, keep: SubsetMask) -> Result<Self> {
        if keep.len() < 2 || !keep.is_subset_of(SubsetMask::full(self.d)) {
            return Err(Error::BadSubset { mask: keep, d: self.d });
        }
        let mut out = Self::zeros(keep.len())?;
        for (k, m, v) in self.iter() {
            if m.is_subset_of(keep) {
                out.set(k, m.compress(keep), v)?;
            }
        }
        Ok(out)
    }

    /// `1 + Σ_k Σ_M λ^(k)_M Π_{m∈M} φ_k(u_m)`; no domain or validity checks.
    pub fn density_unchecked(&self, u: &[f64]) -> f64 {
        let mut scratch = ProductScratch::new(self.d);
        scratch.fill(u);
        scratch.density(self)
    }

    /// Hex digest of the canonical flat vector (bit patterns), for sidecar
    /// metadata and checkpoint fingerprints.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.d as u64).to_le_bytes());
        for v in self.to_flat() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-mask basis products `Π_{m∈M} φ_k(u_m)` for all `M ⊆ {1..d}`.
#[derive(Debug, Clone)]
pub struct ProductScratch {
    pub(crate) first: Vec<f64>,
    pub(crate) second: Vec<f64>,
}

impl ProductScratch {
    pub fn new(d: usize) -> Self {
        Self {
            first: vec![1.0; 1 << d],
            second: vec![1.0; 1 << d],
        }
    }

    pub fn fill(&mut self, u: &[f64]) {
        let n = 1usize << u.len();
        debug_assert!(self.first.len() >= n);
        let f1: Vec<f64> = u.iter().map(|&x| Order::First.eval(x)).collect();
        let f2: Vec<f64> = u.iter().map(|&x| Order::Second.eval(x)).collect();
        self.first[0] = 1.0;
        self.second[0] = 1.0;
        for mask in 1..n {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            self.first[mask] = self.first[rest] * f1[low];
            self.second[mask] = self.second[rest] * f2[low];
        }
    }

    pub fn get(&self, k: Order, m: SubsetMask) -> f64 {
        match k {
            Order::First => self.first[m.0 as usize],
            Order::Second => self.second[m.0 as usize],
        }
    }

    pub fn density(&self, p: &ParamVector) -> f64 {
        let n = 1usize << p.d;
        let mut acc = 1.0;
        for mask in 3..n {
            acc += p.first[mask] * self.first[mask] + p.second[mask] * self.second[mask];
        }
        acc
    }
}

/// The simulation-study vector: `d = 4`, alternating `±0.05` on every
/// subset except the full set, which carries `0.02` (order one) and
/// `-0.025` (order two).
pub fn study_params() -> ParamVector {
    let first = [
        0.05, -0.05, 0.05, -0.05, 0.05, -0.05, 0.05, -0.05, 0.05, -0.05, 0.02,
    ];
    let second = [
        -0.05, 0.05, -0.05, 0.05, -0.05, 0.05, -0.05, 0.05, -0.05, 0.05, -0.025,
    ];
    ParamVector::from_blocks(4, &first, &second).expect("fixed d = 4 layout")
}
