use std::fmt;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 16;

/// A subset `M ⊆ {1, …, d}`; bit `i - 1` is set when variable `i` belongs
/// to `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SubsetMask(pub u32);

impl SubsetMask {
    pub const EMPTY: SubsetMask = SubsetMask(0);

    pub fn full(d: usize) -> Self {
        SubsetMask(((1u64 << d) - 1) as u32)
    }

    pub fn singleton(var: usize) -> Self {
        SubsetMask(1 << (var - 1))
    }

    /// Builds a mask from 1-based variable indices.
    pub fn from_vars(vars: &[usize]) -> Result<Self> {
        let mut bits = 0u32;
        for &v in vars {
            if v == 0 || v > MAX_DIM {
                return Err(Error::Argument(format!("variable index {v} out of range")));
            }
            bits |= 1 << (v - 1);
        }
        Ok(SubsetMask(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, var: usize) -> bool {
        var >= 1 && self.0 & (1 << (var - 1)) != 0
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: SubsetMask) -> Self {
        SubsetMask(self.0 | other.0)
    }

    pub fn intersection(self, other: SubsetMask) -> Self {
        SubsetMask(self.0 & other.0)
    }

    pub fn difference(self, other: SubsetMask) -> Self {
        SubsetMask(self.0 & !other.0)
    }

    /// 1-based variable indices, ascending.
    pub fn vars(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i + 1)
            }
        })
    }

    /// Whether this mask indexes a parameter of a `d`-variate model.
    pub fn is_parameter_index(self, d: usize) -> bool {
        self.len() >= 2 && (d >= 32 || self.0 >> d == 0)
    }

    /// Relabels a subset of `within` onto `1..=|within|`, preserving order.
    pub fn compress(self, within: SubsetMask) -> SubsetMask {
        let mut out = 0u32;
        for (pos, var) in within.vars().enumerate() {
            if self.contains(var) {
                out |= 1 << pos;
            }
        }
        SubsetMask(out)
    }

    /// Compact label: `"12"` for `{1, 2}` when `d ≤ 9`, `"1_10"` otherwise.
    pub fn label(self, d: usize) -> String {
        let vars: Vec<String> = self.vars().map(|v| v.to_string()).collect();
        if d <= 9 {
            vars.concat()
        } else {
            vars.join("_")
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad subset label {s:?}"));
        let vars: Vec<usize> = if s.contains('_') {
            s.split('_')
                .map(|t| t.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_>>()?
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(|v| v as usize).ok_or_else(bad))
                .collect::<Result<_>>()?
        };
        if vars.is_empty() {
            return Err(bad());
        }
        let mask = SubsetMask::from_vars(&vars)?;
        if mask.len() != vars.len() {
            return Err(bad());
        }
        Ok(mask)
    }

    /// All submasks of `self`, including empty and `self`.
    pub fn submasks(self) -> impl Iterator<Item = SubsetMask> {
        let full = self.0;
        let mut next = Some(full);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == 0 { None } else { Some((cur - 1) & full) };
            Some(SubsetMask(cur))
        })
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.vars().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

pub fn check_dim(d: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::Dimension(d))
    }
}

/// Parameter subsets of `{1..d}` (`|M| ≥ 2`) ordered by cardinality and
/// then lexicographically by their sorted elements. For `d = 4` this is
/// `{1,2}, {1,3}, {1,4}, {2,3}, {2,4}, {3,4}, {1,2,3}, …, {1,2,3,4}`.
pub fn canonical_subsets(d: usize) -> Vec<SubsetMask> {
    let mut out = Vec::with_capacity((1usize << d) - d - 1);
    for size in 2..=d {
        let mut combo: Vec<usize> = (1..=size).collect();
        loop {
            out.push(SubsetMask(combo.iter().fold(0u32, |b, &v| b | (1 << (v - 1)))));
            // next combination in lexicographic order
            let mut i = size;
            while i > 0 && combo[i - 1] == d - size + i {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..size {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    out
}

/// `2^d - d - 1`, the number of subsets per basis order.
pub fn subsets_per_order(d: usize) -> usize {
    (1usize << d) - d - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_d4() {
        let labels: Vec<String> = canonical_subsets(4).iter().map(|m| m.label(4)).collect();
        assert_eq!(
            labels,
            ["12", "13", "14", "23", "24", "34", "123", "124", "134", "234", "1234"]
        );
    }

    #[test]
    fn counts() {
        for d in 2..=10 {
            assert_eq!(canonical_subsets(d).len(), subsets_per_order(d));
        }
        assert_eq!(2 * subsets_per_order(4), 22);
    }

    #[test]
    fn labels_round_trip() {
        let m = SubsetMask::from_vars(&[1, 3, 4]).unwrap();
        assert_eq!(m.label(4), "134");
        assert_eq!(SubsetMask::parse_label("134").unwrap(), m);
        let big = SubsetMask::from_vars(&[2, 11]).unwrap();
        assert_eq!(big.label(12), "2_11");
        assert_eq!(SubsetMask::parse_label("2_11").unwrap(), big);
        assert!(SubsetMask::parse_label("11").is_err());
        assert!(SubsetMask::parse_label("x").is_err());
        assert_eq!(m.to_string(), "{1,3,4}");
    }

    #[test]
    fn compress_relabels() {
        let p = SubsetMask::from_vars(&[1, 3]).unwrap();
        assert_eq!(p.compress(p), SubsetMask::full(2));
        let m = SubsetMask::from_vars(&[2, 4]).unwrap();
        let within = SubsetMask::from_vars(&[2, 3, 4]).unwrap();
        assert_eq!(m.compress(within), SubsetMask::from_vars(&[1, 3]).unwrap());
    }

    #[test]
    fn submask_enumeration() {
        let m = SubsetMask::from_vars(&[1, 2, 4]).unwrap();
        let subs: Vec<_> = m.submasks().collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|s| s.is_subset_of(m)));
    }
}
