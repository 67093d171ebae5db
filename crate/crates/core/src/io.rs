//! Parameter vector and marginal serialization.
//!
//! Two formats: a flat CSV `k,mask,lambda` with the mask as a decimal
//! bitmask, and dotted config keys such as `lambda1.12 = 0.05` for
//! `λ^(1)_{1,2}`. Floats are written with 17 significant digits so both
//! round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use toml::{Table, Value};

use crate::basis::Order;
use crate::data::fmt_f64;
use crate::error::{Error, Result};
use crate::marginals::GenTParams;
use crate::params::ParamVector;
use crate::subset::{check_dim, SubsetMask};

pub fn params_to_csv(p: &ParamVector) -> String {
    let mut out = String::from("k,mask,lambda\n");
    for (k, m, v) in p.iter() {
        let _ = writeln!(out, "{},{},{}", k.index(), m.bits(), fmt_f64(v));
    }
    out
}

/// Parses `k,mask,lambda` rows. Missing rows are zero. Without an explicit
/// `d` the dimension is the highest variable referenced.
pub fn params_from_csv(text: &str, d: Option<usize>) -> Result<ParamVector> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(h) if h.replace(' ', "") == "k,mask,lambda" => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header `k,mask,lambda`, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("row {}: expected 3 fields", lineno + 1)));
        }
        let k: u8 = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad order {:?}", lineno + 1, fields[0])))?;
        let mask: u32 = fields[1]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad mask {:?}", lineno + 1, fields[1])))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad value {:?}", lineno + 1, fields[2])))?;
        entries.push((Order::from_index(k)?, SubsetMask(mask), v));
    }
    build(entries, d)
}

pub fn read_params_csv(path: &Path, d: Option<usize>) -> Result<ParamVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_csv(&text, d)
}

fn build(entries: Vec<(Order, SubsetMask, f64)>, d: Option<usize>) -> Result<ParamVector> {
    let d = match d {
        Some(d) => d,
        None => {
            let bits = entries.iter().fold(0u32, |acc, (_, m, _)| acc | m.bits());
            (32 - bits.leading_zeros()) as usize
        }
    };
    check_dim(d)?;
    let mut p = ParamVector::zeros(d)?;
    for (k, m, v) in entries {
        p.set(k, m, v)?;
    }
    Ok(p)
}

/// `lambda1.<label> = value` lines, one per nonzero coefficient unless
/// `all` is set.
pub fn params_to_config(p: &ParamVector, all: bool) -> String {
    let mut out = String::new();
    for (k, m, v) in p.iter() {
        if all || v != 0.0 {
            let _ = writeln!(out, "lambda{}.{} = {}", k.index(), m.label(p.dim()), fmt_f64(v));
        }
    }
    out
}

/// Reads the `lambda1` / `lambda2` tables of a parsed config. Returns
/// `None` when neither table is present.
pub fn params_from_table(table: &Table, d: Option<usize>) -> Result<Option<ParamVector>> {
    let mut entries = Vec::new();
    let mut found = false;
    for k in Order::ALL {
        let key = format!("lambda{}", k.index());
        let Some(section) = table.get(&key) else {
            continue;
        };
        found = true;
        let section = section
            .as_table()
            .ok_or_else(|| Error::Parse(format!("`{key}` must be a table of subset = value")))?;
        for (label, value) in section {
            let m = SubsetMask::parse_label(label)?;
            let v = as_f64(value).ok_or_else(|| Error::Parse(format!("{key}.{label}: not a number")))?;
            entries.push((k, m, v));
        }
    }
    if !found {
        return Ok(None);
    }
    build(entries, d).map(Some)
}

pub fn parse_config(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_config(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Marginal parameters for columns `1..=d` from `channel.N.{a,b,c}`.
/// Missing channels fall back to the bearing defaults when `d = 4`.
pub fn channels_from_table(table: &Table, d: usize) -> Result<Vec<GenTParams>> {
    let defaults = GenTParams::bearing_defaults();
    let section = match table.get("channel") {
        Some(v) => Some(
            v.as_table()
                .ok_or_else(|| Error::Parse("`channel` must be a table".into()))?,
        ),
        None => None,
    };
    if let Some(section) = section {
        for key in section.keys() {
            match key.parse::<usize>() {
                Ok(j) if (1..=d).contains(&j) => {}
                _ => return Err(Error::Parse(format!("channel.{key}: expected a column in 1..={d}"))),
            }
        }
    }
    (1..=d)
        .map(|j| {
            let entry = section.and_then(|s| s.get(&j.to_string()));
            match entry {
                Some(v) => {
                    let t = v
                        .as_table()
                        .ok_or_else(|| Error::Parse(format!("channel.{j} must be a table")))?;
                    let field = |name: &str| {
                        t.get(name)
                            .and_then(as_f64)
                            .ok_or_else(|| Error::Parse(format!("channel.{j}.{name} missing or not a number")))
                    };
                    GenTParams::new(field("a")?, field("b")?, field("c")?)
                }
                None if d == defaults.len() => Ok(defaults[j - 1]),
                None => Err(Error::Parse(format!("channel.{j} not configured"))),
            }
        })
        .collect()
}

pub fn channels_to_config(params: &[GenTParams]) -> String {
    let mut out = String::new();
    for (j, p) in params.iter().enumerate() {
        let _ = writeln!(out, "channel.{}.a = {}", j + 1, fmt_f64(p.a));
        let _ = writeln!(out, "channel.{}.b = {}", j + 1, fmt_f64(p.b));
        let _ = writeln!(out, "channel.{}.c = {}", j + 1, fmt_f64(p.c));
    }
    out
}
