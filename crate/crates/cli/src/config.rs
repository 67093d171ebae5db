//! Run configuration: a TOML file of dotted keys, overridden by flags.
//!
//! ```toml
//! dimension = 4
//! seed = 42
//! alpha = 0.05
//! data = "bearing.csv"
//! pit = "gent"
//! lambda1.12 = 0.05
//! channel.1.a = -0.119
//! study.kind = "coverage"
//! study.sizes = [1000]
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use efgm::io::{channels_from_table, params_from_table, read_config, read_params_csv};
use efgm::{GenTParams, ParamVector};
use toml::{Table, Value};

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    table: Table,
    base: PathBuf,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let table = read_config(path)?;
        let known = [
            "dimension", "params", "model", "data", "out", "seed", "alpha", "pit", "variance",
            "chi2", "projection", "permissive", "rows", "n", "lambda1", "lambda2", "channel",
            "study",
        ];
        if let Some(key) = table.keys().find(|k| !known.contains(&k.as_str())) {
            bail!("{}: unknown key `{key}`", path.display());
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { table, base })
    }

    fn get(&self, dotted: &str) -> Option<&Value> {
        let mut parts = dotted.split('.');
        let mut v = self.table.get(parts.next()?)?;
        for p in parts {
            v = v.as_table()?.get(p)?;
        }
        Some(v)
    }

    pub fn str(&self, key: &str) -> Result<Option<&str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => bail!("config `{key}` must be a string"),
        }
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.str(key)?.map(|s| self.base.join(s)))
    }

    pub fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => bail!("config `{key}` must be a nonnegative integer"),
        }
    }

    pub fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => efgm::io::as_f64(v)
                .map(Some)
                .with_context(|| format!("config `{key}` must be a number")),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => bail!("config `{key}` must be true or false"),
        }
    }

    pub fn uint_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    _ => bail!("config `{key}` must be a list of nonnegative integers"),
                })
                .collect::<Result<_>>()
                .map(Some),
            Some(_) => bail!("config `{key}` must be a list"),
        }
    }

    pub fn dimension(&self) -> Result<Option<usize>> {
        Ok(self.uint("dimension")?.map(|d| d as usize))
    }

    /// Parameter vector from `params = "file.csv"` or inline `lambda` tables.
    pub fn params(&self) -> Result<Option<ParamVector>> {
        let d = self.dimension()?;
        let inline = params_from_table(&self.table, d)?;
        match (self.path("params")?, inline) {
            (Some(_), Some(_)) => bail!("config gives both `params` and inline lambda entries"),
            (Some(path), None) => Ok(Some(read_params_csv(&path, d)?)),
            (None, inline) => Ok(inline),
        }
    }

    pub fn channels(&self, d: usize) -> Result<Vec<GenTParams>> {
        Ok(channels_from_table(&self.table, d)?)
    }
}
