//! Seeded Monte Carlo studies: consistency, interval coverage, covariance
//! validation and χ² calibration.
//!
//! Replication `r` at sample-size index `s` draws from
//! `derive_seed(derive_seed(seed, s), r)`. Replications run in batches of
//! [`BATCH`]; per-replication results are folded in index order, so the
//! output does not depend on the thread count. With a checkpoint path the
//! accumulator is written after every batch and a rerun with the same
//! spec resumes from it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::basis::Order;
use crate::data::fmt_f64;
use crate::error::{Error, Result};
use crate::estimate::{
    inference, moment_estimates, plug_in_covariance, test_lambda2_zero, Chi2Mode, CovMatrix,
    EstimateOptions, VarianceMode,
};
use crate::model::CopulaModel;
use crate::params::ParamVector;
use crate::rng::derive_seed;
use crate::sample::sample;
use crate::subset::SubsetMask;

pub const BATCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Consistency,
    Coverage,
    Covariance,
    Chi2Calibration,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Consistency => "consistency",
            StudyKind::Coverage => "coverage",
            StudyKind::Covariance => "covariance",
            StudyKind::Chi2Calibration => "chi2-calibration",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "consistency" => Ok(StudyKind::Consistency),
            "coverage" => Ok(StudyKind::Coverage),
            "covariance" => Ok(StudyKind::Covariance),
            "chi2-calibration" | "chi2" => Ok(StudyKind::Chi2Calibration),
            _ => Err(Error::Argument(format!("unknown study {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudySpec {
    pub model: ParamVector,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    pub kind: StudyKind,
    /// Sample from a vector that fails the sufficient validity constraint.
    pub permissive: bool,
    pub variance: VarianceMode,
    pub chi2: Chi2Mode,
    /// Allow a nonzero `Λ^(2)` in a χ² run, which then measures power.
    pub power: bool,
    pub checkpoint: Option<PathBuf>,
}

impl StudySpec {
    pub fn new(kind: StudyKind, model: ParamVector, sizes: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            model,
            sizes,
            replications,
            alpha: 0.05,
            seed,
            kind,
            permissive: false,
            variance: VarianceMode::default(),
            chi2: Chi2Mode::default(),
            power: false,
            checkpoint: None,
        }
    }

    fn validate(&self) -> Result<CopulaModel> {
        if self.replications == 0 {
            return Err(Error::Argument("replications must be at least 1".into()));
        }
        if self.sizes.is_empty() {
            return Err(Error::Argument("no sample sizes given".into()));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 2) {
            return Err(Error::TooFewRows { needed: 2, got: n });
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Argument(format!("level {} not in [0, 1)", self.alpha)));
        }
        if self.permissive {
            Ok(CopulaModel::permissive(self.model.clone()))
        } else {
            CopulaModel::new(self.model.clone())
        }
    }

    /// Hash of everything that determines the study output.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let desc = format!(
            "{}|{}|{:?}|{}|{:016x}|{}|{:?}|{:?}|{}|{}",
            self.kind.name(),
            self.model.digest(),
            self.sizes,
            self.replications,
            self.alpha.to_bits(),
            self.seed,
            self.variance,
            self.chi2,
            self.power,
            self.permissive
        );
        h.update(desc.as_bytes());
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn replication_seed(&self, size_index: usize, rep: usize) -> u64 {
        derive_seed(derive_seed(self.seed, size_index as u64), rep as u64)
    }
}

/// Runs replications `0..R` for one sample size, folding each result into
/// `acc` in replication order. `acc` holds exact partial sums and is what
/// the checkpoint stores.
fn run_replications<T, F, G>(
    spec: &StudySpec,
    size_index: usize,
    acc: &mut Vec<f64>,
    per_rep: F,
    fold: G,
) -> Result<()>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
    G: Fn(&mut [f64], T),
{
    let tag = format!("{}-{size_index}", spec.fingerprint());
    let mut done = 0;
    if let Some(path) = &spec.checkpoint {
        if let Some((d, saved)) = load_checkpoint(path, &tag, acc.len())? {
            done = d;
            *acc = saved;
        }
    }
    while done < spec.replications {
        let end = (done + BATCH).min(spec.replications);
        let results: Vec<Result<T>> = (done..end)
            .into_par_iter()
            .map(|rep| {
                per_rep(spec.replication_seed(size_index, rep)).map_err(|e| Error::Replication {
                    replication: rep,
                    source: Box::new(e),
                })
            })
            .collect();
        // The lowest failing replication is reported; the accumulator only
        // ever holds whole batches.
        let results: Vec<T> = results.into_iter().collect::<Result<_>>()?;
        for r in results {
            fold(acc, r);
        }
        done = end;
        if let Some(path) = &spec.checkpoint {
            save_checkpoint(path, &tag, done, acc)?;
        }
    }
    Ok(())
}

fn checkpoint_file(path: &Path, tag: &str) -> PathBuf {
    path.join(format!("checkpoint-{tag}.txt"))
}

fn save_checkpoint(path: &Path, tag: &str, done: usize, acc: &[f64]) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    let mut text = format!("fingerprint={tag}\ndone={done}\n");
    for v in acc {
        let _ = writeln!(text, "{}", fmt_f64(*v));
    }
    let file = checkpoint_file(path, tag);
    let tmp = file.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &file).map_err(|e| Error::io(&file, e))
}

fn load_checkpoint(path: &Path, tag: &str, len: usize) -> Result<Option<(usize, Vec<f64>)>> {
    let file = checkpoint_file(path, tag);
    let text = match std::fs::read_to_string(&file) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&file, e)),
    };
    let bad = || Error::Parse(format!("{}: corrupt checkpoint", file.display()));
    let mut lines = text.lines();
    if lines.next() != Some(&format!("fingerprint={tag}")) {
        return Ok(None);
    }
    let done = lines
        .next()
        .and_then(|l| l.strip_prefix("done="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad)?;
    let acc: Vec<f64> = lines.map(|l| l.parse().map_err(|_| bad())).collect::<Result<_>>()?;
    if acc.len() != len {
        return Err(bad());
    }
    Ok(Some((done, acc)))
}

fn key_label(k: Order, m: SubsetMask, d: usize) -> String {
    format!("lambda{}_{}", k.index(), m.label(d))
}

/// Aligned markdown table.
pub fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|j| {
            rows.iter()
                .map(|r| r[j].chars().count())
                .chain([header[j].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, &w)| format!("{c:>w$}"))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header);
    let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyTable {
    pub truth: ParamVector,
    pub sizes: Vec<usize>,
    /// One estimate vector per sample size.
    pub estimates: Vec<ParamVector>,
}

impl ConsistencyTable {
    pub fn max_abs_error(&self, size_index: usize) -> f64 {
        self.truth
            .to_flat()
            .iter()
            .zip(self.estimates[size_index].to_flat())
            .map(|(t, e)| (t - e).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mask,truth");
        for n in &self.sizes {
            let _ = write!(out, ",n{n}");
        }
        out.push('\n');
        for (i, (k, m, t)) in self.truth.iter().enumerate() {
            let _ = write!(out, "{},{},{}", k.index(), m.bits(), fmt_f64(t));
            for e in &self.estimates {
                let _ = write!(out, ",{}", fmt_f64(e.to_flat()[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let d = self.truth.dim();
        let mut header = vec!["parameter".to_string(), "truth".to_string()];
        header.extend(self.sizes.iter().map(|n| format!("n={n}")));
        let rows: Vec<Vec<String>> = self
            .truth
            .iter()
            .enumerate()
            .map(|(i, (k, m, t))| {
                let mut r = vec![key_label(k, m, d), format!("{t:.3}")];
                r.extend(self.estimates.iter().map(|e| format!("{:.3}", e.to_flat()[i])));
                r
            })
            .collect();
        markdown_table(&header, &rows)
    }
}

/// One estimate per sample size, each from its own seeded sample.
pub fn run_consistency(spec: &StudySpec) -> Result<ConsistencyTable> {
    let model = spec.validate()?;
    let estimates = spec
        .sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| {
            let batch = sample(&model, n, derive_seed(spec.seed, s as u64))?;
            moment_estimates(&batch.data)
        })
        .collect::<Result<_>>()?;
    Ok(ConsistencyTable {
        truth: spec.model.clone(),
        sizes: spec.sizes.clone(),
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTable {
    pub truth: ParamVector,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    /// Replications whose interval contains the truth, per size and key.
    pub hits: Vec<Vec<u64>>,
}

impl CoverageTable {
    /// Coverage percentages for one sample size.
    pub fn percentages(&self, size_index: usize) -> Vec<f64> {
        self.hits[size_index]
            .iter()
            .map(|&h| 100.0 * h as f64 / self.replications as f64)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mask");
        for n in &self.sizes {
            let _ = write!(out, ",n{n}");
        }
        out.push('\n');
        let pct: Vec<Vec<f64>> = (0..self.sizes.len()).map(|s| self.percentages(s)).collect();
        for (i, (k, m, _)) in self.truth.iter().enumerate() {
            let _ = write!(out, "{},{}", k.index(), m.bits());
            for p in &pct {
                let _ = write!(out, ",{}", fmt_f64(p[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let d = self.truth.dim();
        let mut header = vec!["parameter".to_string()];
        header.extend(self.sizes.iter().map(|n| format!("n={n}")));
        let pct: Vec<Vec<f64>> = (0..self.sizes.len()).map(|s| self.percentages(s)).collect();
        let rows: Vec<Vec<String>> = self
            .truth
            .iter()
            .enumerate()
            .map(|(i, (k, m, _))| {
                let mut r = vec![key_label(k, m, d)];
                r.extend(pct.iter().map(|p| format!("{:.1}", p[i])));
                r
            })
            .collect();
        markdown_table(&header, &rows)
    }
}

/// Fraction of replications whose `1 - α` interval covers each true
/// coefficient.
pub fn run_coverage(spec: &StudySpec) -> Result<CoverageTable> {
    let model = spec.validate()?;
    if spec.alpha <= 0.0 {
        return Err(Error::Argument("coverage needs a level in (0, 1)".into()));
    }
    let truth = spec.model.to_flat();
    let opts = EstimateOptions {
        variance: spec.variance,
        covariance: false,
    };
    let mut hits = Vec::with_capacity(spec.sizes.len());
    for (s, &n) in spec.sizes.iter().enumerate() {
        let mut acc = vec![0.0; truth.len()];
        run_replications(
            spec,
            s,
            &mut acc,
            |seed| {
                let batch = sample(&model, n, seed)?;
                let res = inference(moment_estimates(&batch.data)?, n, &opts);
                let ci = res.confidence_intervals(spec.alpha)?;
                Ok(ci
                    .iter()
                    .zip(&truth)
                    .map(|(&(lo, hi), &t)| lo <= t && t <= hi)
                    .collect::<Vec<bool>>())
            },
            |acc, covered| {
                for (a, c) in acc.iter_mut().zip(covered) {
                    *a += f64::from(u8::from(c));
                }
            },
        )?;
        hits.push(acc.into_iter().map(|v| v as u64).collect());
    }
    Ok(CoverageTable {
        truth: spec.model.clone(),
        sizes: spec.sizes.clone(),
        replications: spec.replications,
        alpha: spec.alpha,
        hits,
    })
}

#[derive(Debug, Clone)]
pub struct CovarianceReport {
    pub n: usize,
    pub replications: usize,
    /// Sample covariance of `√n (Λ̂ - Λ)` over replications.
    pub empirical: DMatrix<f64>,
    pub theoretical: CovMatrix,
}

impl CovarianceReport {
    /// Largest entrywise deviation and its `(row, column)`.
    pub fn max_deviation(&self) -> (f64, usize, usize) {
        let mut best = (0.0, 0, 0);
        for i in 0..self.theoretical.dim() {
            for j in 0..self.theoretical.dim() {
                let dev = (self.empirical[(i, j)] - self.theoretical.get(i, j)).abs();
                if dev > best.0 {
                    best = (dev, i, j);
                }
            }
        }
        best
    }

    /// Long format `k1,mask1,k2,mask2,empirical,theoretical`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k1,mask1,k2,mask2,empirical,theoretical\n");
        let keys = self.theoretical.keys();
        for (i, &(k1, m1)) in keys.iter().enumerate() {
            for (j, &(k2, m2)) in keys.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    k1.index(),
                    m1.bits(),
                    k2.index(),
                    m2.bits(),
                    fmt_f64(self.empirical[(i, j)]),
                    fmt_f64(self.theoretical.get(i, j))
                );
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let d = self.theoretical.dimension();
        let (dev, i, j) = self.max_deviation();
        let keys = self.theoretical.keys();
        let header = vec!["parameter".into(), "empirical var".into(), "plug-in var".into()];
        let rows: Vec<Vec<String>> = keys
            .iter()
            .enumerate()
            .map(|(a, &(k, m))| {
                vec![
                    key_label(k, m, d),
                    format!("{:.4}", self.empirical[(a, a)]),
                    format!("{:.4}", self.theoretical.get(a, a)),
                ]
            })
            .collect();
        let mut out = markdown_table(&header, &rows);
        let _ = writeln!(
            out,
            "\nn = {}, R = {}; max |deviation| = {dev:.4} at ({}, {})",
            self.n,
            self.replications,
            key_label(keys[i].0, keys[i].1, d),
            key_label(keys[j].0, keys[j].1, d)
        );
        out
    }
}

/// Monte Carlo covariance of `√n Λ̂` against the plug-in covariance at the
/// true parameters, one report per sample size.
pub fn run_covariance(spec: &StudySpec) -> Result<Vec<CovarianceReport>> {
    let model = spec.validate()?;
    if spec.replications < 2 {
        return Err(Error::Argument("covariance needs at least 2 replications".into()));
    }
    let truth = spec.model.to_flat();
    let p = truth.len();
    let theoretical = plug_in_covariance(&spec.model);
    let mut reports = Vec::new();
    for (s, &n) in spec.sizes.iter().enumerate() {
        let root_n = (n as f64).sqrt();
        // Sums of x and of x xᵀ (upper triangle, row-major).
        let mut acc = vec![0.0; p + p * (p + 1) / 2];
        run_replications(
            spec,
            s,
            &mut acc,
            |seed| {
                let batch = sample(&model, n, seed)?;
                let est = moment_estimates(&batch.data)?.to_flat();
                Ok(est
                    .iter()
                    .zip(&truth)
                    .map(|(e, t)| root_n * (e - t))
                    .collect::<Vec<f64>>())
            },
            |acc, x| {
                let (sum, outer) = acc.split_at_mut(p);
                for (a, v) in sum.iter_mut().zip(&x) {
                    *a += v;
                }
                let mut idx = 0;
                for i in 0..p {
                    for j in i..p {
                        outer[idx] += x[i] * x[j];
                        idx += 1;
                    }
                }
            },
        )?;
        let r = spec.replications as f64;
        let (sum, outer) = acc.split_at(p);
        let mut empirical = DMatrix::zeros(p, p);
        let mut idx = 0;
        for i in 0..p {
            for j in i..p {
                let c = (outer[idx] - sum[i] * sum[j] / r) / (r - 1.0);
                empirical[(i, j)] = c;
                empirical[(j, i)] = c;
                idx += 1;
            }
        }
        reports.push(CovarianceReport {
            n,
            replications: spec.replications,
            empirical,
            theoretical: theoretical.clone(),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Calibration {
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    pub df: usize,
    pub rejections: Vec<u64>,
}

impl Chi2Calibration {
    pub fn rate(&self, size_index: usize) -> f64 {
        self.rejections[size_index] as f64 / self.replications as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,replications,alpha,df,rejections,rate\n");
        for (s, n) in self.sizes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{n},{},{},{},{},{}",
                self.replications,
                fmt_f64(self.alpha),
                self.df,
                self.rejections[s],
                fmt_f64(self.rate(s))
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let header = ["n", "R", "alpha", "df", "rejection rate"].map(String::from).to_vec();
        let rows: Vec<Vec<String>> = self
            .sizes
            .iter()
            .enumerate()
            .map(|(s, n)| {
                vec![
                    n.to_string(),
                    self.replications.to_string(),
                    format!("{}", self.alpha),
                    self.df.to_string(),
                    format!("{:.3}", self.rate(s)),
                ]
            })
            .collect();
        markdown_table(&header, &rows)
    }
}

/// Empirical rejection rate of the `Λ^(2) = 0` test. The model must have
/// `Λ^(2) = 0` unless `spec.power` is set.
pub fn run_chi2_calibration(spec: &StudySpec) -> Result<Chi2Calibration> {
    let model = spec.validate()?;
    if !spec.power && !spec.model.is_classical() {
        return Err(Error::Argument(
            "calibration model must have all second-order coefficients zero".into(),
        ));
    }
    let opts = EstimateOptions {
        variance: spec.variance,
        covariance: false,
    };
    let mut rejections = Vec::new();
    let mut df = 0;
    for (s, &n) in spec.sizes.iter().enumerate() {
        let mut acc = vec![0.0];
        run_replications(
            spec,
            s,
            &mut acc,
            |seed| {
                let batch = sample(&model, n, seed)?;
                let res = inference(moment_estimates(&batch.data)?, n, &opts);
                Ok(test_lambda2_zero(&res, spec.chi2)?.rejects(spec.alpha))
            },
            |acc, rejected| acc[0] += f64::from(u8::from(rejected)),
        )?;
        rejections.push(acc[0] as u64);
        df = crate::subset::subsets_per_order(spec.model.dim());
    }
    Ok(Chi2Calibration {
        sizes: spec.sizes.clone(),
        replications: spec.replications,
        alpha: spec.alpha,
        df,
        rejections,
    })
}
