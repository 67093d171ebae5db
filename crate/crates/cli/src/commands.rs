use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use efgm::data::fmt_f64;
use efgm::estimate::{estimate_with, EstimateOptions};
use efgm::experiments::{
    run_chi2_calibration, run_consistency, run_coverage, run_covariance, StudyKind, StudySpec,
};
use efgm::io::params_to_csv;
use efgm::select::{classical_projection, deviation_csv, gof_transformed, refit};
use efgm::{
    pit, pit_ranks, reduce_model, sample, score, study_params, test_lambda2_zero, Chi2Mode,
    CopulaModel, DataMatrix, ParamVector, PitMode, Validity, VarianceMode,
};

use crate::config::RunConfig;
use crate::{
    Chi2Arg, Cli, Command, DataArgs, Format, ModelArgs, PitArg, Preset, Split, StudyArg,
    VarianceArg, EXIT_INVALID, EXIT_REJECT,
};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_ALPHA: f64 = 0.05;
const DATA1_ROWS: usize = 1100;

struct Ctx {
    config: RunConfig,
    seed: u64,
    alpha: f64,
    out: Option<PathBuf>,
}

impl Ctx {
    /// Writes `contents` to `<out>/<name>`, or to stdout when no output
    /// directory is set and `primary` is true.
    fn emit(&self, name: &str, contents: &str, primary: bool) -> Result<()> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
            }
            None if primary => {
                print!("{contents}");
                Ok(())
            }
            None => Ok(()),
        }
    }

    /// Human summary, printed only when machine output goes to files.
    fn summary(&self, text: &str) {
        if self.out.is_some() {
            print!("{text}");
        }
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let config = RunConfig::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => config.uint("seed")?.unwrap_or(DEFAULT_SEED),
    };
    let alpha = match cli.alpha {
        Some(a) => a,
        None => config.float("alpha")?.unwrap_or(DEFAULT_ALPHA),
    };
    if !(0.0..1.0).contains(&alpha) {
        bail!("--alpha {alpha} not in [0, 1)");
    }
    let out = match cli.out {
        Some(o) => Some(o),
        None => config.path("out")?,
    };
    let ctx = Ctx {
        config,
        seed,
        alpha,
        out,
    };
    match cli.command {
        Command::Check(model) => check(&ctx, &model),
        Command::Simulate { model, n } => simulate(&ctx, &model, n),
        Command::Estimate { data, variance } => estimate(&ctx, &data, variance),
        Command::Ci { data, variance } => intervals(&ctx, &data, variance),
        Command::Test { data, chi2, strict } => chi2_test(&ctx, &data, chi2, strict),
        Command::Gof { data, model } => goodness_of_fit(&ctx, &data, &model),
        Command::Select {
            data,
            refit,
            project,
        } => select(&ctx, &data, refit, project),
        Command::Study {
            model,
            kind,
            sizes,
            reps,
            format,
            power,
            checkpoint,
            variance,
            chi2,
        } => study(
            &ctx,
            &model,
            StudyOptions {
                kind,
                sizes,
                reps,
                format,
                power,
                checkpoint,
                variance,
                chi2,
            },
        ),
    }
}

/// Parameter vector from flags, then config; `None` when neither gives one.
fn resolve_params(ctx: &Ctx, args: &ModelArgs) -> Result<Option<ParamVector>> {
    let d = match args.dimension {
        Some(d) => Some(d),
        None => ctx.config.dimension()?,
    };
    let preset = match args.preset {
        Some(p) => Some(p),
        None => match ctx.config.str("model")? {
            None => None,
            Some("study") => Some(Preset::Study),
            Some("independence") => Some(Preset::Independence),
            Some(other) => bail!("config `model`: unknown preset {other:?}"),
        },
    };
    let p = if let Some(path) = &args.params {
        efgm::io::read_params_csv(path, d)?
    } else if let Some(preset) = preset {
        match preset {
            Preset::Study => study_params(),
            Preset::Independence => ParamVector::zeros(d.context("--preset independence needs --dimension")?)?,
        }
    } else {
        match ctx.config.params()? {
            Some(p) => p,
            None => return Ok(None),
        }
    };
    if let Some(d) = d {
        if p.dim() != d {
            bail!("parameter vector has dimension {}, configured dimension is {d}", p.dim());
        }
    }
    Ok(Some(p))
}

fn require_params(ctx: &Ctx, args: &ModelArgs) -> Result<ParamVector> {
    resolve_params(ctx, args)?.context("no parameter vector: use --params, --preset or the config")
}

fn build_model(ctx: &Ctx, args: &ModelArgs, p: ParamVector) -> Result<CopulaModel> {
    if args.permissive || ctx.config.flag("permissive")? {
        Ok(CopulaModel::permissive(p))
    } else {
        Ok(CopulaModel::new(p)?)
    }
}

fn check(ctx: &Ctx, args: &ModelArgs) -> Result<u8> {
    let p = require_params(ctx, args)?;
    let sum = p.constraint_sum();
    match p.check_validity() {
        Validity::Valid { margin } => {
            println!("valid: constraint sum {}, margin {}", fmt_f64(sum), fmt_f64(margin));
            Ok(0)
        }
        Validity::Invalid { excess } => {
            println!("invalid: constraint sum {}, excess {}", fmt_f64(sum), fmt_f64(excess));
            Ok(EXIT_INVALID)
        }
    }
}

fn simulate(ctx: &Ctx, args: &ModelArgs, n: Option<usize>) -> Result<u8> {
    let n = match n {
        Some(n) => n,
        None => ctx.config.uint("n")?.context("sample size missing: use --n")? as usize,
    };
    let model = build_model(ctx, args, require_params(ctx, args)?)?;
    let batch = sample(&model, n, ctx.seed)?;
    ctx.emit("sample.csv", &batch.to_csv(), true)?;
    ctx.summary(&format!(
        "wrote {} rows of dimension {} (seed {})\n",
        batch.n(),
        batch.d(),
        ctx.seed
    ));
    Ok(0)
}

/// Reads, slices and transforms the input data.
fn load_data(ctx: &Ctx, args: &DataArgs) -> Result<DataMatrix> {
    let path = match &args.data {
        Some(p) => p.clone(),
        None => ctx.config.path("data")?.context("no input data: use --data")?,
    };
    let (data, _) = DataMatrix::read_csv(&path)?;
    if let Some(d) = ctx.config.dimension()? {
        if data.ncols() != d {
            bail!("{} has {} columns, configured dimension is {d}", path.display(), data.ncols());
        }
    }
    let rows = match (&args.rows, args.split) {
        (Some(r), _) => Some(parse_rows(r, data.nrows())?),
        (None, Some(split)) => Some(split_rows(split, data.nrows())?),
        (None, None) => match ctx.config.str("rows")? {
            Some(r) => Some(parse_rows(r, data.nrows())?),
            None => None,
        },
    };
    let data = match rows {
        Some(r) => data.slice_rows(r)?,
        None => data,
    };
    let mode = match args.pit {
        Some(PitArg::None) => PitMode::None,
        Some(PitArg::Gent) => PitMode::GenT,
        Some(PitArg::Ranks) => PitMode::Ranks,
        None => match ctx.config.str("pit")? {
            None | Some("none") => PitMode::None,
            Some("gent") => PitMode::GenT,
            Some("ranks") => PitMode::Ranks,
            Some(other) => bail!("config `pit`: expected none, gent or ranks, got {other:?}"),
        },
    };
    Ok(match mode {
        PitMode::None => data,
        PitMode::GenT => pit(&data, &ctx.config.channels(data.ncols())?)?,
        PitMode::Ranks => pit_ranks(&data)?,
    })
}

/// `a..b` (1-based, inclusive) or `a..`, as a 0-based half-open range.
fn parse_rows(spec: &str, nrows: usize) -> Result<std::ops::Range<usize>> {
    let (a, b) = spec
        .split_once("..")
        .with_context(|| format!("row range {spec:?}: expected a..b"))?;
    let start: usize = a.trim().parse().with_context(|| format!("row range {spec:?}"))?;
    let end: usize = if b.trim().is_empty() {
        nrows
    } else {
        b.trim().parse().with_context(|| format!("row range {spec:?}"))?
    };
    if start == 0 || start > end || end > nrows {
        bail!("row range {spec:?} outside 1..{nrows}");
    }
    Ok(start - 1..end)
}

fn split_rows(split: Split, nrows: usize) -> Result<std::ops::Range<usize>> {
    match split {
        Split::Data1 | Split::Data2 if nrows <= DATA1_ROWS => {
            bail!("--split needs more than {DATA1_ROWS} rows, data has {nrows}")
        }
        Split::Data1 => Ok(0..DATA1_ROWS),
        Split::Data2 => Ok(DATA1_ROWS..nrows),
        Split::Data3 => Ok(0..nrows),
    }
}

fn variance_mode(ctx: &Ctx, arg: Option<VarianceArg>) -> Result<VarianceMode> {
    Ok(match arg {
        Some(VarianceArg::Remark) => VarianceMode::Remark,
        Some(VarianceArg::PlugIn) => VarianceMode::PlugIn,
        None => match ctx.config.str("variance")? {
            None | Some("remark") => VarianceMode::Remark,
            Some("plug-in") => VarianceMode::PlugIn,
            Some(other) => bail!("config `variance`: expected remark or plug-in, got {other:?}"),
        },
    })
}

fn chi2_mode(ctx: &Ctx, arg: Option<Chi2Arg>) -> Result<Chi2Mode> {
    Ok(match arg {
        Some(Chi2Arg::NullIdentity) => Chi2Mode::NullIdentity,
        Some(Chi2Arg::PlugIn) => Chi2Mode::PlugIn,
        None => match ctx.config.str("chi2")? {
            None | Some("null-identity") => Chi2Mode::NullIdentity,
            Some("plug-in") => Chi2Mode::PlugIn,
            Some(other) => bail!("config `chi2`: expected null-identity or plug-in, got {other:?}"),
        },
    })
}

fn label(k: efgm::Order, m: efgm::SubsetMask, d: usize) -> String {
    format!("lambda{}_{}", k.index(), m.label(d))
}

fn estimate(ctx: &Ctx, args: &DataArgs, variance: Option<VarianceArg>) -> Result<u8> {
    let data = load_data(ctx, args)?;
    let opts = EstimateOptions {
        variance: variance_mode(ctx, variance)?,
        covariance: true,
    };
    let res = estimate_with(&data, &opts)?;
    ctx.emit("estimates.csv", &res.to_csv(), true)?;
    if let Some(sigma) = &res.sigma_hat {
        ctx.emit("covariance.csv", &sigma.to_csv(), false)?;
    }
    let d = res.params_hat.dim();
    let mut text = format!("n = {}\n{:<14} {:>9} {:>9} {:>8}\n", res.n, "parameter", "estimate", "se", "p-value");
    for (i, (k, m, v)) in res.params_hat.iter().enumerate() {
        let _ = writeln!(text, "{:<14} {v:>9.4} {:>9.4} {:>8.3}", label(k, m, d), res.se[i], res.pvalues[i]);
    }
    ctx.summary(&text);
    Ok(0)
}

fn intervals(ctx: &Ctx, args: &DataArgs, variance: Option<VarianceArg>) -> Result<u8> {
    if ctx.alpha <= 0.0 {
        bail!("confidence intervals need --alpha in (0, 1)");
    }
    let data = load_data(ctx, args)?;
    let opts = EstimateOptions {
        variance: variance_mode(ctx, variance)?,
        covariance: false,
    };
    let res = estimate_with(&data, &opts)?;
    let ci = res.confidence_intervals(ctx.alpha)?;
    let mut csv = String::from("k,mask,lambda,lower,upper\n");
    let d = res.params_hat.dim();
    let mut text = format!("{:.0}% intervals, n = {}\n", 100.0 * (1.0 - ctx.alpha), res.n);
    for ((k, m, v), (lo, hi)) in res.params_hat.iter().zip(ci) {
        let _ = writeln!(csv, "{},{},{},{},{}", k.index(), m.bits(), fmt_f64(v), fmt_f64(lo), fmt_f64(hi));
        let _ = writeln!(text, "{:<14} {v:>9.4}  [{lo:>8.4}, {hi:>8.4}]", label(k, m, d));
    }
    ctx.emit("intervals.csv", &csv, true)?;
    ctx.summary(&text);
    Ok(0)
}

fn chi2_test(ctx: &Ctx, args: &DataArgs, chi2: Option<Chi2Arg>, strict: bool) -> Result<u8> {
    let data = load_data(ctx, args)?;
    let mode = chi2_mode(ctx, chi2)?;
    let opts = EstimateOptions {
        variance: VarianceMode::Remark,
        covariance: mode == Chi2Mode::PlugIn,
    };
    let res = estimate_with(&data, &opts)?;
    let t = test_lambda2_zero(&res, mode)?;
    let mode_name = match mode {
        Chi2Mode::NullIdentity => "null-identity",
        Chi2Mode::PlugIn => "plug-in",
    };
    let csv = format!(
        "statistic,df,pvalue,mode,alpha,reject\n{},{},{},{mode_name},{},{}\n",
        fmt_f64(t.statistic),
        t.df,
        fmt_f64(t.pvalue),
        fmt_f64(ctx.alpha),
        t.rejects(ctx.alpha)
    );
    ctx.emit("chi2.csv", &csv, true)?;
    ctx.summary(&format!(
        "T = {:.4}, df = {}, p-value = {:.4} ({}) -> {}\n",
        t.statistic,
        t.df,
        t.pvalue,
        mode_name,
        if t.rejects(ctx.alpha) { "reject" } else { "do not reject" }
    ));
    Ok(if strict && t.rejects(ctx.alpha) { EXIT_REJECT } else { 0 })
}

fn goodness_of_fit(ctx: &Ctx, args: &DataArgs, model: &ModelArgs) -> Result<u8> {
    let data = load_data(ctx, args)?;
    let m = match resolve_params(ctx, model)? {
        Some(p) => build_model(ctx, model, p)?,
        None => {
            let fitted = estimate_with(&data, &EstimateOptions { covariance: false, ..Default::default() })?;
            CopulaModel::permissive(fitted.params_hat)
        }
    };
    let r = efgm::sample::rosenblatt_matrix(&m, &data)?;
    let report = gof_transformed(&r, ctx.alpha);
    ctx.emit("gof.csv", &report.to_csv(), true)?;
    ctx.emit("deviation.csv", &deviation_csv(&r), false)?;
    ctx.summary(&report.to_table());
    Ok(if report.passes() { 0 } else { EXIT_REJECT })
}

fn select(ctx: &Ctx, args: &DataArgs, refit_flag: bool, project_flag: bool) -> Result<u8> {
    let data = load_data(ctx, args)?;
    let project = project_flag || ctx.config.flag("projection")?;
    let res = estimate_with(&data, &EstimateOptions { covariance: false, ..Default::default() })?;
    let mut reduced = reduce_model(&res, ctx.alpha);
    if refit_flag {
        reduced = refit(&reduced, &data)?;
    }
    let fits = [
        ("classical", classical_projection(&res)),
        ("extended-full", res.params_hat.clone()),
        ("extended-reduced", reduced.clone()),
    ];
    let mut csv = String::from("model,loglik,p_active,aic,bic,n\n");
    let mut text = format!("{:<18} {:>10} {:>8} {:>10} {:>10}\n", "model", "loglik", "params", "AIC", "BIC");
    for (name, p) in fits {
        let p = if project { p.project_to_valid() } else { p };
        match score(&p, &data) {
            Ok(s) => {
                let _ = writeln!(
                    csv,
                    "{name},{},{},{},{},{}",
                    fmt_f64(s.loglik),
                    s.p_active,
                    fmt_f64(s.aic),
                    fmt_f64(s.bic),
                    s.n
                );
                let _ = writeln!(text, "{name:<18} {:>10.2} {:>8} {:>10.2} {:>10.2}", s.loglik, s.p_active, s.aic, s.bic);
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                let _ = writeln!(csv, "{name},NaN,{},NaN,NaN,{}", p.count_nonzero(), data.nrows());
                let _ = writeln!(text, "{name:<18} {:>10}", "n/a");
            }
        }
    }
    ctx.emit("scores.csv", &csv, true)?;
    ctx.emit("reduced.csv", &params_to_csv(&reduced), false)?;
    ctx.summary(&text);
    Ok(0)
}

struct StudyOptions {
    kind: Option<StudyArg>,
    sizes: Option<Vec<usize>>,
    reps: Option<usize>,
    format: Format,
    power: bool,
    checkpoint: Option<PathBuf>,
    variance: Option<VarianceArg>,
    chi2: Option<Chi2Arg>,
}

fn study(ctx: &Ctx, args: &ModelArgs, opts: StudyOptions) -> Result<u8> {
    let kind = match opts.kind {
        Some(StudyArg::Consistency) => StudyKind::Consistency,
        Some(StudyArg::Coverage) => StudyKind::Coverage,
        Some(StudyArg::Covariance) => StudyKind::Covariance,
        Some(StudyArg::Chi2) => StudyKind::Chi2Calibration,
        None => StudyKind::parse(ctx.config.str("study.kind")?.context("study kind missing: use --kind")?)?,
    };
    let sizes = match opts.sizes {
        Some(s) => s,
        None => ctx.config.uint_list("study.sizes")?.context("sample sizes missing: use --sizes")?,
    };
    let reps = match opts.reps {
        Some(r) => r,
        None => ctx.config.uint("study.replications")?.unwrap_or(1) as usize,
    };
    let mut spec = StudySpec::new(kind, require_params(ctx, args)?, sizes, reps, ctx.seed);
    spec.alpha = ctx.alpha;
    spec.permissive = args.permissive || ctx.config.flag("permissive")?;
    spec.variance = variance_mode(ctx, opts.variance)?;
    spec.chi2 = chi2_mode(ctx, opts.chi2)?;
    spec.power = opts.power || ctx.config.flag("study.power")?;
    spec.checkpoint = match opts.checkpoint {
        Some(c) => Some(c),
        None => ctx.config.path("study.checkpoint")?,
    };
    let md = opts.format == Format::Md;
    let (csv, table) = match kind {
        StudyKind::Consistency => {
            let t = run_consistency(&spec)?;
            (t.to_csv(), t.to_markdown())
        }
        StudyKind::Coverage => {
            let t = run_coverage(&spec)?;
            (t.to_csv(), t.to_markdown())
        }
        StudyKind::Covariance => {
            let reports = run_covariance(&spec)?;
            let mut csv = String::new();
            let mut md = String::new();
            for (i, r) in reports.iter().enumerate() {
                let body = r.to_csv();
                let mut lines = body.lines();
                let header = lines.next().unwrap_or_default();
                if i == 0 {
                    let _ = writeln!(csv, "n,{header}");
                }
                for l in lines {
                    let _ = writeln!(csv, "{},{l}", r.n);
                }
                md.push_str(&r.to_markdown());
            }
            (csv, md)
        }
        StudyKind::Chi2Calibration => {
            let c = run_chi2_calibration(&spec)?;
            (c.to_csv(), c.to_markdown())
        }
    };
    let name = format!("study-{}", kind.name());
    if md {
        ctx.emit(&format!("{name}.md"), &table, true)?;
    } else {
        ctx.emit(&format!("{name}.csv"), &csv, true)?;
        ctx.summary(&table);
    }
    Ok(0)
}
