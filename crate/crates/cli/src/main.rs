//! `seqexp`: command-line front end to the simulation harness and the
//! expansion evaluators.
//!
//! Exit status is 0 on success, 2 for usage and configuration errors and 1
//! for failures while running.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seqexp::expansion::{hall_quantile, marginal_cdf_w, renewal_density_rhat, t0_cdf, ExpansionContext};
use seqexp::harness::{
    run_cdf_compare, run_coverage, run_identity_checks, run_moments, run_renewal_check, run_simulate, serialize_report,
    ExperimentConfig, Format, MomentsReport, Report, StatisticChoice,
};
use seqexp::ladder::LadderMoments;
use seqexp::model::MomentSet;

#[derive(Parser, Debug)]
#[command(
    name = "seqexp",
    version,
    about = "Stopped random walks: simulation, expansions and interval coverage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stopping-time, overshoot and stopped-sum summaries.
    Simulate(RunArgs),
    /// Coverage and one-sided error rates of the confidence intervals.
    Coverage(RunArgs),
    /// Empirical distribution of a statistic against its expansion.
    Cdf {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        statistic: Option<StatisticChoice>,
    },
    /// Studentized residuals of the stopped-walk and ladder identities.
    Identities(RunArgs),
    /// Renewal slab counts against their expansion.
    Renewal(RunArgs),
    /// Population and ladder constants of the first model.
    Moments(RunArgs),
    /// Evaluates one expansion formula.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON experiment file; the coverage study of bivariate normal walks
    /// is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Boundary levels (repeat or separate with commas).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    a: Vec<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output file, written atomically; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<FormatArg>,
    /// Significant digits of floating-point output.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=17))]
    digits: Option<u32>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Op {
    #[value(name = "t0_cdf")]
    T0Cdf,
    #[value(name = "hall_quantile")]
    HallQuantile,
    #[value(name = "renewal_density")]
    RenewalDensity,
    #[value(name = "marginal_cdf_w")]
    MarginalCdfW,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    op: Op,
    /// Constants written by `seqexp moments`.
    #[arg(long, conflicts_with = "config")]
    moments: Option<PathBuf>,
    /// Experiment file whose first model supplies the constants.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    z: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    w: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu3: Option<f64>,
    #[arg(long = "sigma-xy", allow_negative_numbers = true)]
    sigma_xy: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=17))]
    digits: Option<u32>,
}

fn load_config(path: Option<&Path>) -> seqexp::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_path(p).map_err(|e| match e {
            seqexp::Error::Io(io) => seqexp::Error::config("config", format!("{}: {io}", p.display())),
            other => other,
        }),
        None => Ok(ExperimentConfig::table1()),
    }
}

impl RunArgs {
    fn config(&self) -> seqexp::Result<ExperimentConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        if !self.a.is_empty() {
            cfg.a = self.a.clone();
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.display().to_string());
        }
        if let Some(f) = self.format {
            cfg.format = Some(f.into());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `--format`, then the config file, then the extension of the output path.
fn output_format(cfg: &ExperimentConfig) -> Format {
    cfg.format.unwrap_or_else(|| match &cfg.out {
        Some(p) if p.to_ascii_lowercase().ends_with(".csv") => Format::Csv,
        _ => Format::Json,
    })
}

/// Writes to a temporary file beside `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> seqexp::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn emit(bytes: &[u8], out: Option<&Path>) -> seqexp::Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn finish<R: Report>(report: &R, cfg: &ExperimentConfig, digits: Option<u32>) -> seqexp::Result<()> {
    let bytes = serialize_report(report, output_format(cfg), digits.map(|d| d as usize))?;
    emit(&bytes, cfg.out.as_deref().map(Path::new))
}

fn missing(flag: &str) -> seqexp::Error {
    seqexp::Error::config(flag, format!("--{flag} is required for this operation"))
}

/// Constants from `--moments`, from `--config`, or none.
fn eval_source(args: &EvalArgs) -> seqexp::Result<Option<(MomentsReport, Option<f64>)>> {
    if let Some(path) = &args.moments {
        let text = std::fs::read_to_string(path)
            .map_err(|e| seqexp::Error::config("moments", format!("{}: {e}", path.display())))?;
        let report: MomentsReport =
            serde_json::from_str(&text).map_err(|e| seqexp::Error::config("moments", e.to_string()))?;
        return Ok(Some((report, None)));
    }
    if let Some(path) = &args.config {
        let mut cfg = load_config(Some(path))?;
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        let a = cfg.a.first().copied();
        return Ok(Some((run_moments(&cfg)?, a)));
    }
    Ok(None)
}

fn moment_set(report: &MomentsReport) -> seqexp::Result<MomentSet> {
    MomentSet::from_json(&report.moments).map_err(|e| seqexp::Error::config("moments", e.to_string()))
}

fn eval(args: &EvalArgs) -> seqexp::Result<f64> {
    let source = eval_source(args)?;
    let report = source.as_ref().map(|(r, _)| r);
    let a = args.a.or(source.as_ref().and_then(|(_, a)| *a));
    let t0 = report.map(|r| &r.t0);
    let constant = |flag: &str, given: Option<f64>, stored: Option<f64>| given.or(stored).ok_or_else(|| missing(flag));
    let t0_constants = || -> seqexp::Result<(f64, f64, f64, f64)> {
        Ok((
            constant("nu", args.nu, t0.map(|t| t.nu))?,
            constant("sigma", args.sigma, t0.map(|t| t.sigma))?,
            constant("mu3", args.mu3, t0.map(|t| t.mu3))?,
            constant("sigma-xy", args.sigma_xy, t0.map(|t| t.sigma_xy))?,
        ))
    };
    let need_report = || report.ok_or_else(|| missing("moments"));
    match args.op {
        Op::T0Cdf => {
            let (nu, sigma, mu3, sxy) = t0_constants()?;
            t0_cdf(
                args.c.ok_or_else(|| missing("c"))?,
                a.ok_or_else(|| missing("a"))?,
                nu,
                sigma,
                mu3,
                sxy,
            )
        }
        Op::HallQuantile => {
            let (nu, sigma, mu3, sxy) = t0_constants()?;
            hall_quantile(
                args.p.ok_or_else(|| missing("p"))?,
                a.ok_or_else(|| missing("a"))?,
                nu,
                sigma,
                mu3,
                sxy,
            )
        }
        Op::RenewalDensity => {
            let ms = moment_set(need_report()?)?;
            if args.z.is_empty() {
                return Err(missing("z"));
            }
            renewal_density_rhat(args.x.ok_or_else(|| missing("x"))?, &args.z, &ms)
        }
        Op::MarginalCdfW => {
            let r = need_report()?;
            let ms = moment_set(r)?;
            let ladder = r.ladder.as_ref().map(LadderMoments::from_scalars);
            let ctx = ExpansionContext::new(ms, ladder, a.ok_or_else(|| missing("a"))?)?;
            marginal_cdf_w(&ctx, args.w.ok_or_else(|| missing("w"))?)
        }
    }
}

fn run(cli: Cli) -> seqexp::Result<()> {
    match cli.command {
        Command::Simulate(r) => {
            let cfg = r.config()?;
            finish(&run_simulate(&cfg)?, &cfg, r.digits)
        }
        Command::Coverage(r) => {
            let cfg = r.config()?;
            finish(&run_coverage(&cfg)?, &cfg, r.digits)
        }
        Command::Cdf { run, statistic } => {
            let cfg = run.config()?;
            let choice = statistic.unwrap_or(cfg.statistic);
            finish(&run_cdf_compare(&cfg, choice)?, &cfg, run.digits)
        }
        Command::Identities(r) => {
            let cfg = r.config()?;
            finish(&run_identity_checks(&cfg)?, &cfg, r.digits)
        }
        Command::Renewal(r) => {
            let cfg = r.config()?;
            finish(&run_renewal_check(&cfg)?, &cfg, r.digits)
        }
        Command::Moments(r) => {
            let cfg = r.config()?;
            finish(&run_moments(&cfg)?, &cfg, r.digits)
        }
        Command::Eval(args) => {
            let v = eval(&args)?;
            let text = match args.digits {
                Some(d) => seqexp::harness::format_float(v, d as usize),
                None => v.to_string(),
            };
            emit(format!("{text}\n").as_bytes(), args.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
