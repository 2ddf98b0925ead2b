//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or validation failure, 2 usage error,
//! 3 mathematical domain error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytic::{self, validity_domain, validity_domain_mask};
use crate::metrics::{class_groups, image_metrics, ImageMetrics};
use crate::moment_engine::{multi_order_accumulate, MomentOrder};
use crate::object_model::{load_object, ObjectMask, LETTER_A_UNITS};
use crate::reporting_io::{
    canonical_json, write_ghost_image, write_report, write_sweep_csv, ConfigEcho, OrderResult, RunReport,
    SweepRow, FORMAT_VERSION,
};
use crate::speckle_sim::{run_simulation, write_dump, Pairing, SampleSet, SpeckleConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "GHOSTMOMENT_WORKERS";

/// Orders of the six-panel negative/positive image grid at fixed `ν = 0.5`.
pub const IMAGE_GRID_ORDERS: &str = "-2.7183:0.5,-1.414:0.5,-0.618:0.5,0.618:0.5,1.414:0.5,2.7183:0.5";

#[derive(Debug, Parser)]
#[command(name = "ghostmoment", version, about = "Fractional-order moment ghost imaging with thermal light")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate speckle, reconstruct one ghost image per order, write images and a report.
    Simulate(SimulateArgs),
    /// Print closed-form moments, visibility and peak SNR of a binary object as JSON.
    Predict(PredictArgs),
    /// Tabulate visibility and relative peak SNR over an order grid.
    Sweep(SweepArgs),
    /// Monte Carlo self-check of the estimators against the closed forms.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Mean speckle intensity I_0.
    #[arg(long, default_value_t = 1.0)]
    pub i0: f64,
    /// Number of speckle realizations N.
    #[arg(long = "n-samples", default_value_t = 200_000)]
    pub n_samples: u64,
    /// Comma-separated `mu:nu` pairs.
    #[arg(long, allow_hyphen_values = true, default_value = IMAGE_GRID_ORDERS)]
    pub orders: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Admit nu in (-1/2, 0].
    #[arg(long)]
    pub allow_nonpositive_nu: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Graymap (.pgm) or CSV mask, or `letter-a[:M]` for the built-in binary letter.
    #[arg(long, default_value = "letter-a")]
    pub object: String,
    /// Map transmittances to {0,1} by `>= threshold`.
    #[arg(long)]
    pub binarize: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Pair each reference frame with the bucket of a distant frame (null test).
    #[arg(long)]
    pub null_pairing: bool,
    /// Also write the raw sample stream to `samples.bin`.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub nu: f64,
    /// Sample count for R_p; omitted, only R_p/sqrt(N) is reported.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub i0: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated effective unit counts.
    #[arg(long, default_value = "20,30")]
    pub m: String,
    /// `lo:hi:step` (inclusive); mu = 0 is skipped.
    #[arg(long, allow_hyphen_values = true, default_value = "-3:3:0.1")]
    pub mu: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0.1:3:0.1")]
    pub nu: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Open units of the built-in binary letter.
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[command(flatten)]
    pub run: RunArgs,
    /// Destroy bucket–reference pairing and check that no image appears.
    #[arg(long)]
    pub null: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Domain(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, out, err),
        Command::Predict(a) => cmd_predict(&a, out, err),
        Command::Sweep(a) => cmd_sweep(&a, out, err),
        Command::Validate(a) => cmd_validate(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

/// Parses `mu:nu,mu:nu,…`.
pub fn parse_orders(text: &str, allow_nonpositive_nu: bool) -> Result<Vec<MomentOrder>, String> {
    let orders = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (mu, nu) = pair
                .split_once(':')
                .ok_or_else(|| format!("--orders: expected mu:nu, got {pair:?}"))?;
            let mu: f64 = mu.trim().parse().map_err(|_| format!("--orders: bad mu {mu:?}"))?;
            let nu: f64 = nu.trim().parse().map_err(|_| format!("--orders: bad nu {nu:?}"))?;
            MomentOrder::with_unsafe_nu(mu, nu, allow_nonpositive_nu).map_err(|e| format!("--orders: {e}"))
        })
        .collect::<Result<Vec<_>, String>>()?;
    if orders.is_empty() {
        return Err("--orders: at least one mu:nu pair is required".into());
    }
    Ok(orders)
}

/// Parses an inclusive `lo:hi:step` grid.
pub fn parse_range(flag: &str, text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| format!("{flag}: expected lo:hi:step, got {text:?}"))?;
    let (lo, hi, step) = match nums.as_slice() {
        [v] => (*v, *v, 1.0),
        [lo, hi, step] => (*lo, *hi, *step),
        _ => return Err(format!("{flag}: expected lo:hi:step, got {text:?}")),
    };
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() {
        return Err(format!("{flag}: step must be > 0 and bounds finite"));
    }
    if hi < lo {
        return Err(format!("{flag}: upper bound {hi} below lower bound {lo}"));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as u64 + 1;
    Ok((0..count).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect())
}

fn resolve_workers(requested: Option<usize>) -> Result<usize, CliError> {
    match requested {
        Some(0) => Err(CliError::Usage("--workers must be >= 1".into())),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn check_run_args(run: &RunArgs) -> Result<(Vec<MomentOrder>, usize), CliError> {
    if !(run.i0 > 0.0 && run.i0.is_finite()) {
        return Err(CliError::Usage(format!("--i0 must be > 0, got {}", run.i0)));
    }
    if run.n_samples < 2 {
        return Err(CliError::Usage(format!("--n-samples must be >= 2, got {}", run.n_samples)));
    }
    let orders = parse_orders(&run.orders, run.allow_nonpositive_nu).map_err(CliError::Usage)?;
    Ok((orders, resolve_workers(run.workers)?))
}

fn load_mask(object: &str, binarize: Option<f64>) -> Result<ObjectMask, CliError> {
    if let Some(rest) = object.strip_prefix("letter-a") {
        let m = match rest.strip_prefix(':') {
            Some(m) => m.parse().map_err(|_| CliError::Usage(format!("--object: bad unit count in {object:?}")))?,
            None if rest.is_empty() => LETTER_A_UNITS,
            None => return Err(CliError::Usage(format!("--object: unknown built-in {object:?}"))),
        };
        return Ok(ObjectMask::letter_a(m));
    }
    if let Some(t) = binarize {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Usage(format!("--binarize must lie in (0, 1), got {t}")));
        }
    }
    load_object(Path::new(object), binarize).map_err(runtime)
}

fn check_domain(mask: &ObjectMask, orders: &[MomentOrder]) -> Result<(), CliError> {
    for o in orders {
        let v = validity_domain_mask(mask, o.mu(), o.nu());
        if !v.moment_finite {
            return Err(CliError::Domain(format!(
                "order mu={}, nu={} diverges for this object: {}",
                o.mu(),
                o.nu(),
                v.reasons.join(", ")
            )));
        }
    }
    Ok(())
}

struct OrderOutcome {
    order: MomentOrder,
    metrics: Option<ImageMetrics>,
    analytic: Option<analytic::AnalyticPrediction>,
}

fn reconstruct(
    samples: &SampleSet,
    orders: &[MomentOrder],
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<(Vec<OrderOutcome>, Vec<crate::moment_engine::MomentAccumulator>), CliError> {
    let mask = samples.mask();
    let classes = mask.classify_units(0.0);
    let accs = multi_order_accumulate(samples, orders, &class_groups(&classes), workers).map_err(runtime)?;
    let mut outcomes = Vec::with_capacity(orders.len());
    for (k, acc) in accs.iter().enumerate() {
        let image = acc.finalize().map_err(runtime)?;
        if let Some(dir) = out_dir {
            write_ghost_image(&image, &dir.join(image_name(k))).map_err(runtime)?;
        }
        let metrics = if !classes.one_units.is_empty() && !classes.zero_units.is_empty() {
            Some(image_metrics(acc, &classes).map_err(runtime)?)
        } else {
            None
        };
        let analytic = match classes.m {
            Some(m) if m >= 2 => Some(analytic::predict(
                m as u64,
                acc.order().mu(),
                acc.order().nu(),
                Some(samples.len()),
                samples.config().mean_intensity,
            )),
            _ => None,
        };
        outcomes.push(OrderOutcome { order: acc.order(), metrics, analytic });
    }
    Ok((outcomes, accs))
}

fn image_name(k: usize) -> String {
    format!("order_{k:02}.pgm")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let (orders, workers) = check_run_args(&args.run)?;
    let mask = load_mask(&args.object, args.binarize)?;
    check_domain(&mask, &orders)?;
    let config = SpeckleConfig::new(args.run.i0, args.run.seed, mask.len()).map_err(runtime)?;
    let mut samples = run_simulation(config, mask.clone(), args.run.n_samples).map_err(runtime)?;
    if args.null_pairing {
        samples = samples.with_pairing(Pairing::Shifted { offset: args.run.n_samples / 2 });
    }
    fs::create_dir_all(&args.out).map_err(runtime)?;
    if args.dump {
        write_dump(&samples, &args.out.join("samples.bin")).map_err(runtime)?;
    }
    let (outcomes, _) = reconstruct(&samples, &orders, workers, Some(&args.out))?;
    let classes = mask.classify_units(0.0);
    if !classes.fractional_units.is_empty() {
        let _ = writeln!(
            err,
            "note: {} fractional units excluded from visibility / SNR classes",
            classes.fractional_units.len()
        );
    }
    let report = RunReport {
        version: FORMAT_VERSION.into(),
        config: ConfigEcho {
            mask_digest: mask.digest(),
            width: mask.width(),
            height: mask.height(),
            i0: args.run.i0,
            seed: args.run.seed,
            n_samples: args.run.n_samples,
            orders: orders.iter().map(|o| (o.mu(), o.nu())).collect(),
            null_pairing: args.null_pairing,
        },
        results: outcomes
            .iter()
            .enumerate()
            .map(|(k, o)| OrderResult {
                mu: o.order.mu(),
                nu: o.order.nu(),
                image_file: image_name(k),
                empirical: o.metrics.clone(),
                analytic: o.analytic.clone(),
            })
            .collect(),
    };
    write_report(&report, &args.out.join("report.json")).map_err(runtime)?;
    let _ = writeln!(out, "{:>8} {:>6}  {:>13} {:>13} {:>13} {:>13}", "mu", "nu", "V", "V_theory", "R_p", "R_p_theory");
    for o in &outcomes {
        let _ = writeln!(
            out,
            "{:>8} {:>6}  {:>13} {:>13} {:>13} {:>13}",
            o.order.mu(),
            o.order.nu(),
            fmt_opt(o.metrics.as_ref().map(|m| m.visibility)),
            fmt_opt(o.analytic.as_ref().and_then(|a| a.visibility)),
            fmt_opt(o.metrics.as_ref().map(|m| m.peak_snr)),
            fmt_opt(o.analytic.as_ref().and_then(|a| a.peak_snr)),
        );
    }
    Ok(EXIT_OK)
}

fn cmd_predict(args: &PredictArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    if args.m == 0 {
        return Err(CliError::Usage("--m must be >= 1".into()));
    }
    if !(args.i0 > 0.0 && args.i0.is_finite()) {
        return Err(CliError::Usage(format!("--i0 must be > 0, got {}", args.i0)));
    }
    let mut p = analytic::predict(args.m, args.mu, args.nu, args.n, args.i0);
    if args.m < 2 {
        p.reasons.push("m < 2".into());
    }
    let text = canonical_json(&p).map_err(runtime)?;
    let _ = write!(out, "{text}");
    if !p.reasons.is_empty() {
        let _ = writeln!(err, "domain error: {}", p.reasons.join(", "));
        return Ok(EXIT_DOMAIN);
    }
    Ok(EXIT_OK)
}

/// Analytic sweep rows over the grid, `m`-major then `mu` then `nu`.
pub fn sweep_rows(ms: &[u64], mus: &[f64], nus: &[f64]) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(ms.len() * mus.len() * nus.len());
    for &m in ms {
        for &mu in mus {
            for &nu in nus {
                let v = validity_domain(m as f64, mu, nu);
                rows.push(SweepRow {
                    m,
                    mu,
                    nu,
                    visibility: analytic::visibility(m, mu, nu).ok(),
                    rp_over_sqrt_n: analytic::peak_snr(m, mu, nu, 1).ok().map(|p| p.r_p_over_sqrt_n),
                    moment_finite: v.moment_finite,
                    variance_finite: v.variance_finite,
                });
            }
        }
    }
    rows
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let ms = args
        .m
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<Vec<u64>, _>>()
        .map_err(|_| CliError::Usage(format!("--m: expected comma-separated integers, got {:?}", args.m)))?;
    if ms.iter().any(|&m| m < 2) {
        return Err(CliError::Usage("--m: every m must be >= 2".into()));
    }
    let all_mu = parse_range("--mu", &args.mu).map_err(CliError::Usage)?;
    let nus = parse_range("--nu", &args.nu).map_err(CliError::Usage)?;
    let mus: Vec<f64> = all_mu.iter().copied().filter(|&mu| mu != 0.0).collect();
    if mus.len() != all_mu.len() {
        let _ = writeln!(err, "note: mu = 0 excluded from the grid");
    }
    if mus.is_empty() {
        return Err(CliError::Usage("--mu: grid is empty after excluding 0".into()));
    }
    let rows = sweep_rows(&ms, &mus, &nus);
    write_sweep_csv(&rows, &args.out).map_err(runtime)?;
    let _ = writeln!(out, "wrote {} rows to {}", rows.len(), args.out.display());
    Ok(EXIT_OK)
}

/// One line of the validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub mu: f64,
    pub nu: f64,
    pub empirical: f64,
    pub expected: f64,
    pub se: f64,
    pub passed: bool,
}

impl Check {
    fn within(name: &str, order: MomentOrder, empirical: f64, expected: f64, se: f64) -> Self {
        Check {
            name: name.into(),
            mu: order.mu(),
            nu: order.nu(),
            empirical,
            expected,
            se,
            passed: (empirical - expected).abs() <= 5.0 * se,
        }
    }
}

/// Runs the built-in letter at `m` units and compares estimators with theory.
pub fn validation_checks(
    m: usize,
    run: &RunArgs,
    orders: &[MomentOrder],
    workers: usize,
    null: bool,
) -> Result<Vec<Check>, String> {
    let mask = ObjectMask::letter_a(m);
    let config = SpeckleConfig::new(run.i0, run.seed, mask.len()).map_err(|e| e.to_string())?;
    let mut samples = run_simulation(config, mask, run.n_samples).map_err(|e| e.to_string())?;
    if null {
        samples = samples.with_pairing(Pairing::Shifted { offset: run.n_samples / 2 });
    }
    let (outcomes, accs) = reconstruct(&samples, orders, workers, None).map_err(|e| e.message().to_string())?;
    let mut checks = Vec::new();
    for (o, acc) in outcomes.iter().zip(&accs) {
        let order = o.order;
        if null {
            let image = acc.finalize().map_err(|e| e.to_string())?;
            let (worst, idx) = image
                .normalized
                .iter()
                .zip(&image.normalized_se)
                .enumerate()
                .map(|(i, (g, se))| ((g - 1.0).abs() / se, i))
                .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
            checks.push(Check {
                name: "null |g-1| (worst pixel)".into(),
                mu: order.mu(),
                nu: order.nu(),
                empirical: image.normalized[idx] - 1.0,
                expected: 0.0,
                se: image.normalized_se[idx],
                passed: worst < 5.0,
            });
            continue;
        }
        let (Some(em), Some(th)) = (&o.metrics, &o.analytic) else {
            return Err("validation needs a binary mask with m >= 2 and background pixels".into());
        };
        if let Some(b) = th.moment_background {
            checks.push(Check::within("background moment", order, em.background_mean, b, em.background_se));
        }
        if let Some(s) = th.moment_signal {
            checks.push(Check::within("signal moment", order, em.signal_mean, s, em.signal_se));
        }
        if let Some(v) = th.visibility {
            checks.push(Check::within("visibility", order, em.visibility, v, em.visibility_se));
        }
        if let Some(r) = th.peak_snr {
            checks.push(Check::within("peak SNR", order, em.peak_snr, r, em.peak_snr_se));
        }
        checks.push(Check {
            name: "contrast sign".into(),
            mu: order.mu(),
            nu: order.nu(),
            empirical: em.contrast,
            expected: order.mu().signum(),
            se: em.contrast_se,
            passed: em.contrast.signum() == order.mu().signum(),
        });
    }
    Ok(checks)
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write, _err: &mut dyn Write) -> Result<i32, CliError> {
    let (orders, workers) = check_run_args(&args.run)?;
    if args.m < 2 {
        return Err(CliError::Usage("--m must be >= 2".into()));
    }
    let mask = ObjectMask::letter_a(args.m);
    check_domain(&mask, &orders)?;
    let checks = validation_checks(args.m, &args.run, &orders, workers, args.null).map_err(CliError::Runtime)?;
    let _ = writeln!(
        out,
        "{:<26} {:>8} {:>5} {:>14} {:>14} {:>11} {:>7}  result",
        "check", "mu", "nu", "empirical", "expected", "SE", "|d|/SE"
    );
    for c in &checks {
        let _ = writeln!(
            out,
            "{:<26} {:>8} {:>5} {:>14.7e} {:>14.7e} {:>11.3e} {:>7.2}  {}",
            c.name,
            c.mu,
            c.nu,
            c.empirical,
            c.expected,
            c.se,
            (c.empirical - c.expected).abs() / c.se,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(out, "{} checks, {} failed", checks.len(), failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_list_parsing() {
        let o = parse_orders(IMAGE_GRID_ORDERS, false).unwrap();
        assert_eq!(o.len(), 6);
        assert_eq!((o[0].mu(), o[0].nu()), (-2.7183, 0.5));
        assert!(parse_orders("0:0.5", false).unwrap_err().contains("mu = 0"));
        assert!(parse_orders("1", false).is_err());
        assert!(parse_orders("1:-0.2", false).is_err());
        assert!(parse_orders("1:-0.2", true).is_ok());
    }

    #[test]
    fn range_parsing() {
        let r = parse_range("--mu", "-3:3:0.1").unwrap();
        assert_eq!(r.len(), 61);
        assert_eq!(r[0], -3.0);
        assert_eq!(r[30], 0.0);
        assert_eq!(r[31], 0.1);
        assert_eq!(r[60], 3.0);
        assert_eq!(parse_range("--nu", "0.1:3:0.1").unwrap().len(), 30);
        assert_eq!(parse_range("--nu", "0.5").unwrap(), vec![0.5]);
        assert!(parse_range("--mu", "1:0:0.1").is_err());
        assert!(parse_range("--mu", "0:1:0").is_err());
        assert!(parse_range("--mu", "a:b").is_err());
    }

    #[test]
    fn builtin_object_names() {
        assert_eq!(load_mask("letter-a", None).unwrap().classify_units(0.0).m, Some(LETTER_A_UNITS));
        assert_eq!(load_mask("letter-a:20", None).unwrap().classify_units(0.0).m, Some(20));
        assert!(matches!(load_mask("letter-ab", None), Err(CliError::Usage(_))));
        assert!(matches!(load_mask("no-such-file.pgm", None), Err(CliError::Runtime(_))));
    }

    #[test]
    fn sweep_rows_flag_invalid_points() {
        let rows = sweep_rows(&[2], &[-2.2, 1.0], &[0.1]);
        assert!(!rows[0].moment_finite && rows[0].visibility.is_none());
        assert!(rows[1].moment_finite && rows[1].visibility.is_some());
    }
}
