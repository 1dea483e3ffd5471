//! Command-line front end: `udec <subcommand> --config PATH [--seed N] [--out PATH] [--threads N]`.
//!
//! Exit codes: 0 when every audited inequality holds, 1 when one fails,
//! 2 on usage, configuration or validation errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{AuditMethod, ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::simulator::shulman::{random_linear_family, EventFamilySpec};
use crate::simulator::surrogate::sample_outputs;
use crate::simulator::{
    mac_sandwich, run_experiment, run_mac_experiment, shulman_check, surrogate_condition_check, universality_audit_exact,
    BoundCheck, ErrorEstimate, ExperimentSpec, MacExperimentSpec,
};
use crate::types::{count_classes, CountStrategy, Sequence};

#[derive(Parser, Debug)]
#[command(name = "udec", version, about = "Universal decoding experiments and bound audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo error rates for every configured decoder.
    Simulate(RunArgs),
    /// Exact or Monte Carlo audit of the universality bounds.
    Audit(RunArgs),
    /// Number of equivalence classes per block length.
    CountClasses(RunArgs),
    /// Union bound for pairwise independent event families.
    Shulman(RunArgs),
    /// Kraft-type sum for the Lempel-Ziv surrogate metric.
    SurrogateCheck(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; siblings get the plot data, row detail and manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

/// One row of the main results table.
#[derive(Serialize, Debug)]
struct ResultRow {
    decoder: String,
    n: usize,
    #[serde(rename = "R")]
    rate: f64,
    trials: u64,
    errors: u64,
    estimate: f64,
    ci_lo: f64,
    ci_hi: f64,
    bound_rhs: Option<f64>,
    pass: Option<bool>,
    config_hash: String,
    seed: u64,
}

#[derive(Serialize, Debug)]
struct PlotRow {
    decoder: String,
    n: usize,
    #[serde(rename = "R")]
    rate: f64,
    estimate: f64,
    ci_lo: f64,
    ci_hi: f64,
}

/// Tables produced by one run.
#[derive(Default)]
struct Report {
    main: Vec<u8>,
    plot: Option<Vec<u8>>,
    rows: Option<Vec<u8>>,
    pass: bool,
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    hash: String,
    seed: u64,
}

impl Ctx<'_> {
    fn estimate_row(&self, e: &ErrorEstimate) -> ResultRow {
        ResultRow {
            decoder: e.decoder.clone(),
            n: e.n,
            rate: e.rate,
            trials: e.trials,
            errors: e.errors,
            estimate: e.estimate,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            bound_rhs: None,
            pass: None,
            config_hash: self.hash.clone(),
            seed: self.seed,
        }
    }

    fn bound_row(&self, b: &BoundCheck, n: usize, rate: f64, trials: u64) -> ResultRow {
        ResultRow {
            decoder: format!("bound:{}", b.name),
            n,
            rate,
            trials,
            errors: 0,
            estimate: b.lhs,
            ci_lo: b.lhs,
            ci_hi: b.lhs_hi,
            bound_rhs: Some(b.rhs),
            pass: Some(b.pass),
            config_hash: self.hash.clone(),
            seed: self.seed,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn audit_row(&self, name: &str, n: usize, rate: f64, cases: u64, failures: u64, value: f64, rhs: Option<f64>, pass: bool) -> ResultRow {
        ResultRow {
            decoder: name.into(),
            n,
            rate,
            trials: cases,
            errors: failures,
            estimate: value,
            ci_lo: value,
            ci_hi: value,
            bound_rhs: rhs,
            pass: Some(pass),
            config_hash: self.hash.clone(),
            seed: self.seed,
        }
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}

fn plot_rows(estimates: &[ErrorEstimate]) -> Vec<PlotRow> {
    estimates
        .iter()
        .map(|e| PlotRow {
            decoder: e.decoder.clone(),
            n: e.n,
            rate: e.rate,
            estimate: e.estimate,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
        })
        .collect()
}

fn simulate(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.config;
    let channel = cfg.require(&cfg.channel, "channel")?;
    let family = cfg.require(&cfg.family, "family")?;
    let desc = cfg.require(&cfg.ensemble, "ensemble")?;
    let decoders = cfg.expanded_decoders(family)?;
    let mut rows = Vec::new();
    let mut all = Vec::new();
    let mut pass = true;
    for n in cfg.block_lengths()? {
        log::info!("simulate n={n}");
        if channel.is_mac() {
            let r1 = *cfg.require(&cfg.r1, "r1")?;
            let r2 = *cfg.require(&cfg.r2, "r2")?;
            let spec = MacExperimentSpec {
                q1: desc.build(n, r1)?,
                q2: cfg.ensemble2.as_ref().unwrap_or(desc).build(n, r2)?,
                family: family.clone(),
                channel: channel.clone(),
                decoders: decoders.clone(),
                r1,
                r2,
                trials: cfg.trials,
                seed: ctx.seed,
                tie_policy: cfg.tie_policy,
            };
            let result = run_mac_experiment(&spec)?;
            for e in result.estimates.iter().chain(&result.error_types) {
                rows.push(ctx.estimate_row(e));
            }
            for b in &result.bounds {
                rows.push(ctx.bound_row(b, n, r1 + r2, cfg.trials));
            }
            pass &= result.pass();
            all.extend(result.estimates);
        } else {
            let spec = ExperimentSpec {
                ensemble: desc.build(n, cfg.rate)?,
                family: family.clone(),
                channel: channel.clone(),
                decoders: decoders.clone(),
                rate: cfg.rate,
                trials: cfg.trials,
                seed: ctx.seed,
                engine: cfg.engine,
                tie_policy: cfg.tie_policy,
                shifted: cfg.shifted || cfg.audit.as_ref().is_some_and(|a| a.method == AuditMethod::MonteCarlo),
            };
            let result = run_experiment(&spec)?;
            for e in result.estimates.iter().chain(&result.shifted) {
                rows.push(ctx.estimate_row(e));
            }
            for b in &result.bounds {
                rows.push(ctx.bound_row(b, n, cfg.rate, cfg.trials));
            }
            if let Some(ratio) = result.ratio_universal_ml {
                rows.push(ctx.audit_row("ratio:universal/ml", n, cfg.rate, cfg.trials, 0, ratio, None, ratio.is_finite()));
            }
            rows.push(ctx.audit_row(
                "check:dominance",
                n,
                cfg.rate,
                cfg.trials,
                result.dominance_violations,
                result.dominance_violations as f64 / cfg.trials as f64,
                None,
                result.dominance_violations == 0,
            ));
            pass &= result.pass();
            all.extend(result.estimates);
        }
    }
    Ok(Report { main: to_csv(&rows)?, plot: Some(to_csv(&plot_rows(&all))?), rows: None, pass })
}

#[derive(Serialize)]
struct AuditDetailRow {
    n: usize,
    x: String,
    y: String,
    scorer: String,
    pairwise: f64,
    lower_bound: f64,
    upper_bound: f64,
    pass: bool,
    config_hash: String,
    seed: u64,
}

fn audit(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.config;
    let options = cfg.audit.clone().unwrap_or_default();
    if options.method == AuditMethod::MonteCarlo {
        return simulate(ctx);
    }
    let channel = cfg.require(&cfg.channel, "channel")?;
    let family = cfg.require(&cfg.family, "family")?;
    let desc = cfg.require(&cfg.ensemble, "ensemble")?;
    let thetas = cfg.thetas(family)?;
    let mut rows = Vec::new();
    let mut detail = Vec::new();
    let mut pass = true;
    for n in cfg.block_lengths()? {
        log::info!("exact audit n={n}");
        if channel.is_mac() {
            let r1 = *cfg.require(&cfg.r1, "r1")?;
            let r2 = *cfg.require(&cfg.r2, "r2")?;
            let q1 = desc.build(n, r1)?;
            let q2 = cfg.ensemble2.as_ref().unwrap_or(desc).build(n, r2)?;
            let (_, ya) = family.alphabets();
            let mut rng = crate::ensemble::stream_rng(ctx.seed, n as u64);
            let instances: Vec<(Sequence, Sequence, Sequence)> = (0..cfg.trials)
                .map(|_| {
                    let a = crate::channel::random_sequence(q1.alphabet, n, &mut rng);
                    let b = crate::channel::random_sequence(q2.alphabet, n, &mut rng);
                    let y = crate::channel::random_sequence(ya, n, &mut rng);
                    (a, b, y)
                })
                .collect();
            let r = mac_sandwich(family, &q1, &q2, &thetas, &instances, r1, r2)?;
            rows.push(ctx.audit_row(
                "audit:mac_lower",
                n,
                r1 + r2,
                r.lower_cases,
                r.lower_violations,
                r.lower_violations as f64,
                None,
                r.lower_violations == 0,
            ));
            rows.push(ctx.audit_row(
                "audit:mac_upper",
                n,
                r1 + r2,
                r.upper_cases,
                r.upper_violations,
                r.upper_violations as f64,
                None,
                r.upper_violations == 0,
            ));
            pass &= r.pass();
            continue;
        }
        let ensemble = desc.build(n, cfg.rate)?;
        let r = universality_audit_exact(&ensemble, family, channel, &thetas, cfg.rate, options.rows)?;
        rows.push(ctx.audit_row(
            "audit:pointwise",
            n,
            cfg.rate,
            r.pointwise_cases,
            r.pointwise_violations,
            r.pointwise_violations as f64,
            None,
            r.pointwise_violations == 0,
        ));
        rows.push(ctx.audit_row(
            "audit:closed_form",
            n,
            cfg.rate,
            0,
            r.closed_form_mismatches,
            r.closed_form_mismatches as f64,
            None,
            r.closed_form_mismatches == 0,
        ));
        rows.push(ctx.audit_row("audit:rate_bound", n, cfg.rate, 0, 0, r.f_universal, Some(r.rate_bound_rhs), r.rate_bound_ok));
        rows.push(ctx.audit_row(
            "audit:shift_bound",
            n,
            cfg.rate,
            0,
            0,
            r.f_universal,
            Some(r.shift_bound_rhs),
            r.shift_bound_ok,
        ));
        pass &= r.pass();
        detail.extend(r.rows.into_iter().map(|row| AuditDetailRow {
            n,
            x: row.x,
            y: row.y,
            scorer: row.scorer,
            pairwise: row.pairwise,
            lower_bound: row.lower_bound,
            upper_bound: row.upper_bound,
            pass: row.pass,
            config_hash: ctx.hash.clone(),
            seed: ctx.seed,
        }));
    }
    let detail = if options.rows { Some(to_csv(&detail)?) } else { None };
    Ok(Report { main: to_csv(&rows)?, plot: None, rows: detail, pass })
}

#[derive(Serialize)]
struct ClassRow {
    n: usize,
    k_n: u128,
    delta_n: f64,
    /// `(n+1)^{|X||Y|}`, the joint-type count bound.
    poly_bound: f64,
    pass: bool,
    config_hash: String,
    seed: u64,
}

fn classes(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.config;
    let family = cfg.require(&cfg.family, "family")?;
    let (xa, ya) = family.alphabets();
    let mut rows = Vec::new();
    for n in cfg.block_lengths()? {
        let r = count_classes(family, n, CountStrategy::Auto)?;
        let poly_bound = ((n + 1) as f64).powi((xa * ya) as i32);
        let pass = !matches!(family, crate::metric::MetricFamily::Additive { .. }) || r.k_n as f64 <= poly_bound;
        rows.push(ClassRow {
            n,
            k_n: r.k_n,
            delta_n: r.delta_n,
            poly_bound,
            pass,
            config_hash: ctx.hash.clone(),
            seed: ctx.seed,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(Report { main: to_csv(&rows)?, pass, ..Report::default() })
}

#[derive(Serialize)]
struct ShulmanRow {
    family: String,
    events: usize,
    union: f64,
    sum: f64,
    bound: f64,
    independence_verified: bool,
    pass: bool,
    config_hash: String,
    seed: u64,
}

fn shulman(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.config;
    let options = cfg.require(&cfg.shulman, "shulman")?;
    let mut families: Vec<EventFamilySpec> = Vec::new();
    families.extend(options.xor_bits.iter().map(|&b| EventFamilySpec::xor(b)));
    families.extend(options.independent.iter().map(|&k| EventFamilySpec::independent_fair(k)));
    for k in 0..options.random_count {
        families.push(random_linear_family(options.random_bits, crate::ensemble::mix(ctx.seed, k))?);
    }
    families.extend(options.families.iter().cloned());
    let mut rows = Vec::new();
    for f in &families {
        let r = shulman_check(f)?;
        rows.push(ShulmanRow {
            family: r.name,
            events: r.events,
            union: r.union,
            sum: r.sum,
            bound: r.bound,
            independence_verified: r.independence_verified,
            pass: r.holds,
            config_hash: ctx.hash.clone(),
            seed: ctx.seed,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(Report { main: to_csv(&rows)?, pass, ..Report::default() })
}

#[derive(Serialize)]
struct SurrogateRow {
    n: usize,
    y: String,
    value: f64,
    pass: Option<bool>,
    config_hash: String,
    seed: u64,
}

fn surrogate(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.config;
    let desc = cfg.require(&cfg.ensemble, "ensemble")?;
    let options = cfg.surrogate.clone().unwrap_or_default();
    let y_alphabet = cfg.family.as_ref().map_or(2, |f| f.alphabets().1);
    let mut ns = cfg.block_lengths()?;
    ns.sort_unstable();
    let mut rows = Vec::new();
    let mut maxima = Vec::new();
    for &n in &ns {
        let ensemble = desc.build(n, cfg.rate)?;
        let mut ys = sample_outputs(y_alphabet, n, options.samples, ctx.seed);
        if options.include_zeros {
            ys.insert(0, Sequence::new(vec![0; n], y_alphabet)?);
        }
        let r = surrogate_condition_check(&ensemble, &ys)?;
        for (y, v) in &r.per_y {
            rows.push(SurrogateRow { n, y: y.clone(), value: *v, pass: None, config_hash: ctx.hash.clone(), seed: ctx.seed });
        }
        maxima.push((n, r.max));
    }
    let mut pass = true;
    for (k, &(n, max)) in maxima.iter().enumerate() {
        let ok = k == 0 || max <= maxima[k - 1].1 + 1e-12;
        pass &= ok;
        rows.push(SurrogateRow { n, y: "max".into(), value: max, pass: Some(ok), config_hash: ctx.hash.clone(), seed: ctx.seed });
    }
    Ok(Report { main: to_csv(&rows)?, pass, ..Report::default() })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "udec".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn execute(mode: Mode, args: &RunArgs) -> Result<bool> {
    let config = ExperimentConfig::load(&args.config)?;
    if let Some(m) = config.mode {
        if m != mode {
            return Err(Error::Config(format!("config is for `{}`, not `{}`", m.name(), mode.name())));
        }
    }
    let ctx = Ctx { config: &config, hash: config.hash(), seed: args.seed.unwrap_or(config.seed) };
    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let report = pool.install(|| match mode {
        Mode::Simulate => simulate(&ctx),
        Mode::Audit => audit(&ctx),
        Mode::CountClasses => classes(&ctx),
        Mode::Shulman => shulman(&ctx),
        Mode::SurrogateCheck => surrogate(&ctx),
    })?;

    let out = args.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from));
    match out {
        None => std::io::stdout().write_all(&report.main)?,
        Some(path) => {
            std::fs::write(&path, &report.main)?;
            let mut outputs = vec![path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()];
            for (suffix, body) in [("plot.csv", &report.plot), ("rows.csv", &report.rows)] {
                if let Some(body) = body {
                    let p = sibling(&path, suffix);
                    std::fs::write(&p, body)?;
                    outputs.push(p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
                }
            }
            let manifest = serde_json::json!({
                "tool": "udec",
                "version": env!("CARGO_PKG_VERSION"),
                "mode": mode.name(),
                "config_hash": ctx.hash,
                "seed": ctx.seed,
                "outputs": outputs,
                "pass": report.pass,
                "config": config,
            });
            std::fs::write(sibling(&path, "manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        }
    }
    Ok(report.pass)
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run(argv: &[String]) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("UDEC_LOG")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (mode, args) = match &cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Audit(a) => (Mode::Audit, a),
        Command::CountClasses(a) => (Mode::CountClasses, a),
        Command::Shulman(a) => (Mode::Shulman, a),
        Command::SurrogateCheck(a) => (Mode::SurrogateCheck, a),
    };
    match execute(mode, args) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("udec: at least one audited inequality failed");
            1
        }
        Err(e) => {
            eprintln!("udec: {e}");
            2
        }
    }
}
