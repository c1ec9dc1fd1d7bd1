//! Command-line entry point.
//!
//! Every command writes only to the given writer (or `--output`), and all
//! randomness is keyed by `(seed, sample index)`, so reruns with the same
//! flags are byte-identical regardless of `--threads`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::chain::{ChainPlans, DEFAULT_EXACT_CAP};
use crate::coupler::{naive_failure_demo, verify_containment, CoupledSample, Coupler, CouplerConfig, FlagCounts};
use crate::error::{domain, Error, Result};
use crate::infinite::{prefix_law, InfiniteSampler, PrefixLawCaps};
use crate::ladder::LadderConfig;
use crate::numerics::{parse_rational, rational_to_f64};
use crate::rng::RngHandle;
use crate::trees::{TruncatedTree, TruncationReason, TruncationStatus};
use crate::verify::{chi_square, run_suite, Suite, SuiteConfig, DEFAULT_SIGNIFICANCE};

/// Environment variable naming the transport-plan cache directory.
pub const CACHE_ENV: &str = "GWCOUPLE_CACHE_DIR";

/// Samples generated in parallel before being written out in order.
const CHUNK: u64 = 1024;

#[derive(Parser, Debug)]
#[command(name = "gwcouple", version, about = "Nested samples of geometric Galton-Watson trees conditioned to survive")]
struct Cli {
    /// TOML file with defaults for any flag (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch commands [default: available parallelism].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write output here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Depth-limited prefixes of the tree conditioned to be infinite.
    Sample(SampleArgs),
    /// Coupled samples across a parameter grid, with a containment summary.
    Couple(CoupleArgs),
    /// Run a verification suite ("all" runs every suite).
    Verify(VerifyArgs),
    /// Export the exact transport plan between sizes k and k+1 as CSV.
    Transport(TransportArgs),
    /// Demonstrations.
    Demo {
        #[command(subcommand)]
        which: DemoCommand,
    },
}

#[derive(Subcommand, Debug)]
enum DemoCommand {
    /// Why one shared run of the plain ladder cannot nest two parameters.
    Naive(NaiveArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Text,
    Json,
    Csv,
    Dot,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Offspring parameter, 1/2 <= p < 1.
    #[arg(long)]
    p: Option<f64>,
    /// Prefix depth [default: 3].
    #[arg(long)]
    depth: Option<u32>,
    /// Number of samples [default: 1].
    #[arg(long)]
    samples: Option<u64>,
    /// Seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// text, json or dot [default: text].
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    /// Increasing comma-separated parameters, e.g. 0.5,0.75.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Prefix depth [default: 3].
    #[arg(long)]
    depth: Option<u32>,
    /// Number of samples [default: 1].
    #[arg(long)]
    samples: Option<u64>,
    /// Seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Largest size with an exact transport plan [default: 9].
    #[arg(long)]
    exact_cap: Option<u64>,
    /// text, json or csv; csv prints the summary only [default: text].
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Print only the summary.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suite name or "all".
    suite: String,
    /// Seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplier on every sample count [default: 1].
    #[arg(long)]
    scale: Option<f64>,
    /// Smallest passing p-value of each chi-square case [default: 0.001].
    #[arg(long)]
    significance: Option<f64>,
    /// Largest size with an exact transport plan [default: 9].
    #[arg(long)]
    exact_cap: Option<u64>,
    /// text or json [default: text].
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct TransportArgs {
    /// Smaller tree size; the plan couples sizes k and k+1.
    #[arg(long)]
    k: Option<u64>,
}

#[derive(Args, Debug)]
struct NaiveArgs {
    /// Smaller parameter, as a decimal or fraction.
    #[arg(long)]
    p1: Option<String>,
    /// Larger parameter.
    #[arg(long)]
    p2: Option<String>,
    /// Seed for the empirical check [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Samples in the empirical check [default: 10000].
    #[arg(long)]
    samples: Option<u64>,
}

/// Keys accepted in the TOML config; same names as the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    p: Option<f64>,
    p1: Option<String>,
    p2: Option<String>,
    grid: Option<Vec<f64>>,
    depth: Option<u32>,
    samples: Option<u64>,
    seed: Option<u64>,
    exact_cap: Option<u64>,
    format: Option<Format>,
    scale: Option<f64>,
    significance: Option<f64>,
    k: Option<u64>,
    threads: Option<usize>,
    output: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Tests,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Runs the CLI on `args` (including the program name), writing to `out`.
/// Returns the process exit code: 0 success, 1 a failed check, 2 a usage or
/// domain error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(out, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(Failure::Tests) => 1,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(out, "error: {msg}");
            2
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<FileConfig>(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    let output = cli.output.clone().or(file.output.clone());
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(Failure::Usage("--threads must be positive".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Failure::Usage(e.to_string()))?
    };
    let mut file_sink;
    let sink: &mut dyn Write = match &output {
        Some(path) => {
            file_sink = std::io::BufWriter::new(std::fs::File::create(path)?);
            &mut file_sink
        }
        None => out,
    };
    let result = match &cli.command {
        Command::Sample(a) => cmd_sample(a, &file, &pool, sink),
        Command::Couple(a) => cmd_couple(a, &file, &pool, sink),
        Command::Verify(a) => cmd_verify(a, &file, &pool, sink),
        Command::Transport(a) => cmd_transport(a, &file, sink),
        Command::Demo {
            which: DemoCommand::Naive(a),
        } => cmd_naive(a, &file, &pool, sink),
    };
    sink.flush()?;
    result
}

fn cache_dir(file: &FileConfig) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).or(file.cache_dir.clone())
}

fn load_plans(exact_cap: u64, file: &FileConfig) -> Result<Arc<ChainPlans>> {
    let dir = cache_dir(file);
    Ok(Arc::new(ChainPlans::load_or_build(exact_cap, dir.as_deref())?))
}

fn format_of(flag: Option<Format>, file: &FileConfig, allowed: &[Format]) -> Result<Format> {
    let f = flag.or(file.format).unwrap_or(Format::Text);
    if !allowed.contains(&f) {
        return Err(domain(format!("format {f:?} is not available for this command")));
    }
    Ok(f)
}

fn status_label(status: &TruncationStatus) -> String {
    match status {
        TruncationStatus::Clean => "clean".into(),
        TruncationStatus::Compromised(rs) => rs.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>().join("+"),
    }
}

fn cmd_sample(a: &SampleArgs, file: &FileConfig, pool: &rayon::ThreadPool, out: &mut dyn Write) -> Result<(), Failure> {
    let p = a.p.or(file.p).ok_or_else(|| Failure::Usage("--p is required".into()))?;
    let depth = a.depth.or(file.depth).unwrap_or(3);
    let n = a.samples.or(file.samples).unwrap_or(1);
    let seed = a.seed.or(file.seed).unwrap_or(1);
    let format = format_of(a.format, file, &[Format::Text, Format::Json, Format::Dot])?;
    let sampler = InfiniteSampler::new(p, LadderConfig::default())?;
    let base = RngHandle::new(seed);
    let mut reasons: BTreeMap<TruncationReason, u64> = BTreeMap::new();
    let mut compromised = 0u64;
    let mut json_rows = Vec::new();
    for start in (0..n).step_by(CHUNK as usize) {
        let trees: Vec<TruncatedTree> = pool.install(|| {
            (start..(start + CHUNK).min(n))
                .into_par_iter()
                .map(|i| sampler.sample(depth, &base.substream(i)))
                .collect()
        });
        for (offset, t) in trees.iter().enumerate() {
            let i = start + offset as u64;
            if let TruncationStatus::Compromised(rs) = t.status() {
                compromised += 1;
                for r in rs {
                    *reasons.entry(*r).or_default() += 1;
                }
            }
            match format {
                Format::Text => writeln!(out, "{i}\t{}\t{}", t.encode(), status_label(t.status()))?,
                Format::Dot => write!(out, "{}", t.to_dot())?,
                _ => json_rows.push(serde_json::json!({
                    "index": i,
                    "tree": t.encode(),
                    "size": t.size(),
                    "infinite_lines": t.frontier_count(),
                    "status": t.status(),
                })),
            }
        }
    }
    let reasons: BTreeMap<String, u64> = reasons.into_iter().map(|(r, c)| (format!("{r:?}"), c)).collect();
    match format {
        Format::Text => writeln!(
            out,
            "# p = {p}, depth = {depth}, samples = {n}, seed = {seed}, compromised = {compromised} {reasons:?}"
        )?,
        Format::Json => {
            let doc = serde_json::json!({
                "p": p, "depth": depth, "samples": n, "seed": seed,
                "trees": json_rows,
                "summary": { "compromised": compromised, "reasons": reasons },
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
        }
        _ => {}
    }
    Ok(())
}

#[derive(Default)]
struct CoupleSummary {
    samples: u64,
    contained: u64,
    violations: u64,
    compromised: u64,
    repaired_roots: u64,
    flags: FlagCounts,
    depth1: Vec<BTreeMap<String, u64>>,
}

impl CoupleSummary {
    fn add(&mut self, s: &CoupledSample) {
        self.samples += 1;
        self.contained += verify_containment(s).nested() as u64;
        self.violations += s.ladder_violations as u64;
        self.compromised += s.is_compromised() as u64;
        self.repaired_roots += (s.root_flags.finite_infinite_approx > 0) as u64;
        self.flags.merge(&s.flags);
        self.depth1.resize(s.trees.len(), BTreeMap::new());
        for (c, t) in s.trees.iter().enumerate() {
            *self.depth1[c].entry(t.truncate(1).encode()).or_default() += 1;
        }
    }

    fn rate(&self, x: u64) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            x as f64 / self.samples as f64
        }
    }

    /// Depth-1 chi-square per component as `(statistic, dof, p-value)`.
    fn chi_squares(&self, grid: &[f64]) -> Result<Vec<Option<(f64, usize, f64)>>> {
        grid.iter()
            .zip(&self.depth1)
            .map(|(&p, obs)| {
                let exact = num_rational::BigRational::from_float(p).ok_or_else(|| domain("non-finite p"))?;
                let law = prefix_law(&exact, 1, PrefixLawCaps::default())?;
                let expected = law.support.iter().map(|(k, v)| (k.clone(), rational_to_f64(v))).collect();
                match chi_square(obs, &expected, crate::verify::DEFAULT_MIN_EXPECTED) {
                    Ok(c) => Ok(Some((c.statistic, c.dof, c.p_value))),
                    Err(Error::DegenerateTest(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }
}

fn cmd_couple(a: &CoupleArgs, file: &FileConfig, pool: &rayon::ThreadPool, out: &mut dyn Write) -> Result<(), Failure> {
    let grid = a
        .grid
        .clone()
        .or(file.grid.clone())
        .ok_or_else(|| Failure::Usage("--grid is required".into()))?;
    let depth = a.depth.or(file.depth).unwrap_or(3);
    let n = a.samples.or(file.samples).unwrap_or(1);
    let seed = a.seed.or(file.seed).unwrap_or(1);
    let exact_cap = a.exact_cap.or(file.exact_cap).unwrap_or(DEFAULT_EXACT_CAP);
    let format = format_of(a.format, file, &[Format::Text, Format::Json, Format::Csv])?;
    let config = CouplerConfig {
        exact_cap,
        ..CouplerConfig::default()
    };
    let coupler = Coupler::with_plans(&grid, config, load_plans(exact_cap, file)?)?;
    let base = RngHandle::new(seed);
    let mut summary = CoupleSummary::default();
    let emit = !a.summary_only && format != Format::Csv;
    let mut json_rows = Vec::new();
    for start in (0..n).step_by(CHUNK as usize) {
        let batch: Vec<CoupledSample> = pool.install(|| {
            (start..(start + CHUNK).min(n))
                .into_par_iter()
                .map(|i| coupler.sample(depth, &base.substream(i)))
                .collect::<Result<_>>()
        })?;
        for (offset, s) in batch.iter().enumerate() {
            summary.add(s);
            if !emit {
                continue;
            }
            let i = start + offset as u64;
            match format {
                Format::Text => {
                    let trees: Vec<String> = s.trees.iter().map(|t| t.encode()).collect();
                    let verdict = if verify_containment(s).nested() { "nested" } else { "NOT-NESTED" };
                    writeln!(out, "{i}\t{verdict}\t{}", trees.join("\t"))?;
                }
                _ => {
                    let mut v = s.to_json();
                    v["index"] = i.into();
                    json_rows.push(v);
                }
            }
        }
    }
    let chis = summary.chi_squares(&grid)?;
    let flag_rate = |x: u64| summary.rate(x);
    match format {
        Format::Text => {
            writeln!(out, "# grid = {grid:?}, depth = {depth}, samples = {n}, seed = {seed}")?;
            writeln!(out, "# containment rate = {}", summary.rate(summary.contained))?;
            writeln!(out, "# ladder monotonicity violations = {}", summary.violations)?;
            writeln!(out, "# compromised rate = {}", summary.rate(summary.compromised))?;
            writeln!(
                out,
                "# slot flags per sample: exact_chain = {}, chain_heuristic = {}, finite_infinite_approx = {}, exact_tiny = {}",
                flag_rate(summary.flags.exact_chain),
                flag_rate(summary.flags.chain_heuristic),
                flag_rate(summary.flags.finite_infinite_approx),
                flag_rate(summary.flags.exact_tiny)
            )?;
            writeln!(out, "# FiniteInfiniteApprox root rate = {}", summary.rate(summary.repaired_roots))?;
            for (p, c) in grid.iter().zip(&chis) {
                match c {
                    Some((s, d, pv)) => writeln!(out, "# depth-1 chi-square p = {p}: {s:.4} on {d} dof, p-value {pv:.4e}")?,
                    None => writeln!(out, "# depth-1 chi-square p = {p}: too few samples")?,
                }
            }
        }
        Format::Json => {
            let doc = serde_json::json!({
                "grid": grid, "depth": depth, "samples": n, "seed": seed,
                "batch": json_rows,
                "summary": {
                    "containment_rate": summary.rate(summary.contained),
                    "ladder_violations": summary.violations,
                    "compromised_rate": summary.rate(summary.compromised),
                    "flags": summary.flags,
                    "finite_infinite_approx_root_rate": summary.rate(summary.repaired_roots),
                    "depth1_chi_square": chis,
                },
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
        }
        _ => {
            let mut w = csv::Writer::from_writer(&mut *out);
            let mut header = vec![
                "samples".to_string(),
                "containment_rate".into(),
                "ladder_violations".into(),
                "compromised_rate".into(),
                "exact_chain_rate".into(),
                "chain_heuristic_rate".into(),
                "finite_infinite_approx_rate".into(),
                "exact_tiny_rate".into(),
                "finite_infinite_approx_root_rate".into(),
            ];
            header.extend(grid.iter().map(|p| format!("chi2_depth1_p{p}")));
            w.write_record(&header).map_err(Error::from)?;
            let mut row = vec![
                n.to_string(),
                summary.rate(summary.contained).to_string(),
                summary.violations.to_string(),
                summary.rate(summary.compromised).to_string(),
                flag_rate(summary.flags.exact_chain).to_string(),
                flag_rate(summary.flags.chain_heuristic).to_string(),
                flag_rate(summary.flags.finite_infinite_approx).to_string(),
                flag_rate(summary.flags.exact_tiny).to_string(),
                summary.rate(summary.repaired_roots).to_string(),
            ];
            row.extend(chis.iter().map(|c| c.map_or(String::new(), |(s, _, _)| s.to_string())));
            w.write_record(&row).map_err(Error::from)?;
            w.flush()?;
        }
    }
    if summary.contained < summary.samples || summary.violations > 0 {
        return Err(Failure::Tests);
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, file: &FileConfig, pool: &rayon::ThreadPool, out: &mut dyn Write) -> Result<(), Failure> {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse()?]
    };
    let format = format_of(a.format, file, &[Format::Text, Format::Json])?;
    let config = SuiteConfig {
        seed: a.seed.or(file.seed).unwrap_or(1),
        scale: a.scale.or(file.scale).unwrap_or(1.0),
        significance: a.significance.or(file.significance).unwrap_or(DEFAULT_SIGNIFICANCE),
        exact_cap: a.exact_cap.or(file.exact_cap).unwrap_or(DEFAULT_EXACT_CAP),
        cache_dir: cache_dir(file),
        ..SuiteConfig::default()
    };
    let in_range = config.scale > 0.0 && config.significance > 0.0 && config.significance < 1.0;
    if !in_range {
        return Err(Failure::Usage("--scale must be positive and --significance in (0, 1)".into()));
    }
    let mut all_passed = true;
    let mut reports = Vec::new();
    for s in suites {
        let r = pool.install(|| run_suite(s, &config))?;
        all_passed &= r.passed();
        match format {
            Format::Json => reports.push(r),
            _ => write!(out, "{}", r.to_text())?,
        }
    }
    if format == Format::Json {
        writeln!(out, "{}", serde_json::to_string_pretty(&reports).map_err(Error::from)?)?;
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Tests)
    }
}

fn cmd_transport(a: &TransportArgs, file: &FileConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let k = a.k.or(file.k).ok_or_else(|| Failure::Usage("--k is required".into()))?;
    if k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let plans = load_plans(k, file)?;
    let plan = plans.plan(k).ok_or_else(|| domain(format!("no plan for k = {k}")))?;
    plan.write_csv(&mut *out)?;
    Ok(())
}

fn cmd_naive(a: &NaiveArgs, file: &FileConfig, pool: &rayon::ThreadPool, out: &mut dyn Write) -> Result<(), Failure> {
    let p1 = a.p1.clone().or(file.p1.clone()).ok_or_else(|| Failure::Usage("--p1 is required".into()))?;
    let p2 = a.p2.clone().or(file.p2.clone()).ok_or_else(|| Failure::Usage("--p2 is required".into()))?;
    let (q1, q2) = (parse_rational(&p1)?, parse_rational(&p2)?);
    let demo = naive_failure_demo(&q1, &q2)?;
    writeln!(out, "{demo}")?;
    writeln!(
        out,
        "p1 = {p1}, p2 * eta_inf(p2) = {}: the shared plain ladder {} nest the two trees",
        demo.threshold,
        if demo.fails { "cannot" } else { "may" }
    )?;
    let n = a.samples.or(file.samples).unwrap_or(10_000);
    let seed = a.seed.or(file.seed).unwrap_or(1);
    let broken = pool.install(|| naive_empirical(rational_to_f64(&q1), rational_to_f64(&q2), n, seed))?;
    writeln!(out, "empirical: {broken} of {n} shared-uniform depth-1 pairs not nested (seed {seed})")?;
    Ok(())
}

fn naive_empirical(p1: f64, p2: f64, n: u64, seed: u64) -> Result<u64> {
    use crate::trees::contains;
    use crate::unif_sampling::NaiveSampler;
    let cfg = LadderConfig::default();
    let (a, b) = (NaiveSampler::new(p1, cfg)?, NaiveSampler::new(p2, cfg)?);
    let base = RngHandle::new(seed);
    Ok((0..n)
        .into_par_iter()
        .filter(|&i| {
            let rng = base.substream(i);
            !contains(&a.sample(1, &rng), &b.sample(1, &rng))
        })
        .count() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let code = run(std::iter::once("gwcouple").chain(args.iter().copied()), &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    #[test]
    fn sample_is_reproducible() {
        let a = run_str(&["sample", "--p", "0.75", "--depth", "2", "--samples", "3", "--seed", "7"]);
        let b = run_str(&["sample", "--p", "0.75", "--depth", "2", "--samples", "3", "--seed", "7", "--threads", "1"]);
        assert_eq!(a.0, 0);
        assert_eq!(a, b);
        assert_eq!(a.1.lines().count(), 4);
    }

    #[test]
    fn p_one_is_a_domain_error() {
        let (code, text) = run_str(&["sample", "--p", "1.0"]);
        assert_eq!(code, 2);
        assert!(text.contains("p = 1"), "{text}");
    }

    #[test]
    fn usage_errors_exit_2_and_help_exits_0() {
        assert_eq!(run_str(&["frobnicate"]).0, 2);
        assert_eq!(run_str(&["sample"]).0, 2);
        assert_eq!(run_str(&["--help"]).0, 0);
        assert_eq!(run_str(&["couple", "--grid", "0.9,0.5"]).0, 2);
    }

    #[test]
    fn critical_samples_have_one_infinite_line() {
        let (code, text) = run_str(&["sample", "--p", "0.5", "--depth", "3", "--samples", "200", "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["trees"].as_array().unwrap().iter().all(|t| t["infinite_lines"] == 1));
    }

    #[test]
    fn couple_reports_full_containment() {
        let (code, text) = run_str(&["couple", "--grid", "0.5,0.6,0.9", "--depth", "3", "--samples", "300"]);
        assert_eq!(code, 0, "{text}");
        assert!(text.contains("containment rate = 1\n"));
        assert!(text.contains("FiniteInfiniteApprox"));
        let (code, csv) = run_str(&["couple", "--grid", "0.5,0.75", "--samples", "50", "--format", "csv"]);
        assert_eq!(code, 0);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn transport_exports_rational_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        let (code, _) = run_str(&["transport", "--k", "3", "--output", path.to_str().unwrap()]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.lines().count() > 2);
    }

    #[test]
    fn naive_demo_prints_the_comparison() {
        let (code, text) = run_str(&["demo", "naive", "--p1", "0.6", "--p2", "0.7", "--samples", "100"]);
        assert_eq!(code, 0);
        assert!(text.contains("0.6 > 0.4"), "{text}");
        let (_, text) = run_str(&["demo", "naive", "--p1", "0.6", "--p2", "0.9", "--samples", "10"]);
        assert!(text.contains("0.6 < 0.8"), "{text}");
    }

    #[test]
    fn config_file_supplies_defaults_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "p = 0.75\ndepth = 1\nsamples = 2\nseed = 3\n").unwrap();
        let cfg = path.to_str().unwrap();
        let (code, text) = run_str(&["--config", cfg, "sample"]);
        assert_eq!(code, 0);
        assert!(text.contains("p = 0.75, depth = 1, samples = 2, seed = 3"));
        let (_, text) = run_str(&["--config", cfg, "sample", "--samples", "4"]);
        assert!(text.contains("samples = 4"));
        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert_eq!(run_str(&["--config", cfg, "sample"]).0, 2);
    }

    #[test]
    fn verify_identities_passes() {
        let (code, text) = run_str(&["verify", "identities"]);
        assert_eq!(code, 0, "{text}");
        assert_eq!(run_str(&["verify", "nope"]).0, 2);
    }
}
