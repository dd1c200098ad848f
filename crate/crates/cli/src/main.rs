//! Command-line surface: `solve`, `verify` and `trace` over DIMACS-like
//! instance files, with machine-readable JSON reports.
//!
//! Exit codes: 0 success, 1 usage/parse/verification errors, 2 no perfect
//! matching, 3 solver gave up (tied optima or non-convergence after the
//! retry budget, or the outer iteration budget).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use blossom_bp::driver::{MatchingResult, SolveError, VerificationReport};
use blossom_bp::{
    solve_mwpm, verify_matching, verify_result, with_threads, Backend, SolveConfig, WeightedGraph,
};

#[derive(Parser)]
#[command(name = "blossom-bp", version, about = "Exact minimum-weight perfect matching solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an instance and report the optimal matching.
    Solve(SolveArgs),
    /// Check a matching file against an instance (and the exact oracle on
    /// small instances).
    Verify(VerifyArgs),
    /// Solve an instance and emit the per-iteration trace as JSON lines.
    Trace(TraceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Bp,
    Enumerate,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Bp => Backend::Bp,
            BackendArg::Enumerate => Backend::Enumerate,
        }
    }
}

#[derive(Args)]
struct SolveOpts {
    /// Instance file (`p edge <n> <m>` header, `e <u> <v> <w>` lines).
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "bp")]
    backend: BackendArg,
    /// Seed for the deterministic perturbation stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise range R; 1 disables the perturbation.
    #[arg(long, default_value_t = 1 << 20)]
    noise_range: u64,
    /// Outer iteration budget (default 10 * |V|^2).
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    bp_max_rounds: usize,
    /// Edge limit for the enumerate backend.
    #[arg(long, default_value_t = 16)]
    enumerate_limit: usize,
    #[arg(long, default_value_t = 8)]
    retry_limit: u32,
    /// Worker threads; results are identical for every value.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl SolveOpts {
    fn config(&self) -> SolveConfig {
        SolveConfig {
            backend: self.backend.into(),
            seed: self.seed,
            noise_range: self.noise_range,
            max_outer: self.max_outer,
            bp_max_rounds: self.bp_max_rounds,
            bp_stable_window: None,
            enumerate_limit: self.enumerate_limit,
            retry_limit: self.retry_limit,
            threads: self.threads,
            collect_trace: true,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    opts: SolveOpts,
    /// Emit the full JSON report on stdout.
    #[arg(long)]
    json: bool,
    /// Also write the per-iteration trace (JSON lines) to this path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Include wall-clock timings in the JSON report (breaks byte-for-byte
    /// reproducibility of the report, so it is opt-in).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    /// Matching file: one `u v` pair per line, 1-based.
    matching: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    opts: SolveOpts,
    /// Trace output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunReport<'a> {
    schema: u32,
    instance: InstanceInfo,
    config: ConfigEcho,
    result: ResultInfo,
    verification: &'a VerificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

#[derive(Serialize)]
struct InstanceInfo {
    path: String,
    vertices: usize,
    edges: usize,
}

#[derive(Serialize)]
struct ConfigEcho {
    backend: &'static str,
    seed: u64,
    noise_range: u64,
    max_outer: usize,
    bp_max_rounds: usize,
    enumerate_limit: usize,
    retry_limit: u32,
    threads: usize,
}

#[derive(Serialize)]
struct ResultInfo {
    weight: i64,
    matching: Vec<(usize, usize)>,
    matching_edge_ids: Vec<usize>,
    outer_iterations: usize,
    contractions: usize,
    expansions: usize,
    bp_rounds_total: usize,
    seed_used: u64,
    retries: u32,
}

#[derive(Serialize)]
struct Timings {
    parse_ms: u128,
    solve_ms: u128,
    verify_ms: u128,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Trace(args) => cmd_trace(args),
    };
    ExitCode::from(code)
}

fn load_instance(path: &Path) -> Result<WeightedGraph, u8> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        1u8
    })?;
    WeightedGraph::parse(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        1u8
    })
}

fn exit_code_for(err: &SolveError) -> u8 {
    match err {
        SolveError::Infeasible { .. } => 2,
        SolveError::RetriesExhausted { .. } | SolveError::IterationBudgetExceeded { .. } => 3,
        SolveError::Config(_) | SolveError::Internal(_) => 1,
    }
}

fn run_solve(g: &WeightedGraph, cfg: &SolveConfig) -> Result<MatchingResult, u8> {
    with_threads(cfg.threads, || solve_mwpm(g, cfg)).map_err(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })
}

fn write_trace(path: Option<&Path>, result: &MatchingResult) -> Result<(), u8> {
    let mut buf = String::new();
    for record in &result.trace {
        buf.push_str(&serde_json::to_string(record).expect("trace record serializes"));
        buf.push('\n');
    }
    match path {
        Some(p) => fs::write(p, buf).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", p.display());
            1u8
        }),
        None => {
            print!("{buf}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn cmd_solve(args: SolveArgs) -> u8 {
    let t0 = Instant::now();
    let g = match load_instance(&args.opts.instance) {
        Ok(g) => g,
        Err(code) => return code,
    };
    let parse_ms = t0.elapsed().as_millis();

    let cfg = args.opts.config();
    let t1 = Instant::now();
    let result = match run_solve(&g, &cfg) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let solve_ms = t1.elapsed().as_millis();

    let t2 = Instant::now();
    let verification = verify_result(&g, &result);
    let verify_ms = t2.elapsed().as_millis();

    if let Some(trace_path) = &args.trace {
        if let Err(code) = write_trace(Some(trace_path), &result) {
            return code;
        }
    }

    if args.json {
        let report = RunReport {
            schema: 1,
            instance: InstanceInfo {
                path: args.opts.instance.display().to_string(),
                vertices: g.vertex_count,
                edges: g.edge_count(),
            },
            config: ConfigEcho {
                backend: match cfg.backend {
                    Backend::Bp => "bp",
                    Backend::Enumerate => "enumerate",
                },
                seed: cfg.seed,
                noise_range: cfg.noise_range,
                max_outer: cfg.max_outer_for(&g),
                bp_max_rounds: cfg.bp_max_rounds,
                enumerate_limit: cfg.enumerate_limit,
                retry_limit: cfg.retry_limit,
                threads: cfg.threads,
            },
            result: ResultInfo {
                weight: result.weight,
                matching: result.matching_pairs(&g),
                matching_edge_ids: result.matching.clone(),
                outer_iterations: result.outer_iterations,
                contractions: result.contractions,
                expansions: result.expansions,
                bp_rounds_total: result.bp_rounds_total,
                seed_used: result.seed_used,
                retries: result.retries,
            },
            verification: &verification,
            timings: args.timings.then_some(Timings {
                parse_ms,
                solve_ms,
                verify_ms,
            }),
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        println!("weight: {}", result.weight);
        let pairs: Vec<String> = result
            .matching_pairs(&g)
            .iter()
            .map(|(u, v)| format!("({u},{v})"))
            .collect();
        println!("matching: {}", pairs.join(" "));
        println!(
            "outer iterations: {} (contractions: {}, expansions: {})",
            result.outer_iterations, result.contractions, result.expansions
        );
        if result.retries > 0 {
            println!("retries: {} (final seed {})", result.retries, result.seed_used);
        }
        println!(
            "verification: {}",
            if verification.all_pass() {
                "ok"
            } else {
                "FAILED"
            }
        );
    }

    if verification.all_pass() {
        0
    } else {
        eprintln!(
            "error: verification failed: {}",
            verification
                .first_failure()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .unwrap_or_default()
        );
        1
    }
}

fn cmd_trace(args: TraceArgs) -> u8 {
    let g = match load_instance(&args.opts.instance) {
        Ok(g) => g,
        Err(code) => return code,
    };
    let cfg = args.opts.config();
    let result = match run_solve(&g, &cfg) {
        Ok(r) => r,
        Err(code) => return code,
    };
    match write_trace(args.out.as_deref(), &result) {
        Ok(()) => 0,
        Err(code) => code,
    }
}

fn parse_matching_file(text: &str, g: &WeightedGraph) -> Result<Vec<usize>, String> {
    let mut ids = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_ascii_whitespace().collect();
        if fields.len() != 2 {
            return Err(format!("line {line}: expected `u v`, got `{trimmed}`"));
        }
        let u: usize = fields[0]
            .parse()
            .map_err(|_| format!("line {line}: bad vertex `{}`", fields[0]))?;
        let v: usize = fields[1]
            .parse()
            .map_err(|_| format!("line {line}: bad vertex `{}`", fields[1]))?;
        if u == 0 || v == 0 || u > g.vertex_count || v > g.vertex_count {
            return Err(format!("line {line}: vertex out of range"));
        }
        let (a, b) = (u - 1, v - 1);
        let id = g
            .edges
            .iter()
            .find(|e| (e.u, e.v) == (a, b) || (e.u, e.v) == (b, a))
            .map(|e| e.id)
            .ok_or_else(|| format!("line {line}: edge ({u}, {v}) not in instance"))?;
        ids.push(id);
    }
    Ok(ids)
}

fn cmd_verify(args: VerifyArgs) -> u8 {
    let g = match load_instance(&args.instance) {
        Ok(g) => g,
        Err(code) => return code,
    };
    let text = match fs::read_to_string(&args.matching) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.matching.display());
            return 1;
        }
    };
    let matching = match parse_matching_file(&text, &g) {
        Ok(m) => m,
        Err(msg) => {
            eprintln!("error: {}: {msg}", args.matching.display());
            return 1;
        }
    };

    let report = verify_matching(&g, &matching, None);
    for check in &report.checks {
        let status = match check.status {
            blossom_bp::driver::CheckStatus::Pass => "pass",
            blossom_bp::driver::CheckStatus::Fail => "FAIL",
            blossom_bp::driver::CheckStatus::Skipped => "skipped",
        };
        if check.detail.is_empty() {
            println!("{}: {status}", check.name);
        } else {
            println!("{}: {status} ({})", check.name, check.detail);
        }
    }
    match report.first_failure() {
        None => 0,
        Some(c) => {
            eprintln!("error: {}: {}", c.name, c.detail);
            1
        }
    }
}
