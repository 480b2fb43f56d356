//! `graph-bell`: build graph-state Bell inequalities and check their bounds,
//! certificates, self-testing and robustness from the command line.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use graph_bell::bounds::{
    self, bound_report, canonical_observables, classical_bound_bruteforce, BoundOptions, BoundReport,
};
use graph_bell::certificates::certify;
use graph_bell::inequalities::{
    build_ghz_inequality, build_graph_inequality, build_multi_substitution, build_ring_max, build_tilted_ghz,
};
use graph_bell::robustness::{curve_csv, fidelity_curve, optimal_slope, RobustnessProblem, SearchConfig};
use graph_bell::selftesting::{rotate_party, selftest_report, SelfTestReport};
use graph_bell::{BellExpression, Builtin, Error, Family, Graph};

#[derive(Parser)]
#[command(name = "graph-bell", version, about = "Bell inequalities for graph states")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true, env = "GRAPH_BELL_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Bell expression as JSON.
    Build(Source),
    /// Closed-form bounds with optional numeric cross-checks.
    Bounds(BoundsArgs),
    /// Check the sum-of-squares identity on canonical and random observables.
    Certify(CertifyArgs),
    /// Run the SWAP-isometry extraction on the target state.
    Selftest(SelftestArgs),
    /// Search for the linear fidelity bound and emit the curve.
    Robust(RobustArgs),
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false, id = "source")]
struct SourceKind {
    /// Graph JSON file (1-indexed edges).
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Star on N vertices, written in the GHZ frame.
    #[arg(long, value_name = "N")]
    star: Option<usize>,
    #[arg(long, value_name = "N")]
    ring: Option<usize>,
    #[arg(long, value_name = "N")]
    line: Option<usize>,
    #[arg(long, value_name = "N")]
    complete: Option<usize>,
    /// Ring on 3L vertices with every third vertex substituted.
    #[arg(long, value_name = "L")]
    ring_max: Option<usize>,
    /// Tilted GHZ family: party count and angle θ in (0, π/4].
    #[arg(long, num_args = 2, value_names = ["N", "THETA"])]
    tilted: Option<Vec<String>>,
    /// Expression JSON file.
    #[arg(long, value_name = "FILE")]
    expr: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Source {
    #[command(flatten)]
    kind: SourceKind,
    /// Substitution vertices, 1-indexed and comma separated (must include the pivot).
    #[arg(long, value_name = "LIST")]
    subs: Option<String>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    source: Source,
    /// Run exhaustive deterministic strategies.
    #[arg(long)]
    bruteforce: bool,
    /// Run the eigensolvers (matrix-free, plus dense when small).
    #[arg(long)]
    eig: bool,
    /// Agreement tolerance between formulas and numeric routes.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Print a fixed-width table instead of JSON.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 100)]
    draws: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct SelftestArgs {
    #[command(flatten)]
    source: Source,
    /// Rotate the first party's observables by this angle in the XZ plane.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct RobustArgs {
    #[command(flatten)]
    source: Source,
    /// Grid points per angle axis.
    #[arg(long, default_value_t = 9)]
    grid: usize,
    /// Share angles between parties of equal kind and degree during the grid search.
    #[arg(long)]
    symmetric: bool,
    /// Rows in the emitted curve.
    #[arg(long, default_value_t = 21)]
    points: usize,
    /// Random angle vectors for the validity check.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 0x0b5e)]
    seed: u64,
    /// Write the curve CSV here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_subs(text: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|t| {
            let v: usize = t
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("substitution entry `{t}` is not a vertex number")))?;
            if v == 0 {
                return Err(Error::Parse("vertices are 1-indexed".into()));
            }
            Ok(v - 1)
        })
        .collect()
}

fn with_subs(g: &Graph, subs: Option<&str>) -> Result<BellExpression, Error> {
    match subs {
        Some(s) => build_multi_substitution(g, &parse_subs(s)?),
        None => build_graph_inequality(g),
    }
}

struct Resolved {
    description: String,
    expression: BellExpression,
}

impl Source {
    fn resolve(&self) -> Result<Resolved, Error> {
        let k = &self.kind;
        let subs = self.subs.as_deref();
        let builtin = |kind: Builtin, n: usize| -> Result<Resolved, Error> {
            let g = Graph::builtin(kind, n)?;
            let expression = match (kind, subs) {
                (Builtin::Star, None) => build_ghz_inequality(n)?,
                _ => with_subs(&g, subs)?,
            };
            Ok(Resolved {
                description: format!("{kind} {n}"),
                expression,
            })
        };
        if let Some(path) = &k.expr {
            return Ok(Resolved {
                description: format!("expression file {}", path.display()),
                expression: BellExpression::from_json(&fs::read_to_string(path)?)?,
            });
        }
        if let Some(path) = &k.graph {
            let g = Graph::from_json(&fs::read_to_string(path)?)?;
            return Ok(Resolved {
                description: format!("graph file {}", path.display()),
                expression: with_subs(&g, subs)?,
            });
        }
        for (kind, n) in [
            (Builtin::Star, k.star),
            (Builtin::Ring, k.ring),
            (Builtin::Line, k.line),
            (Builtin::Complete, k.complete),
        ] {
            if let Some(n) = n {
                return builtin(kind, n);
            }
        }
        if let Some(l) = k.ring_max {
            return Ok(Resolved {
                description: format!("ring-max L={l}"),
                expression: build_ring_max(l)?,
            });
        }
        if let Some(args) = &k.tilted {
            let n: usize = args[0]
                .parse()
                .map_err(|_| Error::Parse(format!("party count `{}` is not an integer", args[0])))?;
            let theta: f64 = args[1]
                .parse()
                .map_err(|_| Error::Parse(format!("angle `{}` is not a number", args[1])))?;
            return Ok(Resolved {
                description: format!("tilted {n} {theta}"),
                expression: build_tilted_ghz(n, theta)?,
            });
        }
        Err(Error::InvalidArgument("no input given".into()))
    }
}

#[derive(Serialize)]
struct RunReport {
    command: &'static str,
    version: &'static str,
    inputs: Inputs,
    seeds: Value,
    workers: usize,
    wall_time_s: f64,
    pass: bool,
    result: Value,
}

#[derive(Serialize)]
struct Inputs {
    source: String,
    expression: Value,
    sha256: String,
}

fn inputs(r: &Resolved) -> Inputs {
    let canonical = r.expression.to_json();
    Inputs {
        source: r.description.clone(),
        sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
        expression: r.expression.to_json_value(),
    }
}

fn emit(report: &RunReport) {
    println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
}

fn bounds_table(r: &BoundReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| format!("{:>16}", "-"), |x| format!("{x:>16.10}"));
    let delta = |v: Option<f64>| v.map_or_else(|| format!("{:>10}", "-"), |x| format!("{x:>10.2e}"));
    let mut out = format!("{:<20}{:>16}{:>16}{:>10}\n", "quantity", "formula", "numeric", "delta");
    let rows = [
        ("beta_C brute force", r.beta_c_formula, r.beta_c_bruteforce, r.deltas.classical),
        ("beta_Q state", r.beta_q_formula, Some(r.state_value), Some(r.deltas.state)),
        ("beta_Q lanczos", r.beta_q_formula, r.lambda_max, r.deltas.lambda_max),
        ("beta_Q dense", r.beta_q_formula, r.lambda_max_dense, r.deltas.lambda_max_dense),
        ("ratio", r.ratio_formula, r.ratio_numeric, None),
    ];
    for (name, f, n, d) in rows {
        out.push_str(&format!("{name:<20}{}{}{}\n", fmt(Some(f)), fmt(n), delta(d)));
    }
    out
}

fn selftest_table(r: &SelfTestReport) -> String {
    let mut out = format!("fidelity {:.12}  schmidt rank {}  pass {}\n", r.fidelity, r.schmidt_rank, r.pass);
    out.push_str(&format!("{:<8}{:>14}\n", "party", "anticomm"));
    for (i, a) in r.anticommutator_norms.iter().enumerate() {
        out.push_str(&format!("{:<8}{a:>14.3e}\n", i + 1));
    }
    out
}

fn check_guard(enabled: bool, n: usize, limit: usize, what: &'static str) -> Result<(), Error> {
    if enabled && n > limit {
        return Err(Error::Guard { what, n, limit });
    }
    Ok(())
}

/// Returns whether every checked property held.
fn run(cli: Cli, workers: usize, start: Instant) -> Result<bool, Error> {
    let finish = |command, r: &Resolved, seeds: Value, pass: bool, result: Value| RunReport {
        command,
        version: env!("CARGO_PKG_VERSION"),
        inputs: inputs(r),
        seeds,
        workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        pass,
        result,
    };
    match cli.command {
        Command::Build(src) => {
            let r = src.resolve()?;
            println!("{}", serde_json::to_string_pretty(&r.expression.to_json_value()).expect("json"));
            Ok(true)
        }
        Command::Bounds(args) => {
            let r = args.source.resolve()?;
            let e = &r.expression;
            let n = e.n();
            check_guard(args.bruteforce, n, bounds::BRUTE_FORCE_LIMIT, "classical brute force")?;
            check_guard(args.eig, n, bounds::MATRIX_FREE_LIMIT, "matrix-free eigensolver")?;
            if e.family() == Family::Custom {
                if !args.bruteforce {
                    return Err(Error::NoClosedForm("custom (pass --bruteforce)".into()));
                }
                let opt = classical_bound_bruteforce(e)?;
                let result = json!({"family": "custom", "beta_c_bruteforce": opt.value, "strategy": opt.strategy});
                emit(&finish("bounds", &r, json!({}), true, result));
                return Ok(true);
            }
            let opts = BoundOptions {
                bruteforce: args.bruteforce,
                eigen: args.eig,
                dense: args.eig && n <= bounds::DENSE_LIMIT,
                ..BoundOptions::default()
            };
            let report = bound_report(e, &opts)?;
            let pass = report.agrees(args.tol);
            if args.table {
                print!("{}", bounds_table(&report));
            } else {
                let seeds = json!({"lanczos": opts.lanczos.seed});
                emit(&finish("bounds", &r, seeds, pass, serde_json::to_value(&report).expect("json")));
            }
            Ok(pass)
        }
        Command::Certify(args) => {
            let r = args.source.resolve()?;
            let report = certify(&r.expression, args.draws, args.seed)?;
            let pass = report.passes(args.tol);
            let seeds = json!({"base": args.seed});
            emit(&finish("certify", &r, seeds, pass, serde_json::to_value(&report).expect("json")));
            Ok(pass)
        }
        Command::Selftest(args) => {
            let r = args.source.resolve()?;
            let e = &r.expression;
            let mut obs = canonical_observables(e)?;
            if args.perturb != 0.0 {
                obs = rotate_party(&obs, 0, args.perturb)?;
            }
            let report = selftest_report(e, &e.target_state()?, &obs, args.tol)?;
            if args.table {
                print!("{}", selftest_table(&report));
            } else {
                let mut result = serde_json::to_value(&report).expect("json");
                result["perturbation"] = json!(args.perturb);
                emit(&finish("selftest", &r, json!({}), report.pass, result));
            }
            Ok(report.pass)
        }
        Command::Robust(args) => {
            let r = args.source.resolve()?;
            let problem = RobustnessProblem::new(&r.expression)?;
            let cfg = SearchConfig {
                grid_points: args.grid,
                symmetric: args.symmetric,
                validity_samples: args.samples,
                seed: args.seed,
                ..SearchConfig::default()
            };
            let bound = optimal_slope(&problem, &cfg)?;
            let rows = fidelity_curve(&bound, args.points)?;
            if let Some(path) = &args.out {
                fs::write(path, curve_csv(&rows))?;
            }
            let endpoint_ok = rows.last().is_some_and(|&(x, f)| x == 1.0 && (f - 1.0).abs() <= 1e-6);
            let valid = bound.validity.as_ref().is_none_or(|v| v.holds(1e-8));
            let pass = endpoint_ok && valid;
            if !valid {
                eprintln!("validity check failed on fresh angle samples");
            }
            let result = json!({
                "bound": bound,
                "curve": rows.iter().map(|(x, f)| json!({"relative_violation": x, "fidelity_bound": f})).collect::<Vec<_>>(),
                "csv": args.out.as_ref().map(|p| p.display().to_string()),
                "config": cfg,
            });
            emit(&finish("robust", &r, json!({"validity": args.seed}), pass, result));
            Ok(pass)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Guard { .. } => 3,
        Error::NonConvergence { .. } | Error::BracketFailure { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        eprintln!("{}", json!({"error": {"kind": "invalid_argument", "message": "workers must be positive"}}));
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        eprintln!("{}", json!({"error": {"kind": "thread_pool", "message": e.to_string()}}));
        return ExitCode::from(1);
    }
    match run(cli, workers, Instant::now()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("property check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", json!({"error": {"kind": e.kind(), "message": e.to_string()}}));
            ExitCode::from(exit_code(&e))
        }
    }
}
