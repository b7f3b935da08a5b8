//! `dp-core`: private queries over CSV data with a persistent privacy-loss
//! ledger, mechanism verification suites and small demonstrations.
//!
//! Exit codes: 0 success, 1 a verification failed, 2 configuration error,
//! 3 privacy budget exhausted, 4 verification inconclusive.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use dp_core::accountant::{Ledger, LedgerEntry, LedgerFile, Totals};
use dp_core::demos::{differencing_demo, pricing_demo, rr_tradeoff_demo, warner_demo, Demo};
use dp_core::io::{load_dataset, load_schema};
use dp_core::queries::{cell_labels, evaluate, load_query, postprocess_release, release, Query, QueryKind, QueryMechanism};
use dp_core::sampling::RngStream;
use dp_core::types::{Dataset, PrivacyParams};
use dp_core::verifier::suites::{run_suite, suite_verdict, Suite, SuiteOptions};
use dp_core::verifier::{Verdict, MC_MIN_TRIALS};
use dp_core::DpError;

use output::{render, Format};

const DEFAULT_LEDGER: &str = "dp-core-ledger.jsonl";

#[derive(Debug, Parser)]
#[command(name = "dp-core", version, about = "Differentially private queries, verification and demos")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer a query privately and book it in the ledger.
    Release(ReleaseArgs),
    /// Run one of the narrative demonstrations.
    Demo(DemoArgs),
    /// Run a mechanism verification suite; reports are JSON lines.
    Verify(VerifyArgs),
    /// Print composed totals and the remaining budget of a ledger.
    Budget(BudgetArgs),
    /// Print the exact, NON-PRIVATE answer to a query (requires --unsafe).
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Laplace,
    GaussianClassic,
    GaussianAnalytic,
    Exponential,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    query: PathBuf,
}

#[derive(Debug, Args)]
struct LedgerArg {
    /// Ledger file (JSON lines).
    #[arg(long, env = "DP_CORE_LEDGER", default_value = DEFAULT_LEDGER)]
    ledger: PathBuf,
}

#[derive(Debug, Args)]
struct ReleaseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = MechanismArg::Laplace)]
    mechanism: MechanismArg,
    /// Noise seed; drawn from OS entropy when omitted and always echoed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    ledger: LedgerArg,
    /// Epsilon cap recorded when the ledger file is created.
    #[arg(long)]
    budget_epsilon: Option<f64>,
    /// Delta cap recorded when the ledger file is created.
    #[arg(long, requires = "budget_epsilon")]
    budget_delta: Option<f64>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// differencing, pricing, warner or rr_tradeoff.
    name: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Privacy parameter of the pricing demo.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Draws from the pricing mechanism.
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    samples: u64,
    /// Respondents in the warner and rr_tradeoff simulations.
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    respondents: u64,
    /// True fraction with the sensitive property (warner).
    #[arg(long, default_value_t = 0.4)]
    pi: f64,
    /// True mean of the bits (rr_tradeoff).
    #[arg(long, default_value_t = 0.3)]
    mu: f64,
    /// Failure probability of the accuracy bound (rr_tradeoff).
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// laplace, gaussian, exponential, rr or all.
    suite: String,
    /// Monte Carlo trials per check (accepts `1e6`); at least 1e4.
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Swap in a Laplace sampler with half the required scale.
    #[arg(long)]
    broken_noise: bool,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    #[command(flatten)]
    ledger: LedgerArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Acknowledge that the output is not differentially private.
    #[arg(long = "unsafe")]
    unsafe_ok: bool,
}

/// Accepts plain integers and float notation such as `1e6`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(x >= 0.0) || x.fract() != 0.0 || x > u64::MAX as f64 {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(x as u64)
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<DpError> for Failure {
    fn from(e: DpError) -> Self {
        let code = if matches!(e, DpError::BudgetExceeded { .. }) { 3 } else { 2 };
        Self { code, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

/// Prints one result line; a closed stdout (e.g. `| head`) ends the process quietly.
fn emit(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing output: {e}");
        std::process::exit(2);
    }
}

fn verdict_exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Release(a) => cmd_release(a, cli.format),
        Command::Demo(a) => cmd_demo(a, cli.format),
        Command::Verify(a) => cmd_verify(a, cli.format),
        Command::Budget(a) => cmd_budget(a, cli.format),
        Command::Evaluate(a) => cmd_evaluate(a, cli.format),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(data: &DataArgs) -> Result<(Dataset, Query), Failure> {
    let with_path = |p: &Path, e: DpError| Failure::config(format!("{}: {e}", p.display()));
    let schema = Arc::new(load_schema(&data.schema).map_err(|e| with_path(&data.schema, e))?);
    let (dataset, _) = load_dataset(schema.clone(), &data.dataset).map_err(|e| with_path(&data.dataset, e))?;
    let query = load_query(&data.query).map_err(|e| with_path(&data.query, e))?;
    query.validate(&schema)?;
    Ok((dataset, query))
}

fn describe(query: &Query) -> String {
    let mut s = query.kind.to_string();
    if let Some(c) = &query.column {
        s += &format!("({c})");
    }
    if let Some(bins) = &query.bins {
        let dims: Vec<String> = bins
            .dims
            .iter()
            .map(|d| match d {
                dp_core::queries::BinDim::Categorical { column } => column.clone(),
                dp_core::queries::BinDim::Numeric { column, edges } => format!(
                    "{column}:{}",
                    edges.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
                ),
            })
            .collect();
        s += &format!(" by {}", dims.join("; "));
    }
    if let Some(p) = &query.predicate {
        let clauses: Vec<String> = p.clauses.iter().map(ToString::to_string).collect();
        s += &format!(" where {}", clauses.join(" AND "));
    }
    s
}

#[derive(Serialize)]
struct ReleaseOutput {
    query: String,
    epsilon: f64,
    delta: f64,
    mechanism: String,
    value: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    error_bound_95: Option<f64>,
    noise_scale: Option<f64>,
    l1_sensitivity: f64,
    l2_sensitivity: f64,
    release_id: u64,
    seed: u64,
    ledger_totals: Totals,
    #[serde(skip_serializing_if = "Option::is_none")]
    ledger_remaining: Option<Totals>,
}

fn cmd_release(a: ReleaseArgs, format: Format) -> CmdResult {
    let mechanism = match a.mechanism {
        MechanismArg::Laplace => QueryMechanism::Laplace,
        MechanismArg::GaussianClassic => QueryMechanism::GaussianClassic,
        MechanismArg::GaussianAnalytic => QueryMechanism::GaussianAnalytic,
        MechanismArg::Exponential => {
            return Err(Failure::config(
                "the exponential mechanism selects an outcome and cannot answer numeric queries; \
                 use laplace, gaussian-classic or gaussian-analytic",
            ))
        }
    };
    if !(a.epsilon > 0.0) || !a.epsilon.is_finite() {
        return Err(Failure::config(format!("--epsilon must be finite and > 0, got {}", a.epsilon)));
    }
    let params = PrivacyParams::new(a.epsilon, a.delta)?;
    let budget = a
        .budget_epsilon
        .map(|e| PrivacyParams::new(e, a.budget_delta.unwrap_or(0.0)))
        .transpose()?;
    let (dataset, query) = load(&a.data)?;
    let mut ledger = LedgerFile::open_or_create(&a.ledger.ledger, budget)?;
    let seed = a.seed.unwrap_or_else(rand::random);
    let mut rng = RngStream::new(seed, 0);

    let r = release(&query, &dataset, params, mechanism, &mut ledger, &mut rng)?;
    let (value, labels) = if query.kind == QueryKind::Histogram {
        let counts = postprocess_release(&mut ledger, r.release_id, r.noisy())?;
        (json!(counts), Some(cell_labels(&query, dataset.schema())?))
    } else {
        (json!(r.noisy()[0]), None)
    };
    let out = ReleaseOutput {
        query: describe(&query),
        epsilon: r.release.params.epsilon,
        delta: r.release.params.delta,
        mechanism: r.release.mechanism.to_string(),
        value,
        labels,
        error_bound_95: r.release.error_bound.map(|b| b.alpha),
        noise_scale: r.release.noise_scale,
        l1_sensitivity: r.sensitivity.l1,
        l2_sensitivity: r.sensitivity.l2,
        release_id: r.release_id,
        seed,
        ledger_totals: ledger.ledger().totals(),
        ledger_remaining: ledger.ledger().remaining(),
    };
    emit(&render(&out, format));
    Ok(0)
}

fn cmd_demo(a: DemoArgs, format: Format) -> CmdResult {
    let demo: Demo = a.name.parse()?;
    let seed = a.seed.unwrap_or_else(rand::random);
    let (name, result) = match demo {
        Demo::Differencing => ("differencing", json!(differencing_demo())),
        Demo::Pricing => ("pricing", json!(pricing_demo(a.epsilon, a.samples, seed)?)),
        Demo::Warner => ("warner", json!(warner_demo(a.pi, a.respondents, seed)?)),
        Demo::RrTradeoff => {
            let n = usize::try_from(a.respondents).map_err(|_| Failure::config("too many respondents"))?;
            ("rr_tradeoff", json!(rr_tradeoff_demo(n, a.beta, a.mu, seed)?))
        }
    };
    emit(&render(&json!({ "demo": name, "result": result }), format));
    Ok(0)
}

fn cmd_verify(a: VerifyArgs, format: Format) -> CmdResult {
    let suite: Suite = a.suite.parse()?;
    if a.trials < MC_MIN_TRIALS {
        return Err(Failure::config(format!("--trials must be at least {MC_MIN_TRIALS}, got {}", a.trials)));
    }
    if a.broken_noise && !matches!(suite, Suite::Laplace | Suite::All) {
        return Err(Failure::config("--broken-noise only applies to the laplace suite"));
    }
    let seed = a.seed.unwrap_or_else(rand::random);
    let opts = SuiteOptions { trials: a.trials, seed, broken_laplace: a.broken_noise };
    let reports = run_suite(suite, &opts)?;
    for r in &reports {
        emit(&render(r, format));
    }
    let verdict = suite_verdict(&reports);
    let summary = json!({
        "suite": suite.to_string(),
        "seed": seed,
        "trials": a.trials,
        "checks": reports.len(),
        "verdict": verdict,
    });
    emit(&render(&summary, format));
    Ok(verdict_exit_code(verdict))
}

fn cmd_budget(a: BudgetArgs, format: Format) -> CmdResult {
    let path = &a.ledger.ledger;
    if !path.exists() {
        return Err(Failure::config(format!("ledger {} does not exist", path.display())));
    }
    let ledger = Ledger::load(path)?;
    let count = |f: fn(&LedgerEntry) -> bool| ledger.entries().iter().filter(|e| f(e)).count();
    let out = json!({
        "ledger": path.display().to_string(),
        "releases": count(|e| matches!(e, LedgerEntry::Release(_))),
        "post_processing": count(|e| matches!(e, LedgerEntry::PostProcess(_))),
        "totals": ledger.totals(),
        "budget": ledger.budget(),
        "remaining": ledger.remaining(),
    });
    emit(&render(&out, format));
    Ok(0)
}

fn cmd_evaluate(a: EvaluateArgs, format: Format) -> CmdResult {
    if !a.unsafe_ok {
        return Err(Failure::config(
            "evaluate prints exact, non-private answers; pass --unsafe to acknowledge",
        ));
    }
    eprintln!("{}", "*".repeat(72));
    eprintln!("* WARNING: exact query answers below are NOT differentially private.   *");
    eprintln!("* They reveal information about individual records. Do not publish.    *");
    eprintln!("{}", "*".repeat(72));
    let (dataset, query) = load(&a.data)?;
    let exact = evaluate(&query, &dataset)?;
    let mut out = json!({
        "query": describe(&query),
        "rows": dataset.len(),
        "private": false,
    });
    if query.kind == QueryKind::Histogram {
        out["labels"] = json!(cell_labels(&query, dataset.schema())?);
        out["value"] = json!(exact);
    } else {
        out["value"] = json!(exact[0]);
    }
    emit(&render(&out, format));
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_float_notation() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("10000"), Ok(10_000));
        assert_eq!(parse_count("2.5e4"), Ok(25_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert!(parse_count("many").is_err());
    }

    #[test]
    fn verdicts_map_to_distinct_exit_codes() {
        assert_eq!(verdict_exit_code(Verdict::Pass), 0);
        assert_eq!(verdict_exit_code(Verdict::Fail), 1);
        assert_eq!(verdict_exit_code(Verdict::Inconclusive), 4);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
