//! Command-line front end. Every command returns its output as text so the
//! binary and the tests share one code path.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::analysis::optimal_computation_load;
use crate::erasure::{Field, MdsCode};
use crate::matmul::{run_job, Clock, MatMulJob, Matrix};
use crate::numeric::{fmt_fraction, fmt_sig, parse_rational, rational_to_f64, Rational, DEFAULT_SEED};
use crate::placement::JobSpec;
use crate::shuffle::{load_formula, run_pipeline};
use crate::straggler::{self, optimal_mds_k, scheme_latency_mc, Scheme, ShiftedExponential};
use crate::unified::{
    default_tasks, evaluate_point, tradeoff_sweep, DemandModel, SweepConfig, UnifiedPlan, DEFAULT_NETWORK_BPS,
    TRADEOFF_CSV_HEADER,
};

#[derive(Parser, Debug)]
#[command(name = "codedfog", version, about = "Coded distributed computing experiments")]
pub struct Cli {
    /// Seed (decimal or 0x-hex); defaults to 0xC0DEDF06.
    #[arg(long, global = true, env = "CODEDFOG_SEED", value_parser = parse_seed)]
    pub seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Coded and uncoded shuffle load against r.
    MbcLoad(MbcLoadArgs),
    /// Runs placement, coded shuffle and decode end to end.
    MbcVerify(MbcVerifyArgs),
    /// Uncoded, repetition and MDS latency: closed form and Monte Carlo.
    MlcSim(MlcSimArgs),
    /// Coded matrix multiplication with injected stragglers.
    Matmul(MatmulArgs),
    /// Map latency against shuffle load for the unified scheme.
    Unified(UnifiedArgs),
    /// Best computation load for given Map and shuffle times.
    Rstar(RstarArgs),
}

#[derive(Args, Debug)]
pub struct MbcLoadArgs {
    #[arg(long)]
    pub nodes: usize,
    /// `3`, `1-10` or `1,2,5`; defaults to 1-K.
    #[arg(long)]
    pub load: Option<String>,
}

#[derive(Args, Debug)]
pub struct MbcVerifyArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub load: usize,
    #[arg(long)]
    pub files: usize,
    #[arg(long)]
    pub functions: usize,
    #[arg(long, default_value_t = 8)]
    pub value_bits: usize,
}

#[derive(Args, Debug)]
pub struct MlcSimArgs {
    #[arg(long)]
    pub nodes: usize,
    /// Only this k; by default every valid k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CodeChoice {
    /// Single parity when n = k + 1, identity when n = k, random otherwise.
    Auto,
    Parity,
    Random,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClockChoice {
    Simulated,
    Wall,
}

#[derive(Args, Debug)]
pub struct MatmulArgs {
    /// Workers n.
    #[arg(long, default_value_t = 3)]
    pub nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Rows of A.
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    /// Columns of A (rows of X).
    #[arg(long, default_value_t = 3)]
    pub cols: usize,
    /// Columns of X.
    #[arg(long, default_value_t = 2)]
    pub width: usize,
    /// Slow workers, 1-based (e.g. `2` or `1,3`).
    #[arg(long, default_value = "")]
    pub stragglers: String,
    /// Workers that never return, 1-based.
    #[arg(long, default_value = "")]
    pub failures: String,
    #[arg(long, default_value_t = 10.0)]
    pub straggler_delay: f64,
    #[arg(long, value_enum, default_value_t = ClockChoice::Simulated)]
    pub clock: ClockChoice,
    /// Wall seconds per model time unit.
    #[arg(long, default_value_t = 0.01)]
    pub time_scale: f64,
    #[arg(long, value_enum, default_value_t = CodeChoice::Auto)]
    pub code: CodeChoice,
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Normalize {
    /// Per intermediate value: bits over Q·m values.
    Value,
    /// Per matrix row: Q times the per-value figure.
    Row,
}

#[derive(Args, Debug)]
pub struct UnifiedArgs {
    #[arg(long, default_value_t = 18)]
    pub nodes: usize,
    #[arg(long, default_value = "1/3", value_parser = parse_mu)]
    pub mu: Rational,
    /// Source tasks m; defaults to the smallest m that admits every q.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Reduce functions Q; defaults to K.
    #[arg(long)]
    pub functions: Option<usize>,
    /// Evaluate a single q and describe its plan.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    #[arg(long, default_value_t = DEFAULT_NETWORK_BPS)]
    pub net_bps: f64,
    /// Bits per matrix entry.
    #[arg(long, default_value_t = 16)]
    pub value_bits: usize,
    /// Rows of the data matrix.
    #[arg(long, default_value_t = 1e6)]
    pub rows: f64,
    /// Time units of the whole job on one node; defaults to Q.
    #[arg(long)]
    pub job_work: Option<f64>,
    #[arg(long, default_value = "finishers-reduce")]
    pub demand: DemandModel,
    /// Monte Carlo trials per point for the Map latency cross-check.
    #[arg(long, default_value_t = 0)]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = Normalize::Value)]
    pub normalize: Normalize,
    /// Also write the JSON summary here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RstarArgs {
    #[arg(long)]
    pub t_task: f64,
    #[arg(long)]
    pub t_data: f64,
    #[arg(long)]
    pub nodes: usize,
}

fn parse_seed(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| format!("bad seed {text:?}: {e}"))
}

fn parse_mu(text: &str) -> Result<Rational, String> {
    parse_rational(text).ok_or_else(|| format!("bad fraction {text:?}"))
}

/// `"3"`, `"1-10"`, `"1..=10"` or `"1,2,5"`.
pub fn parse_range(text: &str) -> Result<Vec<usize>> {
    let t = text.trim();
    let bounds = t.split_once("..=").or_else(|| t.split_once('-'));
    if let Some((a, b)) = bounds {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty range {text:?}");
        }
        return Ok((a..=b).collect());
    }
    t.split(',').map(|p| p.trim().parse::<usize>().with_context(|| format!("bad value in {text:?}"))).collect()
}

/// 1-based worker list to 0-based indices.
fn parse_workers(text: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    parse_range(text)?
        .into_iter()
        .map(|i| if i == 0 { bail!("workers are numbered from 1") } else { Ok(i - 1) })
        .collect()
}

/// Result of one command.
#[derive(Debug)]
pub struct Output {
    pub body: String,
    /// Internal checks passed.
    pub ok: bool,
    /// One-line human summary for stderr.
    pub summary: String,
    /// Additional files to write.
    pub files: Vec<(PathBuf, String)>,
}

struct Record {
    command: &'static str,
    config: Vec<(&'static str, Value)>,
}

impl Record {
    fn new(command: &'static str, seed: u64) -> Self {
        Self { command, config: vec![("seed", json!(seed))] }
    }

    fn set(&mut self, key: &'static str, value: impl Into<Value>) {
        self.config.push((key, value.into()));
    }

    fn preamble(&self) -> String {
        let mut out = format!("# codedfog {}\n# command={}\n", env!("CARGO_PKG_VERSION"), self.command);
        for (k, v) in &self.config {
            let text = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.as_f64().filter(|_| n.is_f64()).map_or_else(|| n.to_string(), fmt_sig),
                other => other.to_string(),
            };
            out.push_str(&format!("# {k}={text}\n"));
        }
        out
    }

    fn json(&self, data: Value) -> String {
        let config: Map<String, Value> = self.config.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let mut doc = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": config,
        });
        if let Value::Object(extra) = data {
            for (k, v) in extra {
                doc[k] = v;
            }
        }
        serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
    }

    fn csv(&self, header: &str, rows: &[String]) -> String {
        let mut out = self.preamble();
        out.push_str(header);
        out.push('\n');
        for r in rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}

pub fn execute(cli: &Cli) -> Result<Output> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::MbcLoad(a) => mbc_load(a, seed, cli.format),
        Command::MbcVerify(a) => mbc_verify(a, seed, cli.format),
        Command::MlcSim(a) => mlc_sim(a, seed, cli.format),
        Command::Matmul(a) => matmul(a, seed, cli.format),
        Command::Unified(a) => unified(a, seed, cli.format),
        Command::Rstar(a) => rstar(a, seed, cli.format),
    }
}

fn mbc_load(args: &MbcLoadArgs, seed: u64, format: Format) -> Result<Output> {
    let loads = match &args.load {
        Some(text) => parse_range(text)?,
        None => (1..=args.nodes).collect(),
    };
    let (base, _) = load_formula(args.nodes, 1)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &r in &loads {
        let (uncoded, coded) = load_formula(args.nodes, r)?;
        let reduction = if base == Rational::from_integer(0) {
            0.0
        } else {
            100.0 * (1.0 - rational_to_f64(&(coded / base)))
        };
        rows.push(format!(
            "{r},{},{},{},{},{}",
            fmt_sig(rational_to_f64(&uncoded)),
            fmt_sig(rational_to_f64(&coded)),
            fmt_fraction(&uncoded),
            fmt_fraction(&coded),
            fmt_sig(reduction)
        ));
        points.push(json!({
            "r": r,
            "uncoded": fmt_fraction(&uncoded),
            "coded": fmt_fraction(&coded),
            "uncoded_decimal": rational_to_f64(&uncoded),
            "coded_decimal": rational_to_f64(&coded),
            "reduction_vs_r1_uncoded_pct": reduction,
        }));
    }
    let mut rec = Record::new("mbc-load", seed);
    rec.set("nodes", args.nodes);
    rec.set("load", loads.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","));
    let body = match format {
        Format::Csv => rec.csv("r,uncoded,coded,uncoded_exact,coded_exact,reduction_vs_r1_uncoded_pct", &rows),
        Format::Json => rec.json(json!({ "points": points })),
    };
    Ok(Output { body, ok: true, summary: format!("{} load points for K={}", loads.len(), args.nodes), files: vec![] })
}

fn mbc_verify(args: &MbcVerifyArgs, seed: u64, format: Format) -> Result<Output> {
    let spec = JobSpec::new(args.nodes, args.files, args.functions, args.load, args.value_bits);
    let acc = run_pipeline(&spec, seed)?;
    let ok = acc.reconstruction_ok() && acc.loads_match_formula();
    let mut rec = Record::new("mbc-verify", seed);
    rec.set("nodes", args.nodes);
    rec.set("load", args.load);
    rec.set("files", args.files);
    rec.set("functions", args.functions);
    rec.set("value_bits", args.value_bits);
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        args.nodes,
        args.load,
        args.files,
        args.functions,
        args.value_bits,
        acc.coded.message_count,
        acc.coded.total_bits,
        fmt_fraction(&acc.coded.normalized_load),
        fmt_fraction(&acc.formula_coded),
        ok
    );
    let body = match format {
        Format::Csv => rec.csv("K,r,N,Q,T_bits,messages,total_bits,normalized_load,formula_load,match", &[row]),
        Format::Json => rec.json(json!({
            "coded": {
                "messages": acc.coded.message_count,
                "total_bits": acc.coded.total_bits,
                "value_units": fmt_fraction(&acc.coded.value_units()),
                "normalized_load": fmt_fraction(&acc.coded.normalized_load),
                "normalized_load_decimal": rational_to_f64(&acc.coded.normalized_load),
            },
            "uncoded": {
                "messages": acc.uncoded.message_count,
                "total_bits": acc.uncoded.total_bits,
                "value_units": fmt_fraction(&acc.uncoded.value_units()),
                "normalized_load": fmt_fraction(&acc.uncoded.normalized_load),
                "normalized_load_decimal": rational_to_f64(&acc.uncoded.normalized_load),
            },
            "formula_coded": fmt_fraction(&acc.formula_coded),
            "formula_uncoded": fmt_fraction(&acc.formula_uncoded),
            "map_evaluations": acc.map_evaluations,
            "encode_xor_terms": acc.encode_xor_terms,
            "decoded_values": acc.decoded_values,
            "nodes_verified": acc.nodes_verified,
            "reconstruction_ok": acc.reconstruction_ok(),
            "match": ok,
        })),
    };
    let summary = format!(
        "{}: coded {} value units, uncoded {} value units, {}/{} nodes bit-exact",
        if ok { "PASS" } else { "FAIL" },
        fmt_fraction(&acc.coded.value_units()),
        fmt_fraction(&acc.uncoded.value_units()),
        acc.nodes_verified,
        args.nodes
    );
    Ok(Output { body, ok, summary, files: vec![] })
}

fn mlc_sim(args: &MlcSimArgs, seed: u64, format: Format) -> Result<Output> {
    let n = args.nodes;
    if n == 0 {
        bail!("--nodes must be >= 1");
    }
    let model = ShiftedExponential::new(args.shift, args.rate)?;
    let ks: Vec<usize> = match args.k {
        Some(k) if k == 0 || k > n => bail!("--k must lie in 1..={n}"),
        Some(k) => vec![k],
        None => (1..=n).collect(),
    };
    let mut schemes = vec![Scheme::Uncoded { n }];
    schemes.extend(ks.iter().filter(|&&k| n % k == 0).map(|&k| Scheme::Repetition { n, k }));
    schemes.extend(ks.iter().map(|&k| Scheme::Mds { n, k }));
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for s in &schemes {
        let est = scheme_latency_mc(s, &model, args.trials, seed)?;
        rows.push(straggler::csv_row(s, &model, &est, seed));
        points.push(json!({
            "scheme": s.name(), "n": s.n(), "k": s.k(),
            "analytic_mean": est.analytic_mean, "mc_mean": est.mc_mean,
            "mc_stderr": est.mc_stderr, "trials": est.trials,
        }));
    }
    let (best_k, speedup) = optimal_mds_k(n, &model)?;
    let mut rec = Record::new("mlc-sim", seed);
    rec.set("nodes", n);
    rec.set("shift", args.shift);
    rec.set("rate", args.rate);
    rec.set("trials", args.trials);
    rec.set("optimal_mds_k", best_k);
    rec.set("optimal_mds_speedup", speedup);
    let body = match format {
        Format::Csv => rec.csv(straggler::CSV_HEADER, &rows),
        Format::Json => rec.json(json!({ "rows": points, "optimal_mds_k": best_k, "optimal_mds_speedup": speedup })),
    };
    let summary = format!("{} schemes; best MDS k={best_k}, speedup {} over uncoded", schemes.len(), fmt_sig(speedup));
    Ok(Output { body, ok: true, summary, files: vec![] })
}

fn matmul(args: &MatmulArgs, seed: u64, format: Format) -> Result<Output> {
    let (n, k) = (args.nodes, args.k);
    let code = match args.code {
        CodeChoice::Identity => {
            if n != k {
                bail!("identity code needs n = k");
            }
            MdsCode::identity(k, Field::Real)
        }
        CodeChoice::Parity => {
            if n != k + 1 {
                bail!("single-parity code needs n = k + 1");
            }
            MdsCode::single_parity(k)
        }
        CodeChoice::Random => MdsCode::new(n, k, Field::Real, seed)?,
        CodeChoice::Auto if n == k => MdsCode::identity(k, Field::Real),
        CodeChoice::Auto if n == k + 1 => MdsCode::single_parity(k),
        CodeChoice::Auto => MdsCode::new(n, k, Field::Real, seed)?,
    };
    let model = ShiftedExponential::new(args.shift, args.rate)?;
    let a = Matrix::random(args.rows, args.cols, seed);
    let x = Matrix::random(args.cols, args.width, seed ^ 1);
    let mut job = MatMulJob::new(a, x, code, model, seed);
    job.stragglers = parse_workers(&args.stragglers)?;
    job.failures = parse_workers(&args.failures)?;
    job.straggler_delay = args.straggler_delay;
    job.clock = match args.clock {
        ClockChoice::Simulated => Clock::Simulated,
        ClockChoice::Wall => Clock::Wall { seconds_per_unit: args.time_scale },
    };
    let report = run_job(&job)?;
    let ok = report.relative_error <= 1e-8 && report.audit();
    let mut rec = Record::new("matmul", seed);
    rec.set("nodes", n);
    rec.set("k", k);
    rec.set("rows", args.rows);
    rec.set("cols", args.cols);
    rec.set("width", args.width);
    rec.set("stragglers", args.stragglers.clone());
    rec.set("failures", args.failures.clone());
    rec.set("straggler_delay", args.straggler_delay);
    rec.set("clock", job.clock.name());
    rec.set("shift", args.shift);
    rec.set("rate", args.rate);
    let body = match format {
        Format::Json => rec.json(report.to_json()),
        Format::Csv => {
            rec.set("makespan", report.makespan);
            rec.set("relative_error", report.relative_error);
            let rows: Vec<String> = report
                .tasks
                .iter()
                .map(|t| {
                    format!(
                        "{},{},{},{}",
                        t.coded_index + 1,
                        t.status.name(),
                        fmt_sig(t.delay),
                        fmt_sig(t.wall_time)
                    )
                })
                .collect();
            rec.csv("worker,status,delay,wall_time_s", &rows)
        }
    };
    let mut summary = format!(
        "{}: makespan {}, relative error {:.3e}, decoded from workers {:?}",
        if ok { "PASS" } else { "FAIL" },
        fmt_sig(report.makespan),
        report.relative_error,
        report.decode_inputs.iter().map(|i| i + 1).collect::<Vec<_>>()
    );
    if let Some(w) = &report.warning {
        summary.push_str(&format!("; warning: {w}"));
    }
    Ok(Output { body, ok, summary, files: vec![] })
}

fn unified(args: &UnifiedArgs, seed: u64, format: Format) -> Result<Output> {
    let tasks = match args.tasks {
        Some(m) => m,
        None => default_tasks(args.nodes, args.mu).context("no default m for these K and mu; pass --tasks")?,
    };
    let functions = args.functions.unwrap_or(args.nodes);
    let cfg = SweepConfig {
        nodes: args.nodes,
        mu: args.mu,
        tasks,
        functions,
        model: ShiftedExponential::new(args.shift, args.rate)?,
        network_bps: args.net_bps,
        bits_per_value: SweepConfig::bits_per_value_for(args.rows, args.value_bits as f64, tasks),
        job_work: args.job_work.unwrap_or(functions as f64),
        demand: args.demand,
        trials: args.trials,
        seed,
    };
    let scale = match args.normalize {
        Normalize::Value => 1,
        Normalize::Row => functions,
    };
    let mut rec = Record::new("unified", seed);
    rec.set("nodes", cfg.nodes);
    rec.set("mu", fmt_fraction(&cfg.mu));
    rec.set("tasks", cfg.tasks);
    rec.set("functions", cfg.functions);
    rec.set("shift", cfg.model.shift);
    rec.set("rate", cfg.model.rate);
    rec.set("net_bps", cfg.network_bps);
    rec.set("value_bits", args.value_bits);
    rec.set("rows", args.rows);
    rec.set("bits_per_value", cfg.bits_per_value);
    rec.set("job_work", cfg.job_work);
    rec.set("demand", cfg.demand.name());
    rec.set("trials", cfg.trials);
    rec.set("normalize", if scale == 1 { "value" } else { "row" });

    if let Some(q) = args.q {
        let plan = UnifiedPlan::build(&cfg.spec(q))?;
        let point = evaluate_point(&cfg, q)?;
        rec.set("q", q);
        let load = point.normalized_load * Rational::from_integer(scale as i128);
        let row = format!(
            "{q},{},{},{},{},true,{}",
            fmt_sig(point.map_latency),
            fmt_sig(rational_to_f64(&load)),
            fmt_sig(point.shuffle_time),
            fmt_sig(point.total_time),
            fmt_fraction(&load)
        );
        let plan_json = json!({
            "coded_tasks": plan.coded_tasks,
            "source_tasks": plan.spec.tasks,
            "code": format!("({},{})", plan.coded_tasks, plan.spec.tasks),
            "hosts_per_task": plan.spec.hosts_per_task(),
            "host_sets": plan.host_sets.len(),
            "tasks_per_host_set": plan.tasks_per_host_set,
            "tasks_per_node": plan.tasks_on_count(1),
            "coverage_min": plan.coverage_min,
            "coverage_exhaustive": plan.coverage_exhaustive,
        });
        rec.set("coded_tasks", plan.coded_tasks);
        rec.set("tasks_per_node", plan.tasks_on_count(1));
        rec.set("coverage_min", plan.coverage_min);
        let body = match format {
            Format::Csv => rec.csv(TRADEOFF_CSV_HEADER, &[row]),
            Format::Json => rec.json(json!({
                "plan": plan_json,
                "point": {
                    "q": q,
                    "map_latency_s": point.map_latency,
                    "normalized_load": fmt_fraction(&load),
                    "shuffle_time_s": point.shuffle_time,
                    "total_time_s": point.total_time,
                },
            })),
        };
        let summary = format!(
            "q={q}: ({},{}) code, {} tasks per node, coverage min {}",
            plan.coded_tasks,
            plan.spec.tasks,
            plan.tasks_on_count(1),
            plan.coverage_min
        );
        return Ok(Output { body, ok: true, summary, files: vec![] });
    }

    let sweep = tradeoff_sweep(&cfg)?;
    let increasing = sweep.points.windows(2).all(|w| w[0].map_latency < w[1].map_latency);
    let summary_json = rec.json(sweep.summary_json());
    let body = match format {
        Format::Csv => rec.csv(TRADEOFF_CSV_HEADER, &sweep.csv_rows(scale)),
        Format::Json => summary_json.clone(),
    };
    let files = args.summary.iter().map(|p| (p.clone(), summary_json.clone())).collect();
    let (lo, hi) = (sweep.first().q, sweep.last().q);
    let summary = format!(
        "q*={} total {} s; gain {}% over q={lo}, {}% over q={hi}",
        sweep.optimal_q,
        fmt_sig(sweep.optimal().total_time),
        fmt_sig(sweep.gain_over(lo).unwrap_or(0.0)),
        fmt_sig(sweep.gain_over(hi).unwrap_or(0.0))
    );
    Ok(Output { body, ok: increasing, summary, files })
}

fn rstar(args: &RstarArgs, seed: u64, format: Format) -> Result<Output> {
    let c = optimal_computation_load(args.t_task, args.t_data, args.nodes)?;
    let mut rec = Record::new("rstar", seed);
    rec.set("t_task", args.t_task);
    rec.set("t_data", args.t_data);
    rec.set("nodes", args.nodes);
    let row = format!(
        "{},{},{},{},{},{},{},{}",
        fmt_sig(args.t_task),
        fmt_sig(args.t_data),
        args.nodes,
        fmt_sig(c.continuous),
        c.r_star,
        fmt_sig(c.total_coded),
        fmt_sig(c.total_uncoded),
        fmt_sig(c.speedup())
    );
    let body = match format {
        Format::Csv => rec.csv("t_task,t_data,K,r_continuous,r_star,total_coded_s,total_uncoded_s,speedup", &[row]),
        Format::Json => rec.json(c.to_json()),
    };
    let summary = format!("r*={} (continuous {}), speedup {}", c.r_star, fmt_sig(c.continuous), fmt_sig(c.speedup()));
    Ok(Output { body, ok: true, summary, files: vec![] })
}
