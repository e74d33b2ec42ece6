//! Command-line front end: certify, falsify, simulate and reproduce.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{ExampleSource, LoadedSystem, RunConfig, SearchSettings, SimulationSettings, WEIGHT_NOTE};

use crate::certify::{certify, check_certificate, CertifyOutcome, SearchConfig};
use crate::lmi::{build_problem, write_sdpa, FeasibilityEngine, HkmEngine, Side, SideContext};
use crate::model::{classify_nonlinearities, PersidskiiSystem, QueryKind, StabilityQuery};
use crate::rnn::{ctrnn_to_persidskii, random_example, ExampleId};
use crate::simulate::{
    falsify, integrate, monitor_annulus, sample_case, write_trajectory_csv, InputFamily, InputSignal, Trajectory,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_CERTIFICATE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

/// Environment variable naming the feasibility engine.
pub const SOLVER_ENV: &str = "ANNULAR_SOLVER";

#[derive(Debug, Parser)]
#[command(name = "annular", version, about = "Annular short-time stability certificates and falsification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the simulation seed (or the first weight seed of `reproduce`).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the number of Monte Carlo samples.
    #[arg(long, global = true, value_name = "N")]
    pub samples: Option<usize>,
    /// Directory for the report and CSV files.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Writes the semidefinite program of the decisive cell in SDPA sparse format.
    #[arg(long = "dump-sdp", global = true, value_name = "PATH")]
    pub dump_sdp: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a certificate (exit 0 certified, 2 none found, 1 error).
    Certify,
    /// Monte Carlo falsification (exit 0 no violation, 3 violation, 1 error).
    Falsify,
    /// Simulate one trajectory and monitor it.
    Simulate,
    /// Re-run a worked network example over a budget of weight seeds.
    Reproduce {
        #[arg(long, value_name = "ID")]
        example: u32,
        #[arg(long, default_value_t = 50, value_name = "N")]
        budget: u64,
    },
}

/// Exit code and JSON report of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub code: i32,
    pub report: Value,
}

impl RunOutput {
    fn error(command: &str, msg: impl Into<String>) -> Self {
        Self { code: EXIT_ERROR, report: json!({ "schema": 1, "command": command, "status": "error", "error": msg.into() }) }
    }
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Removes every `timestamp` field, for comparing report bodies.
pub fn strip_timestamps(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("timestamp");
            m.values_mut().for_each(strip_timestamps);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}

pub fn engine_from_env() -> Result<Box<dyn FeasibilityEngine>, String> {
    match std::env::var(SOLVER_ENV).as_deref() {
        Err(_) | Ok("") | Ok("hkm") => Ok(Box::new(HkmEngine::default())),
        Ok(other) => Err(format!("unknown solver {other:?} in {SOLVER_ENV} (available: hkm)")),
    }
}

fn system_summary(l: &LoadedSystem) -> Value {
    json!({
        "source": l.source,
        "n": l.system.n(),
        "m": l.system.m(),
        "p": l.system.p(),
        "widths": l.system.widths(),
    })
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let p = dir.join(name);
    std::fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display()))
}

fn trajectory_csv(tr: &Trajectory, points: usize) -> Result<Vec<u8>, String> {
    let mut buf = Vec::new();
    write_trajectory_csv(tr, points, &mut buf).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn dump_sdp(
    path: &Path,
    sys: &PersidskiiSystem,
    q: &StabilityQuery,
    search: &SearchConfig,
    out: &CertifyOutcome,
) -> Result<Option<Value>, String> {
    let cell = match out.certificate() {
        Some(c) => Some((Side::Upper, c.upper.beta, c.upper.rho)),
        None => out
            .trace()
            .iter()
            .filter(|e| e.margin.is_some())
            .max_by(|a, b| a.margin.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.margin.unwrap_or(f64::NEG_INFINITY)))
            .map(|e| (e.side, e.beta, e.rho)),
    };
    let Some((side, beta, rho)) = cell else {
        return Ok(None);
    };
    let finsler = classify_nonlinearities(sys).integral_unbounded_blocks();
    let ctx = SideContext::new(sys, *q, side, beta, rho, search.remark1, finsler);
    let (prob, _) = build_problem(&ctx, search.psd_margin);
    let mut buf = Vec::new();
    write_sdpa(&prob, HkmEngine::default().t_max, &mut buf).map_err(|e| e.to_string())?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, buf).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Some(json!({ "side": side, "beta": beta, "rho": rho })))
}

fn prepare(cfg: &RunConfig, base: &Path) -> Result<LoadedSystem, String> {
    let loaded = cfg.load_system(base)?;
    cfg.check(&loaded.system)?;
    Ok(loaded)
}

pub const LOWER_BLOCK_NOTE: &str = "lower-side Q block (ẋ, F_j) uses H_jᵀΛ_j; the published H_jᵀΓᵀ is dimensionally inconsistent";

pub fn run_certify(cfg: &RunConfig, base: &Path, args: &CommonArgs) -> RunOutput {
    let cmd = "certify";
    let loaded = match prepare(cfg, base) {
        Ok(l) => l,
        Err(e) => return RunOutput::error(cmd, e),
    };
    let search = match cfg.search.to_search_config() {
        Ok(s) => s,
        Err(e) => return RunOutput::error(cmd, e),
    };
    let engine = match engine_from_env() {
        Ok(e) => e,
        Err(e) => return RunOutput::error(cmd, e),
    };
    let out = match certify(&loaded.system, &cfg.query, &search, engine.as_ref()) {
        Ok(o) => o,
        Err(e) => return RunOutput::error(cmd, e.to_string()),
    };
    let mut report = json!({
        "schema": 1,
        "command": cmd,
        "kind": cfg.query.kind.name(),
        "query": cfg.query,
        "system": system_summary(&loaded),
        "notes": loaded.notes,
        "solver": engine.name(),
        "trace": out.trace(),
        "timestamp": timestamp(),
    });
    let code = match &out {
        CertifyOutcome::Certified { certificate, .. } => {
            report["status"] = json!("certified");
            if certificate.lower.is_some() {
                let mut notes = loaded.notes.clone();
                notes.push(LOWER_BLOCK_NOTE.into());
                report["notes"] = json!(notes);
            }
            report["check"] = json!(check_certificate(&loaded.system, &cfg.query, certificate));
            report["certificate"] = json!(certificate);
            EXIT_OK
        }
        CertifyOutcome::NoCertificate { reason, .. } => {
            report["status"] = json!("no_certificate");
            report["reason"] = json!(reason);
            EXIT_NO_CERTIFICATE
        }
    };
    if let Some(p) = &args.dump_sdp {
        match dump_sdp(p, &loaded.system, &cfg.query, &search, &out) {
            Ok(cell) => report["sdp_dump"] = json!({ "path": p, "cell": cell }),
            Err(e) => return RunOutput::error(cmd, e),
        }
    }
    RunOutput { code, report }
}

pub fn run_falsify(cfg: &RunConfig, base: &Path, args: &CommonArgs) -> RunOutput {
    let cmd = "falsify";
    let loaded = match prepare(cfg, base) {
        Ok(l) => l,
        Err(e) => return RunOutput::error(cmd, e),
    };
    let fcfg = cfg.falsify_config(loaded.input_channels);
    let rep = match falsify(&loaded.system, &cfg.query, &fcfg) {
        Ok(r) => r,
        Err(e) => return RunOutput::error(cmd, e.to_string()),
    };
    let violated = rep.violations > 0;
    let mut report = json!({
        "schema": 1,
        "command": cmd,
        "status": if violated { "violation" } else { "no_violation" },
        "kind": cfg.query.kind.name(),
        "query": cfg.query,
        "system": system_summary(&loaded),
        "notes": loaded.notes,
        "inputs": fcfg.inputs,
        "integrator": fcfg.integrator,
        "inconclusive_band": fcfg.band,
        "falsification": rep,
        "timestamp": timestamp(),
    });
    if let Some(dir) = &args.out {
        let idx = rep.witness.as_ref().map(|w| w.index).unwrap_or(rep.worst_index);
        let (x0, u) = sample_case(&loaded.system, &cfg.query, &fcfg, idx);
        match integrate(&loaded.system, &x0, &u, cfg.query.horizon, &fcfg.integrator)
            .map_err(|e| e.to_string())
            .and_then(|tr| trajectory_csv(&tr, cfg.simulation.csv_points))
            .and_then(|csv| write_file(dir, "worst_trajectory.csv", &csv))
        {
            Ok(()) => report["worst_trajectory_csv"] = json!({ "file": "worst_trajectory.csv", "sample": idx }),
            Err(e) => return RunOutput::error(cmd, e),
        }
    }
    RunOutput { code: if violated { EXIT_VIOLATION } else { EXIT_OK }, report }
}

pub fn run_simulate(cfg: &RunConfig, base: &Path, args: &CommonArgs) -> RunOutput {
    let cmd = "simulate";
    let loaded = match prepare(cfg, base) {
        Ok(l) => l,
        Err(e) => return RunOutput::error(cmd, e),
    };
    let fcfg = cfg.falsify_config(loaded.input_channels);
    let (sampled_x0, sampled_u) = sample_case(&loaded.system, &cfg.query, &fcfg, 0);
    let x0 = cfg.x0().unwrap_or(sampled_x0);
    let u = cfg.simulation.input.clone().unwrap_or(sampled_u);
    let tr = match integrate(&loaded.system, &x0, &u, cfg.query.horizon, &fcfg.integrator) {
        Ok(t) => t,
        Err(e) => return RunOutput::error(cmd, e.to_string()),
    };
    let verdict = monitor_annulus(&tr, &cfg.query);
    let xt = tr.final_state();
    let mut report = json!({
        "schema": 1,
        "command": cmd,
        "status": "simulated",
        "query": cfg.query,
        "system": system_summary(&loaded),
        "notes": loaded.notes,
        "x0": x0.as_slice(),
        "input": u,
        "final_state": xt.as_slice(),
        "final_state_norm": xt.norm(),
        "final_output_norm": loaded.system.output(xt).norm(),
        "stats": tr.stats,
        "verdict": verdict,
        "timestamp": timestamp(),
    });
    if let Some(dir) = &args.out {
        match trajectory_csv(&tr, cfg.simulation.csv_points).and_then(|c| write_file(dir, "trajectory.csv", &c)) {
            Ok(()) => report["trajectory_csv"] = json!("trajectory.csv"),
            Err(e) => return RunOutput::error(cmd, e),
        }
    }
    RunOutput { code: EXIT_OK, report }
}

/// Query tuple of a worked network example.
pub fn example_query(id: ExampleId) -> StabilityQuery {
    match id {
        ExampleId::One => StabilityQuery::new(QueryKind::Oas, 1.0, (0.06, 0.08), (1.5, 1.6), 16.0),
        ExampleId::Two => StabilityQuery::new(QueryKind::Oas, 1.0, (0.05, 0.1), (2.0, 2.3), 16.0),
    }
}

/// Input used when falsifying certified example seeds.
pub fn example_input(id: ExampleId) -> InputFamily {
    match id {
        ExampleId::One => InputFamily::Fixed { signal: InputSignal::example1() },
        ExampleId::Two => InputFamily::Default,
    }
}

pub fn reproduce_example(id: u32, first_seed: u64, budget: u64, samples: usize, out: Option<&Path>) -> RunOutput {
    let cmd = "reproduce";
    let ex = match ExampleId::parse(id) {
        Ok(e) => e,
        Err(e) => return RunOutput::error(cmd, e),
    };
    if budget == 0 {
        return RunOutput::error(cmd, "seed budget must be at least 1");
    }
    let engine = match engine_from_env() {
        Ok(e) => e,
        Err(e) => return RunOutput::error(cmd, e),
    };
    let q = example_query(ex);
    let search = SearchConfig::default();
    let inputs = example_input(ex);
    let fcfg = crate::simulate::FalsifyConfig { samples: samples.max(1), inputs: inputs.clone(), ..Default::default() };
    let mut seeds = Vec::new();
    let mut certified = Vec::new();
    for seed in first_seed..first_seed + budget {
        let sys = ctrnn_to_persidskii(&random_example(ex, seed)).expect("examples have no bias");
        let outcome = match certify(&sys, &q, &search, engine.as_ref()) {
            Ok(o) => o,
            Err(e) => return RunOutput::error(cmd, e.to_string()),
        };
        let mut entry = json!({ "seed": seed });
        match &outcome {
            CertifyOutcome::Certified { certificate, .. } => {
                let f = match falsify(&sys, &q, &crate::simulate::FalsifyConfig { seed, ..fcfg.clone() }) {
                    Ok(f) => f,
                    Err(e) => return RunOutput::error(cmd, e.to_string()),
                };
                entry["status"] = json!("certified");
                entry["margin"] = json!(certificate.upper.margin.min(certificate.lower.as_ref().map(|l| l.margin).unwrap_or(f64::INFINITY)));
                entry["falsification"] = json!({
                    "violations": f.violations,
                    "inconclusive": f.inconclusive,
                    "terminal_output_norm_min": f.terminal_norm_min,
                    "terminal_output_norm_max": f.terminal_norm_max,
                });
                certified.push(seed);
            }
            CertifyOutcome::NoCertificate { reason, .. } => {
                entry["status"] = json!("no_certificate");
                entry["reason"] = json!(reason);
            }
        }
        seeds.push(entry);
    }
    // Reference run: first seed, first annulus sample, example input.
    let sys = ctrnn_to_persidskii(&random_example(ex, first_seed)).expect("examples have no bias");
    let (x0, u) = sample_case(&sys, &q, &crate::simulate::FalsifyConfig { seed: first_seed, ..fcfg.clone() }, 0);
    let tr = match integrate(&sys, &x0, &u, q.horizon, &fcfg.integrator) {
        Ok(t) => t,
        Err(e) => return RunOutput::error(cmd, e.to_string()),
    };
    let y_end = sys.output(tr.final_state()).norm();
    let mut run = json!({
        "seed": first_seed,
        "x0": x0.as_slice(),
        "input": u,
        "terminal_output_norm": y_end,
        "distance_to_delta2": (q.delta2 - y_end).abs(),
    });
    if let Some(dir) = out {
        let name = format!("example{id}_output_norm.csv");
        match trajectory_csv(&tr, 1000).and_then(|c| write_file(dir, &name, &c)) {
            Ok(()) => run["csv"] = json!(name),
            Err(e) => return RunOutput::error(cmd, e),
        }
    }
    let reproduced = !certified.is_empty();
    let report = json!({
        "schema": 1,
        "command": cmd,
        "example": id,
        "status": if reproduced { "reproduced" } else { "not reproduced in budget" },
        "query": q,
        "weight_distribution": WEIGHT_NOTE,
        "falsification_inputs": inputs,
        "seed_budget": budget,
        "first_seed": first_seed,
        "certified_seeds": certified,
        "seeds": seeds,
        "reference_run": run,
        "timestamp": timestamp(),
    });
    RunOutput { code: if reproduced { EXIT_OK } else { EXIT_NO_CERTIFICATE }, report }
}

fn load_config(args: &CommonArgs, cmd: &str) -> Result<(RunConfig, PathBuf), RunOutput> {
    let Some(path) = &args.config else {
        return Err(RunOutput::error(cmd, "--config PATH is required"));
    };
    let (mut cfg, base) = RunConfig::read(path).map_err(|e| RunOutput::error(cmd, e))?;
    if let Some(s) = args.seed {
        cfg.simulation.seed = s;
    }
    if let Some(n) = args.samples {
        cfg.simulation.samples = n;
    }
    Ok((cfg, base))
}

/// Runs a parsed command line and writes `report.json` under `--out`.
pub fn run(cli: &Cli) -> RunOutput {
    let a = &cli.common;
    let out = match &cli.command {
        Command::Reproduce { example, budget } => {
            reproduce_example(*example, a.seed.unwrap_or(0), *budget, a.samples.unwrap_or(1000), a.out.as_deref())
        }
        cmd => {
            let name = match cmd {
                Command::Certify => "certify",
                Command::Falsify => "falsify",
                _ => "simulate",
            };
            match load_config(a, name) {
                Err(e) => e,
                Ok((cfg, base)) => match cmd {
                    Command::Certify => run_certify(&cfg, &base, a),
                    Command::Falsify => run_falsify(&cfg, &base, a),
                    _ => run_simulate(&cfg, &base, a),
                },
            }
        }
    };
    if let Some(dir) = &a.out {
        let body = serde_json::to_string_pretty(&out.report).expect("reports serialize");
        if let Err(e) = write_file(dir, "report.json", body.as_bytes()) {
            return RunOutput::error("write", e);
        }
    }
    out
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let out = run(&cli);
    let body = serde_json::to_string_pretty(&out.report).expect("reports serialize");
    let _ = writeln!(std::io::stdout().lock(), "{body}");
    if out.code == EXIT_ERROR {
        if let Some(msg) = out.report.get("error").and_then(Value::as_str) {
            eprintln!("error: {msg}");
        }
    }
    out.code
}
