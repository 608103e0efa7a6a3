//! The `qsynth` command line: `train`, `synth`, `bench` and `verify`.

mod config;
mod matrix;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::alphazero::{latest_checkpoint, training_run, AgentConfig, Checkpoint, TrainingSummary};
use crate::circuit::{parse_json, parse_qasm, to_json, to_qasm, verify, DynamicCircuit, Verification};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::gates::{clifford_t, h_t_cnot, ActionTable, Architecture, GateKind};
use crate::linalg::Operator;
use crate::mcts::Evaluator;
use crate::network::Network;
use crate::rng::{derive, stream};
use crate::synth::{simplify, synthesize, synthesize_correction, CorrectionReport, SynthOptions, SynthesisReport};
use crate::targets::{named_target, sample_target};

pub use config::{
    default_checkpoint_dir, ArchitectureSpec, Connectivity, CurriculumSpec, NetworkSpec, Paths, RunConfig,
    CHECKPOINT_DIR_VAR,
};
pub use matrix::{format_matrix, load_matrix, parse_matrix, FILE_UNITARY_TOL};

/// First line of every benchmark CSV.
pub const BENCH_CSV_VERSION: &str = "# qsynth-bench v1";
pub const BENCH_CSV_HEADER: &str = "depth,n,successes,mean_found_depth,mean_seconds";

/// Budget for network-free search when none is given.
pub const DEFAULT_MCTS_BUDGET: usize = 400;

#[derive(Debug, Parser)]
#[command(name = "qsynth", version, about = "Exact quantum circuit synthesis by tree search and self-play")]
pub struct Cli {
    /// Seed for every random choice; runs with equal seeds are identical.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent with self-play, writing a checkpoint per curriculum level.
    Train(TrainArgs),
    /// Synthesize a circuit for one target.
    Synth(SynthArgs),
    /// Success rates on random targets of increasing depth, as CSV.
    Bench(BenchArgs),
    /// Simulate a circuit file against a target.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Continue from the latest checkpoint.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

/// Where the agent comes from.
#[derive(Debug, Clone, Default, Args)]
pub struct AgentArgs {
    /// Checkpoint file; defaults to the latest one in the checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Run configuration supplying the architecture (and checkpoint directory).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Plain MCTS with random rollouts, no network.
    #[arg(long)]
    pub mcts_only: bool,
    /// Data qubits for a network-free run without a config.
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Add an ancilla (star connectivity) for a network-free run.
    #[arg(long)]
    pub ancilla: bool,
    /// Gate set for a network-free run without a config, e.g. `H,S,T,CX`.
    #[arg(long, value_delimiter = ',')]
    pub gates: Option<Vec<GateKind>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TargetArgs {
    /// Named target (CS, CT, CH, CV, iSWAP, Toffoli, CCZ, Fredkin).
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    pub target: Option<String>,
    /// Matrix file with one row per line and entries like `0.5-0.5i`.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

impl TargetArgs {
    pub fn named(name: &str) -> Self {
        Self { target: Some(name.to_string()), matrix: None }
    }

    pub fn load(&self) -> Result<(String, Operator)> {
        match (&self.target, &self.matrix) {
            (Some(name), None) => Ok((name.clone(), named_target(name)?)),
            (None, Some(path)) => {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("target").to_string();
                Ok((stem, load_matrix(path)?))
            }
            _ => Err(Error::InvalidArgument("give exactly one of --target and --matrix".into())),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub agent: AgentArgs,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Temperature of the retries.
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long)]
    pub retries: Option<usize>,
    /// Search iterations per move.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// For ancilla architectures, also synthesize the outcome-1 correction.
    #[arg(long)]
    pub correction: bool,
    /// Gate set of the correction search on the data qubits.
    #[arg(long, value_delimiter = ',', default_value = "X,Z,H,S,T,CX")]
    pub correction_gates: Vec<GateKind>,
    /// Apply the peephole simplifier to the result.
    #[arg(long)]
    pub simplify: bool,
    /// Directory for the circuit and report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub agent: AgentArgs,
    #[arg(long, default_value_t = 1)]
    pub min_depth: usize,
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    /// Targets per depth.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub retries: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temp: f64,
    /// Write `na` instead of wall times so that reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Default for BenchArgs {
    fn default() -> Self {
        Self {
            agent: AgentArgs::default(),
            min_depth: 1,
            max_depth: 4,
            n: 100,
            budget: None,
            retries: 10,
            temp: 1.0,
            no_timing: false,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Circuit file, QASM or JSON.
    #[arg(long)]
    pub circuit: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
}

/// How a command ended when it did not fail outright.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The command ran but the result is negative: synthesis found nothing
    /// or verification failed.
    Unsuccessful,
}

/// A loaded agent: the environment plus an optional guiding network.
pub struct Agent {
    pub env: Environment,
    pub gates: Vec<GateKind>,
    pub network: Option<Network>,
    pub config: Option<AgentConfig>,
}

impl Agent {
    pub fn evaluator(&self) -> Option<&dyn Evaluator> {
        self.network.as_ref().map(|n| n as &dyn Evaluator)
    }

    fn default_budget(&self) -> usize {
        match (&self.network, &self.config) {
            (Some(_), Some(c)) => c.n_mcts_eval,
            _ => DEFAULT_MCTS_BUDGET,
        }
    }
}

fn env_for(gates: &[GateKind], arch: &Architecture) -> Result<Environment> {
    Ok(Environment::new(Arc::new(ActionTable::build(gates, arch)?)))
}

fn checkpoint_for(args: &AgentArgs, config: Option<&RunConfig>) -> Result<Option<PathBuf>> {
    if let Some(p) = &args.checkpoint {
        return Ok(Some(p.clone()));
    }
    let dir = config.map_or_else(default_checkpoint_dir, |c| c.checkpoint_dir());
    latest_checkpoint(&dir)
}

pub fn load_agent(args: &AgentArgs) -> Result<Agent> {
    let config = args.config.as_deref().map(RunConfig::load).transpose()?;
    if args.mcts_only {
        if let Some(cfg) = &config {
            let table = cfg.architecture.table()?;
            return Ok(Agent {
                gates: cfg.architecture.gates.clone(),
                env: Environment::new(Arc::new(table)),
                network: None,
                config: Some(cfg.agent.clone()),
            });
        }
        if let Some(path) = &args.checkpoint {
            let cp = Checkpoint::load(path)?;
            return Ok(Agent { env: env_for(&cp.gates, &cp.arch)?, gates: cp.gates, network: None, config: None });
        }
        let n = args.qubits.unwrap_or(2);
        let (arch, default_gates) = if args.ancilla {
            (Architecture::ancilla_star(n), h_t_cnot())
        } else {
            (Architecture::all_to_all(n), clifford_t())
        };
        arch.validate()?;
        let gates = args.gates.clone().unwrap_or(default_gates);
        return Ok(Agent { env: env_for(&gates, &arch)?, gates, network: None, config: None });
    }
    if args.qubits.is_some() || args.gates.is_some() || args.ancilla {
        return Err(Error::InvalidArgument(
            "--qubits, --ancilla and --gates only apply with --mcts-only; a checkpoint fixes the architecture".into(),
        ));
    }
    let path = checkpoint_for(args, config.as_ref())?.ok_or_else(|| {
        Error::Checkpoint(format!(
            "no checkpoint found; pass --checkpoint, set {CHECKPOINT_DIR_VAR}, or use --mcts-only"
        ))
    })?;
    let cp = Checkpoint::load(&path)?;
    Ok(Agent { env: env_for(&cp.gates, &cp.arch)?, gates: cp.gates, network: Some(cp.best), config: Some(cp.agent) })
}

fn check_dimension(env: &Environment, target: &Operator) -> Result<()> {
    let expected = env.table.arch.data_dim();
    if target.dim() != expected {
        return Err(Error::InvalidArgument(format!(
            "target is {}x{} but the agent acts on {} data qubit(s) ({expected}x{expected})",
            target.dim(),
            target.dim(),
            env.table.arch.n_data
        )));
    }
    Ok(())
}

fn synth_options(
    agent: &Agent,
    budget: Option<usize>,
    retries: Option<usize>,
    temp: Option<f64>,
    seed: u64,
) -> SynthOptions {
    let d = SynthOptions::default();
    SynthOptions {
        budget: budget.unwrap_or_else(|| agent.default_budget()),
        retries: retries.unwrap_or(d.retries),
        retry_temperature: temp.unwrap_or(d.retry_temperature),
        c_puct: agent.config.as_ref().map_or(d.c_puct, |c| c.c_puct),
        seed,
        ..d
    }
}

#[derive(Debug)]
pub struct SynthOutput {
    pub report: SynthesisReport,
    pub correction: Option<CorrectionReport>,
    /// The final (possibly dynamic and simplified) circuit.
    pub circuit: Option<DynamicCircuit>,
    pub verification: Option<Verification>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_synth(args: &SynthArgs, seed: Option<u64>) -> Result<SynthOutput> {
    let agent = load_agent(&args.agent)?;
    let (name, target) = args.target.load()?;
    check_dimension(&agent.env, &target)?;
    let mut opts = synth_options(&agent, args.budget, args.retries, args.temp, seed.unwrap_or(0));
    if let Some(m) = args.max_steps {
        opts.max_steps = m;
    }
    if args.correction && !agent.env.table.arch.has_ancilla {
        return Err(Error::InvalidArgument("--correction needs an ancilla architecture".into()));
    }
    let report = synthesize(&agent.env, agent.evaluator(), &target, &opts)?;
    let mut correction = None;
    let mut circuit = report.circuit.clone().map(|c| {
        let c = if args.simplify { simplify(&c, &agent.gates) } else { c };
        DynamicCircuit::plain(c)
    });
    if args.correction {
        if let Some(dc) = &circuit {
            let n = agent.env.table.arch.n_data;
            let data_env = env_for(&args.correction_gates, &Architecture::all_to_all(n))?;
            let corr_opts = SynthOptions { seed: derive(opts.seed, &[1]), ..opts.clone() };
            let rep = synthesize_correction(&dc.main, &target, &data_env, None, &corr_opts)?;
            circuit = rep.dynamic.clone().map(|mut d| {
                if args.simplify {
                    d.correction = d.correction.map(|c| simplify(&c, &args.correction_gates));
                }
                d
            });
            correction = Some(rep);
        }
    }
    let verification = circuit.as_ref().map(|c| verify(c, &target)).transpose()?;

    let mut files = Vec::new();
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        if let Some(c) = &circuit {
            let qasm = dir.join(format!("{name}.qasm"));
            fs::write(&qasm, to_qasm(c))?;
            let js = dir.join(format!("{name}.json"));
            fs::write(&js, to_json(c))?;
            files.extend([qasm, js]);
        }
        let rep = dir.join(format!("{name}.report.json"));
        let doc = json!({
            "target": name,
            "architecture": agent.env.table.arch,
            "gates": agent.gates,
            "guided": agent.network.is_some(),
            "budget": opts.budget,
            "seed": opts.seed,
            "synthesis": report,
            "correction": correction.as_ref().map(|c| json!({
                "needed": c.needed(),
                "synthesis": c.synthesis,
                "composition_error": c.composition_error,
            })),
            "final": circuit.as_ref().map(|c| json!({
                "gates": c.main.len() + c.correction.as_ref().map_or(0, |k| k.len()),
                "t_count": c.main.t_count() + c.correction.as_ref().map_or(0, |k| k.t_count()),
            })),
            "verification": verification.as_ref().map(|v| json!({
                "fidelity": v.fidelity,
                "weight0": v.weight0,
                "weight1": v.weight1,
                "corrected_fidelity": v.corrected_fidelity,
                "pass": v.pass,
            })),
        });
        fs::write(&rep, serde_json::to_string_pretty(&doc).expect("report serialization"))?;
        files.push(rep);
    }
    Ok(SynthOutput { report, correction, circuit, verification, files })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Verification> {
    let text = fs::read_to_string(&args.circuit)?;
    let is_json = args.circuit.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let circuit = if is_json { parse_json(&text)? } else { parse_qasm(&text)? };
    let (_, target) = args.target.load()?;
    verify(&circuit, &target)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub depth: usize,
    pub n: usize,
    pub successes: usize,
    pub mean_found_depth: Option<f64>,
    pub mean_seconds: f64,
    /// Whether each target was solved, by target index.
    pub solved: Vec<bool>,
}

/// Runs the benchmark protocol (one greedy attempt, then tempered retries,
/// success meaning a circuit of at most the sampled depth) for each depth.
pub fn bench_rows(agent: &Agent, args: &BenchArgs, seed: u64) -> Result<Vec<BenchRow>> {
    if args.min_depth == 0 || args.min_depth > args.max_depth {
        return Err(Error::InvalidArgument("need 1 <= min-depth <= max-depth".into()));
    }
    if args.n == 0 {
        return Err(Error::InvalidArgument("--n must be positive".into()));
    }
    let net = agent.network.as_ref();
    let mut rows = Vec::new();
    for depth in args.min_depth..=args.max_depth {
        let mut rng = stream(seed, &[depth as u64]);
        let targets =
            (0..args.n).map(|_| sample_target(depth, &agent.env.table, &mut rng)).collect::<Result<Vec<_>>>()?;
        let results: Vec<(Option<usize>, f64)> = targets
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                let mut opts = synth_options(
                    agent,
                    args.budget,
                    Some(args.retries),
                    Some(args.temp),
                    derive(seed, &[depth as u64, i as u64]),
                );
                opts.max_steps = depth;
                let start = Instant::now();
                let r = synthesize(&agent.env, net.map(|n| n as &dyn Evaluator), &t.unitary, &opts)?;
                let found = (r.success && r.depth <= depth).then_some(r.depth);
                Ok((found, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;
        let found: Vec<usize> = results.iter().filter_map(|r| r.0).collect();
        rows.push(BenchRow {
            depth,
            n: args.n,
            successes: found.len(),
            mean_found_depth: (!found.is_empty()).then(|| found.iter().sum::<usize>() as f64 / found.len() as f64),
            mean_seconds: results.iter().map(|r| r.1).sum::<f64>() / args.n as f64,
            solved: results.iter().map(|r| r.0.is_some()).collect(),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow], timing: bool) -> String {
    let mut out = format!("{BENCH_CSV_VERSION}\n{BENCH_CSV_HEADER}\n");
    for r in rows {
        let depth = r.mean_found_depth.map_or_else(|| "na".to_string(), |d| format!("{d:.4}"));
        let secs = if timing { format!("{:.6}", r.mean_seconds) } else { "na".to_string() };
        let _ = writeln!(out, "{},{},{},{depth},{secs}", r.depth, r.n, r.successes);
    }
    out
}

pub fn cmd_bench(args: &BenchArgs, seed: Option<u64>) -> Result<String> {
    let agent = load_agent(&args.agent)?;
    let rows = bench_rows(&agent, args, seed.unwrap_or(0))?;
    let csv = bench_csv(&rows, !args.no_timing);
    if let Some(path) = &args.out {
        fs::write(path, &csv)?;
    }
    Ok(csv)
}

fn has_checkpoints(dir: &Path) -> Result<bool> {
    Ok(latest_checkpoint(dir)?.is_some())
}

pub fn cmd_train(args: &TrainArgs, seed: Option<u64>) -> Result<TrainingSummary> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(dir) = &args.checkpoint_dir {
        config.paths.checkpoint_dir = Some(dir.clone());
    }
    let dir = config.checkpoint_dir();
    if !args.resume && has_checkpoints(&dir)? {
        return Err(Error::Checkpoint(format!(
            "{} already holds checkpoints; pass --resume to continue or choose another directory",
            dir.display()
        )));
    }
    training_run(&config.training_setup(args.resume)?)
}

fn describe_verification(out: &mut dyn Write, v: &Verification) -> std::io::Result<()> {
    if v.weight1 > 0.0 || v.corrected_fidelity.is_some() {
        writeln!(out, "outcome 0: probability {:.6}, fidelity {:.12}", v.weight0, v.fidelity)?;
        match v.corrected_fidelity {
            Some(f) => writeln!(out, "outcome 1: probability {:.6}, corrected fidelity {f:.12}", v.weight1)?,
            None => writeln!(out, "outcome 1: probability {:.6}, no correction", v.weight1)?,
        }
    } else {
        writeln!(out, "fidelity {:.12}", v.fidelity)?;
    }
    writeln!(out, "{}", if v.pass { "pass" } else { "fail" })
}

/// Runs one parsed command line, printing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome> {
    match &cli.command {
        Command::Train(a) => {
            let s = cmd_train(a, cli.seed)?;
            for m in &s.epochs {
                writeln!(
                    out,
                    "level {} epoch {} mu {}: {}/{} won, loss {:.4}",
                    m.level, m.epoch, m.mu, m.wins, m.games, m.mean_loss
                )?;
            }
            for p in &s.checkpoints {
                writeln!(out, "wrote {}", p.display())?;
            }
            Ok(Outcome::Success)
        }
        Command::Synth(a) => {
            let r = cmd_synth(a, cli.seed)?;
            let rep = &r.report;
            if !rep.success {
                writeln!(out, "no circuit found after {} attempt(s)", rep.attempts)?;
                return Ok(Outcome::Unsuccessful);
            }
            let c = r.circuit.as_ref().expect("successful synthesis has a circuit");
            write!(out, "{}", to_qasm(c))?;
            writeln!(
                out,
                "// {} gate(s), T-count {}, attempt {}, {:.3}s",
                c.main.len(),
                c.main.t_count(),
                rep.attempts,
                rep.wall_time
            )?;
            if let Some(corr) = &r.correction {
                if !corr.needed() {
                    writeln!(out, "// outcome 1 never occurs; no correction needed")?;
                } else if corr.dynamic.is_none() {
                    writeln!(out, "// correction synthesis failed")?;
                }
            }
            for f in &r.files {
                writeln!(out, "// wrote {}", f.display())?;
            }
            if let Some(v) = &r.verification {
                describe_verification(out, v)?;
                if !v.pass {
                    return Ok(Outcome::Unsuccessful);
                }
            }
            if r.correction.as_ref().is_some_and(|c| c.needed() && c.dynamic.is_none()) {
                return Ok(Outcome::Unsuccessful);
            }
            Ok(Outcome::Success)
        }
        Command::Bench(a) => {
            let csv = cmd_bench(a, cli.seed)?;
            if a.out.is_none() {
                write!(out, "{csv}")?;
            }
            Ok(Outcome::Success)
        }
        Command::Verify(a) => {
            let v = cmd_verify(a)?;
            describe_verification(out, &v)?;
            Ok(if v.pass { Outcome::Success } else { Outcome::Unsuccessful })
        }
    }
}
