//! Subcommand definitions and their implementations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use graphwright::conformance::check_against_final_check;
use graphwright::dataset::{emit_sft_records, pair_groups, CorrectnessMatrix, Emission, GroupsFile, Pools, SftInput};
use graphwright::graph::GraphError;
use graphwright::grpo::{group_advantages, grpo_objective_value, GroupRollout};
use graphwright::par::Execution;
use graphwright::reward::final_reward;
use graphwright::rollout::{
    run_rollouts, BranchConfig, BranchDecision, ExternalPolicy, Policy, ScriptedPolicy, SoftmaxPolicy,
    UniformAdmissiblePolicy,
};
use graphwright::{final_check, Diagnostic, DiagnosticCode, SchemaRegistry, WorkflowGraph};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{exit, resolve_registry, DEFAULT_SCHEMA};

#[derive(Debug, Parser)]
#[command(name = "graphwright", version, about = "Typed node-graph workflow engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a workflow JSON file for executability.
    Validate {
        workflow: PathBuf,
        /// Registry file or name; defaults to the workflow's schema_id.
        #[arg(long)]
        registry: Option<String>,
    },
    /// Grow a rollout tree for a query and print it as JSONL.
    Rollout(RolloutArgs),
    /// Score a reasoning trace against a target workflow.
    Score {
        trace: PathBuf,
        target: PathBuf,
        #[arg(long)]
        registry: Option<String>,
    },
    /// Pair query groups with their canonical workflow.
    Pair {
        matrix: PathBuf,
        groups: PathBuf,
        /// JSON file with `workflows` and `queries` id lists.
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = EmissionArg::All)]
        emission: EmissionArg,
    },
    /// Group-relative advantages, one reward group per input line.
    Advantages { rewards: PathBuf },
    /// Clipping-free group objective for one group of trajectories.
    Objective {
        group: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        lambda_kl: f64,
    },
    /// Build fine-tuning records from (query, trace, target) lines.
    Sft {
        inputs: PathBuf,
        #[arg(long, default_value = DEFAULT_SCHEMA)]
        registry: String,
    },
    /// Compare incremental validation with the whole-graph check over every
    /// short action sequence.
    Enumerate {
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        #[arg(long, default_value = DEFAULT_SCHEMA)]
        registry: String,
        #[arg(long)]
        sequential: bool,
    },
    /// Run the HTTP environment service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Idle seconds before a session expires.
        #[arg(long, default_value_t = 3600)]
        ttl_secs: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmissionArg {
    All,
    Representative,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecisionArg {
    Threshold,
    Bernoulli,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    /// File holding the query text.
    pub query: PathBuf,
    #[arg(long, default_value = DEFAULT_SCHEMA)]
    pub registry: String,
    /// scripted:<file> | uniform | softmax:<workflow.json> | external:<command>
    #[arg(long, default_value = "uniform")]
    pub policy: String,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau_b: f64,
    /// Forks allowed per tree, or `inf`.
    #[arg(long, default_value = "4", value_parser = parse_budget)]
    pub branch_budget: Budget,
    #[arg(long, default_value_t = 32)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 8)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value_t = DecisionArg::Threshold)]
    pub branch_decision: DecisionArg,
    #[arg(long, default_value_t = graphwright::validator::DEFAULT_MAX_REPAIR_ATTEMPTS)]
    pub max_repair_attempts: usize,
    /// Target workflow; when given, leaves are scored against it.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct Budget(pub Option<u64>);

fn parse_budget(s: &str) -> Result<Budget, String> {
    match s {
        "inf" | "none" | "unlimited" => Ok(Budget(None)),
        n => n
            .parse()
            .map(|n| Budget(Some(n)))
            .map_err(|_| format!("expected a non-negative integer or `inf`, got `{n}`")),
    }
}

impl RolloutArgs {
    pub fn config(&self) -> BranchConfig {
        BranchConfig {
            alpha: self.alpha,
            beta: self.beta,
            tau_b: self.tau_b,
            branch_budget: self.branch_budget.0,
            max_steps: self.max_steps,
            top_k: self.top_k,
            seed: self.seed,
            branch_decision: match self.branch_decision {
                DecisionArg::Threshold => BranchDecision::Threshold,
                DecisionArg::Bernoulli => BranchDecision::Bernoulli,
            },
            max_repair_attempts: self.max_repair_attempts,
            ..BranchConfig::default()
        }
    }
}

/// Runs a command and returns its exit code; errors are usage or IO
/// failures.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Validate { workflow, registry } => validate(&workflow, registry.as_deref()),
        Command::Rollout(args) => rollout(&args),
        Command::Score { trace, target, registry } => score(&trace, &target, registry.as_deref()),
        Command::Pair {
            matrix,
            groups,
            pools,
            emission,
        } => pair(&matrix, &groups, pools.as_deref(), emission),
        Command::Advantages { rewards } => advantages(&rewards),
        Command::Objective { group, lambda_kl } => objective(&group, lambda_kl),
        Command::Sft { inputs, registry } => sft(&inputs, &registry),
        Command::Enumerate {
            max_len,
            registry,
            sequential,
        } => enumerate(max_len, &registry, sequential),
        Command::Serve { addr, ttl_secs } => serve(&addr, ttl_secs),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::USAGE
        }
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn print_line(v: &Value) {
    println!("{}", serde_json::to_string(v).expect("json value serializes"));
}

/// Parses a workflow document, picking the registry from `--registry`,
/// then the document's `schema_id`, then the default.
fn load_workflow(bytes: &[u8], registry: Option<&str>) -> anyhow::Result<(SchemaRegistry, Value)> {
    let doc: Value = serde_json::from_slice(bytes).context("parsing workflow JSON")?;
    if !doc.is_object() {
        bail!("workflow document must be a JSON object");
    }
    let name = registry
        .map(str::to_string)
        .or_else(|| doc.get("schema_id").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| DEFAULT_SCHEMA.to_string());
    Ok((resolve_registry(&name)?, doc))
}

/// Result of checking a workflow document: graph-level problems a schema
/// would catch are reported as diagnostics rather than parse failures.
pub fn check_document(doc: &Value, registry: &SchemaRegistry) -> Result<Vec<Diagnostic>, GraphError> {
    match WorkflowGraph::from_json_value(doc, registry) {
        Ok(g) => Ok(final_check(&g, registry).diagnostics),
        Err(GraphError::UnknownOperator(t)) => Ok(vec![Diagnostic {
            code: DiagnosticCode::UnknownOperator,
            subject: Default::default(),
            message: format!("unknown operator `{t}`"),
            hint: None,
        }]),
        Err(GraphError::UnknownPort(p)) => Ok(vec![Diagnostic {
            code: DiagnosticCode::UnknownPort,
            subject: graphwright::diagnostic::Subject {
                node_id: Some(p.node_id.clone()),
                port: Some(p.port.clone()),
                param: None,
            },
            message: format!("unknown port `{p}`"),
            hint: None,
        }]),
        Err(e) => Err(e),
    }
}

fn validate(path: &Path, registry: Option<&str>) -> anyhow::Result<i32> {
    let (registry, doc) = load_workflow(&read(path)?, registry)?;
    let diagnostics = check_document(&doc, &registry)?;
    let executable = diagnostics.is_empty();
    print_line(&json!({ "executable": executable, "diagnostics": diagnostics }));
    Ok(if executable { exit::OK } else { exit::REJECTED })
}

fn load_target(path: &Path, registry: &SchemaRegistry) -> anyhow::Result<WorkflowGraph> {
    WorkflowGraph::deserialize(&read(path)?, registry).with_context(|| format!("loading workflow {}", path.display()))
}

pub fn make_policy(spec: &str, temperature: f64, registry: &SchemaRegistry) -> anyhow::Result<Box<dyn Policy>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match kind {
        "uniform" if arg.is_empty() => Box::new(UniformAdmissiblePolicy),
        "scripted" if !arg.is_empty() => Box::new(ScriptedPolicy::from_text(&read_text(Path::new(arg))?)),
        "softmax" if !arg.is_empty() => {
            if !(temperature.is_finite() && temperature > 0.0) {
                bail!("temperature must be positive");
            }
            Box::new(SoftmaxPolicy::new(load_target(Path::new(arg), registry)?, temperature))
        }
        "external" if !arg.is_empty() => {
            let mut words = arg.split_whitespace().map(str::to_string);
            let program = words.next().ok_or_else(|| anyhow!("external policy needs a command"))?;
            let args: Vec<String> = words.collect();
            Box::new(ExternalPolicy::spawn(&program, &args)?)
        }
        _ => bail!("unknown policy `{spec}`; expected scripted:<file>, uniform, softmax:<workflow> or external:<command>"),
    })
}

fn rollout(args: &RolloutArgs) -> anyhow::Result<i32> {
    let registry = resolve_registry(&args.registry)?;
    let query = read_text(&args.query)?;
    let cfg = args.config();
    cfg.validate()?;
    let target = args.target.as_deref().map(|p| load_target(p, &registry)).transpose()?;
    let policy = make_policy(&args.policy, args.temperature, &registry)?;
    let mut tree = match run_rollouts(query.trim_end(), &registry, policy.as_ref(), &cfg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("rollout failed: {e}");
            return Ok(exit::REJECTED);
        }
    };
    if let Some(target) = &target {
        tree.assign_rewards(target, &registry)?;
    }
    let text = tree.to_jsonl();
    match &args.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(exit::OK)
}

fn score(trace: &Path, target: &Path, registry: Option<&str>) -> anyhow::Result<i32> {
    let trace = read(trace)?;
    let (registry, doc) = load_workflow(&read(target)?, registry)?;
    let target = WorkflowGraph::from_json_value(&doc, &registry).context("loading target workflow")?;
    match final_reward(&trace, &target, &registry) {
        Ok(b) => {
            print_line(&serde_json::to_value(b)?);
            Ok(exit::OK)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(exit::REJECTED)
        }
    }
}

fn pair(matrix: &Path, groups: &Path, pools: Option<&Path>, emission: EmissionArg) -> anyhow::Result<i32> {
    let file = std::fs::File::open(matrix).with_context(|| format!("opening {}", matrix.display()))?;
    let matrix = CorrectnessMatrix::from_csv(file, matrix.display().to_string())?;
    let groups: GroupsFile = serde_json::from_str(&read_text(groups)?).context("parsing groups")?;
    let rejected = |e: &dyn std::fmt::Display| {
        eprintln!("{e}");
        Ok(exit::REJECTED)
    };
    if let Err(e) = groups.validate() {
        return rejected(&e);
    }
    if let Some(p) = pools {
        let pools: Pools = serde_json::from_str(&read_text(p)?).context("parsing pools")?;
        if let Err(e) = matrix.check_pools(&pools) {
            return rejected(&e);
        }
    }
    let emission = match emission {
        EmissionArg::All => Emission::All,
        EmissionArg::Representative => Emission::Representative,
    };
    let report = pair_groups(&groups, &matrix, emission);
    for p in &report.pairs {
        print_line(&serde_json::to_value(p)?);
    }
    for g in &report.skipped_groups {
        eprintln!("group {g} has no eligible workflow; skipped");
    }
    Ok(exit::OK)
}

/// One line of an advantages input: a bare reward array or an object
/// carrying an optional group id.
#[derive(Deserialize)]
#[serde(untagged)]
enum RewardLine {
    Bare(Vec<f64>),
    Tagged { group_id: Option<String>, rewards: Vec<f64> },
}

fn advantages(path: &Path) -> anyhow::Result<i32> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parsed: RewardLine =
            serde_json::from_str(line).with_context(|| format!("line {}: expected a reward array", i + 1))?;
        let (group_id, rewards) = match parsed {
            RewardLine::Bare(r) => (None, r),
            RewardLine::Tagged { group_id, rewards } => (group_id, rewards),
        };
        match group_advantages(&rewards) {
            Ok(a) => out.push(match group_id {
                Some(g) => json!({ "group_id": g, "advantages": a }),
                None => json!({ "advantages": a }),
            }),
            Err(e) => {
                eprintln!("line {}: {e}", i + 1);
                return Ok(exit::REJECTED);
            }
        }
    }
    out.iter().for_each(print_line);
    Ok(exit::OK)
}

fn objective(path: &Path, lambda_kl: f64) -> anyhow::Result<i32> {
    let group: GroupRollout = serde_json::from_slice(&read(path)?).context("parsing group")?;
    match grpo_objective_value(&group, lambda_kl) {
        Ok(v) => {
            print_line(&json!({ "objective": v, "lambda_kl": lambda_kl }));
            Ok(exit::OK)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(exit::REJECTED)
        }
    }
}

#[derive(Deserialize)]
struct SftLine {
    query: String,
    trace: String,
    target: Value,
}

fn sft(path: &Path, registry: &str) -> anyhow::Result<i32> {
    let registry = resolve_registry(registry)?;
    let text = read_text(path)?;
    let mut inputs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: SftLine = serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        let target = WorkflowGraph::from_json_value(&l.target, &registry)
            .with_context(|| format!("line {}: target workflow", i + 1))?;
        inputs.push(SftInput {
            query: l.query,
            trace: l.trace,
            target,
        });
    }
    let report = emit_sft_records(&inputs, &registry);
    std::io::stdout().write_all(report.to_jsonl().as_bytes())?;
    for (i, e) in &report.rejected {
        eprintln!("{}", json!({ "index": i, "error": e.to_string() }));
    }
    Ok(if report.rejected.is_empty() { exit::OK } else { exit::REJECTED })
}

fn enumerate(max_len: usize, registry: &str, sequential: bool) -> anyhow::Result<i32> {
    let registry = resolve_registry(registry)?;
    let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
    let report = check_against_final_check(&registry, max_len, exec);
    print_line(&serde_json::to_value(&report)?);
    Ok(if report.equivalent() { exit::OK } else { exit::REJECTED })
}

fn serve(addr: &str, ttl_secs: u64) -> anyhow::Result<i32> {
    let state = crate::service::AppState::from_environment(Duration::from_secs(ttl_secs))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        crate::service::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        anyhow::Ok(())
    })?;
    Ok(exit::OK)
}
