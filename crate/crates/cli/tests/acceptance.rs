//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.
//!
//! Tolerances are pinned inside the criteria: 1e-12 for entropy, sigmoid,
//! advantage means and the 8/9 worked value; 1e-6 for H(0.7, 0.2, 0.1);
//! 1e-10 for the group objective; 60 s for the length-6 enumeration.

use std::time::{Duration, Instant};

use graphwright::fixtures::TEXT_TO_IMAGE_LINES;
use graphwright::par::Execution;
use graphwright::validator::step;
use graphwright::{SchemaRegistry, WorkflowGraph};
use graphwright_cli::service::{self, AppState, StepResponse};
use graphwright_oracles::criteria::{self, Verdict};
use serde_json::{json, Value};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn service_parity() -> Verdict {
    let name = "service parity";
    let registry = SchemaRegistry::bundled("mini-sd").unwrap();
    let mut actions: Vec<String> = TEXT_TO_IMAGE_LINES.iter().map(|s| s.to_string()).collect();
    actions.insert(1, "decode_0_image = Decode(samples=nowhere_latent)".into());
    actions.insert(4, "STOP".into());
    actions.push("STOP".into());
    assert_eq!(actions.len(), 10);

    let mut local = WorkflowGraph::empty();
    let mut local_steps = Vec::new();
    for a in &actions {
        let r = step(&local, a, &registry);
        local_steps.push((r.outcome.accepted, r.graph.digest().to_string(), r.terminated));
        local = r.graph;
    }

    let rt = tokio::runtime::Runtime::new().unwrap();
    let remote = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let base = format!("http://{}", listener.local_addr()?);
        let state = AppState::new(vec![registry.clone()], service::DEFAULT_TTL);
        tokio::spawn(service::serve(listener, state, std::future::pending()));
        let client = reqwest::Client::new();
        let created: Value = client
            .post(format!("{base}/v1/sessions"))
            .json(&json!({ "query": "a lighthouse at dusk", "schema_id": "mini-sd" }))
            .send()
            .await?
            .json()
            .await?;
        let id = created["session_id"].as_str().unwrap_or_default().to_string();
        let mut steps = Vec::new();
        for a in &actions {
            let r: StepResponse = client
                .post(format!("{base}/v1/sessions/{id}/step"))
                .json(&json!({ "action_text": a }))
                .send()
                .await?
                .json()
                .await?;
            steps.push(r);
        }
        let graph: Value = client.get(format!("{base}/v1/sessions/{id}/graph")).send().await?.json().await?;
        anyhow::Ok((steps, graph))
    });

    let (steps, graph) = match remote {
        Ok(x) => x,
        Err(e) => return verdict(name, vec![format!("transport: {e}")], String::new()),
    };
    let mut failures = Vec::new();
    for (i, (s, (accepted, digest, terminated))) in steps.iter().zip(&local_steps).enumerate() {
        if s.step_index != i || s.accepted != *accepted || &s.graph_digest != digest || s.terminated != *terminated {
            failures.push(format!("step {i}: wire {s:?} vs local ({accepted}, {digest}, {terminated})"));
        }
    }
    match WorkflowGraph::from_json_value(&graph, &registry) {
        Ok(g) if g == local => {}
        Ok(g) => failures.push(format!("served graph {} != replayed {}", g.digest(), local.digest())),
        Err(e) => failures.push(format!("served graph does not load: {e}")),
    }
    let rejected = local_steps.iter().filter(|s| !s.0).count();
    verdict(
        name,
        failures,
        format!("10-action episode ({rejected} rejected) matches in-process replay, final digest {}", local.digest()),
    )
}

fn verdict(name: &'static str, failures: Vec<String>, detail: String) -> Verdict {
    let passed = failures.is_empty();
    let detail = if passed { detail } else { failures.join(" | ") };
    Verdict { name, passed, detail }
}

type Check = (&'static str, Box<dyn Fn() -> Verdict>);

fn main() {
    let exec = Execution::default();
    let checks: Vec<Check> = vec![
        ("oracle equivalence", Box::new(move || criteria::oracle_equivalence(6, Duration::from_secs(60), exec))),
        ("validated prefix", Box::new(move || criteria::validated_prefix(1000, exec))),
        ("entropy numerics", Box::new(|| criteria::entropy_numerics(10_000, 1))),
        ("branching math", Box::new(|| criteria::branching_math(20))),
        ("reward law", Box::new(|| criteria::reward_law(10_000, 2))),
        ("grpo math", Box::new(|| criteria::grpo_math(1000, 100, 3))),
        ("pairing argmax", Box::new(|| criteria::pairing(50, 4))),
        ("round trips", Box::new(|| criteria::round_trips(1000, 5))),
        ("determinism", Box::new(|| criteria::determinism(20))),
        ("service parity", Box::new(service_parity)),
    ];
    let mut failed = 0;
    for (label, check) in &checks {
        let start = Instant::now();
        let v = check();
        debug_assert_eq!(&v.name, label);
        if !v.passed {
            failed += 1;
        }
        println!("{} [{:.1}s]", v.line(), start.elapsed().as_secs_f64());
    }
    println!("acceptance: {}/{} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
