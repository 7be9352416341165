//! Parameterized checks of graphwright's documented properties against the
//! reference implementations in this crate. Each returns a [`Verdict`];
//! the test suites choose the sizes.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use graphwright::action::{render_graph_lines, render_trace, render_workflow_lines, TraceDocument, TraceStep};
use graphwright::conformance::check_equivalence;
use graphwright::dataset::{canonical_workflow, CorrectnessMatrix, QueryGroup};
use graphwright::fixtures;
use graphwright::grpo::{group_advantages, grpo_objective_value, kl_divergence, GroupRollout, StepLogProbs, Trajectory};
use graphwright::par::Execution;
use graphwright::reward::final_reward;
use graphwright::rollout::{
    branch_probability, entropy, run_batch, run_rollouts_with, BranchConfig, RolloutTree, Termination,
    UniformAdmissiblePolicy,
};
use graphwright::validator::step;
use graphwright::{final_check, GraphEdit, SchemaRegistry, WorkflowGraph};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::brute::canonical_row;
use crate::exec::is_executable;
use crate::gen::{random_executable_mini_sd, random_graph};
use crate::hp::Hp;

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &'static str, failures: Vec<String>, detail: String) -> Self {
        let passed = failures.is_empty();
        let detail = if passed {
            detail
        } else {
            let shown: Vec<&str> = failures.iter().take(3).map(String::as_str).collect();
            format!("{} failures; first: {}", failures.len(), shown.join(" | "))
        };
        Verdict { name, passed, detail }
    }

    /// `PASS name: detail` or `FAIL name: detail`.
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn mini_sd() -> SchemaRegistry {
    SchemaRegistry::bundled("mini-sd").expect("bundled registry")
}

fn registries() -> Vec<SchemaRegistry> {
    SchemaRegistry::bundled_names()
        .iter()
        .map(|n| SchemaRegistry::bundled(n).expect("bundled registry"))
        .collect()
}

/// Random probability vector of length `n`, sometimes sparse or peaked.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let shape = rng.random_range(0..4);
    let mut w: Vec<f64> = (0..n)
        .map(|_| match shape {
            0 => rng.random::<f64>(),
            1 => rng.random::<f64>().powi(8),
            2 if rng.random_bool(0.4) => 0.0,
            _ => rng.random::<f64>() + 1e-3,
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

pub fn oracle_equivalence(max_len: usize, budget: Duration, exec: Execution) -> Verdict {
    let r = mini_sd();
    let disagreements = AtomicU64::new(0);
    let start = Instant::now();
    let rep = check_equivalence(&r, max_len, exec, |g| {
        let fc = final_check(g, &r).accepted;
        if fc != is_executable(g, &r) {
            disagreements.fetch_add(1, Ordering::Relaxed);
        }
        fc
    });
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    if !rep.equivalent() {
        failures.push(format!(
            "{} mismatched sequences, e.g. {}",
            rep.mismatched,
            rep.examples.first().map(|m| m.graph.to_string()).unwrap_or_default()
        ));
    }
    let d = disagreements.load(Ordering::Relaxed);
    if d > 0 {
        failures.push(format!("final_check disagrees with the reference check on {d} states"));
    }
    if rep.incremental_accepted == 0 {
        failures.push("no sequence was accepted; the enumeration is vacuous".into());
    }
    if elapsed > budget {
        failures.push(format!("took {elapsed:.1?}, budget {budget:?}"));
    }
    Verdict::new(
        "oracle equivalence",
        failures,
        format!(
            "{} sequences of length <= {max_len} ({} states), {} accepted by both, 0 mismatches, {elapsed:.1?}",
            rep.sequences, rep.states, rep.incremental_accepted
        ),
    )
}

fn check_prefixes(tree: &RolloutTree, r: &SchemaRegistry, failures: &mut Vec<String>) -> (usize, usize) {
    let mut prefixes = 0;
    let mut stop_leaves = 0;
    for leaf in &tree.leaves {
        let mut g = WorkflowGraph::empty();
        for s in tree.path(leaf.branch) {
            if g.digest() != s.digest_before {
                failures.push(format!("seed {} branch {} t {}: digest drift", tree.header.config.seed, leaf.branch, s.t));
                break;
            }
            if let Some(line) = &s.committed {
                let res = step(&g, line, r);
                if !res.outcome.accepted {
                    failures.push(format!("seed {} branch {}: `{line}` rejected on replay", tree.header.config.seed, leaf.branch));
                    break;
                }
                g = res.graph;
            }
            prefixes += 1;
        }
        if g.digest() != leaf.digest {
            failures.push(format!("seed {} branch {}: leaf digest drift", tree.header.config.seed, leaf.branch));
        }
        if leaf.termination == Termination::Stop {
            stop_leaves += 1;
            if !final_check(&g, r).accepted || !is_executable(&g, r) {
                failures.push(format!("seed {} branch {}: stopped on a non-executable graph", tree.header.config.seed, leaf.branch));
            }
        }
    }
    (prefixes, stop_leaves)
}

pub fn validated_prefix(rollouts: u64, exec: Execution) -> Verdict {
    let r = mini_sd();
    let seeds: Vec<u64> = (0..rollouts).collect();
    let trees = run_batch("make an image", &r, &UniformAdmissiblePolicy, &BranchConfig::default(), &seeds, exec);
    let mut failures = Vec::new();
    let (mut prefixes, mut stops, mut leaves) = (0, 0, 0);
    for t in trees {
        match t {
            Ok(tree) => {
                let (p, s) = check_prefixes(&tree, &r, &mut failures);
                prefixes += p;
                stops += s;
                leaves += tree.leaves.len();
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if stops == 0 {
        failures.push("no leaf terminated with STOP".into());
    }
    Verdict::new(
        "validated prefix",
        failures,
        format!("{rollouts} rollouts, {leaves} leaves, {prefixes} prefix steps replayed with 0 rejections, {stops}/{stops} STOP leaves executable"),
    )
}

pub fn entropy_numerics(random_cases: usize, seed: u64) -> Verdict {
    let mut hp = Hp::default();
    let mut failures = Vec::new();
    for n in 2..=16 {
        let h = entropy(&vec![1.0 / n as f64; n]).expect("valid");
        if (h - 1.0).abs() > 1e-12 {
            failures.push(format!("uniform n={n}: {h}"));
        }
    }
    for n in 1..=16 {
        let mut one_hot = vec![0.0; n];
        one_hot[n / 2] = 1.0;
        if entropy(&one_hot).expect("valid") != 0.0 {
            failures.push(format!("one-hot n={n}"));
        }
    }
    let p = [0.7, 0.2, 0.1];
    let h = entropy(&p).expect("valid");
    let oracle = hp.entropy(&p);
    if (h - 0.729846).abs() > 1e-6 || (h - oracle).abs() > 1e-12 {
        failures.push(format!("(0.7, 0.2, 0.1): {h} vs {oracle}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..random_cases {
        let n = rng.random_range(1..=24);
        let d = random_distribution(&mut rng, n);
        let h = entropy(&d).expect("valid");
        if !(0.0..=1.0).contains(&h) {
            failures.push(format!("H={h} out of range for {d:?}"));
        }
        let err = (h - hp.entropy(&d)).abs();
        worst = worst.max(err);
        if err > 1e-12 {
            failures.push(format!("H={h} off by {err:e} for {d:?}"));
        }
    }
    Verdict::new(
        "entropy numerics",
        failures,
        format!("H(0.7,0.2,0.1)={h:.9}, uniform n=2..16 within 1e-12 of 1, {random_cases} random cases in [0,1], max error {worst:.1e}"),
    )
}

pub fn branching_math(seeds: u64) -> Verdict {
    let mut hp = Hp::default();
    let mut failures = Vec::new();
    for dh in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let p = branch_probability(dh, 0.5, 0.2);
        let o = hp.branch_probability(dh, 0.5, 0.2);
        if (p - o).abs() > 1e-12 {
            failures.push(format!("sigmoid at dH={dh}: {p} vs {o}"));
        }
    }
    let r = mini_sd();
    let mut unlimited_steps = 0;
    for seed in 0..seeds {
        let cfg = BranchConfig {
            branch_budget: None,
            max_steps: 4,
            top_k: 3,
            seed,
            ..BranchConfig::default()
        };
        match run_rollouts_with("q", &r, &UniformAdmissiblePolicy, &cfg, Execution::Sequential) {
            Ok(tree) => {
                for s in tree.steps.iter().filter(|s| !s.forced && s.candidates.len() >= 2) {
                    unlimited_steps += 1;
                    if !s.branched {
                        failures.push(format!("seed {seed} branch {} t {}: eligible step did not fork", s.branch, s.t));
                    }
                }
                if tree.forks as usize != tree.fork_eligible_steps() {
                    failures.push(format!("seed {seed}: {} forks for {} eligible steps", tree.forks, tree.fork_eligible_steps()));
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
        for b in [0u64, 1, 2, 3, 5, 8] {
            let cfg = BranchConfig {
                branch_budget: Some(b),
                max_steps: 6,
                top_k: 3,
                seed,
                ..BranchConfig::default()
            };
            match run_rollouts_with("q", &r, &UniformAdmissiblePolicy, &cfg, Execution::Sequential) {
                Ok(tree) => {
                    let want = b.min(tree.fork_eligible_steps() as u64);
                    if tree.forks != want || tree.leaves.len() as u64 != tree.forks + 1 {
                        failures.push(format!("seed {seed} b={b}: {} forks, expected {want}", tree.forks));
                    }
                }
                Err(e) => failures.push(e.to_string()),
            }
        }
    }
    Verdict::new(
        "branching math",
        failures,
        format!(
            "sigmoid(0.5+0.2dH) within 1e-12 at 5 points; B_max=inf forked at all {unlimited_steps} eligible steps; forks = min(b, eligible) for {} trees",
            seeds * 6
        ),
    )
}

fn mutate_format<R: Rng>(rng: &mut R, doc: String) -> String {
    match rng.random_range(0..6) {
        0 => doc.replace("</workflow>", ""),
        1 => doc + "and some trailing words\n",
        2 => doc.replacen("<workflow>\n", "<workflow>\nthis is not code\n", 1),
        3 => doc.replacen("</workflow>", "x = NotARealType()\n</workflow>", 1),
        4 => doc.replacen("<thinking>", "", 1),
        _ => String::from_utf8_lossy(&(0..rng.random_range(0..40)).map(|_| rng.random::<u8>()).collect::<Vec<u8>>()).into_owned(),
    }
}

fn types_of(g: &WorkflowGraph) -> BTreeSet<String> {
    g.nodes().map(|n| n.type_name.clone()).collect()
}

pub fn reward_law(cases: usize, seed: u64) -> Verdict {
    let regs = registries();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let (mut gated, mut passed, mut monotone_checks) = (0, 0, 0);
    for case in 0..cases {
        let r = regs.choose(&mut rng).expect("registries");
        let target = loop {
            let t = if r.schema_id() == "mini-sd" && rng.random_bool(0.3) {
                random_executable_mini_sd(&mut rng, r)
            } else {
                random_graph(&mut rng, r, 6)
            };
            if !t.is_empty() {
                break t;
            }
        };
        let cand = random_graph(&mut rng, r, 7);
        let lines = render_graph_lines(&cand, r).expect("generated graphs are acyclic");
        let mut steps: Vec<TraceStep> = Vec::new();
        let mut mentioned = BTreeSet::new();
        let drop_some = rng.random_bool(0.3);
        for (line, node) in lines.iter().zip(cand.topological_order().expect("acyclic")) {
            if rng.random_bool(0.2) {
                // rejected node lines still name their type
                steps.push(TraceStep::rejected("Decode(samples=nowhere)", "unknown variable `nowhere`"));
                mentioned.insert("Decode".to_string());
            }
            if drop_some && rng.random_bool(0.5) {
                continue;
            }
            mentioned.insert(cand.node(&node).expect("ordered").type_name.clone());
            steps.push(TraceStep::accepted(line));
        }
        let mut doc = render_trace(&TraceDocument::new(steps, lines.clone()));
        let mutated = rng.random_bool(0.15);
        if mutated {
            doc = mutate_format(&mut rng, doc);
        }
        let b = final_reward(doc.as_bytes(), &target, r).expect("non-empty target");

        let want_format = !mutated && !cand.is_empty();
        let want_consistent = types_of(&cand).is_subset(&mentioned);
        let tt = types_of(&target);
        let recall = tt.intersection(&types_of(&cand)).count() as f64 / tt.len() as f64 - 1.0;
        let f = b.final_reward;
        if !(f == -1.0 || (2.0 / 3.0..=1.0).contains(&f)) {
            failures.push(format!("case {case}: final {f} outside {{-1}} u [2/3, 1]"));
        }
        if !want_format {
            // a mutation can leave a document that still parses; only
            // check the format verdict when the document was not mutated
            if !mutated && b.r_f != -1 {
                failures.push(format!("case {case}: empty workflow passed the format gate"));
            }
        } else if b.r_f != 0 {
            failures.push(format!("case {case}: well-formed document failed the format gate"));
        }
        if !mutated && want_format && (b.r_c == 0) != want_consistent {
            failures.push(format!("case {case}: consistency gate {} expected {want_consistent}", b.r_c));
        }
        if b.gates_passed() {
            passed += 1;
            let expected = (3.0 + recall) / 3.0;
            if !mutated && (f - expected).abs() > 1e-12 {
                failures.push(format!("case {case}: final {f} expected {expected}"));
            }
            // adding a missing target type, named in a node line, never lowers the reward
            if let Some(missing) = tt.difference(&types_of(&cand)).next() {
                let def = r.lookup(missing).expect("target types are known");
                let bigger = cand
                    .apply_edit(
                        &GraphEdit::AddNode {
                            type_name: missing.clone(),
                            params: def.sample_params(),
                        },
                        r,
                    )
                    .expect("node insert");
                let lines2 = render_graph_lines(&bigger, r).expect("acyclic");
                let steps2 = lines2.iter().map(TraceStep::accepted).collect();
                let doc2 = render_trace(&TraceDocument::new(steps2, lines2));
                let b2 = final_reward(doc2.as_bytes(), &target, r).expect("non-empty target");
                monotone_checks += 1;
                if !(b2.recall_term > b.recall_term && b2.final_reward > f) {
                    failures.push(format!("case {case}: adding `{missing}` did not raise recall"));
                }
            }
        } else {
            gated += 1;
            if f != -1.0 {
                failures.push(format!("case {case}: failed gate but final {f}"));
            }
        }
    }

    // target with three types, output covers two of them
    let r = mini_sd();
    let mut target = WorkflowGraph::empty();
    for t in ["CheckpointLoader", "EmptyLatent", "Decode"] {
        target = target.apply_edit(&GraphEdit::add_node(t), &r).expect("node insert");
    }
    let mut two = WorkflowGraph::empty();
    for t in ["CheckpointLoader", "EmptyLatent"] {
        two = two.apply_edit(&GraphEdit::add_node(t), &r).expect("node insert");
    }
    let lines = render_graph_lines(&two, &r).expect("acyclic");
    let doc = render_trace(&TraceDocument::new(lines.iter().map(TraceStep::accepted).collect(), lines));
    let worked = final_reward(doc.as_bytes(), &target, &r).expect("non-empty").final_reward;
    if (worked - 8.0 / 9.0).abs() > 1e-12 {
        failures.push(format!("worked example gave {worked}"));
    }
    Verdict::new(
        "reward law",
        failures,
        format!("{cases} cases ({passed} passed gates, {gated} gated to -1, {monotone_checks} monotonicity checks); worked value {worked:.12} = 8/9"),
    )
}

pub fn grpo_math(advantage_groups: usize, objective_groups: usize, seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hp = Hp::default();
    let mut failures = Vec::new();
    for g in 0..advantage_groups {
        let k = rng.random_range(2..=16);
        let rewards: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let a = group_advantages(&rewards).expect("k >= 2");
        let sum: f64 = a.iter().sum();
        if sum.abs() > 1e-12 {
            failures.push(format!("group {g}: advantages sum to {sum:e}"));
        }
        let c = rng.random_range(-5.0..=5.0);
        let shifted: Vec<f64> = rewards.iter().map(|x| x + c).collect();
        let b = group_advantages(&shifted).expect("k >= 2");
        if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-12) {
            failures.push(format!("group {g}: shift by {c} changed advantages"));
        }
    }
    let mut worst: f64 = 0.0;
    let mut kl_cases = 0;
    for g in 0..objective_groups {
        let k = rng.random_range(2..=5);
        let lambda = if rng.random_bool(0.5) { 0.01 } else { rng.random_range(0.0..=1.0) };
        let mut trajectories = Vec::new();
        let mut raw = Vec::new();
        for _ in 0..k {
            let mut steps = Vec::new();
            let mut raw_steps = Vec::new();
            for _ in 0..rng.random_range(1..=4) {
                let n = rng.random_range(2..=5);
                let cur: Vec<f64> = loop {
                    let d = random_distribution(&mut rng, n);
                    if d.iter().all(|&x| x > 0.0) {
                        break d;
                    }
                };
                let reference: Vec<f64> = loop {
                    let d = random_distribution(&mut rng, n);
                    if d.iter().all(|&x| x > 0.0) {
                        break d;
                    }
                };
                let taken = rng.random_range(0..n);
                let lp = cur[taken].ln();
                let kl = kl_divergence(&cur, &reference).expect("valid");
                let self_kl = kl_divergence(&cur, &cur).expect("valid");
                kl_cases += 1;
                if !(kl > 0.0 && self_kl == 0.0) {
                    failures.push(format!("group {g}: KL {kl}, self KL {self_kl}"));
                }
                raw_steps.push((lp, cur.clone(), reference.clone()));
                steps.push(StepLogProbs {
                    logprob_current: lp,
                    logprob_reference: reference[taken].ln(),
                    current: cur,
                    reference,
                });
            }
            let reward = *[-1.0, 2.0 / 3.0, 8.0 / 9.0, 1.0].choose(&mut rng).expect("choices");
            raw.push(raw_steps);
            trajectories.push(Trajectory { reward, steps });
        }
        let rewards: Vec<f64> = trajectories.iter().map(|t| t.reward).collect();
        let v = grpo_objective_value(&GroupRollout { trajectories }, lambda).expect("valid group");
        let o = hp.grpo_objective(&rewards, &raw, lambda);
        worst = worst.max((v - o).abs());
        if (v - o).abs() > 1e-10 {
            failures.push(format!("group {g}: {v} vs {o}"));
        }
    }
    Verdict::new(
        "grpo math",
        failures,
        format!(
            "{advantage_groups} groups zero-mean and shift-invariant; {objective_groups} objectives within {worst:.1e} of the reference; {kl_cases} KL cases positive, self-KL zero"
        ),
    )
}

pub fn pairing(matrices: usize, seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut ties = 0;
    let mut none = 0;
    for case in 0..matrices {
        let w = rng.random_range(1..=20);
        let q = rng.random_range(1..=20);
        let mut ids: Vec<String> = Vec::new();
        while ids.len() < w {
            let id = format!("wf-{}", rng.random_range(0..1000));
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let density = rng.random_range(0.0..=0.6);
        let mut scores: Vec<Vec<u8>> = (0..w)
            .map(|_| (0..q).map(|_| u8::from(rng.random_bool(density))).collect())
            .collect();
        if w >= 2 && rng.random_bool(0.5) {
            // force a tie for the top row
            let (a, b) = (rng.random_range(0..w), rng.random_range(0..w));
            scores[b] = scores[a].clone();
        }
        let qids: Vec<String> = (0..q).map(|j| format!("q{j:02}")).collect();
        let mut cols: Vec<usize> = (0..q).collect();
        cols.shuffle(&mut rng);
        cols.truncate(rng.random_range(1..=q));
        let mut m = CorrectnessMatrix::new("random");
        for (i, id) in ids.iter().enumerate() {
            for (j, qid) in qids.iter().enumerate() {
                if scores[i][j] == 1 || rng.random_bool(0.5) {
                    m.insert(id.clone(), qid.clone(), scores[i][j]).expect("no conflicts");
                }
            }
        }
        let group = QueryGroup {
            group_id: format!("g{case}"),
            query_ids: cols.iter().map(|&c| qids[c].clone()).collect(),
        };
        let brute = canonical_row(&ids, &scores, &cols).map(|i| ids[i].clone());
        let totals: Vec<usize> = scores.iter().map(|row| cols.iter().filter(|&&c| row[c] == 1).count()).collect();
        let top = totals.iter().copied().max().unwrap_or(0);
        if top > 0 && totals.iter().filter(|&&t| t == top).count() > 1 {
            ties += 1;
        }
        let got = canonical_workflow(&group, &m).ok();
        if got.is_none() {
            none += 1;
        }
        if got != brute {
            failures.push(format!("case {case}: {got:?} vs brute force {brute:?}"));
        }
    }
    Verdict::new(
        "pairing argmax",
        failures,
        format!("{matrices} matrices up to 20x20 match the brute-force scan ({ties} with tied maxima, {none} without an eligible workflow)"),
    )
}

pub fn round_trips(graphs: usize, seed: u64) -> Verdict {
    let regs = registries();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for i in 0..graphs {
        let r = regs.choose(&mut rng).expect("registries");
        let g = if r.schema_id() == "mini-sd" && rng.random_bool(0.3) {
            random_executable_mini_sd(&mut rng, r)
        } else {
            random_graph(&mut rng, r, 12)
        };
        let bytes = g.serialize();
        match WorkflowGraph::deserialize(&bytes, r) {
            Ok(back) if back == g && back.serialize() == bytes && back.digest() == g.digest() => {}
            Ok(_) => failures.push(format!("graph {i}: round trip changed the graph")),
            Err(e) => failures.push(format!("graph {i}: {e}")),
        }
    }
    let mut fixtures_checked = 0;
    for (r, g) in fixtures::executable_fixtures() {
        let lines = match render_workflow_lines(&g, &r) {
            Ok(l) => l,
            Err(e) => {
                failures.push(format!("fixture not executable: {e}"));
                continue;
            }
        };
        let mut back = WorkflowGraph::empty();
        for line in &lines {
            let res = step(&back, line, &r);
            if !res.outcome.accepted {
                failures.push(format!("fixture line `{line}` rejected"));
            }
            back = res.graph;
        }
        if back != g {
            failures.push(format!("fixture with {} nodes did not rebuild exactly", g.node_count()));
        }
        fixtures_checked += 1;
    }
    Verdict::new(
        "round trips",
        failures,
        format!("{graphs} random graphs serialize/deserialize to identity; {fixtures_checked} executable fixtures render and re-parse exactly"),
    )
}

pub fn determinism(seeds: u64) -> Verdict {
    let r = mini_sd();
    let mut failures = Vec::new();
    let mut bytes = 0;
    for seed in 0..seeds {
        let cfg = BranchConfig {
            seed,
            ..BranchConfig::default()
        };
        let run = |exec| {
            run_rollouts_with("a red fox in snow", &r, &UniformAdmissiblePolicy, &cfg, exec).map(|t| t.to_jsonl())
        };
        match (run(Execution::Parallel), run(Execution::Parallel), run(Execution::Sequential)) {
            (Ok(a), Ok(b), Ok(c)) => {
                bytes += a.len();
                if a != b {
                    failures.push(format!("seed {seed}: two runs differ"));
                }
                if a != c {
                    failures.push(format!("seed {seed}: parallel and sequential runs differ"));
                }
            }
            _ => failures.push(format!("seed {seed}: rollout failed")),
        }
    }
    Verdict::new(
        "determinism",
        failures,
        format!("{seeds} seeds: byte-identical JSONL across repeated and sequential runs ({bytes} bytes each)"),
    )
}
