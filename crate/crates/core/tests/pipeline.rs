//! End-to-end flows across modules.

use graphwright::action::render_trace;
use graphwright::dataset::{emit_sft_records, pair_groups, CorrectnessMatrix, Emission, GroupsFile, SftInput};
use graphwright::diagnostic::Hint;
use graphwright::fixtures;
use graphwright::reward::final_reward;
use graphwright::rollout::{run_rollouts, BranchConfig, ExternalPolicy, ScriptedPolicy, SoftmaxPolicy, Termination};
use graphwright::validator::{repair_loop, step, update_history, History, DEFAULT_MAX_REPAIR_ATTEMPTS};
use graphwright::{DiagnosticCode, SchemaRegistry, WorkflowGraph};

fn sd() -> SchemaRegistry {
    SchemaRegistry::bundled("mini-sd").unwrap()
}

#[test]
fn scripted_rollout_to_sft_record() {
    let r = sd();
    let target = fixtures::text_to_image(&r);
    let policy = ScriptedPolicy::new(fixtures::TEXT_TO_IMAGE_LINES);
    let mut tree = run_rollouts("a lighthouse at dusk", &r, &policy, &BranchConfig::default()).unwrap();
    assert_eq!(tree.leaves.len(), 1);
    assert_eq!(tree.leaves[0].termination, Termination::Stop);
    tree.assign_rewards(&target, &r).unwrap();
    assert_eq!(tree.leaves[0].reward, Some(1.0));

    let doc = render_trace(&tree.leaf_trace(&tree.leaves[0], &r));
    let report = emit_sft_records(
        &[SftInput {
            query: "a lighthouse at dusk".into(),
            trace: doc.clone(),
            target: target.clone(),
        }],
        &r,
    );
    assert_eq!(report.emitted(), 1, "{:?}", report.rejected);
    let rec = &report.records[0];
    assert_eq!(rec.workflow, fixtures::TEXT_TO_IMAGE_LINES);
    // the record's reasoning scores as a perfect document again
    let again = final_reward(rec.reasoning.as_bytes(), &target, &r).unwrap();
    assert!(again.gates_passed());
    assert_eq!(again.final_reward, 1.0);
}

#[test]
fn rejected_lines_show_up_as_results() {
    let r = sd();
    let mut lines: Vec<String> = fixtures::TEXT_TO_IMAGE_LINES.iter().map(|s| s.to_string()).collect();
    lines.insert(2, "SaveImage(images=nowhere_image)".into());
    let policy = ScriptedPolicy::new(lines);
    let cfg = BranchConfig {
        max_repair_attempts: 0,
        ..BranchConfig::default()
    };
    let tree = run_rollouts("q", &r, &policy, &cfg).unwrap();
    let doc = tree.leaf_trace(&tree.leaves[0], &r);
    let rejected: Vec<_> = doc.steps.iter().filter(|s| s.result.is_some()).collect();
    assert_eq!(rejected.len(), 1);
    assert!(rejected[0].result.as_deref().unwrap().contains("UnknownVariable"));
}

#[test]
fn adapter_repair_on_mini_edit() {
    let r = SchemaRegistry::bundled("mini-edit").unwrap();
    let setup = [
        "checkpointloader_0_model, checkpointloader_0_clip, checkpointloader_0_vae = CheckpointLoader()",
        "loadimage_0_image = LoadImage()",
        "textencode_0_conditioning = TextEncode(text=\"oil painting\", clip=checkpointloader_0_clip)",
        "textencode_1_conditioning = TextEncode(text=\"lowres\", clip=checkpointloader_0_clip)",
        "sampler_0_latent = Sampler(model=checkpointloader_0_model, positive=textencode_0_conditioning, negative=textencode_1_conditioning)",
    ];
    let mut g = WorkflowGraph::empty();
    let mut h = History::default();
    for line in setup {
        let res = step(&g, line, &r);
        assert!(res.outcome.accepted, "{line}: {:?}", res.outcome);
        h = update_history(&h, line, &res.outcome, &res.graph, &r);
        g = res.graph;
    }

    let bad = "connect(loadimage_0_image, sampler_0.latent)";
    let res = step(&g, bad, &r);
    assert!(!res.outcome.accepted);
    let d = &res.outcome.diagnostics[0];
    assert_eq!(d.code, DiagnosticCode::TypeMismatch);
    assert!(matches!(&d.hint, Some(Hint::MissingAdapter { via, .. }) if via == "Encode"));
    h = update_history(&h, bad, &res.outcome, &g, &r);

    // the repairer first retries the edge, then inserts the adapter
    let mut proposals = vec![
        "encode_0_latent = Encode(pixels=loadimage_0_image, vae=checkpointloader_0_vae)".to_string(),
        bad.to_string(),
    ];
    let fixed = repair_loop(&g, &h, &r, &res.outcome, DEFAULT_MAX_REPAIR_ATTEMPTS, |_, _, diags| {
        assert!(!diags.is_empty());
        proposals.pop()
    })
    .unwrap();
    assert_eq!(fixed.attempts_used, 2);
    let g = fixed.graph;
    let res = step(&g, "connect(encode_0_latent, sampler_0.latent)", &r);
    assert!(res.outcome.accepted);
    let mut g = res.graph;
    for line in [
        "decode_0_image = Decode(samples=sampler_0_latent, vae=checkpointloader_0_vae)",
        "SaveImage(images=decode_0_image)",
        "STOP",
    ] {
        let res = step(&g, line, &r);
        assert!(res.outcome.accepted, "{line}");
        g = res.graph;
    }
}

#[test]
fn softmax_policy_reaches_an_executable_leaf() {
    let r = sd();
    let target = fixtures::decode_empty_latent(&r);
    let policy = SoftmaxPolicy::new(target.clone(), 0.5);
    let cfg = BranchConfig {
        max_steps: 24,
        seed: 3,
        ..BranchConfig::default()
    };
    let mut tree = run_rollouts("decode an empty latent", &r, &policy, &cfg).unwrap();
    tree.assign_rewards(&target, &r).unwrap();
    for leaf in &tree.leaves {
        let reward = leaf.reward.unwrap();
        assert!(reward == -1.0 || (2.0 / 3.0..=1.0).contains(&reward));
        if leaf.termination == Termination::Stop {
            let g = WorkflowGraph::from_json_value(&leaf.graph, &r).unwrap();
            assert!(graphwright::final_check(&g, &r).accepted);
        }
    }
}

#[test]
fn external_policy_drives_a_rollout() {
    let r = sd();
    // always proposes STOP and a node; STOP is rejected on the empty graph
    let script = r#"while read -r line; do echo '{"candidates":["emptylatent_0_latent = EmptyLatent()","STOP"],"probs":[0.5,0.5]}'; done"#;
    let policy = ExternalPolicy::spawn("sh", &["-c".into(), script.into()]).unwrap();
    let cfg = BranchConfig {
        max_steps: 3,
        branch_budget: Some(1),
        ..BranchConfig::default()
    };
    let tree = run_rollouts("q", &r, &policy, &cfg).unwrap();
    assert_eq!(tree.header.policy, policy_name(&policy));
    assert!(tree.leaves.len() <= 2);
    for s in &tree.steps {
        assert_eq!(s.candidates.len(), 2);
    }
}

fn policy_name(p: &dyn graphwright::rollout::Policy) -> String {
    p.name()
}

#[test]
fn pairing_from_csv() {
    let csv = "workflow_id,query_id,score\n\
               t2i,q1,1\nt2i,q2,1\nt2i,q3,0\n\
               decode,q1,1\ndecode,q2,0\ndecode,q3,1\n";
    let m = CorrectnessMatrix::from_csv(csv.as_bytes(), "judge").unwrap();
    let groups = GroupsFile::from_json(
        r#"{"groups":[{"group_id":"cats","query_ids":["q1","q2","q3"]},{"group_id":"none","query_ids":["q9"]}]}"#,
    )
    .unwrap();
    let all = pair_groups(&groups, &m, Emission::All);
    assert_eq!(all.skipped_groups, vec!["none"]);
    // t2i and decode tie at 2 successes; "decode" sorts first
    assert!(all.pairs.iter().all(|p| p.workflow_id == "decode"));
    let qs: Vec<&str> = all.pairs.iter().map(|p| p.query_id.as_str()).collect();
    assert_eq!(qs, ["q1", "q3"]);
    let rep = pair_groups(&groups, &m, Emission::Representative);
    assert_eq!(rep.pairs.len(), 1);
}
