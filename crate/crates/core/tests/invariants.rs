use graphwright::action::{parse_action, parse_trace, render_graph_lines, render_trace, TraceDocument, TraceStep};
use graphwright::grpo::group_advantages;
use graphwright::rollout::{branch_probability, decide_branch, entropy};
use graphwright::validator::{replay_lines, step};
use graphwright::{final_check, SchemaRegistry, WorkflowGraph};
use graphwright_oracles::exec::is_executable;
use graphwright_oracles::gen::{random_executable_mini_sd, random_graph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn registry(i: usize) -> SchemaRegistry {
    let names = SchemaRegistry::bundled_names();
    SchemaRegistry::bundled(names[i % names.len()]).unwrap()
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..20).prop_filter_map("all zero", |w| {
        let s: f64 = w.iter().sum();
        (s > 0.0).then(|| w.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn entropy_bounded_and_permutation_invariant(p in distribution(), rot in 0usize..20) {
        let h = entropy(&p).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        let mut q = p.clone();
        let k = rot % q.len();
        q.rotate_left(k);
        prop_assert!((entropy(&q).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn branch_probability_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(branch_probability(lo, 0.5, 0.2) <= branch_probability(hi, 0.5, 0.2));
        // with the default coefficients every admissible dH clears the threshold
        prop_assert!(branch_probability(lo, 0.5, 0.2) > 0.5);
        prop_assert!(!decide_branch(1.0, 0.5, Some(0), 5));
        prop_assert!(!decide_branch(1.0, 0.5, None, 1));
    }

    #[test]
    fn advantages_zero_mean(r in prop::collection::vec(-1.0f64..1.0, 2..32)) {
        let a = group_advantages(&r).unwrap();
        prop_assert!(a.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn parser_total_on_arbitrary_text(s in "\\PC{0,80}") {
        let r = registry(0);
        let g = WorkflowGraph::empty();
        let _ = parse_action(&s, &g, &r);
        let res = step(&g, &s, &r);
        prop_assert!(res.outcome.accepted || !res.outcome.diagnostics.is_empty());
        let _ = parse_trace(s.as_bytes());
    }

    #[test]
    fn rendered_graphs_rebuild(seed in any::<u64>(), which in 0usize..2) {
        let r = registry(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, &r, 10);
        let lines = render_graph_lines(&g, &r).unwrap();
        let mut rebuilt = WorkflowGraph::empty();
        for line in &lines {
            for e in parse_action(line, &rebuilt, &r).unwrap() {
                rebuilt = rebuilt.apply_edit(&e, &r).unwrap();
            }
        }
        let (renumbered, _) = g.renumbered().unwrap();
        prop_assert_eq!(&rebuilt, &renumbered);
        prop_assert_eq!(render_graph_lines(&rebuilt, &r).unwrap(), lines);
        prop_assert_eq!(final_check(&g, &r).accepted, is_executable(&g, &r));
    }

    #[test]
    fn executable_graphs_replay_without_rejections(seed in any::<u64>()) {
        let r = registry(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_executable_mini_sd(&mut rng, &r);
        prop_assert!(final_check(&g, &r).accepted);
        let lines = render_graph_lines(&g, &r).unwrap();
        let mut all: Vec<&str> = lines.iter().map(String::as_str).collect();
        all.push("STOP");
        let (rebuilt, rejected) = replay_lines(all, &r);
        prop_assert_eq!(rejected, 0);
        prop_assert_eq!(rebuilt, g.renumbered().unwrap().0);
    }

    #[test]
    fn trace_render_parse_identity(
        lines in prop::collection::vec("[a-z_]{1,8}\\(\\)", 1..6),
        results in prop::collection::vec(prop::option::of("[a-z]{1,8}( [a-z]{1,8}){0,2}"), 1..6),
    ) {
        let steps: Vec<TraceStep> = lines
            .iter()
            .zip(results.iter().chain(std::iter::repeat(&None)))
            .map(|(l, r)| match r {
                Some(text) => TraceStep::rejected(l.clone(), text.clone()),
                None => TraceStep::accepted(l.clone()),
            })
            .collect();
        let doc = TraceDocument::new(steps, lines.clone());
        let back = parse_trace(render_trace(&doc).as_bytes()).unwrap();
        prop_assert_eq!(back, doc);
    }
}
