//! Random graph generators.

use std::collections::BTreeMap;

use graphwright::schema::{NodeTypeDef, ParamKind};
use graphwright::{GraphEdit, PortRef, SchemaRegistry, WorkflowGraph};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::Value;

/// In-domain values for every param, optional ones included at random.
pub fn random_params<R: Rng>(def: &NodeTypeDef, rng: &mut R) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for p in &def.params {
        let must = p.required && p.domain.default.is_none();
        if !must && rng.random_bool(0.5) {
            continue;
        }
        let d = &p.domain;
        let v = match d.kind {
            ParamKind::Integer => {
                let lo = d.min.unwrap_or(-1000.0) as i64;
                let hi = d.max.unwrap_or(1000.0) as i64;
                Value::from(rng.random_range(lo..=hi))
            }
            ParamKind::Real => {
                let lo = d.min.unwrap_or(-1000.0);
                let hi = d.max.unwrap_or(1000.0);
                Value::from(rng.random_range(lo..=hi))
            }
            ParamKind::Boolean => Value::Bool(rng.random()),
            ParamKind::Enum => d.choices.choose(rng).cloned().unwrap_or(Value::Null),
            ParamKind::String => {
                let words = ["a", "red", "fox", "in \"snow\"", "ünïcode", "back\\slash", ""];
                Value::from(words.choose(rng).copied().unwrap_or(""))
            }
        };
        out.insert(p.name.clone(), v);
    }
    out
}

fn add<R: Rng>(g: &mut WorkflowGraph, reg: &SchemaRegistry, type_name: &str, rng: &mut R) -> String {
    let def = reg.lookup(type_name).expect("type exists");
    let id = g.next_node_id(type_name);
    *g = g
        .apply_edit(
            &GraphEdit::AddNode {
                type_name: type_name.to_string(),
                params: random_params(def, rng),
            },
            reg,
        )
        .expect("node insert");
    id
}

fn connect(g: &mut WorkflowGraph, reg: &SchemaRegistry, src: (&str, &str), dst: (&str, &str)) {
    *g = g
        .apply_edit(
            &GraphEdit::add_edge(PortRef::new(src.0, src.1), PortRef::new(dst.0, dst.1)),
            reg,
        )
        .expect("edge insert");
}

/// Acyclic, well-typed graph with up to `max_nodes` nodes whose inputs are
/// each connected with probability 0.7 to an earlier node's output.
pub fn random_graph<R: Rng>(rng: &mut R, reg: &SchemaRegistry, max_nodes: usize) -> WorkflowGraph {
    let types: Vec<&NodeTypeDef> = reg.node_types().collect();
    let mut g = WorkflowGraph::empty();
    let mut made: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(0..=max_nodes) {
        let def = *types.choose(rng).expect("registry is not empty");
        let id = add(&mut g, reg, &def.type_name, rng);
        for input in &def.inputs {
            if !rng.random_bool(0.7) {
                continue;
            }
            let sources: Vec<(String, String)> = made
                .iter()
                .flat_map(|m| {
                    let n = g.node(m).expect("made nodes exist");
                    reg.lookup(&n.type_name)
                        .into_iter()
                        .flat_map(|d| d.outputs.iter())
                        .filter(|o| o.port_type == input.port_type)
                        .map(|o| (m.clone(), o.name.clone()))
                        .collect::<Vec<_>>()
                })
                .collect();
            if let Some((sn, sp)) = sources.choose(rng) {
                connect(&mut g, reg, (sn, sp), (&id, &input.name));
            }
        }
        made.push(id);
    }
    g
}

/// Executable mini-sd graph: one or two loaders, a chain of one to three
/// samplers with fresh prompts, and one or two decode/save tails.
pub fn random_executable_mini_sd<R: Rng>(rng: &mut R, reg: &SchemaRegistry) -> WorkflowGraph {
    let mut g = WorkflowGraph::empty();
    let loaders: Vec<String> = (0..rng.random_range(1..=2))
        .map(|_| add(&mut g, reg, "CheckpointLoader", rng))
        .collect();
    let pick = |rng: &mut R| loaders.choose(rng).expect("at least one loader").clone();
    let latent = add(&mut g, reg, "EmptyLatent", rng);
    let mut prev = (latent, "latent".to_string());
    for _ in 0..rng.random_range(1..=3) {
        let pos = add(&mut g, reg, "TextEncode", rng);
        connect(&mut g, reg, (&pick(rng), "clip"), (&pos, "clip"));
        let neg = add(&mut g, reg, "TextEncode", rng);
        connect(&mut g, reg, (&pick(rng), "clip"), (&neg, "clip"));
        let s = add(&mut g, reg, "Sampler", rng);
        connect(&mut g, reg, (&pick(rng), "model"), (&s, "model"));
        connect(&mut g, reg, (&pos, "conditioning"), (&s, "positive"));
        connect(&mut g, reg, (&neg, "conditioning"), (&s, "negative"));
        connect(&mut g, reg, (&prev.0, &prev.1), (&s, "latent"));
        prev = (s, "latent".to_string());
    }
    for _ in 0..rng.random_range(1..=2) {
        let d = add(&mut g, reg, "Decode", rng);
        connect(&mut g, reg, (&prev.0, &prev.1), (&d, "samples"));
        connect(&mut g, reg, (&pick(rng), "vae"), (&d, "vae"));
        let save = add(&mut g, reg, "SaveImage", rng);
        connect(&mut g, reg, (&d, "image"), (&save, "images"));
    }
    g
}
