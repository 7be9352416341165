//! From-scratch executability check over the public graph view.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use graphwright::schema::{Category, ParamDef, ParamKind};
use graphwright::{SchemaRegistry, WorkflowGraph};
use serde_json::Value;

fn in_domain(def: &ParamDef, v: &Value) -> bool {
    let d = &def.domain;
    let x = match d.kind {
        ParamKind::Boolean => return v.is_boolean(),
        ParamKind::String => return v.is_string(),
        ParamKind::Enum => return d.choices.iter().any(|c| c == v),
        ParamKind::Integer if !(v.is_i64() || v.is_u64()) => return false,
        ParamKind::Integer | ParamKind::Real => match v.as_f64() {
            Some(x) if x.is_finite() => x,
            _ => return false,
        },
    };
    d.min.is_none_or(|m| x >= m) && d.max.is_none_or(|m| x <= m)
}

/// Whether the graph would run: known types, params in domain, required
/// params and inputs present, well-typed edges, no cycle, an output node
/// exists and every output node is fed from a source node, and
/// constrained input pairs draw from different nodes.
pub fn is_executable(g: &WorkflowGraph, reg: &SchemaRegistry) -> bool {
    let mut inbound: BTreeMap<(String, String), (String, String)> = BTreeMap::new();
    for e in g.edges() {
        inbound.insert(
            (e.dst.node_id.clone(), e.dst.port.clone()),
            (e.src.node_id.clone(), e.src.port.clone()),
        );
    }

    for n in g.nodes() {
        let Some(def) = reg.lookup(&n.type_name) else {
            return false;
        };
        for (k, v) in &n.params {
            match def.params.iter().find(|p| &p.name == k) {
                Some(p) if in_domain(p, v) => {}
                _ => return false,
            }
        }
        for p in &def.params {
            if p.required && p.domain.default.is_none() && !n.params.contains_key(&p.name) {
                return false;
            }
        }
        for i in def.inputs.iter().filter(|i| i.required) {
            if !inbound.contains_key(&(n.node_id.clone(), i.name.clone())) {
                return false;
            }
        }
    }

    for ((dn, dp), (sn, sp)) in &inbound {
        let out_t = g
            .node(sn)
            .and_then(|n| reg.lookup(&n.type_name))
            .and_then(|d| d.outputs.iter().find(|o| &o.name == sp))
            .map(|o| o.port_type.clone());
        let in_t = g
            .node(dn)
            .and_then(|n| reg.lookup(&n.type_name))
            .and_then(|d| d.inputs.iter().find(|i| &i.name == dp))
            .map(|i| i.port_type.clone());
        match (out_t, in_t) {
            (Some(a), Some(b)) if a == b => {}
            _ => return false,
        }
    }

    for c in reg.branch_constraints() {
        for n in g.nodes().filter(|n| n.type_name == c.node_type) {
            let [a, b] = &c.distinct_source_inputs;
            let sa = inbound.get(&(n.node_id.clone(), a.clone()));
            let sb = inbound.get(&(n.node_id.clone(), b.clone()));
            if let (Some(x), Some(y)) = (sa, sb) {
                if x.0 == y.0 {
                    return false;
                }
            }
        }
    }

    // Kahn over node-level edges
    let ids: Vec<String> = g.nodes().map(|n| n.node_id.clone()).collect();
    let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for ((dn, _), (sn, _)) in &inbound {
        succ.entry(sn.as_str()).or_default().insert(dn.as_str());
    }
    let mut indeg: BTreeMap<&str, usize> = ids.iter().map(|i| (i.as_str(), 0)).collect();
    for targets in succ.values() {
        for t in targets {
            *indeg.get_mut(t).expect("edge endpoints exist") += 1;
        }
    }
    let mut queue: VecDeque<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for t in succ.get(v).into_iter().flatten() {
            let d = indeg.get_mut(t).expect("edge endpoints exist");
            *d -= 1;
            if *d == 0 {
                queue.push_back(t);
            }
        }
    }
    if seen != ids.len() {
        return false;
    }

    let cat = |id: &str| g.node(id).and_then(|n| reg.lookup(&n.type_name)).map(|d| d.category);
    let outputs: Vec<&str> = ids.iter().map(String::as_str).filter(|i| cat(i) == Some(Category::Output)).collect();
    if outputs.is_empty() {
        return false;
    }
    let mut fed: BTreeSet<&str> = ids.iter().map(String::as_str).filter(|i| cat(i) == Some(Category::Source)).collect();
    let mut stack: Vec<&str> = fed.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for t in succ.get(v).into_iter().flatten() {
            if fed.insert(t) {
                stack.push(t);
            }
        }
    }
    outputs.iter().all(|o| fed.contains(o))
}
