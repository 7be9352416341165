//! The workflow graph: node instances joined port-to-port.
//!
//! Graphs are values. Every edit returns a new graph and leaves the
//! receiver untouched, so branches can share a validated prefix.

mod check;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::edit::{GraphEdit, PortRef};
use crate::schema::SchemaRegistry;

pub use check::final_check;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node id `{0}`")]
    UnknownNodeId(String),
    #[error("unknown port `{0}`")]
    UnknownPort(PortRef),
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),
    #[error("input port `{0}` is already connected")]
    PortOccupied(PortRef),
    #[error("input port `{0}` is not connected")]
    NotConnected(PortRef),
    #[error("malformed workflow: {0}")]
    MalformedWorkflow(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeInstance {
    pub node_id: String,
    pub type_name: String,
    pub params: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: PortRef,
    pub dst: PortRef,
}

/// Stable 64-bit digest of a graph's canonical serialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GraphDigest(pub u64);

impl fmt::Display for GraphDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for GraphDigest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GraphDigest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16)
            .map(GraphDigest)
            .map_err(serde::de::Error::custom)
    }
}

/// Canonical id prefix for a node type: its lowercased name.
pub fn id_prefix(type_name: &str) -> String {
    type_name.to_lowercase()
}

/// Per-type counter encoded in a canonical node id, if `id` follows the
/// `<lowercase type>_<n>` rule for `type_name`.
pub fn id_index(id: &str, type_name: &str) -> Option<u64> {
    let rest = id.strip_prefix(&id_prefix(type_name))?.strip_prefix('_')?;
    if rest.is_empty() || (rest.len() > 1 && rest.starts_with('0')) {
        return None;
    }
    if !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WorkflowGraph {
    nodes: BTreeMap<String, NodeInstance>,
    /// Keyed by destination input port: one producer per input.
    inbound: BTreeMap<PortRef, PortRef>,
}

#[derive(Serialize, Deserialize)]
struct WorkflowDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_id: Option<String>,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    #[serde(rename = "type")]
    type_name: String,
    #[serde(default)]
    params: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    src: String,
    dst: String,
}

impl WorkflowGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.inbound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&NodeInstance> {
        self.nodes.get(id)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeInstance> {
        self.nodes.values()
    }

    /// Edges in ascending destination order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.inbound.iter().map(|(dst, src)| Edge {
            src: src.clone(),
            dst: dst.clone(),
        })
    }

    /// Edges as borrowed `(src, dst)` pairs, in ascending destination order.
    pub fn edge_refs(&self) -> impl Iterator<Item = (&PortRef, &PortRef)> {
        self.inbound.iter().map(|(dst, src)| (src, dst))
    }

    /// Producer feeding `dst`, if connected.
    pub fn source_of(&self, dst: &PortRef) -> Option<&PortRef> {
        self.inbound.get(dst)
    }

    pub fn type_names(&self) -> BTreeSet<&str> {
        self.nodes.values().map(|n| n.type_name.as_str()).collect()
    }

    /// Id the next `AddNode` of `type_name` will receive.
    pub fn next_node_id(&self, type_name: &str) -> String {
        let next = self
            .nodes
            .values()
            .filter(|n| n.type_name == type_name)
            .filter_map(|n| id_index(&n.node_id, type_name))
            .max()
            .map_or(0, |m| m + 1);
        format!("{}_{next}", id_prefix(type_name))
    }

    pub fn insert_node(&mut self, node: NodeInstance) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.node_id) {
            return Err(GraphError::DuplicateNodeId(node.node_id));
        }
        self.nodes.insert(node.node_id.clone(), node);
        Ok(())
    }

    /// Structural application of one edit. No schema validation beyond port
    /// existence; see the validator for Int/Comp checks.
    pub fn apply_edit(
        &self,
        edit: &GraphEdit,
        registry: &SchemaRegistry,
    ) -> Result<WorkflowGraph, GraphError> {
        let mut next = self.clone();
        next.apply_in_place(edit, registry)?;
        Ok(next)
    }

    pub(crate) fn apply_in_place(
        &mut self,
        edit: &GraphEdit,
        registry: &SchemaRegistry,
    ) -> Result<(), GraphError> {
        match edit {
            GraphEdit::AddNode { type_name, params } => {
                let node_id = self.next_node_id(type_name);
                self.insert_node(NodeInstance {
                    node_id,
                    type_name: type_name.clone(),
                    params: params.clone(),
                })
            }
            GraphEdit::AddEdge { src, dst } => {
                self.require_output(src, registry)?;
                self.require_input(dst, registry)?;
                if self.inbound.contains_key(dst) {
                    return Err(GraphError::PortOccupied(dst.clone()));
                }
                self.inbound.insert(dst.clone(), src.clone());
                Ok(())
            }
            GraphEdit::RemoveEdge { dst } => {
                self.require_input(dst, registry)?;
                self.inbound
                    .remove(dst)
                    .map(|_| ())
                    .ok_or_else(|| GraphError::NotConnected(dst.clone()))
            }
            GraphEdit::SetParam {
                node_id,
                param,
                value,
            } => {
                let node = self
                    .nodes
                    .get_mut(node_id)
                    .ok_or_else(|| GraphError::UnknownNodeId(node_id.clone()))?;
                node.params.insert(param.clone(), value.clone());
                Ok(())
            }
            GraphEdit::Stop => Ok(()),
        }
    }

    fn require_output(&self, r: &PortRef, registry: &SchemaRegistry) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get(&r.node_id)
            .ok_or_else(|| GraphError::UnknownNodeId(r.node_id.clone()))?;
        registry
            .lookup(&node.type_name)
            .and_then(|d| d.output(&r.port))
            .map(|_| ())
            .ok_or_else(|| GraphError::UnknownPort(r.clone()))
    }

    fn require_input(&self, r: &PortRef, registry: &SchemaRegistry) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get(&r.node_id)
            .ok_or_else(|| GraphError::UnknownNodeId(r.node_id.clone()))?;
        registry
            .lookup(&node.type_name)
            .and_then(|d| d.input(&r.port))
            .map(|_| ())
            .ok_or_else(|| GraphError::UnknownPort(r.clone()))
    }

    /// Node-level successor lists (src node -> dst nodes), duplicates removed.
    fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (dst, src) in &self.inbound {
            succ.entry(src.node_id.as_str())
                .or_default()
                .insert(dst.node_id.as_str());
        }
        succ
    }

    /// Whether `to` is reachable from `from` by following zero or more edges.
    pub fn reaches(&self, from: &str, to: &str) -> bool {
        if from == to {
            return true;
        }
        let succ = self.successors();
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            for &m in succ.get(n).into_iter().flatten() {
                if m == to {
                    return true;
                }
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        false
    }

    /// Kahn's algorithm with ties broken by ascending node id; `None` when
    /// the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        self.topological_refs()
            .map(|order| order.into_iter().map(str::to_string).collect())
    }

    fn topological_refs(&self) -> Option<Vec<&str>> {
        let succ = self.successors();
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for targets in succ.values() {
            for &t in targets {
                if let Some(d) = indegree.get_mut(t) {
                    *d += 1;
                }
            }
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| k)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for &m in succ.get(n).into_iter().flatten() {
                if let Some(d) = indegree.get_mut(m) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(m);
                    }
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Copy whose ids are reassigned in topological order, so each type's
    /// counters increase along that order, together with the order itself
    /// in new ids. `None` when the graph has a cycle.
    pub fn renumbered(&self) -> Option<(WorkflowGraph, Vec<String>)> {
        let order = self.topological_order()?;
        let mut out = WorkflowGraph::empty();
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        let mut new_order = Vec::with_capacity(order.len());
        for id in &order {
            let node = &self.nodes[id];
            let new_id = out.next_node_id(&node.type_name);
            out.nodes.insert(
                new_id.clone(),
                NodeInstance {
                    node_id: new_id.clone(),
                    ..node.clone()
                },
            );
            map.insert(id.as_str(), new_id.clone());
            new_order.push(new_id);
        }
        let rename = |r: &PortRef| PortRef::new(&map[r.node_id.as_str()], &r.port);
        out.inbound = self.inbound.iter().map(|(d, s)| (rename(d), rename(s))).collect();
        Some((out, new_order))
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_refs().is_some()
    }

    /// Canonical JSON bytes: nodes by id, edges by destination, params by
    /// key, no schema id.
    pub fn serialize(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_doc(None)).expect("graph serializes")
    }

    pub fn to_json_value(&self, schema_id: Option<&str>) -> Value {
        serde_json::to_value(self.to_doc(schema_id)).expect("graph serializes")
    }

    pub fn to_json_string(&self, schema_id: Option<&str>) -> String {
        serde_json::to_string(&self.to_doc(schema_id)).expect("graph serializes")
    }

    fn to_doc(&self, schema_id: Option<&str>) -> WorkflowDoc {
        WorkflowDoc {
            schema_id: schema_id.map(str::to_string),
            nodes: self
                .nodes
                .values()
                .map(|n| NodeDoc {
                    id: n.node_id.clone(),
                    type_name: n.type_name.clone(),
                    params: n.params.clone(),
                })
                .collect(),
            edges: self
                .inbound
                .iter()
                .map(|(dst, src)| EdgeDoc {
                    src: src.to_string(),
                    dst: dst.to_string(),
                })
                .collect(),
        }
    }

    pub fn digest(&self) -> GraphDigest {
        let hash = Sha256::digest(self.serialize());
        let mut head = [0u8; 8];
        head.copy_from_slice(&hash[..8]);
        GraphDigest(u64::from_be_bytes(head))
    }

    pub fn deserialize(bytes: &[u8], registry: &SchemaRegistry) -> Result<Self, GraphError> {
        let doc: WorkflowDoc = serde_json::from_slice(bytes)
            .map_err(|e| GraphError::MalformedWorkflow(e.to_string()))?;
        Self::from_doc(doc, registry)
    }

    pub fn from_json_value(value: &Value, registry: &SchemaRegistry) -> Result<Self, GraphError> {
        let doc: WorkflowDoc = serde_json::from_value(value.clone())
            .map_err(|e| GraphError::MalformedWorkflow(e.to_string()))?;
        Self::from_doc(doc, registry)
    }

    fn from_doc(doc: WorkflowDoc, registry: &SchemaRegistry) -> Result<Self, GraphError> {
        let mut graph = WorkflowGraph::empty();
        for n in doc.nodes {
            if registry.lookup(&n.type_name).is_none() {
                return Err(GraphError::UnknownOperator(n.type_name));
            }
            if id_index(&n.id, &n.type_name).is_none() {
                return Err(GraphError::MalformedWorkflow(format!(
                    "node id `{}` does not follow the `{}_<n>` naming rule",
                    n.id,
                    id_prefix(&n.type_name)
                )));
            }
            graph
                .insert_node(NodeInstance {
                    node_id: n.id,
                    type_name: n.type_name,
                    params: n.params,
                })
                .map_err(|e| GraphError::MalformedWorkflow(e.to_string()))?;
        }
        for e in doc.edges {
            let parse = |s: &str| {
                s.parse::<PortRef>()
                    .map_err(|e| GraphError::MalformedWorkflow(e.to_string()))
            };
            let edit = GraphEdit::AddEdge {
                src: parse(&e.src)?,
                dst: parse(&e.dst)?,
            };
            graph
                .apply_in_place(&edit, registry)
                .map_err(|e| GraphError::MalformedWorkflow(e.to_string()))?;
        }
        Ok(graph)
    }

    /// Output variable name bound for `port` of `node_id`.
    pub fn output_var(node_id: &str, port: &str) -> String {
        format!("{node_id}_{port}")
    }

    /// Resolves an output variable (`<node_id>_<port>`) against the nodes of
    /// this graph.
    pub fn resolve_var(&self, var: &str, registry: &SchemaRegistry) -> Option<PortRef> {
        self.nodes.values().find_map(|n| {
            let port = var.strip_prefix(n.node_id.as_str())?.strip_prefix('_')?;
            registry
                .lookup(&n.type_name)?
                .output(port)
                .map(|_| PortRef::new(n.node_id.clone(), port))
        })
    }
}
