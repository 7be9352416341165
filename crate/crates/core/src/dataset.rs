//! Consistency-filtered pairing of query groups with a canonical workflow,
//! and emission of supervised fine-tuning records.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{final_check, WorkflowGraph};
use crate::reward::{score_consistency, score_format};
use crate::schema::SchemaRegistry;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {row}: score must be 0 or 1, got `{value}`")]
    BadScore { row: usize, value: String },
    #[error("conflicting scores for ({workflow_id}, {query_id})")]
    ConflictingEntry { workflow_id: String, query_id: String },
    #[error("{kind} `{id}` is not in the pool")]
    UnknownId { kind: &'static str, id: String },
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("query `{query_id}` appears in groups `{first}` and `{second}`")]
    OverlappingGroups {
        query_id: String,
        first: String,
        second: String,
    },
    #[error("group `{0}` has no eligible workflow")]
    NoEligibleWorkflow(String),
}

/// Binary judge scores `s(w, Q)`; absent entries count as 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorrectnessMatrix {
    entries: BTreeMap<(String, String), u8>,
    pub provenance: String,
}

#[derive(Deserialize)]
struct CsvRow {
    workflow_id: String,
    query_id: String,
    score: String,
}

impl CorrectnessMatrix {
    pub fn new(provenance: impl Into<String>) -> Self {
        CorrectnessMatrix {
            entries: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    /// Reads `workflow_id,query_id,score` rows with a header line.
    pub fn from_csv(reader: impl Read, provenance: impl Into<String>) -> Result<Self, DatasetError> {
        let mut m = CorrectnessMatrix::new(provenance);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            let score = match row.score.as_str() {
                "0" => 0,
                "1" => 1,
                _ => {
                    return Err(DatasetError::BadScore {
                        row: i + 1,
                        value: row.score,
                    })
                }
            };
            m.insert(row.workflow_id, row.query_id, score)?;
        }
        Ok(m)
    }

    pub fn insert(&mut self, workflow_id: String, query_id: String, score: u8) -> Result<(), DatasetError> {
        match self.entries.get(&(workflow_id.clone(), query_id.clone())) {
            Some(&old) if old != score => Err(DatasetError::ConflictingEntry { workflow_id, query_id }),
            _ => {
                self.entries.insert((workflow_id, query_id), score.min(1));
                Ok(())
            }
        }
    }

    pub fn score(&self, workflow_id: &str, query_id: &str) -> u8 {
        self.entries
            .get(&(workflow_id.to_string(), query_id.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn workflow_ids(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|(w, _)| w.as_str()).collect()
    }

    pub fn query_ids(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|(_, q)| q.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails if any entry names a workflow or query outside the pools.
    pub fn check_pools(&self, pools: &Pools) -> Result<(), DatasetError> {
        for (w, q) in self.entries.keys() {
            if !pools.workflows.contains(w) {
                return Err(DatasetError::UnknownId {
                    kind: "workflow",
                    id: w.clone(),
                });
            }
            if !pools.queries.contains(q) {
                return Err(DatasetError::UnknownId {
                    kind: "query",
                    id: q.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Known workflow and query ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pools {
    pub workflows: BTreeSet<String>,
    pub queries: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryGroup {
    pub group_id: String,
    pub query_ids: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupsFile {
    pub groups: Vec<QueryGroup>,
}

impl GroupsFile {
    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let g: GroupsFile = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    /// Groups are non-empty and pairwise disjoint.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for g in &self.groups {
            if g.query_ids.is_empty() {
                return Err(DatasetError::EmptyGroup(g.group_id.clone()));
            }
            for q in &g.query_ids {
                if let Some(first) = owner.insert(q, &g.group_id) {
                    return Err(DatasetError::OverlappingGroups {
                        query_id: q.clone(),
                        first: first.to_string(),
                        second: g.group_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Workflows that succeed on at least one query of the group.
pub fn eligible_workflows(group: &QueryGroup, matrix: &CorrectnessMatrix) -> BTreeSet<String> {
    matrix
        .entries
        .iter()
        .filter(|((_, q), &s)| s == 1 && group.query_ids.contains(q))
        .map(|((w, _), _)| w.clone())
        .collect()
}

/// The eligible workflow with the most successes over the group; ties go
/// to the lexicographically smallest id.
pub fn canonical_workflow(group: &QueryGroup, matrix: &CorrectnessMatrix) -> Result<String, DatasetError> {
    let queries: BTreeSet<&str> = group.query_ids.iter().map(String::as_str).collect();
    let mut best: Option<(usize, String)> = None;
    for w in eligible_workflows(group, matrix) {
        let total = queries.iter().filter(|q| matrix.score(&w, q) == 1).count();
        // eligible ids arrive in ascending order, so `>` keeps the smallest on ties
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, w));
        }
    }
    best.map(|(_, w)| w)
        .ok_or_else(|| DatasetError::NoEligibleWorkflow(group.group_id.clone()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emission {
    /// Every group query the canonical workflow succeeds on.
    #[default]
    All,
    /// Only the smallest such query id.
    Representative,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub group_id: String,
    pub query_id: String,
    pub workflow_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingReport {
    pub pairs: Vec<Pair>,
    /// Groups without an eligible workflow.
    pub skipped_groups: Vec<String>,
}

pub fn pair_groups(groups: &GroupsFile, matrix: &CorrectnessMatrix, emission: Emission) -> PairingReport {
    let mut report = PairingReport::default();
    for g in &groups.groups {
        let Ok(w) = canonical_workflow(g, matrix) else {
            report.skipped_groups.push(g.group_id.clone());
            continue;
        };
        let mut winners: Vec<&String> = g.query_ids.iter().filter(|q| matrix.score(&w, q) == 1).collect();
        if emission == Emission::Representative {
            winners.sort();
            winners.truncate(1);
        }
        report.pairs.extend(winners.into_iter().map(|q| Pair {
            group_id: g.group_id.clone(),
            query_id: q.clone(),
            workflow_id: w.clone(),
        }));
    }
    report
}

/// Lowercase with runs of whitespace collapsed to one space.
pub fn normalize_query(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Baseline grouper: queries whose normalized text is identical share a
/// group. Groups are numbered in order of first appearance.
pub fn group_by_normalized_text(queries: &[(String, String)]) -> GroupsFile {
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut groups: Vec<QueryGroup> = Vec::new();
    for (id, text) in queries {
        let key = normalize_query(text);
        let i = *index.entry(key).or_insert_with(|| {
            groups.push(QueryGroup {
                group_id: format!("group_{}", groups.len()),
                query_ids: Vec::new(),
            });
            groups.len() - 1
        });
        groups[i].query_ids.push(id.clone());
    }
    GroupsFile { groups }
}

/// Stand-in judge: `s = 1` iff the workflow passes the whole-graph check
/// and its modality family equals the query's.
pub fn structural_matrix(
    workflows: &[(String, WorkflowGraph, String)],
    queries: &[(String, String)],
    registry: &SchemaRegistry,
) -> CorrectnessMatrix {
    let mut m = CorrectnessMatrix::new("structural");
    for (wid, graph, family) in workflows {
        let executable = final_check(graph, registry).accepted;
        for (qid, qfamily) in queries {
            let s = u8::from(executable && family == qfamily);
            m.entries.insert((wid.clone(), qid.clone()), s);
        }
    }
    m
}

pub const SFT_INSTRUCTION: &str = "Build a node-graph workflow for the request below. \
Think first inside <thinking></thinking>. Whenever you commit to a node, write its single \
line of code inside <node></node>; a <result></result> block right after it holds the \
validator's feedback, and a node without one was accepted. Then write the finished program \
inside <workflow></workflow>: only validated code lines, one node per line, in execution \
order, with no tags. Output the <thinking> block followed directly by the <workflow> block \
and nothing else.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub query: String,
    #[serde(rename = "Reasoning")]
    pub reasoning: String,
    pub workflow: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SftInput {
    pub query: String,
    pub trace: String,
    pub target: WorkflowGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SftError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("target workflow is not executable")]
    InvalidTarget,
    #[error("trace workflow does not match the target")]
    TraceTargetMismatch,
}

#[derive(Clone, Debug, Default)]
pub struct SftReport {
    pub records: Vec<SftRecord>,
    /// Input index and reason for every rejected pair.
    pub rejected: Vec<(usize, SftError)>,
}

impl SftReport {
    pub fn emitted(&self) -> usize {
        self.records.len()
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

pub fn sft_record(input: &SftInput, registry: &SchemaRegistry) -> Result<SftRecord, SftError> {
    let (trace, graph) = score_format(input.trace.as_bytes(), registry)
        .map_err(|e| SftError::InvalidTrace(e.to_string()))?;
    if !score_consistency(&trace, &graph) {
        return Err(SftError::InvalidTrace(
            "a workflow node type never appears in a <node> line".into(),
        ));
    }
    if !final_check(&input.target, registry).accepted {
        return Err(SftError::InvalidTarget);
    }
    if graph != input.target {
        return Err(SftError::TraceTargetMismatch);
    }
    Ok(SftRecord {
        instruction: SFT_INSTRUCTION.to_string(),
        query: input.query.clone(),
        reasoning: input.trace.clone(),
        workflow: trace.workflow_lines,
    })
}

pub fn emit_sft_records(inputs: &[SftInput], registry: &SchemaRegistry) -> SftReport {
    let mut report = SftReport::default();
    for (i, input) in inputs.iter().enumerate() {
        match sft_record(input, registry) {
            Ok(r) => report.records.push(r),
            Err(e) => report.rejected.push((i, e)),
        }
    }
    report
}
