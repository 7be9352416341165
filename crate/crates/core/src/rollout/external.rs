//! Policy backed by a child process speaking line-delimited JSON.
//!
//! Each request is one line `{"state": {...}}`, or
//! `{"state": {...}, "diagnostics": [...]}` when asking for a repair.
//! Each response is one line `{"candidates": [...], "probs": [...]}`.
//! For repairs the most probable candidate is used.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde_json::{json, Value};

use super::entropy::PolicyDistribution;
use super::policy::{Policy, PolicyError, PolicyState};
use crate::diagnostic::Diagnostic;

struct Proc {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ExternalPolicy {
    command: String,
    proc: Mutex<Proc>,
}

impl ExternalPolicy {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, PolicyError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PolicyError::Io(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut command = program.to_string();
        for a in args {
            command.push(' ');
            command.push_str(a);
        }
        Ok(ExternalPolicy {
            command,
            proc: Mutex::new(Proc { child, stdin, stdout }),
        })
    }

    fn request(&self, req: &Value) -> Result<PolicyDistribution, PolicyError> {
        let mut p = self.proc.lock().unwrap_or_else(|e| e.into_inner());
        let line = serde_json::to_string(req).expect("request serializes");
        writeln!(p.stdin, "{line}").map_err(|e| PolicyError::Io(e.to_string()))?;
        p.stdin.flush().map_err(|e| PolicyError::Io(e.to_string()))?;
        let mut resp = String::new();
        let n = p
            .stdout
            .read_line(&mut resp)
            .map_err(|e| PolicyError::Io(e.to_string()))?;
        if n == 0 {
            return Err(PolicyError::Io("policy process closed its output".into()));
        }
        let dist: PolicyDistribution = serde_json::from_str(resp.trim())
            .map_err(|e| PolicyError::Protocol(format!("bad response: {e}")))?;
        dist.validate().map_err(|e| PolicyError::Protocol(e.to_string()))?;
        Ok(dist)
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        let p = self.proc.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = p.child.kill();
        let _ = p.child.wait();
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> String {
        format!("external({})", self.command)
    }

    fn distribution(&self, state: &PolicyState<'_>) -> Result<PolicyDistribution, PolicyError> {
        self.request(&json!({ "state": state.to_json() }))
    }

    fn repair(&self, state: &PolicyState<'_>, diagnostics: &[Diagnostic]) -> Option<String> {
        let dist = self
            .request(&json!({ "state": state.to_json(), "diagnostics": diagnostics }))
            .ok()?;
        let best = (0..dist.len()).max_by(|&a, &b| {
            dist.probs[a]
                .total_cmp(&dist.probs[b])
                .then(b.cmp(&a))
        })?;
        Some(dist.candidates[best].clone())
    }

    fn concurrent(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WorkflowGraph;
    use crate::schema::SchemaRegistry;
    use crate::validator::History;

    #[test]
    fn round_trips_over_stdio() {
        let script = r#"while read -r line; do echo '{"candidates":["STOP","x = A()"],"probs":[0.25,0.75]}'; done"#;
        let p = ExternalPolicy::spawn("sh", &["-c".into(), script.into()]).unwrap();
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = WorkflowGraph::empty();
        let h = History::default();
        let s = PolicyState {
            query: "q",
            registry: &r,
            graph: &g,
            digest: g.digest(),
            history: &h,
            step: 0,
            top_k: 8,
        };
        let d = p.distribution(&s).unwrap();
        assert_eq!(d.candidates.len(), 2);
        assert_eq!(p.repair(&s, &[]).as_deref(), Some("x = A()"));
    }

    #[test]
    fn malformed_response_is_protocol_error() {
        let script = r#"while read -r line; do echo '{"candidates":["a"],"probs":[0.3]}'; done"#;
        let p = ExternalPolicy::spawn("sh", &["-c".into(), script.into()]).unwrap();
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = WorkflowGraph::empty();
        let h = History::default();
        let s = PolicyState {
            query: "q",
            registry: &r,
            graph: &g,
            digest: g.digest(),
            history: &h,
            step: 0,
            top_k: 8,
        };
        assert!(matches!(p.distribution(&s), Err(PolicyError::Protocol(_))));
    }
}
