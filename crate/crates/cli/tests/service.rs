//! The HTTP service over a real socket.

use std::time::Duration;

use graphwright::fixtures::{self, TEXT_TO_IMAGE_LINES};
use graphwright::validator::step;
use graphwright::{SchemaRegistry, WorkflowGraph};
use graphwright_cli::service::{self, AppState, StepResponse};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

struct Server {
    base: String,
    client: Client,
}

impl Server {
    async fn start(ttl: Duration) -> Self {
        let registries = SchemaRegistry::bundled_names()
            .iter()
            .map(|n| SchemaRegistry::bundled(n).unwrap())
            .collect();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(service::serve(listener, AppState::new(registries, ttl), std::future::pending()));
        Server {
            base,
            client: Client::new(),
        }
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let res = self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = res.status();
        (status, res.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let res = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = res.status();
        (status, res.json().await.unwrap_or(Value::Null))
    }

    async fn session(&self, schema_id: &str) -> String {
        let (status, v) = self.post("/v1/sessions", json!({ "query": "q", "schema_id": schema_id })).await;
        assert_eq!(status, StatusCode::CREATED);
        v["session_id"].as_str().unwrap().to_string()
    }

    async fn step(&self, id: &str, line: &str) -> (StatusCode, Value) {
        self.post(&format!("/v1/sessions/{id}/step"), json!({ "action_text": line })).await
    }
}

fn sd() -> SchemaRegistry {
    SchemaRegistry::bundled("mini-sd").unwrap()
}

#[tokio::test]
async fn first_step_and_stop_gate() {
    let srv = Server::start(service::DEFAULT_TTL).await;
    let id = srv.session("mini-sd").await;
    let (status, v) = srv.step(&id, TEXT_TO_IMAGE_LINES[0]).await;
    assert_eq!(status, StatusCode::OK);
    let r: StepResponse = serde_json::from_value(v).unwrap();
    assert!(r.accepted);
    assert_eq!(r.step_index, 0);
    assert!(r.diagnostics.is_empty());

    let (_, v) = srv.step(&id, "STOP").await;
    let r: StepResponse = serde_json::from_value(v).unwrap();
    assert!(!r.accepted);
    assert!(!r.terminated);
    assert_eq!(r.step_index, 1);
    assert!(r.diagnostics.iter().any(|d| d.code.as_str() == "NoOutputNode" || d.code.as_str() == "MissingRequiredInput"));
}

#[tokio::test]
async fn stop_on_incomplete_graph_reports_missing_inputs() {
    let srv = Server::start(service::DEFAULT_TTL).await;
    let id = srv.session("mini-sd").await;
    srv.step(&id, "emptylatent_0_latent = EmptyLatent()").await;
    srv.step(&id, "decode_0_image = Decode(samples=emptylatent_0_latent)").await;
    srv.step(&id, "SaveImage(images=decode_0_image)").await;
    let (_, v) = srv.step(&id, "STOP").await;
    assert_eq!(v["accepted"], false);
    assert_eq!(v["terminated"], false);
    let codes: Vec<&str> = v["diagnostics"].as_array().unwrap().iter().map(|d| d["code"].as_str().unwrap()).collect();
    assert!(codes.contains(&"MissingRequiredInput"), "{codes:?}");
}

#[tokio::test]
async fn terminated_sessions_conflict_and_unknown_ones_are_missing() {
    let srv = Server::start(service::DEFAULT_TTL).await;
    let id = srv.session("mini-sd").await;
    for line in TEXT_TO_IMAGE_LINES {
        assert_eq!(srv.step(&id, line).await.1["accepted"], true, "{line}");
    }
    let (_, v) = srv.step(&id, "STOP").await;
    assert_eq!(v["terminated"], true);
    let (status, v) = srv.step(&id, "STOP").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "SessionTerminated");
    // the graph stays readable after termination
    let (status, g) = srv.get(&format!("/v1/sessions/{id}/graph")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(WorkflowGraph::from_json_value(&g, &sd()).unwrap(), fixtures::text_to_image(&sd()));

    let (status, v) = srv.step("no-such-session", "STOP").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "SessionNotFound");
    assert!(v["message"].is_string());
    assert_eq!(srv.get("/v1/sessions/nope/graph").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let srv = Server::start(service::DEFAULT_TTL).await;
    let id = srv.session("mini-sd").await;
    let raw = srv
        .client
        .post(format!("{}/v1/sessions/{id}/step", srv.base))
        .header("content-type", "application/json")
        .body("{\"action_text\": ")
        .send()
        .await
        .unwrap();
    assert_eq!(raw.status(), StatusCode::BAD_REQUEST);
    let v: Value = raw.json().await.unwrap();
    assert_eq!(v["code"], "MalformedBody");

    let (status, v) = srv.post(&format!("/v1/sessions/{id}/step"), json!({ "text": "STOP" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "MalformedBody");
    let (status, _) = srv.post("/v1/sessions", json!({ "schema_id": "mini-sd" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = srv.post("/v1/sessions", json!({ "query": "q", "schema_id": "nope" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "UnknownSchema");

    // a rejected malformed request does not consume a step index
    let (_, v) = srv.step(&id, TEXT_TO_IMAGE_LINES[0]).await;
    assert_eq!(v["step_index"], 0);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let srv = Server::start(service::DEFAULT_TTL).await;
    let r = sd();
    let a = srv.session("mini-sd").await;
    let b = srv.session("mini-sd").await;
    let b_lines = ["emptylatent_0_latent = EmptyLatent()", "decode_0_image = Decode(samples=emptylatent_0_latent)"];
    let mut local_a = WorkflowGraph::empty();
    let mut local_b = WorkflowGraph::empty();
    for (i, line) in TEXT_TO_IMAGE_LINES.iter().enumerate() {
        let (_, va) = srv.step(&a, line).await;
        local_a = step(&local_a, line, &r).graph;
        assert_eq!(va["graph_digest"], local_a.digest().to_string());
        if let Some(line) = b_lines.get(i) {
            let (_, vb) = srv.step(&b, line).await;
            local_b = step(&local_b, line, &r).graph;
            assert_eq!(vb["graph_digest"], local_b.digest().to_string());
            assert_eq!(vb["step_index"], i);
        }
    }
    let (_, ga) = srv.get(&format!("/v1/sessions/{a}/graph")).await;
    let (_, gb) = srv.get(&format!("/v1/sessions/{b}/graph")).await;
    assert_eq!(WorkflowGraph::from_json_value(&ga, &r).unwrap(), local_a);
    assert_eq!(WorkflowGraph::from_json_value(&gb, &r).unwrap(), local_b);
    assert_eq!(gb["schema_id"], "mini-sd");
}

#[tokio::test]
async fn concurrent_steps_on_one_session_are_serialized() {
    let srv = std::sync::Arc::new(Server::start(service::DEFAULT_TTL).await);
    let id = srv.session("mini-sd").await;
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let srv = srv.clone();
            let id = id.clone();
            tokio::spawn(async move { srv.step(&id, "EmptyLatent()").await.1 })
        })
        .collect();
    let mut indices = Vec::new();
    for h in handles {
        let v = h.await.unwrap();
        assert_eq!(v["accepted"], true);
        indices.push(v["step_index"].as_u64().unwrap());
    }
    indices.sort();
    assert_eq!(indices, (0..8).collect::<Vec<_>>());
    let (_, g) = srv.get(&format!("/v1/sessions/{id}/graph")).await;
    assert_eq!(g["nodes"].as_array().unwrap().len(), 8);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let srv = Server::start(Duration::from_millis(300)).await;
    let id = srv.session("mini-sd").await;
    assert_eq!(srv.step(&id, TEXT_TO_IMAGE_LINES[0]).await.0, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(150)).await;
    // activity resets the idle clock
    assert_eq!(srv.get(&format!("/v1/sessions/{id}/graph")).await.0, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(200)).await;
    assert_eq!(srv.get(&format!("/v1/sessions/{id}")).await.0, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(500)).await;
    assert_eq!(srv.step(&id, "STOP").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn delete_removes_the_session() {
    let srv = Server::start(service::DEFAULT_TTL).await;
    let id = srv.session("mini-edit").await;
    let url = format!("{}/v1/sessions/{id}", srv.base);
    assert_eq!(srv.client.delete(&url).send().await.unwrap().status(), StatusCode::NO_CONTENT);
    assert_eq!(srv.client.delete(&url).send().await.unwrap().status(), StatusCode::NOT_FOUND);
    assert_eq!(srv.step(&id, "STOP").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn validate_reward_and_schema_endpoints() {
    let srv = Server::start(service::DEFAULT_TTL).await;
    let r = sd();
    let wf = fixtures::text_to_image(&r).to_json_value(Some("mini-sd"));
    let (status, v) = srv.post("/v1/validate", json!({ "workflow": wf })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({ "executable": true, "diagnostics": [] }));

    let mut open = wf.clone();
    open["edges"] = json!([]);
    let (_, v) = srv.post("/v1/validate", json!({ "workflow": open })).await;
    assert_eq!(v["executable"], false);
    let (status, _) = srv.post("/v1/validate", json!({ "workflow": [1, 2] })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = srv.post("/v1/reward", json!({ "trace": "garbage", "target": wf })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["final"], -1.0);
    assert_eq!(v["r_f"], -1);
    let (status, v) = srv.post("/v1/reward", json!({ "trace": "x", "target": { "nodes": [], "edges": [] } })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "EmptyTarget");

    let (status, v) = srv.get("/v1/schemas/mini-edit").await;
    assert_eq!(status, StatusCode::OK);
    let served = SchemaRegistry::from_json(&v.to_string()).unwrap();
    assert_eq!(served, SchemaRegistry::bundled("mini-edit").unwrap());
    let (status, v) = srv.get("/v1/schemas/unknown").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "UnknownSchema");
}
