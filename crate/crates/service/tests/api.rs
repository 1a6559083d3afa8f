use std::path::PathBuf;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use guiliner_core::runner::{RunOptions, RunStatus, Stream};
use guiliner_core::xml::{parse_spec, SpecDocument};
use guiliner_service::{build_router, parse_sse, AppState, RunEvent, SessionResource};

const SH_SPEC: &str = r#"<?xml version="1.0"?>
<guiliner version="1.0">
  <program name="shell" executable="sh" version="1"><description>Runs a script.</description></program>
  <group name="Script">
    <option id="script" kind="string" flag="-c" required="true"><label>Script</label><doc>Shell code.</doc></option>
    <option id="theta" kind="float" flag="-t"><label>Theta</label><range min="0" max="10"/></option>
    <option id="tag" kind="string" flag="-T" repeatable="true"/>
  </group>
</guiliner>
"#;

fn app_with(cwd: PathBuf) -> (AppState, Router) {
    let doc = parse_spec(SH_SPEC.as_bytes()).unwrap();
    let opts = RunOptions {
        kill_grace: Duration::from_millis(500),
        ..RunOptions::default()
    };
    let app = AppState::new(doc, cwd, opts).unwrap();
    let router = build_router(app.clone());
    (app, router)
}

fn app() -> (AppState, Router) {
    app_with(std::env::temp_dir())
}

async fn call(router: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(router: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(router, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn set(router: &Router, id: &str, raw: &str) -> (StatusCode, Value) {
    call_json(router, "PUT", &format!("/api/options/{id}/value"), Some(json!({ "raw": raw }))).await
}

async fn events(router: &Router, run_id: &str) -> Vec<(Option<u64>, RunEvent)> {
    let (status, body) = call(router, "GET", &format!("/api/runs/{run_id}/events"), None).await;
    assert_eq!(status, StatusCode::OK);
    parse_sse(&String::from_utf8(body).unwrap()).unwrap()
}

#[tokio::test]
async fn fresh_session_resource() {
    let (_, router) = app();
    let (status, v) = call_json(&router, "GET", "/api/session", None).await;
    assert_eq!(status, StatusCode::OK);
    let res: SessionResource = serde_json::from_value(v).unwrap();
    let states: Vec<&str> = res.options.iter().map(|o| o.state.as_str()).collect();
    assert_eq!(states, ["required-unset", "optional-unset", "optional-unset"]);
    assert_eq!(res.spec.executable, "sh");
    assert!(res.active_run.is_none());
}

#[tokio::test]
async fn set_and_clear_values() {
    let (_, router) = app();
    let (status, v) = set(&router, "theta", "4.0").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["state"], "set");
    assert_eq!(v["value"], "4");

    let (status, v) = set(&router, "theta", "11").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "ValueError");
    assert_eq!(v["id"], "theta");

    let (status, v) = set(&router, "nope", "1").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "UnknownOption");

    set(&router, "tag", "a").await;
    let (_, v) = set(&router, "tag", "b").await;
    assert_eq!(v["values"], json!(["a", "b"]));
    assert!(v.get("value").is_none());

    let (status, v) = call_json(&router, "DELETE", "/api/options/theta/value", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["state"], "optional-unset");

    let (_, v) = call_json(&router, "POST", "/api/reset", None).await;
    assert!(v["options"].as_array().unwrap().iter().all(|o| o["state"] != "set"));
}

#[tokio::test]
async fn preview_and_missing_required() {
    let (_, router) = app();
    set(&router, "theta", "2.5").await;
    let (_, v) = call_json(&router, "GET", "/api/preview", None).await;
    assert_eq!(v["missing"], json!(["script"]));
    assert_eq!(v["text"], "sh -t 2.5\nMISSING REQUIRED: script");
    assert!(v.get("argv").is_none());

    let (status, v) = call_json(&router, "POST", "/api/run", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "MissingRequired");
    assert_eq!(v["missing"], json!(["script"]));

    set(&router, "script", "echo 'hi there'").await;
    let (_, v) = call_json(&router, "GET", "/api/preview", None).await;
    assert_eq!(v["text"], r#"sh -c 'echo '\''hi there'\''' -t 2.5"#);
    assert_eq!(v["argv"], json!(["sh", "-c", "echo 'hi there'", "-t", "2.5"]));
}

#[tokio::test]
async fn run_events_reconstruct_transcripts() {
    let (app, router) = app();
    let script = "i=0; while [ $i -lt 300 ]; do echo out-$i; echo err-$i >&2; i=$((i+1)); done; exit 3";
    set(&router, "script", script).await;
    let (status, v) = call_json(&router, "POST", "/api/run", None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let run_id = v["run_id"].as_str().unwrap().to_string();

    let evs = events(&router, &run_id).await;
    let record = app.run_record(&run_id).unwrap();
    assert_eq!(record.status, RunStatus::Exited { code: 3 });

    let ids: Vec<u64> = evs.iter().map(|(id, _)| id.unwrap()).collect();
    assert_eq!(ids, (0..evs.len() as u64).collect::<Vec<_>>());
    assert!(matches!(evs.first().unwrap().1, RunEvent::Status { status: RunStatus::Running, .. }));
    let (_, last) = evs.last().unwrap();
    assert_eq!(
        last,
        &RunEvent::Status {
            status: RunStatus::Exited { code: 3 },
            error_notice: true
        }
    );
    for stream in [Stream::Stdout, Stream::Stderr] {
        let mut bytes = Vec::new();
        let mut next_seq = 0;
        for (_, ev) in &evs {
            if let RunEvent::Chunk { stream: s, seq, .. } = ev {
                if *s == stream {
                    assert_eq!(*seq, next_seq);
                    next_seq += 1;
                    bytes.extend(ev.bytes().unwrap());
                }
            }
        }
        assert_eq!(bytes, record.bytes(stream), "{stream:?}");
        let (status, body) = call(&router, "GET", &format!("/api/runs/{run_id}/output?stream={}", stream.as_str()), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, bytes);
    }
    let out = String::from_utf8(record.bytes(Stream::Stdout)).unwrap();
    assert!(out.starts_with("out-0\n") && out.ends_with("out-299\n"));

    let (_, summary) = call_json(&router, "GET", &format!("/api/runs/{run_id}"), None).await;
    assert_eq!(summary["status"], json!({"state": "exited", "code": 3}));
    assert_eq!(summary["error_notice"], true);

    // The session is released once the terminal event has been published.
    assert!(app.session().active_run().is_none());
    let (status, _) = set(&router, "theta", "1").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn resume_with_last_event_id() {
    let (_, router) = app();
    set(&router, "script", "echo one; echo two >&2").await;
    let (_, v) = call_json(&router, "POST", "/api/run", None).await;
    let run_id = v["run_id"].as_str().unwrap().to_string();
    let all = events(&router, &run_id).await;

    let req = Request::builder()
        .uri(format!("/api/runs/{run_id}/events"))
        .header("last-event-id", "0")
        .body(Body::empty())
        .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    let resumed = parse_sse(std::str::from_utf8(&body).unwrap()).unwrap();
    assert_eq!(resumed, all[1..].to_vec());
}

#[tokio::test]
async fn mutations_are_refused_while_running_and_kill_works() {
    let (app, router) = app();
    set(&router, "script", "echo started; exec sleep 30").await;
    let (_, v) = call_json(&router, "POST", "/api/run", None).await;
    let run_id = v["run_id"].as_str().unwrap().to_string();

    let (status, v) = set(&router, "theta", "1").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "MutationDuringRun");
    let (status, v) = call_json(&router, "POST", "/api/run", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "RunAlreadyActive");

    // Wait for the marker so the kill happens after output was produced.
    for _ in 0..200 {
        if !app.run_record(&run_id).unwrap().console_transcript.is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let (status, v) = call_json(&router, "POST", &format!("/api/runs/{run_id}/kill"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], json!({"state": "killed"}));
    let record = app.run_record(&run_id).unwrap();
    assert_eq!(record.bytes(Stream::Stdout), b"started\n");

    let (status, v) = call_json(&router, "POST", &format!("/api/runs/{run_id}/kill"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "AlreadyTerminated");

    let evs = events(&router, &run_id).await;
    assert!(evs.last().unwrap().1.is_terminal());
    let (status, _) = set(&router, "theta", "1").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn unknown_runs_and_bad_streams() {
    let (_, router) = app();
    let (status, v) = call_json(&router, "GET", "/api/runs/none/events", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "UnknownRun");
    set(&router, "script", "true").await;
    let (_, v) = call_json(&router, "POST", "/api/run", None).await;
    let run_id = v["run_id"].as_str().unwrap().to_string();
    let (status, v) = call_json(&router, "GET", &format!("/api/runs/{run_id}/output?stream=stdin"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "BadRequest");
}

#[tokio::test]
async fn export_reloads_to_the_same_session() {
    let (app, router) = app();
    set(&router, "script", "echo \"x\" && echo <y>").await;
    set(&router, "theta", "0.125").await;
    set(&router, "tag", "one").await;
    set(&router, "tag", "two words").await;
    let (status, xml) = call(&router, "GET", "/api/spec/export", None).await;
    assert_eq!(status, StatusCode::OK);
    let doc: SpecDocument = parse_spec(&xml).unwrap();
    let reloaded = doc.session(app.session().working_dir()).unwrap();
    assert_eq!(reloaded, app.session());
}

#[tokio::test]
async fn doc_endpoint() {
    let (_, router) = app();
    let (status, v) = call_json(&router, "GET", "/api/doc/script", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({"id": "script", "label": "Script", "doc": "Shell code."}));
    let (status, _) = call_json(&router, "GET", "/api/doc/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reads_do_not_mutate() {
    let (app, router) = app();
    set(&router, "theta", "3").await;
    let before = app.session();
    for uri in ["/api/session", "/api/preview", "/api/spec/export", "/api/doc/theta"] {
        call(&router, "GET", uri, None).await;
    }
    assert_eq!(app.session(), before);
}

#[tokio::test]
async fn missing_input_file_is_a_setup_error() {
    let spec = r#"<guiliner version="1.0"><program name="c" executable="cat"/>
      <group name="g"><option id="in" kind="infile" required="true"/></group></guiliner>"#;
    let doc = parse_spec(spec.as_bytes()).unwrap();
    let app = AppState::new(doc, std::env::temp_dir(), RunOptions::default()).unwrap();
    let router = build_router(app);
    set(&router, "in", "definitely-not-here.txt").await;
    let (status, v) = call_json(&router, "POST", "/api/run", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "InputFileMissing");
}
