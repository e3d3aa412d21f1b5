use std::time::Duration;

use serde_json::{json, Value};
use vestbed_gateway::{server, CommandLink, GatewayStore, HttpLink, SharedStore};

struct Running {
    base: String,
    store: SharedStore,
    _rt: tokio::runtime::Runtime,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

fn start(delay: Duration) -> Running {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let store = SharedStore::new(GatewayStore::new());
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let s = store.clone();
    rt.spawn(async move {
        server::serve(listener, s, delay, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Running {
        base: format!("http://{addr}"),
        store,
        _rt: rt,
        stop: Some(tx),
    }
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::new()
}

#[test]
fn fresh_server_lists_no_robots() {
    let g = start(Duration::ZERO);
    let body: Value = client()
        .get(format!("{}/api/robots", g.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(body, json!([]));
}

#[test]
fn readtouch_replies_one_ff_byte_and_queues_code_six() {
    let g = start(Duration::ZERO);
    let resp = client()
        .get(format!("{}/api/readtouch?robot=hbs2", g.base))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(
        resp.headers()["content-type"].to_str().unwrap(),
        "application/octet-stream"
    );
    assert_eq!(resp.bytes().unwrap().as_ref(), &[0xFF]);
    assert_eq!(g.store.lock().queue_len("hbs2"), 1);

    let cmd: Value = client()
        .get(format!("{}/api/getcommand?robot=hbs2", g.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(cmd["code"], json!(6));
    assert_eq!(cmd["seq"], json!(0));

    let empty = client()
        .get(format!("{}/api/getcommand?robot=hbs2", g.base))
        .send()
        .unwrap();
    assert_eq!(empty.status(), 204);
    assert!(empty.bytes().unwrap().is_empty());
}

#[test]
fn full_round_trip_through_http_link() {
    let g = start(Duration::ZERO);
    let c = client();
    let seq: Value = c
        .post(format!("{}/api/command", g.base))
        .json(&json!({"robot": "hbs2", "code": 3, "args": {"text": "hello"}}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(seq["seq"], json!(0));

    let pending: Value = c
        .get(format!("{}/api/getdata?robot=hbs2&seq=0", g.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(pending["status"], "pending");
    assert_eq!(pending["fetched"], json!(false));

    let mut link = HttpLink::new(&g.base).unwrap();
    let env = link.fetch_command("hbs2", 0.0).unwrap().unwrap();
    assert_eq!(env.args, Some(json!({"text": "hello"})));
    link.post_result("hbs2", env.seq, json!("ok"), 0.0).unwrap();
    assert!(link.post_result("hbs2", env.seq, json!("ok"), 0.0).is_err());

    let done: Value = c
        .get(format!("{}/api/getdata?robot=hbs2&seq=0", g.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(done["status"], "complete");
    assert_eq!(done["data"], json!("ok"));
    let issued = done["issued_at"].as_f64().unwrap();
    let fetched = done["fetched_at"].as_f64().unwrap();
    let completed = done["completed_at"].as_f64().unwrap();
    assert!(issued <= fetched && fetched <= completed);

    let missing = c
        .get(format!("{}/api/getdata?robot=hbs2&seq=5", g.base))
        .send()
        .unwrap();
    assert_eq!(missing.status(), 404);
}

#[test]
fn unknown_code_is_a_client_error() {
    let g = start(Duration::ZERO);
    let resp = client()
        .post(format!("{}/api/command", g.base))
        .json(&json!({"robot": "hbs2", "code": 99}))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 400);
    let body: Value = resp.json().unwrap();
    assert!(body["error"].as_str().unwrap().contains("99"));
}

#[test]
fn injected_delay_applies_both_ways() {
    let g = start(Duration::from_millis(100));
    let t0 = std::time::Instant::now();
    client()
        .get(format!("{}/api/robots", g.base))
        .send()
        .unwrap();
    assert!(t0.elapsed() >= Duration::from_millis(200));
}

#[test]
fn second_bind_on_same_port_fails() {
    let first = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = first.local_addr().unwrap().port();
    assert!(std::net::TcpListener::bind(("127.0.0.1", port)).is_err());
}
