use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

fn vestbed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vestbed"))
        .args(args)
        .env_remove("VESTBED_PORT")
        .output()
        .expect("spawn vestbed")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("s.scn");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn run_report(text: &str, duration: &str) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), text);
    let out = vestbed(&["run", "--scenario", &s, "--duration", duration]);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn empty_scenario_publishes_once_per_second() {
    let r = run_report("# nothing happens\n", "10");
    assert_eq!(r["topics"]["tpc_touch"], 10);
    assert_eq!(r["transcript"], json!([]));
    assert_eq!(r["duration"], 10.0);
    assert_eq!(r["seed"], 0);
}

#[test]
fn hug_scenario_reply_follows_within_a_tick() {
    let r = run_report("at 5 force left 3\nat 5 force right 3\n", "8");
    let said = &r["transcript"][0];
    assert_eq!(said["text"], "Thank you for the hug");
    let t = said["t"].as_f64().unwrap();
    assert!((5.0..5.01).contains(&t), "{t}");
    assert_eq!(r["latency"]["hug"]["n"], 1);
}

#[test]
fn dialogue_through_the_command_line() {
    let r = run_report("at 2 say \"what is your name\"\n", "4");
    assert_eq!(r["transcript"], json!([{"t": 2.0, "text": "My name is H B S 2"}]));
}

#[test]
fn report_keys_are_sorted_at_every_level() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "at 1 touch on 0\nat 1.5 remote 6\n");
    let out = vestbed(&["run", "--scenario", &s, "--duration", "4"]);
    let text = stdout(&out);
    // with pretty printing, sibling keys share an indent; check each run of them
    let mut last: Vec<Option<String>> = vec![None; 16];
    for line in text.lines() {
        let indent = line.len() - line.trim_start().len();
        let depth = indent / 2;
        let trimmed = line.trim_start();
        if trimmed.starts_with('}') || trimmed.starts_with(']') {
            last[depth + 1] = None;
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('"') {
            if let Some((key, _)) = rest.split_once("\": ") {
                if let Some(prev) = &last[depth] {
                    assert!(prev.as_str() < key, "{prev} before {key}");
                }
                last[depth] = Some(key.to_string());
            }
        }
    }
    let r: Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = r.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        ["bus_transactions", "duration", "latency", "scenario", "seed", "services", "topics", "transcript"]
    );
    assert_eq!(r["latency"]["touch_remote"]["n"], 1);
}

#[test]
fn output_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "at 1 touch on 0\n");
    let report = dir.path().join("r.json");
    let log = dir.path().join("run.log");
    let transcript = dir.path().join("t.json");
    let out = vestbed(&[
        "run",
        "--scenario",
        &s,
        "--duration",
        "3",
        "--report",
        report.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let t: Value = serde_json::from_str(&std::fs::read_to_string(&transcript).unwrap()).unwrap();
    // a change at exactly t=1 is visible to the tick at t=1
    assert_eq!(t, json!([{"t": 1.00036, "text": "thank you"}]));
    let log = std::fs::read_to_string(&log).unwrap();
    assert!(log.lines().any(|l| l.contains("\tSCENARIO\tline 1\ttouch on 0")));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["topics"]["tpc_touch"], 3);
}

#[test]
fn custom_dialogue_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "at 1 say \"good morning\"\n");
    let db = dir.path().join("config.txt");
    std::fs::write(&db, "good morning => Good morning to you\n").unwrap();
    let out = vestbed(&["run", "--scenario", &s, "--duration", "2", "--dialogue", db.to_str().unwrap()]);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["transcript"][0]["text"], "Good morning to you");
}

#[test]
fn exit_codes() {
    assert_eq!(vestbed(&["run"]).status.code(), Some(1), "missing --scenario");
    assert_eq!(vestbed(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vestbed(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "at 1 touch on 0\n");
    let out = vestbed(&["run", "--scenario", &s, "--duration", "-3"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));

    let bad = scenario(dir.path(), "at 1 touch on 0\nat 2 dance\n");
    let out = vestbed(&["run", "--scenario", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = vestbed(&["run", "--scenario", "/nonexistent/s.scn"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn classify_with_generated_weights() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.bin");
    let w = weights.to_str().unwrap();
    assert!(vestbed(&["gen-weights", "--seed", "3", "--out", w]).status.success());

    let image = dir.path().join("hand.pgm");
    let img = vestbed_vision::Image::from_fn(640, 360, 1, |x, y, _| {
        if (x as i32 - 320).abs() < 30 && (y as i32 - 170).abs() < 50 { 220.0 } else { 60.0 }
    });
    vestbed_vision::write_pgm(&image, &img).unwrap();
    let i = image.to_str().unwrap();

    let a = vestbed(&["classify", "--image", i, "--weights", w]);
    assert!(a.status.success(), "{}", stderr(&a));
    let line = stdout(&a);
    assert!(line.starts_with("class=") && line.contains("probs=["), "{line}");
    let b = vestbed(&["classify", "--image", i, "--weights", w]);
    assert_eq!(stdout(&a), stdout(&b));

    let v = vestbed(&["classify", "--image", i, "--weights", w, "--verbose"]);
    let lines: Vec<String> = stdout(&v).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 17);
    assert!(lines[0].contains("128 x 128 x 1") && lines[0].contains("128 x 128 x 8"));
    assert!(lines[15].contains("1 x 1 x 6"));

    let bytes = std::fs::read(&weights).unwrap();
    std::fs::write(&weights, &bytes[..bytes.len() - 40]).unwrap();
    let t = vestbed(&["classify", "--image", i, "--weights", w]);
    assert_eq!(t.status.code(), Some(2));
    assert!(stderr(&t).contains("expected") && stderr(&t).contains("floats"), "{}", stderr(&t));
}

#[test]
fn latency_table_has_every_category() {
    let out = vestbed(&["latency", "--polls", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let table = r["latency"].as_object().unwrap();
    for cat in ["touch", "hug", "shake_head", "temperature", "ultrasound", "tts", "touch_remote"] {
        assert_eq!(table[cat]["n"], 3, "{cat}");
    }
    // touch reaction bounded by one publisher period
    assert!(table["touch"]["median"].as_f64().unwrap() <= 1.0);
    // shake head bounded by two poll periods
    assert!(table["shake_head"]["median"].as_f64().unwrap() <= 2.0);
    assert_eq!(vestbed(&["latency", "--polls", "0"]).status.code(), Some(1));
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_gateway(args: &[&str], port_env: Option<&str>) -> (Child, u16) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vestbed"));
    cmd.arg("gateway").args(args).stdout(Stdio::piped()).stderr(Stdio::null());
    match port_env {
        Some(p) => cmd.env("VESTBED_PORT", p),
        None => cmd.env_remove("VESTBED_PORT"),
    };
    let mut child = cmd.spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let port = line.trim().rsplit(':').next().unwrap().parse().unwrap();
    (Child(child), port)
}

#[test]
fn gateway_serves_and_refuses_a_taken_port() {
    let (_g, port) = spawn_gateway(&["--port", "0"], None);
    let base = format!("http://127.0.0.1:{port}");
    let http = reqwest::blocking::Client::new();
    let robots = http.get(format!("{base}/api/robots")).send().unwrap().text().unwrap();
    assert_eq!(serde_json::from_str::<Value>(&robots).unwrap(), json!([]));

    let touch = http.get(format!("{base}/api/readtouch")).send().unwrap().bytes().unwrap();
    assert_eq!(touch.as_ref(), [0xFF]);
    let cmd = http.get(format!("{base}/api/getcommand?robot=hbs2")).send().unwrap().text().unwrap();
    let cmd: Value = serde_json::from_str(&cmd).unwrap();
    assert_eq!(cmd["code"], 6);

    let second = vestbed(&["gateway", "--port", &port.to_string()]);
    assert_eq!(second.status.code(), Some(2));
    assert!(stderr(&second).contains("cannot bind"), "{}", stderr(&second));
}

#[test]
fn gateway_port_from_environment() {
    let (_g, port) = spawn_gateway(&[], Some("0"));
    assert_ne!(port, 0);
    let out = Command::new(env!("CARGO_BIN_EXE_vestbed"))
        .args(["gateway"])
        .env("VESTBED_PORT", "not-a-port")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
