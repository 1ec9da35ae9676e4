use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_afroforge");

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(dir: &Path) -> Server {
    let mut child = Command::new(BIN)
        .args(["serve", "--port", "0", "--tasks", "tasks.jsonl", "--log", "events.jsonl"])
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    Server { child, base }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn get(s: &Server, path: &str) -> (u16, Vec<u8>) {
    let mut r = agent().get(format!("{}{path}", s.base)).call().unwrap();
    let status = r.status().as_u16();
    (status, r.body_mut().read_to_vec().unwrap())
}

fn post(s: &Server, path: &str, body: Value) -> (u16, Value) {
    let mut r = agent()
        .post(format!("{}{path}", s.base))
        .header("content-type", "application/json")
        .send(body.to_string())
        .unwrap();
    let status = r.status().as_u16();
    (status, serde_json::from_slice(&r.body_mut().read_to_vec().unwrap()).unwrap())
}

fn utt(id: &str, model: &str, country: &str, text: &str) -> Value {
    json!({"utterance_id": id, "model": model, "text": text, "audio_path": format!("{id}.wav"),
           "accent": "yoruba", "country": country, "gender": "female"})
}

fn fixture(dir: &Path) {
    let tasks = [
        json!({"task_id": "t-mos", "kind": "mos", "utterances": [utt("u1", "XTTS-FT", "NG", "hello")],
               "dimensions": ["overall", "naturalness"]}),
        json!({"task_id": "t-acc", "kind": "accent_match", "utterances": [utt("u2", "XTTS-FT", "ZA", "hi")],
               "dimensions": ["accent_match"]}),
        json!({"task_id": "t-pref", "kind": "preference",
               "utterances": [utt("p1", "VITS-FT", "NG", "same"), utt("p2", "XTTS-FT", "NG", "same")],
               "dimensions": ["overall"]}),
    ];
    let body: Vec<String> = tasks.iter().map(Value::to_string).collect();
    std::fs::write(dir.join("tasks.jsonl"), body.join("\n")).unwrap();
    std::fs::write(dir.join("u1.wav"), b"RIFF-u1").unwrap();
}

#[test]
fn rating_flow_over_http() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let s = start(dir.path());

    let (status, reg) = post(&s, "/api/raters", json!({"country": "NG", "accent": "yoruba", "gender": "male"}));
    assert_eq!(status, 201);
    let rater = reg["rater_id"].as_str().unwrap().to_string();

    let (status, _) = get(&s, "/api/tasks/next?rater=unknown");
    assert_eq!(status, 404);

    // Least-rated first, and the ZA accent_match task is never offered to an NG rater.
    let mut seen = Vec::new();
    for _ in 0..2 {
        let (status, body) = get(&s, &format!("/api/tasks/next?rater={rater}"));
        assert_eq!(status, 200);
        let view: Value = serde_json::from_slice(&body).unwrap();
        assert!(!String::from_utf8_lossy(&body).contains("XTTS"), "model leaked: {view}");
        let id = view["task_id"].as_str().unwrap().to_string();
        let sub = if id == "t-pref" {
            json!({"task_id": id, "rater_id": rater, "chosen_side": "right", "timestamp_ms": 1})
        } else {
            assert_eq!(view["utterances"][0]["audio_url"], "/api/audio/u1");
            let (status, err) = post(
                &s,
                "/api/ratings",
                json!({"task_id": id, "rater_id": rater, "values": {"overall": 4.5, "naturalness": 4}}),
            );
            assert_eq!(status, 422, "{err}");
            json!({"task_id": id, "rater_id": rater, "values": {"overall": 4, "naturalness": 5}, "timestamp_ms": 1})
        };
        let (status, ack) = post(&s, "/api/ratings", sub);
        assert_eq!(status, 200, "{ack}");
        assert_eq!(ack["replaced"], false);
        seen.push(id);
    }
    seen.sort();
    assert_eq!(seen, ["t-mos", "t-pref"]);
    let (status, _) = get(&s, &format!("/api/tasks/next?rater={rater}"));
    assert_eq!(status, 404);

    let (status, err) = post(
        &s,
        "/api/ratings",
        json!({"task_id": "t-acc", "rater_id": rater, "values": {"accent_match": 3}}),
    );
    assert_eq!(status, 403, "{err}");

    let (status, ack) = post(
        &s,
        "/api/ratings",
        json!({"task_id": "t-mos", "rater_id": rater, "values": {"overall": 2, "naturalness": 5}, "timestamp_ms": 2}),
    );
    assert_eq!(status, 200);
    assert_eq!(ack["replaced"], true);

    let (status, audio) = get(&s, "/api/audio/u1");
    assert_eq!(status, 200);
    assert_eq!(audio, b"RIFF-u1");
    assert_eq!(get(&s, "/api/audio/zzz").0, 404);

    let (status, results) = get(&s, "/api/results?group_by=model");
    assert_eq!(status, 200);
    let report: Value = serde_json::from_slice(&results).unwrap();
    let overall = report["mos"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["dimension"] == "overall")
        .unwrap();
    assert_eq!(overall["mean"], 2.0);
    assert_eq!(report["preference"][0]["leaderboard"][0]["model"], "XTTS-FT");
    assert_eq!(get(&s, "/api/results?group_by=bogus").0, 400);
    drop(s);

    // A restarted service replays the log and reports the same results.
    let s = start(dir.path());
    assert_eq!(get(&s, "/api/results?group_by=model").1, results);
    assert!(dir.path().join("events.audit.jsonl").is_file());
}
