use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::time::{Duration, Instant};

use afroforge_core::corpus::{Gender, Manifest, UtteranceRecord};
use afroforge_core::dsp::{wav, AudioBuffer};
use afroforge_core::enhance::{
    call_score, enhance_manifest, produce_candidates, Adapter, AdapterError, AdapterKind, AdapterSpec,
    CandidateLabel, HttpAdapter, Registry, SubprocessAdapter,
};

fn sh(script: &str) -> Vec<String> {
    vec!["sh".into(), "-c".into(), script.into()]
}

fn tone_wav(n: usize) -> Vec<u8> {
    let samples = (0..n).map(|i| 0.3 * (i as f32 * 0.2).sin()).collect();
    wav::encode_wav(&AudioBuffer::new(samples, 16000).unwrap()).unwrap()
}

fn spec(name: &str, kind: AdapterKind, endpoint: &str, timeout_s: f64) -> AdapterSpec {
    AdapterSpec {
        name: name.into(),
        kind,
        endpoint: endpoint.into(),
        timeout_s,
    }
}

#[test]
fn subprocess_echo_and_mode_passing() {
    let a = SubprocessAdapter::new("cat", sh("cat"), Duration::from_secs(10));
    let input = tone_wav(1000);
    assert_eq!(a.call(&input, None).unwrap(), input);

    let a = SubprocessAdapter::new(
        "mode",
        sh("cat >/dev/null; printf '{\"score\": %s.5}' \"$AFROFORGE_MODE\""),
        Duration::from_secs(10),
    );
    assert_eq!(a.call(&input, Some(2)).unwrap(), b"{\"score\": 2.5}");

    let a = SubprocessAdapter::new(
        "argv",
        vec!["sh".into(), "-c".into(), "cat >/dev/null; echo \"{\\\"score\\\": $0}\"".into(), "4{mode}".into()],
        Duration::from_secs(10),
    );
    assert_eq!(a.call(&input, Some(1)).unwrap(), b"{\"score\": 41}\n");
}

#[test]
fn subprocess_failure_and_timeout() {
    let input = tone_wav(100);
    let a = SubprocessAdapter::new("fail", sh("echo broken >&2; exit 3"), Duration::from_secs(10));
    match a.call(&input, None) {
        Err(AdapterError::Failed { message, .. }) => assert!(message.contains("broken"), "{message}"),
        other => panic!("{other:?}"),
    }
    let a = SubprocessAdapter::new("slow", sh("exec sleep 5"), Duration::from_millis(200));
    let t = Instant::now();
    assert!(matches!(a.call(&input, None), Err(AdapterError::Timeout { .. })));
    assert!(t.elapsed() < Duration::from_secs(3));
    let a = SubprocessAdapter::new("missing", vec!["/nonexistent/tool".into()], Duration::from_secs(1));
    assert!(matches!(a.call(&input, None), Err(AdapterError::Failed { .. })));
}

/// One-shot HTTP server that records the request line and replies with `body`.
fn serve_once(body: &'static [u8]) -> (String, std::thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/score", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut len = 0usize;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h).unwrap();
            if h == "\r\n" {
                break;
            }
            if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut payload = vec![0; len];
        reader.read_exact(&mut payload).unwrap();
        let mut stream = stream;
        write!(stream, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len()).unwrap();
        stream.write_all(body).unwrap();
        request_line
    });
    (url, handle)
}

#[test]
fn http_adapter_posts_wav_and_passes_mode() {
    let (url, handle) = serve_once(b"{\"score\": 3.75}");
    let a = HttpAdapter::new("q", url, Duration::from_secs(10));
    assert_eq!(a.call(&tone_wav(500), Some(1)).unwrap(), b"{\"score\": 3.75}");
    let line = handle.join().unwrap();
    assert!(line.starts_with("POST /score?mode=1 "), "{line}");

    let (url, _h) = serve_once(b"{\"score\": 2.0}");
    let a = HttpAdapter::new("q", url, Duration::from_secs(10));
    assert_eq!(call_score(&a, &tone_wav(500)).unwrap(), 2.0);
}

#[test]
fn http_adapter_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/slow", listener.local_addr().unwrap());
    let _hold = std::thread::spawn(move || {
        let conn = listener.accept();
        std::thread::sleep(Duration::from_secs(3));
        drop(conn);
    });
    let a = HttpAdapter::new("slow", url, Duration::from_millis(300));
    assert!(matches!(a.call(&tone_wav(10), None), Err(AdapterError::Timeout { .. })));
}

fn fixture(dir: &Path, n: usize) -> Manifest {
    let records = (0..n)
        .map(|i| {
            let name = format!("src{i}.wav");
            std::fs::write(dir.join(&name), tone_wav(4000 + 100 * i)).unwrap();
            UtteranceRecord {
                utterance_id: format!("u{i}"),
                speaker_id: "s".into(),
                country: "NG".into(),
                accent: "yoruba".into(),
                gender: Gender::Female,
                age_group: String::new(),
                text: "t".into(),
                audio_path: name,
                duration_s: (4000 + 100 * i) as f64 / 16000.0,
                sample_rate_hz: 16000,
                replica: None,
            }
        })
        .collect();
    Manifest::new(records, "mem").unwrap().with_base_dir(dir)
}

#[test]
fn restorer_mode_timeout_leaves_absent_slot() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), 1);
    let restorer = "sh -c 'if [ \"$AFROFORGE_MODE\" = 2 ]; then exec sleep 5; else cat; fi'";
    let reg = Registry::from_specs(vec![
        spec("d", AdapterKind::Denoiser, "mock:identity", 10.0),
        spec("r", AdapterKind::Restorer, restorer, 0.5),
        spec("q", AdapterKind::QualityEstimator, "mock:flatness", 10.0),
    ])
    .unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    let source = m.resolve_audio(&m.records[0]);
    let before = std::fs::read(&source).unwrap();
    let set = produce_candidates("u0", &source, &reg, &out).unwrap();
    let present: Vec<_> = set.present().map(|c| c.label).collect();
    assert_eq!(present, [CandidateLabel::Denoised, CandidateLabel::Mode0, CandidateLabel::Mode1]);
    assert!(set.candidates[3].note.as_deref().unwrap().contains("timed out"));
    assert_eq!(std::fs::read(&source).unwrap(), before);
}

#[test]
fn denoiser_failure_skips_utterance_only() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), 3);
    std::fs::write(dir.path().join("src1.wav"), b"garbage").unwrap();
    let out = dir.path().join("out");
    let outcome = enhance_manifest(&m, &Registry::mock(), &out, 2).unwrap();
    assert_eq!(outcome.manifest.len(), 2);
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].utterance_id, "u1");
    for r in &outcome.manifest.records {
        assert!(outcome.manifest.resolve_audio(r).is_file());
    }
}

#[test]
fn mock_orchestration_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), 6);
    let run = |name: &str, workers| {
        let out = dir.path().join(name);
        let o = enhance_manifest(&m, &Registry::mock(), &out, workers).unwrap();
        let mut files: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        let bytes: Vec<_> = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
            .collect();
        (serde_json::to_string(&o.sets).unwrap(), o.selected, bytes)
    };
    let a = run("a", 1);
    let b = run("b", 4);
    assert_eq!(a, b);
    assert_eq!(a.2.len(), 6 * 4);
}
