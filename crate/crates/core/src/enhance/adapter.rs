//! Adapter transports: subprocess, HTTP and in-process mocks.
//!
//! Every adapter takes WAV bytes and returns either WAV bytes or a one-line
//! JSON document. A restorer's processing mode travels as the
//! `AFROFORGE_MODE` environment variable and a `{mode}` placeholder in argv
//! for subprocesses, and as a `mode` query parameter for HTTP.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use thiserror::Error;

use super::mock::MockKind;
use crate::dsp::{wav, AudioBuffer};

pub const MODE_ENV: &str = "AFROFORGE_MODE";

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter '{name}' timed out after {seconds} s")]
    Timeout { name: String, seconds: f64 },
    #[error("adapter '{name}' failed: {message}")]
    Failed { name: String, message: String },
    #[error("adapter '{name}' returned malformed output: {message}")]
    Protocol { name: String, message: String },
}

pub trait Adapter: Send + Sync {
    fn name(&self) -> &str;
    fn call(&self, input: &[u8], mode: Option<u8>) -> Result<Vec<u8>, AdapterError>;
}

fn protocol(name: &str, message: impl ToString) -> AdapterError {
    AdapterError::Protocol {
        name: name.to_string(),
        message: message.to_string(),
    }
}

fn failed(name: &str, message: impl ToString) -> AdapterError {
    AdapterError::Failed {
        name: name.to_string(),
        message: message.to_string(),
    }
}

/// Calls an audio-to-audio adapter and checks that the reply decodes.
pub fn call_audio(
    a: &dyn Adapter,
    input: &[u8],
    mode: Option<u8>,
) -> Result<(Vec<u8>, AudioBuffer), AdapterError> {
    let out = a.call(input, mode)?;
    let audio = wav::decode_wav(&out).map_err(|e| protocol(a.name(), e))?;
    Ok((out, audio))
}

fn call_json<T: for<'de> Deserialize<'de>>(a: &dyn Adapter, input: &[u8]) -> Result<T, AdapterError> {
    let out = a.call(input, None)?;
    serde_json::from_slice(&out).map_err(|e| protocol(a.name(), e))
}

/// Calls a quality estimator expecting `{"score": <real>}`.
pub fn call_score(a: &dyn Adapter, input: &[u8]) -> Result<f64, AdapterError> {
    #[derive(Deserialize)]
    struct Reply {
        score: f64,
    }
    let r: Reply = call_json(a, input)?;
    if !r.score.is_finite() {
        return Err(protocol(a.name(), "score is not finite"));
    }
    Ok(r.score)
}

/// Calls an embedder expecting `{"embedding": [<real>, ...]}`.
pub fn call_embedding(a: &dyn Adapter, input: &[u8]) -> Result<Vec<f64>, AdapterError> {
    #[derive(Deserialize)]
    struct Reply {
        embedding: Vec<f64>,
    }
    call_json::<Reply>(a, input).map(|r| r.embedding)
}

/// Calls an ASR adapter expecting `{"text": "<hypothesis>"}`.
pub fn call_transcript(a: &dyn Adapter, input: &[u8]) -> Result<String, AdapterError> {
    #[derive(Deserialize)]
    struct Reply {
        text: String,
    }
    call_json::<Reply>(a, input).map(|r| r.text)
}

/// Runs a command per call, WAV on stdin, reply on stdout.
pub struct SubprocessAdapter {
    name: String,
    argv: Vec<String>,
    timeout: Duration,
}

impl SubprocessAdapter {
    pub fn new(name: impl Into<String>, argv: Vec<String>, timeout: Duration) -> Self {
        SubprocessAdapter {
            name: name.into(),
            argv,
            timeout,
        }
    }
}

impl Adapter for SubprocessAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn call(&self, input: &[u8], mode: Option<u8>) -> Result<Vec<u8>, AdapterError> {
        let mode_str = mode.map(|m| m.to_string()).unwrap_or_default();
        let mut argv = self.argv.iter().map(|a| a.replace("{mode}", &mode_str));
        let program = argv.next().ok_or_else(|| failed(&self.name, "empty command"))?;
        let mut cmd = Command::new(&program);
        cmd.args(argv)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        match mode {
            Some(_) => cmd.env(MODE_ENV, &mode_str),
            None => cmd.env_remove(MODE_ENV),
        };
        let mut child = cmd
            .spawn()
            .map_err(|e| failed(&self.name, format!("cannot start '{program}': {e}")))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let payload = input.to_vec();
        // A child that exits without draining stdin is not an error here.
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let deadline = Instant::now() + self.timeout;
        let mut pause = Duration::from_millis(1);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(AdapterError::Timeout {
                        name: self.name.clone(),
                        seconds: self.timeout.as_secs_f64(),
                    });
                }
                Ok(None) => {
                    thread::sleep(pause);
                    pause = (pause * 2).min(Duration::from_millis(20));
                }
                Err(e) => return Err(failed(&self.name, e)),
            }
        };
        let _ = writer.join();
        let out = reader
            .join()
            .expect("reader thread")
            .map_err(|e| failed(&self.name, e))?;
        let err_text = err_reader.join().unwrap_or_default();
        if !status.success() {
            let detail = err_text.lines().last().unwrap_or("").trim().to_string();
            return Err(failed(&self.name, format!("exited with {status}: {detail}")));
        }
        Ok(out)
    }
}

/// POSTs the WAV bytes to a URL and returns the response body.
pub struct HttpAdapter {
    name: String,
    url: String,
    timeout: Duration,
    agent: ureq::Agent,
}

const MAX_REPLY_BYTES: u64 = 1 << 30;

impl HttpAdapter {
    pub fn new(name: impl Into<String>, url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        HttpAdapter {
            name: name.into(),
            url: url.into(),
            timeout,
            agent,
        }
    }
}

impl Adapter for HttpAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn call(&self, input: &[u8], mode: Option<u8>) -> Result<Vec<u8>, AdapterError> {
        let url = match mode {
            Some(m) if self.url.contains('?') => format!("{}&mode={m}", self.url),
            Some(m) => format!("{}?mode={m}", self.url),
            None => self.url.clone(),
        };
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => AdapterError::Timeout {
                name: self.name.clone(),
                seconds: self.timeout.as_secs_f64(),
            },
            other => failed(&self.name, other),
        };
        let mut resp = self
            .agent
            .post(&url)
            .header("Content-Type", "audio/wav")
            .send(input)
            .map_err(map_err)?;
        resp.body_mut()
            .with_config()
            .limit(MAX_REPLY_BYTES)
            .read_to_vec()
            .map_err(map_err)
    }
}

/// Deterministic in-process stand-in for a neural tool.
pub struct MockAdapter {
    name: String,
    kind: MockKind,
}

impl MockAdapter {
    pub fn new(name: impl Into<String>, kind: MockKind) -> Self {
        MockAdapter {
            name: name.into(),
            kind,
        }
    }
}

impl Adapter for MockAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn call(&self, input: &[u8], mode: Option<u8>) -> Result<Vec<u8>, AdapterError> {
        self.kind.run(input, mode).map_err(|e| failed(&self.name, e))
    }
}
