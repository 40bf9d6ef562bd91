//! Pluggable clients for the learned components.
//!
//! The pipeline never embeds model weights; segmentation, title reading,
//! legend-pair inference, keypoint matching, and symbol detection all go
//! through these traits. Stub implementations replay canned responses from
//! fixture directories so every pipeline runs offline; HTTP implementations
//! POST JSON to a configured endpoint.
//!
//! Implementations must tolerate concurrent calls (the orchestrator treats
//! client calls as ordinary task work); both the stubs and the HTTP clients
//! here are stateless per call.

use std::path::PathBuf;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{PixelBBox, PixelPoint};
use crate::model::{save_raster_png, RasterMap};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no stub response for {0}")]
    MissingFixture(String),
    #[error("malformed client response: {0}")]
    MalformedResponse(String),
}

/// A text-in/text-out model request. `subject` names the map or image the
/// request concerns (stubs key fixtures on it), `tag` names the task
/// ("layout", "title", "legend_pairs", ...).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRequest {
    pub subject: String,
    pub tag: String,
    pub instruction: String,
    /// Base64-encoded PNG attachments.
    #[serde(default)]
    pub images: Vec<String>,
    pub prompt: String,
}

impl ModelRequest {
    pub fn new(subject: impl Into<String>, tag: impl Into<String>, instruction: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            tag: tag.into(),
            instruction: instruction.into(),
            images: Vec::new(),
            prompt: prompt.into(),
        }
    }

    pub fn attach_image(mut self, map: &RasterMap) -> Result<Self, ClientError> {
        self.images.push(encode_png_base64(map)?);
        Ok(self)
    }
}

/// Vision/language model endpoint: prompt and images in, text out.
pub trait ModelClient: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError>;
}

/// A keypoint correspondence between a query map and a candidate reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointMatch {
    pub query_px: PixelPoint,
    pub candidate_px: PixelPoint,
    /// Match confidence in [0, 1].
    pub confidence: f64,
}

/// Dense feature matcher: two images in, scored keypoint pairs out.
pub trait MatcherClient: Send + Sync {
    fn match_keypoints(&self, query: &RasterMap, candidate: &RasterMap) -> Result<Vec<KeypointMatch>, ClientError>;
}

/// One detector response box, in the coordinates of the image it was run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    pub class: String,
    pub bbox: PixelBBox,
    pub confidence: f64,
}

/// Point-symbol detector: a patch image in, class/bbox/confidence boxes out.
pub trait DetectorClient: Send + Sync {
    fn detect(&self, patch: &RasterMap) -> Result<Vec<RawDetection>, ClientError>;
}

pub fn encode_png_base64(map: &RasterMap) -> Result<String, ClientError> {
    let dir = std::env::temp_dir().join(format!("mapflow-enc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| ClientError::Transport(e.to_string()))?;
    let tmp = dir.join(format!("{}.png", map.id.replace(['/', '\\'], "_")));
    save_raster_png(map, &tmp).map_err(|e| ClientError::Transport(e.to_string()))?;
    let bytes = std::fs::read(&tmp).map_err(|e| ClientError::Transport(e.to_string()))?;
    let _ = std::fs::remove_file(&tmp);
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}

// ---------------------------------------------------------------------------
// Stub clients

/// Replays canned model responses from a fixture directory.
///
/// Lookup order: `{subject}__{tag}.txt`, then `{tag}.txt`.
pub struct StubModelClient {
    dir: PathBuf,
}

impl StubModelClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl ModelClient for StubModelClient {
    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError> {
        let specific = self.dir.join(format!("{}__{}.txt", request.subject, request.tag));
        let generic = self.dir.join(format!("{}.txt", request.tag));
        for p in [&specific, &generic] {
            if p.is_file() {
                return std::fs::read_to_string(p).map_err(|e| ClientError::Transport(e.to_string()));
            }
        }
        Err(ClientError::MissingFixture(format!(
            "{} (looked for {} and {})",
            request.tag,
            specific.display(),
            generic.display()
        )))
    }
}

/// Replays planted keypoint matches from JSON fixture files.
///
/// Lookup order: `{query_id}__{candidate_id}.json`, then `{candidate_id}.json`.
/// A missing file means "no matches", not an error — real matchers return
/// empty lists for unrelated images.
pub struct StubMatcherClient {
    dir: PathBuf,
}

impl StubMatcherClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl MatcherClient for StubMatcherClient {
    fn match_keypoints(&self, query: &RasterMap, candidate: &RasterMap) -> Result<Vec<KeypointMatch>, ClientError> {
        let specific = self.dir.join(format!("{}__{}.json", query.id, candidate.id));
        let generic = self.dir.join(format!("{}.json", candidate.id));
        for p in [&specific, &generic] {
            if p.is_file() {
                let text = std::fs::read_to_string(p).map_err(|e| ClientError::Transport(e.to_string()))?;
                return serde_json::from_str(&text).map_err(|e| ClientError::MalformedResponse(e.to_string()));
            }
        }
        Ok(Vec::new())
    }
}

/// Replays planted detections from JSON fixture files.
///
/// Lookup order: `{patch_id}.json`, then `default.json`; missing means no
/// detections for that patch.
pub struct StubDetectorClient {
    dir: PathBuf,
}

impl StubDetectorClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl DetectorClient for StubDetectorClient {
    fn detect(&self, patch: &RasterMap) -> Result<Vec<RawDetection>, ClientError> {
        let specific = self.dir.join(format!("{}.json", patch.id));
        let generic = self.dir.join("default.json");
        for p in [&specific, &generic] {
            if p.is_file() {
                let text = std::fs::read_to_string(p).map_err(|e| ClientError::Transport(e.to_string()))?;
                return serde_json::from_str(&text).map_err(|e| ClientError::MalformedResponse(e.to_string()));
            }
        }
        Ok(Vec::new())
    }
}

// ---------------------------------------------------------------------------
// HTTP clients

fn http_agent(timeout: Duration) -> Result<reqwest::blocking::Client, ClientError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ClientError::Transport(e.to_string()))
}

fn auth_header(api_key_env: &Option<String>) -> Option<String> {
    api_key_env.as_ref().and_then(|name| std::env::var(name).ok())
}

/// POSTs `{subject, tag, instruction, images, prompt}` as JSON and expects
/// either a raw text body or `{"text": "..."}`.
pub struct HttpModelClient {
    pub endpoint: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
}

impl HttpModelClient {
    pub fn new(endpoint: impl Into<String>, api_key_env: Option<String>) -> Self {
        Self { endpoint: endpoint.into(), api_key_env, timeout: Duration::from_secs(120) }
    }
}

impl ModelClient for HttpModelClient {
    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError> {
        let client = http_agent(self.timeout)?;
        let mut req = client.post(&self.endpoint).json(request);
        if let Some(key) = auth_header(&self.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ClientError::Transport(format!("status {}", resp.status())));
        }
        let body = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&body) {
            if let Some(text) = v.get("text").and_then(|t| t.as_str()) {
                return Ok(text.to_string());
            }
        }
        Ok(body)
    }
}

/// POSTs `{query_png, candidate_png}` (base64) and expects a JSON array of
/// keypoint matches.
pub struct HttpMatcherClient {
    pub endpoint: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
}

impl HttpMatcherClient {
    pub fn new(endpoint: impl Into<String>, api_key_env: Option<String>) -> Self {
        Self { endpoint: endpoint.into(), api_key_env, timeout: Duration::from_secs(120) }
    }
}

impl MatcherClient for HttpMatcherClient {
    fn match_keypoints(&self, query: &RasterMap, candidate: &RasterMap) -> Result<Vec<KeypointMatch>, ClientError> {
        let client = http_agent(self.timeout)?;
        let body = serde_json::json!({
            "query_png": encode_png_base64(query)?,
            "candidate_png": encode_png_base64(candidate)?,
        });
        let mut req = client.post(&self.endpoint).json(&body);
        if let Some(key) = auth_header(&self.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ClientError::Transport(format!("status {}", resp.status())));
        }
        resp.json().map_err(|e| ClientError::MalformedResponse(e.to_string()))
    }
}

/// POSTs `{patch_png}` (base64) and expects a JSON array of raw detections.
pub struct HttpDetectorClient {
    pub endpoint: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
}

impl HttpDetectorClient {
    pub fn new(endpoint: impl Into<String>, api_key_env: Option<String>) -> Self {
        Self { endpoint: endpoint.into(), api_key_env, timeout: Duration::from_secs(120) }
    }
}

impl DetectorClient for HttpDetectorClient {
    fn detect(&self, patch: &RasterMap) -> Result<Vec<RawDetection>, ClientError> {
        let client = http_agent(self.timeout)?;
        let body = serde_json::json!({ "patch_png": encode_png_base64(patch)? });
        let mut req = client.post(&self.endpoint).json(&body);
        if let Some(key) = auth_header(&self.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ClientError::Transport(format!("status {}", resp.status())));
        }
        resp.json().map_err(|e| ClientError::MalformedResponse(e.to_string()))
    }
}

/// Test/builder convenience: a model client backed by a closure.
pub struct FnModelClient<F>(pub F);

impl<F> ModelClient for FnModelClient<F>
where
    F: Fn(&ModelRequest) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError> {
        (self.0)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};

    #[test]
    fn stub_model_prefers_subject_specific_fixture() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("title.txt"), "generic").unwrap();
        std::fs::write(dir.path().join("mapA__title.txt"), "specific").unwrap();
        let client = StubModelClient::new(dir.path());
        let a = client.complete(&ModelRequest::new("mapA", "title", "", "")).unwrap();
        let b = client.complete(&ModelRequest::new("mapB", "title", "", "")).unwrap();
        assert_eq!(a, "specific");
        assert_eq!(b, "generic");
        assert!(client.complete(&ModelRequest::new("mapA", "other", "", "")).is_err());
    }

    #[test]
    fn stub_matcher_missing_file_means_no_matches() {
        let dir = tempfile::tempdir().unwrap();
        let client = StubMatcherClient::new(dir.path());
        let q = RasterMap::filled("q", 1, 1, [0, 0, 0]);
        let c = RasterMap::filled("c", 1, 1, [0, 0, 0]);
        assert!(client.match_keypoints(&q, &c).unwrap().is_empty());
    }

    #[test]
    fn stub_matcher_reads_planted_matches() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("cand.json"),
            r#"[{"query_px":{"x":1.0,"y":2.0},"candidate_px":{"x":3.0,"y":4.0},"confidence":0.9}]"#,
        )
        .unwrap();
        let client = StubMatcherClient::new(dir.path());
        let q = RasterMap::filled("q", 1, 1, [0, 0, 0]);
        let c = RasterMap::filled("cand", 1, 1, [0, 0, 0]);
        let matches = client.match_keypoints(&q, &c).unwrap();
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].confidence, 0.9);
    }

    // Minimal one-shot HTTP server good enough to exercise the blocking client.
    fn serve_once(response_body: String) -> (std::net::SocketAddr, std::thread::JoinHandle<String>) {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65536];
            let mut total = Vec::new();
            loop {
                let n = stream.read(&mut buf).unwrap();
                total.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&total);
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_len = text
                        .lines()
                        .find(|l| l.to_ascii_lowercase().starts_with("content-length:"))
                        .and_then(|l| l.split(':').nth(1))
                        .and_then(|v| v.trim().parse::<usize>().ok())
                        .unwrap_or(0);
                    if total.len() >= header_end + 4 + content_len {
                        break;
                    }
                }
            }
            let reply = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                response_body.len(),
                response_body
            );
            stream.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&total).into_owned()
        });
        (addr, handle)
    }

    #[test]
    fn http_model_client_round_trip() {
        let (addr, handle) = serve_once(r#"{"text":"Nazareth Quadrangle"}"#.to_string());
        let client = HttpModelClient::new(format!("http://{addr}/v1/complete"), None);
        let got = client
            .complete(&ModelRequest::new("m", "title", "return the title", "..."))
            .unwrap();
        assert_eq!(got, "Nazareth Quadrangle");
        let request_seen = handle.join().unwrap();
        assert!(request_seen.contains("\"tag\":\"title\""));
    }
}
