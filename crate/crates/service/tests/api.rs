use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use alt4blind_core::embedding::SurrogateProvider;
use alt4blind_core::pipeline::build_index;
use alt4blind_core::{
    ChartRecord, ChartType, Corpus, CorpusMetadata, EmbedError, Embedding, EmbeddingProvider,
    IndexVariant,
};
use alt4blind_service::{serve, AppState, CandidatePayload, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::multipart::{Form, Part};
use reqwest::StatusCode;
use serde_json::{json, Value};
use tempfile::TempDir;

/// Surrogate encoder that can be switched off.
struct Switchable {
    inner: SurrogateProvider,
    down: AtomicBool,
}

impl EmbeddingProvider for Switchable {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn embed_image(&self, bytes: &[u8]) -> Result<Embedding, EmbedError> {
        if self.down.load(Ordering::SeqCst) {
            return Err(EmbedError::EncoderUnavailable("switched off".into()));
        }
        self.inner.embed_image(bytes)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        if self.down.load(Ordering::SeqCst) {
            return Err(EmbedError::EncoderUnavailable("switched off".into()));
        }
        self.inner.embed_text(text)
    }
}

fn png(seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels: Vec<u8> = (0..16 * 16 * 3).map(|_| rng.random()).collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, 16, 16);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()
        .unwrap()
        .write_image_data(&pixels)
        .unwrap();
    out
}

struct Fixture {
    dir: TempDir,
    corpus: Corpus,
    provider: Arc<Switchable>,
}

fn fixture(n: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("img")).unwrap();
    let records: Vec<ChartRecord> = (0..n)
        .map(|i| {
            let image_ref = format!("img/chart{i:03}.png");
            std::fs::write(dir.path().join(&image_ref), png(i as u64)).unwrap();
            ChartRecord {
                id: format!("chart{i:03}"),
                image_ref,
                alt_text: format!(
                    "A {} chart number {i} showing values that rise from {} to {} over ten years.",
                    ChartType::ALL[i % 8],
                    i,
                    i * 3 + 7
                ),
                caption: (i % 2 == 0).then(|| format!("Figure {i}.")),
                chart_type: ChartType::ALL[i % 8],
                source_venue: "test".into(),
                year: 2020,
                semantic_profile: None,
                quality_score: None,
            }
        })
        .collect();
    let corpus = Corpus::new(CorpusMetadata::new("api-test"), records).unwrap();
    Fixture {
        dir,
        corpus,
        provider: Arc::new(Switchable {
            inner: SurrogateProvider::new(7),
            down: AtomicBool::new(false),
        }),
    }
}

struct Running {
    base: String,
    client: reqwest::Client,
    _stop: tokio::sync::oneshot::Sender<()>,
}

async fn start(fx: &Fixture, config: ServiceConfig, with_index: bool) -> Running {
    let config = ServiceConfig {
        image_root: fx.dir.path().to_path_buf(),
        ..config
    };
    let (corpus, index) = if with_index {
        let index = build_index(
            &fx.corpus,
            fx.provider.as_ref(),
            IndexVariant::Exact,
            fx.dir.path(),
            None,
        )
        .unwrap();
        (Some(fx.corpus.clone()), Some(index))
    } else {
        (None, None)
    };
    let state = AppState::new(config, fx.provider.clone(), corpus, index).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}/api/v1", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve(listener, Arc::new(state), async {
        let _ = rx.await;
    }));
    Running {
        base,
        client: reqwest::Client::new(),
        _stop: tx,
    }
}

impl Running {
    async fn upload(&self, bytes: Vec<u8>) -> reqwest::Response {
        let form = Form::new().part("image", Part::bytes(bytes).file_name("chart.png"));
        self.client
            .post(format!("{}/sessions", self.base))
            .multipart(form)
            .send()
            .await
            .unwrap()
    }

    async fn refine(&self, session: &str, body: Value) -> reqwest::Response {
        self.client
            .post(format!("{}/sessions/{session}/refine", self.base))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    async fn get(&self, path: &str) -> reqwest::Response {
        self.client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap()
    }
}

fn candidates(body: &Value) -> Vec<CandidatePayload> {
    serde_json::from_value(body["candidates"].clone()).unwrap()
}

fn ids(c: &[CandidatePayload]) -> Vec<String> {
    c.iter().map(|c| c.record_id.clone()).collect()
}

async fn error_code(resp: reqwest::Response) -> String {
    let body: Value = resp.json().await.unwrap();
    body["error"]
        .as_str()
        .expect("error code present")
        .to_string()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn upload_returns_three_ranked_candidates() {
    let fx = fixture(100);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let resp = srv.upload(png(1000)).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = resp.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap();
    assert_eq!(session.len(), 32);
    let c = candidates(&body);
    assert_eq!(c.len(), 3);
    assert!(c.windows(2).all(|w| w[0].fused_score >= w[1].fused_score));
    for cand in &c {
        assert_eq!(
            cand.alt_text,
            fx.corpus.get(&cand.record_id).unwrap().alt_text
        );
        assert_eq!(cand.fused_score, cand.image_score);
        assert!(cand.text_score.is_none());
        assert_eq!(
            cand.image_url,
            format!("/api/v1/charts/{}/image", cand.record_id)
        );
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn uploading_a_corpus_image_finds_itself_first() {
    let fx = fixture(30);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.upload(png(17)).await.json().await.unwrap();
    let c = candidates(&body);
    assert_eq!(c[0].record_id, "chart017");
    assert!((c[0].fused_score - 1.0).abs() < 1e-6);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn refine_with_alpha_one_reproduces_upload() {
    let fx = fixture(100);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.upload(png(555)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap().to_string();
    let first = candidates(&body);
    let resp = srv
        .refine(
            &session,
            json!({"draft_text": "A line chart of rainfall.", "alpha": 1.0}),
        )
        .await;
    assert_eq!(resp.status(), StatusCode::OK);
    let refined = candidates(&resp.json().await.unwrap());
    assert_eq!(ids(&refined), ids(&first));
    for (a, b) in refined.iter().zip(&first) {
        assert_eq!(a.fused_score, b.fused_score);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn default_alpha_fuses_the_draft() {
    let fx = fixture(60);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.upload(png(99)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap();
    let draft = fx.corpus.get("chart042").unwrap().alt_text.clone();
    let refined = candidates(
        &srv.refine(session, json!({"draft_text": draft}))
            .await
            .json()
            .await
            .unwrap(),
    );
    for c in &refined {
        let text = c.text_score.expect("text score present");
        assert!((c.fused_score - (0.5 * c.image_score + 0.5 * text)).abs() < 1e-5);
    }
    assert_eq!(refined[0].record_id, "chart042");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn exclusion_removes_and_backfills() {
    let fx = fixture(100);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.upload(png(4242)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap().to_string();
    let first = ids(&candidates(&body));

    let resp = srv
        .refine(
            &session,
            json!({"draft_text": "bar chart", "alpha": 1.0, "exclude_ids": [first[0]]}),
        )
        .await;
    let second = ids(&candidates(&resp.json().await.unwrap()));
    assert_eq!(second.len(), 3);
    assert!(!second.contains(&first[0]));
    assert_eq!(&second[..2], &first[1..]);
    assert!(!first.contains(&second[2]));

    // Exclusions accumulate within the session.
    let resp = srv
        .refine(
            &session,
            json!({"draft_text": "bar chart", "alpha": 1.0, "exclude_ids": [second[0]]}),
        )
        .await;
    let third = ids(&candidates(&resp.json().await.unwrap()));
    assert!(!third.contains(&first[0]) && !third.contains(&second[0]));
    assert_eq!(third.len(), 3);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn excluding_nearly_everything_shrinks_the_response() {
    let fx = fixture(5);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.upload(png(1)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap();
    let all: Vec<String> = (0..4).map(|i| format!("chart{i:03}")).collect();
    let resp = srv
        .refine(session, json!({"draft_text": "x", "exclude_ids": all}))
        .await;
    assert_eq!(
        ids(&candidates(&resp.json().await.unwrap())),
        vec!["chart004"]
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sessions_are_isolated() {
    let fx = fixture(100);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let a: Value = srv.upload(png(7001)).await.json().await.unwrap();
    let b: Value = srv.upload(png(7001)).await.json().await.unwrap();
    let (sa, sb) = (
        a["session_id"].as_str().unwrap(),
        b["session_id"].as_str().unwrap(),
    );
    assert_ne!(sa, sb);
    let top = ids(&candidates(&a))[0].clone();
    srv.refine(
        sa,
        json!({"draft_text": "x", "alpha": 1.0, "exclude_ids": [top]}),
    )
    .await;
    let rb = srv
        .refine(sb, json!({"draft_text": "x", "alpha": 1.0}))
        .await;
    assert_eq!(
        ids(&candidates(&rb.json().await.unwrap())),
        ids(&candidates(&b))
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn expired_session_is_not_found() {
    let fx = fixture(10);
    let config = ServiceConfig {
        session_ttl: Duration::from_millis(200),
        ..ServiceConfig::default()
    };
    let srv = start(&fx, config, true).await;
    let body: Value = srv.upload(png(3)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap();
    tokio::time::sleep(Duration::from_millis(400)).await;
    let resp = srv.refine(session, json!({"draft_text": "hello"})).await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(error_code(resp).await, "session_not_found");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn upload_rejections() {
    let fx = fixture(10);
    let srv = start(&fx, ServiceConfig::default(), true).await;

    let mut big = png(1);
    big.resize(11 * 1024 * 1024, 0);
    let resp = srv.upload(big).await;
    assert_eq!(resp.status(), StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(error_code(resp).await, "payload_too_large");

    let resp = srv.upload(b"GIF89a not a png".to_vec()).await;
    assert_eq!(resp.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(error_code(resp).await, "unsupported_media_type");

    let form = Form::new().text("note", "no image here");
    let resp = srv
        .client
        .post(format!("{}/sessions", srv.base))
        .multipart(form)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_code(resp).await, "missing_image");

    let resp = srv
        .client
        .post(format!("{}/sessions", srv.base))
        .body("raw")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_code(resp).await, "invalid_request");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn upload_at_the_limit_is_accepted() {
    let fx = fixture(10);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let mut exact = png(1);
    exact.resize(10 * 1024 * 1024, 0);
    assert_eq!(srv.upload(exact).await.status(), StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn refine_rejections() {
    let fx = fixture(10);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.upload(png(3)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap();

    let resp = srv.refine(session, json!({"draft_text": "   "})).await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_code(resp).await, "empty_draft");

    let resp = srv
        .refine(session, json!({"draft_text": "x", "alpha": 1.5}))
        .await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_code(resp).await, "invalid_alpha");

    let resp = srv.refine(session, json!({"text": "x"})).await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_code(resp).await, "invalid_request");

    let resp = srv
        .refine(&"0".repeat(32), json!({"draft_text": "x"}))
        .await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(error_code(resp).await, "session_not_found");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn encoder_down_is_503() {
    let fx = fixture(10);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.upload(png(3)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap();
    fx.provider.down.store(true, Ordering::SeqCst);
    let resp = srv.upload(png(4)).await;
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(error_code(resp).await, "encoder_unavailable");
    let resp = srv.refine(session, json!({"draft_text": "x"})).await;
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(error_code(resp).await, "encoder_unavailable");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn chart_records_and_images() {
    let fx = fixture(10);
    let srv = start(&fx, ServiceConfig::default(), true).await;

    let resp = srv.get("/charts/chart004").await;
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(
        body["alt_text"],
        fx.corpus.get("chart004").unwrap().alt_text.as_str()
    );
    assert_eq!(body["caption"], "Figure 4.");

    let body: Value = srv.get("/charts/chart003").await.json().await.unwrap();
    assert!(body.get("caption").is_none());

    let resp = srv.get("/charts/nope").await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(error_code(resp).await, "chart_not_found");

    let resp = srv.get("/charts/chart004/image").await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let expected = std::fs::read(fx.dir.path().join("img/chart004.png")).unwrap();
    assert_eq!(resp.bytes().await.unwrap().as_ref(), expected.as_slice());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_reflects_the_index() {
    let fx = fixture(100);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let body: Value = srv.get("/health").await.json().await.unwrap();
    assert_eq!(body["status"], "ok");
    assert_eq!(body["index_size"], 100);
    assert_eq!(body["provider_id"], "surrogate:7");

    let empty = start(&fx, ServiceConfig::default(), false).await;
    let body: Value = empty.get("/health").await.json().await.unwrap();
    assert_eq!(body["status"], "degraded");
    assert_eq!(body["index_size"], 0);
    let resp = empty.upload(png(1)).await;
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(error_code(resp).await, "index_unavailable");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn guidelines_file_or_builtin() {
    let fx = fixture(5);
    let path = fx.dir.path().join("guide.md");
    std::fs::write(&path, "# Ours\nDescribe the trend.").unwrap();
    let srv = start(
        &fx,
        ServiceConfig {
            guidelines: Some(path),
            ..ServiceConfig::default()
        },
        true,
    )
    .await;
    let body: Value = srv.get("/guidelines").await.json().await.unwrap();
    assert_eq!(body["source"], "file");
    assert_eq!(body["content"], "# Ours\nDescribe the trend.");

    let missing = start(
        &fx,
        ServiceConfig {
            guidelines: Some(fx.dir.path().join("absent.md")),
            ..ServiceConfig::default()
        },
        true,
    )
    .await;
    let resp = missing.get("/guidelines").await;
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["source"], "builtin");
    assert_eq!(body["content"], alt4blind_service::DEFAULT_GUIDELINES);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unknown_routes_and_methods_carry_error_codes() {
    let fx = fixture(5);
    let srv = start(&fx, ServiceConfig::default(), true).await;
    let resp = srv.get("/nothing").await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(error_code(resp).await, "not_found");
    let resp = srv.get("/sessions").await;
    assert_eq!(resp.status(), StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(error_code(resp).await, "method_not_allowed");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cors_allows_the_configured_origin() {
    let fx = fixture(5);
    let srv = start(
        &fx,
        ServiceConfig {
            cors_origin: Some("http://localhost:5173".into()),
            ..ServiceConfig::default()
        },
        true,
    )
    .await;
    let resp = srv
        .client
        .get(format!("{}/health", srv.base))
        .header("Origin", "http://localhost:5173")
        .send()
        .await
        .unwrap();
    assert_eq!(
        resp.headers()["access-control-allow-origin"],
        "http://localhost:5173"
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn spooling_writes_uploads_only_when_enabled() {
    let fx = fixture(5);
    let spool = fx.dir.path().join("spool");
    std::fs::create_dir(&spool).unwrap();
    let srv = start(&fx, ServiceConfig::default(), true).await;
    srv.upload(png(8)).await;
    assert_eq!(std::fs::read_dir(&spool).unwrap().count(), 0);

    let spooling = start(
        &fx,
        ServiceConfig {
            spool_uploads: Some(spool.clone()),
            ..ServiceConfig::default()
        },
        true,
    )
    .await;
    let body: Value = spooling.upload(png(8)).await.json().await.unwrap();
    let session = body["session_id"].as_str().unwrap();
    let written = std::fs::read(spool.join(format!("{session}.png"))).unwrap();
    assert_eq!(written, png(8));
}

#[test]
fn state_rejects_an_index_from_another_provider() {
    let fx = fixture(3);
    let index = build_index(
        &fx.corpus,
        &SurrogateProvider::new(8),
        IndexVariant::Exact,
        fx.dir.path(),
        None,
    )
    .unwrap();
    let err = AppState::new(
        ServiceConfig::default(),
        fx.provider.clone(),
        Some(fx.corpus.clone()),
        Some(index),
    );
    assert!(err.is_err());
}
