use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use crimeclass_baselines::{BaselineConfig, BaselineKind, BaselineModel};
use crimeclass_core::prediction::softmax;
use crimeclass_core::smoke::{prepare, SmokeConfig};
use crimeclass_core::{CategoryLabel, PredictError, PredictionResult, TextClassifier};
use crimeclass_service::{router, ApiToken, AppState, JsonlStore, LoadedModel, ModelSlot, ServiceConfig, SubmissionStore};
use http_body_util::BodyExt;
use regex::Regex;
use serde_json::{json, Value};
use tower::ServiceExt;

/// Scores each label by how often its name's first letter occurs.
struct LetterModel;

impl TextClassifier for LetterModel {
    fn kind(&self) -> &str {
        "stub"
    }

    fn fingerprint(&self) -> &str {
        "stub-fp"
    }

    fn label_order(&self) -> &[CategoryLabel] {
        &CategoryLabel::ALL
    }

    fn predict(&self, text: &str) -> Result<PredictionResult, PredictError> {
        if text.trim().is_empty() {
            return Err(PredictError::EmptyText);
        }
        let logits: Vec<f64> = CategoryLabel::ALL
            .iter()
            .map(|l| {
                let c = l.name().chars().next().unwrap().to_ascii_lowercase();
                text.chars().filter(|&t| t == c).count() as f64 * 0.3
            })
            .collect();
        Ok(PredictionResult::from_probabilities(&CategoryLabel::ALL, &softmax(&logits), "stub-fp"))
    }
}

struct Harness {
    state: Arc<AppState>,
    _dir: tempfile::TempDir,
    store_path: std::path::PathBuf,
}

fn harness(config: ServiceConfig, ready: bool) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let store_path = dir.path().join("store/submissions.jsonl");
    let store = Arc::new(JsonlStore::open(&store_path).unwrap()) as Arc<dyn SubmissionStore>;
    let state = AppState::new(config, Some(store));
    if ready {
        state.set_model(ModelSlot::Ready(LoadedModel {
            classifier: Arc::new(LetterModel),
            path: dir.path().to_path_buf(),
        }));
    }
    Harness {
        state,
        _dir: dir,
        store_path,
    }
}

async fn call(h: &Harness, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(h, method, uri, body.map(|b| b.to_string().into_bytes()), token).await;
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

async fn call_raw(h: &Harness, method: &str, uri: &str, body: Option<Vec<u8>>, token: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b)),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(Arc::clone(&h.state)).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

#[tokio::test]
async fn classify_returns_full_distribution() {
    let h = harness(ServiceConfig::default(), true);
    let (status, body) = call(
        &h,
        "POST",
        "/api/v1/classify",
        Some(json!({"text": "mere account se paise kat gaye, call 9876543210"})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let scores = body["prediction"]["scores"].as_object().unwrap();
    assert_eq!(scores.len(), 14);
    let sum: f64 = scores.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-6);
    assert_eq!(body["model_fingerprint"], "stub-fp");
    assert!(body["anonymized_text"].as_str().unwrap().contains("<PHONE>"));
    let id = body["id"].as_str().unwrap();
    let (status, stored) = call(&h, "GET", &format!("/api/v1/submissions/{id}"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stored["status"], "auto_classified");
    assert!(stored.get("raw_text").is_none());
}

#[tokio::test]
async fn request_errors() {
    let h = harness(
        ServiceConfig {
            max_body_bytes: 256,
            ..Default::default()
        },
        true,
    );
    let (status, body) = call(&h, "POST", "/api/v1/classify", Some(json!({"text": "  "})), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "empty_text");

    let big = "x".repeat(1000);
    let (status, body) = call(&h, "POST", "/api/v1/classify", Some(json!({ "text": big })), None).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["code"], "payload_too_large");

    let (status, body) = call_raw(&h, "POST", "/api/v1/classify", Some(b"{".to_vec()), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(&body));

    let (status, _) = call(&h, "GET", "/api/v1/nope", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unavailable_model_gives_503() {
    let h = harness(ServiceConfig::default(), false);
    let (status, body) = call(&h, "POST", "/api/v1/classify", Some(json!({"text": "hello"})), None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["code"], "model_loading");
    let (status, body) = call(&h, "GET", "/api/v1/health", None, None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "loading");

    // anonymization does not need the model
    let (status, _) = call(&h, "POST", "/api/v1/anonymize", Some(json!({"text": "a@b.com"})), None).await;
    assert_eq!(status, StatusCode::OK);

    h.state.load_model_in_background().await.unwrap();
    let (status, body) = call(&h, "GET", "/api/v1/health", None, None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "degraded");
    let (status, body) = call(&h, "POST", "/api/v1/classify", Some(json!({"text": "hello"})), None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["code"], "model_unavailable");
}

#[tokio::test]
async fn bearer_tokens_and_audit_scope() {
    let config = ServiceConfig {
        tokens: vec![
            ApiToken {
                token: "op".into(),
                audit: false,
            },
            ApiToken {
                token: "auditor".into(),
                audit: true,
            },
        ],
        ..Default::default()
    };
    let h = harness(config, true);
    let text = json!({"text": "call me on 9876543210", "audit": true});
    let (status, body) = call(&h, "POST", "/api/v1/anonymize", Some(text.clone()), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["code"], "unauthorized");
    let (status, _) = call(&h, "POST", "/api/v1/anonymize", Some(text.clone()), Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let (status, body) = call(&h, "POST", "/api/v1/anonymize", Some(text.clone()), Some("op")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["anonymized_text"], "call me on <PHONE>");
    assert!(body.get("spans").is_none());

    let (status, body) = call(&h, "POST", "/api/v1/anonymize", Some(text), Some("auditor")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["spans"][0]["kind"], "PHONE");
    assert_eq!(body["spans"][0]["surface"], "9876543210");

    // health stays open for probes
    let (status, _) = call(&h, "GET", "/api/v1/health", None, None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn anonymize_is_idempotent_and_spans_show_without_privacy() {
    let h = harness(
        ServiceConfig {
            privacy_mode: false,
            ..Default::default()
        },
        true,
    );
    let (_, first) = call(&h, "POST", "/api/v1/anonymize", Some(json!({"text": "mail x.y@gmail.com ya www.fraud.in dekho"})), None).await;
    let once = first["anonymized_text"].as_str().unwrap().to_string();
    assert_eq!(once, "mail <EMAIL> ya <WEBSITE> dekho");
    assert_eq!(first["spans"].as_array().unwrap().len(), 2);
    let (_, second) = call(&h, "POST", "/api/v1/anonymize", Some(json!({ "text": once })), None).await;
    assert_eq!(second["anonymized_text"], first["anonymized_text"]);
    assert!(second["spans"].as_array().unwrap().is_empty());

    let (_, classified) = call(&h, "POST", "/api/v1/classify", Some(json!({"text": "ping 9876543210"})), None).await;
    let id = classified["id"].as_str().unwrap();
    let (_, stored) = call(&h, "GET", &format!("/api/v1/submissions/{id}"), None, None).await;
    assert_eq!(stored["raw_text"], "ping 9876543210");
}

#[tokio::test]
async fn review_export_and_paging() {
    let h = harness(ServiceConfig::default(), true);
    let mut ids = Vec::new();
    for i in 0..5 {
        let (_, body) = call(&h, "POST", "/api/v1/classify", Some(json!({ "text": format!("complaint number {i} upi fraud") })), None).await;
        ids.push(body["id"].as_str().unwrap().to_string());
    }
    let (status, page) = call(&h, "GET", "/api/v1/submissions?limit=2&offset=1", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["total"], 5);
    let items = page["items"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0]["id"], ids[3]);
    let (_, past_end) = call(&h, "GET", "/api/v1/submissions?offset=10", None, None).await;
    assert!(past_end["items"].as_array().unwrap().is_empty());

    let review = |id: &str| format!("/api/v1/submissions/{id}/review");
    let (status, body) = call(&h, "POST", &review(&ids[0]), Some(json!({"corrected_label": "Financial Fraud"})), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "reviewed");
    assert_eq!(body["operator_feedback"], "Financial Fraud");
    let first_update = body["updated_at"].as_str().unwrap().to_string();

    let (status, body) = call(&h, "POST", &review(&ids[1]), Some(json!({"corrected_label": "Not A Label"})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "invalid_label");
    let (status, _) = call(&h, "POST", &review("missing"), Some(json!({"corrected_label": "Ransomware"})), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // last write wins, timestamps move forward
    let (_, body) = call(&h, "POST", &review(&ids[0]), Some(json!({"corrected_label": "Ransomware"})), None).await;
    assert_eq!(body["operator_feedback"], "Ransomware");
    let t = |s: &str| chrono::DateTime::parse_from_rfc3339(s).unwrap();
    assert!(t(body["updated_at"].as_str().unwrap()) > t(&first_update));

    call(&h, "POST", &review(&ids[2]), Some(json!({"corrected_label": "Cyber Terrorism"})), None).await;
    call(&h, "POST", &review(&ids[3]), Some(json!({"corrected_label": "Hacking/Damage"})), None).await;
    let (status, csv) = call_raw(&h, "GET", "/api/v1/submissions/export", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let corpus = crimeclass_core::corpus::read_complaints_from(csv.as_slice()).unwrap();
    assert_eq!(corpus.len(), 3);
    assert_eq!(corpus[0].category, Some(CategoryLabel::Ransomware));
    assert!(corpus.iter().all(|c| c.category.is_some()));
}

#[tokio::test]
async fn models_endpoint_lists_checkpoints_and_label_order() {
    let root = tempfile::tempdir().unwrap();
    let split = prepare(
        &SmokeConfig {
            classes: 3,
            per_class: 30,
            ..Default::default()
        },
        0.3,
    )
    .unwrap();
    let cfg = BaselineConfig {
        reduced_dimension: 10,
        ..Default::default()
    };
    for (name, kind) in [("a-knn", BaselineKind::KNearestNeighbors), ("b-forest", BaselineKind::RandomForest)] {
        let model = BaselineModel::fit(&split.train, kind, cfg.clone()).unwrap();
        model.save(&root.path().join(name)).unwrap();
    }
    std::fs::create_dir(root.path().join("not-a-model")).unwrap();

    let config = ServiceConfig {
        model_dir: Some(root.path().join("a-knn")),
        storage_path: None,
        ..Default::default()
    };
    let state = AppState::from_config(config).unwrap();
    state.load_model_in_background().await.unwrap();
    let h = Harness {
        state,
        _dir: tempfile::tempdir().unwrap(),
        store_path: Default::default(),
    };
    let (status, body) = call(&h, "GET", "/api/v1/models", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let models = body["models"].as_array().unwrap();
    assert_eq!(models.len(), 2);
    assert_eq!(models[0]["name"], "a-knn");
    let order: Vec<&str> = body["label_order"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let expected: Vec<&str> = CategoryLabel::ALL.iter().map(|l| l.name()).collect();
    assert_eq!(order, expected);
    assert_eq!(body["active"]["kind"], "k_nearest_neighbors");

    let (status, health) = call(&h, "GET", "/api/v1/health", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert!(health["model_fingerprint"].as_str().is_some());

    let text = &split.test[0].text;
    let (status, body) = call(&h, "POST", "/api/v1/classify", Some(json!({ "text": text })), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["id"].is_null());
    let sum: f64 = body["prediction"]["scores"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-6);

    // a second replica over the same directory agrees
    let other = AppState::from_config(h.state.config().clone()).unwrap();
    other.load_model_in_background().await.unwrap();
    let h2 = Harness {
        state: other,
        _dir: tempfile::tempdir().unwrap(),
        store_path: Default::default(),
    };
    let (_, again) = call(&h2, "POST", "/api/v1/classify", Some(json!({ "text": text })), None).await;
    assert_eq!(again["prediction"], body["prediction"]);
}

fn pii_text(i: usize) -> String {
    let names = ["Rahul Sharma", "Priya Verma", "Amit Kumar", "Sunita Devi"];
    let email = format!("user{i}.victim@gmail.com");
    let phone = match i % 3 {
        0 => format!("98{:08}", 1_234_567 + i * 7919),
        1 => format!("+91 98765 {:05}", 10_000 + i),
        _ => format!("70{:03}-{:05}", i, 43_210 + i),
    };
    let url = match i % 2 {
        0 => format!("https://pay-secure{i}.in/login"),
        _ => format!("www.fakeloan{i}.com"),
    };
    format!(
        "sir mera naam hai {} mujhe {} se call aaya, usne {} par link bheja {} aur paise kat gaye, mail {} par reply karo",
        names[i % names.len()],
        phone,
        email,
        url,
        email
    )
}

#[tokio::test]
async fn privacy_sweep_over_store() {
    let h = harness(ServiceConfig::default(), true);
    for i in 0..100 {
        let (status, body) = call(&h, "POST", "/api/v1/classify", Some(json!({ "text": pii_text(i) })), None).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (_, page) = call(&h, "GET", "/api/v1/submissions?limit=5", None, None).await;
    let id = page["items"][0]["id"].as_str().unwrap();
    call(&h, "POST", &format!("/api/v1/submissions/{id}/review"), Some(json!({"corrected_label": "Financial Fraud"})), None).await;

    let store = std::fs::read_to_string(&h.store_path).unwrap();
    assert_eq!(store.lines().count(), 101);
    let email = Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}").unwrap();
    let phone = Regex::new(r"(?:\+91[\s\-]?)?\b\d{5}[\s\-]?\d{5}\b").unwrap();
    let url = Regex::new(r"(?i)https?://|www\.|\b[a-z0-9\-]+\.(?:com|in|org|net)\b").unwrap();
    for (name, re) in [("email", &email), ("phone", &phone), ("url", &url)] {
        let hits: Vec<&str> = re.find_iter(&store).map(|m| m.as_str()).collect();
        assert!(hits.is_empty(), "{name} matches in store: {hits:?}");
    }
    // sanity: the same sweep does find the raw inputs
    let raw: String = (0..100).map(pii_text).collect::<Vec<_>>().join("\n");
    assert!(email.is_match(&raw) && phone.is_match(&raw) && url.is_match(&raw));
}
