use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use base64::Engine;
use hasr_core::align::{Model, NetSpec, NetState};
use hasr_core::audio::write_wav;
use hasr_core::AudioBuffer;
use hasr_service::auth::hash_password;
use hasr_service::{AppState, ServiceConfig, TranscriptDoc, UserAccount};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

struct Server {
    base: String,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl Server {
    async fn start(cfg: &ServiceConfig) -> Self {
        let state = AppState::load(cfg).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(hasr_service::serve(listener, state, async {
            let _ = rx.await;
        }));
        Self { base, stop: Some(tx), task }
    }

    async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.await.unwrap().unwrap();
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

fn seed(dir: &Path) {
    let state = AppState::load(&ServiceConfig::new(dir)).unwrap();
    let store = &state.inner.store;
    for (user, lang) in [("asha", "hi"), ("ravi", "hi"), ("meera", "mr")] {
        store
            .add_user(UserAccount {
                user_id: user.into(),
                password_hash: hash_password(&format!("{user}-pw"), 10),
                language_id: lang.into(),
            })
            .unwrap();
    }
    for (id, lang, text) in [("utt1", "hi", "नमस्ते"), ("utt2", "hi", "कमल"), ("mr1", "mr", "पाणी")] {
        store
            .create(TranscriptDoc {
                doc_id: id.into(),
                audio_filename: format!("{id}.wav"),
                text: text.into(),
                version: 1,
                language_id: lang.into(),
            })
            .unwrap();
    }
    std::fs::write(store.audio_dir().join("utt1.wav"), silence_wav(160)).unwrap();
}

fn silence_wav(n: usize) -> Vec<u8> {
    write_wav(&AudioBuffer::mono(vec![0.0; n], 16_000).unwrap())
}

fn tone_wav(secs: f64) -> Vec<u8> {
    let n = (secs * 16_000.0) as usize;
    let s = (0..n).map(|i| 0.5 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 16_000.0).sin()).collect();
    write_wav(&AudioBuffer::mono(s, 16_000).unwrap())
}

/// Two phones give 7 states; a large output bias makes state 2 win every frame.
fn write_biased_model(path: &Path) {
    let mut net = NetState::zeros(NetSpec::with_normalization(24, 8, 7));
    for i in 0..24 {
        net.weights[0][(i, i)] = 1.0;
    }
    net.biases[6][2] = 10.0;
    let model = Model { net, features: None, phones: Some(vec!["a".into(), "b".into()]) };
    std::fs::write(path, model.to_json()).unwrap();
}

async fn login(c: &Client, s: &Server, user: &str) -> String {
    let r = c.post(s.url("/api/login")).json(&json!({"user_id": user, "password": format!("{user}-pw")})).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    r.json::<Value>().await.unwrap()["token"].as_str().unwrap().to_string()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn every_route_requires_a_session() {
    let dir = tempfile::tempdir().unwrap();
    seed(dir.path());
    let s = Server::start(&ServiceConfig::new(dir.path())).await;
    let c = Client::new();
    let reqs = [
        c.get(s.url("/api/transcripts")),
        c.get(s.url("/api/transcripts/utt1")),
        c.put(s.url("/api/transcripts/utt1")).json(&json!({"text": "x", "base_version": 1})),
        c.post(s.url("/api/normalize")).json(&json!({"text": "19", "kind": "numbers"})),
        c.get(s.url("/api/edits")),
        c.post(s.url("/api/recognize")).body(silence_wav(16)),
        c.get(s.url("/audio/utt1.wav")),
        c.get(s.url("/api/transcripts")).bearer_auth("not-a-token"),
    ];
    for r in reqs {
        let resp = r.send().await.unwrap();
        assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
        assert_eq!(resp.json::<Value>().await.unwrap(), json!({"error": "auth_failed"}));
    }
    for (user, pw) in [("asha", "wrong"), ("nobody", "nobody-pw")] {
        let r = c.post(s.url("/api/login")).json(&json!({"user_id": user, "password": pw})).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    }
    let r = c.post(s.url("/api/login")).body("{not json").header("content-type", "application/json").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_expire() {
    let dir = tempfile::tempdir().unwrap();
    seed(dir.path());
    let mut cfg = ServiceConfig::new(dir.path());
    cfg.session_ttl = Duration::from_millis(300);
    let s = Server::start(&cfg).await;
    let c = Client::new();
    let tok = login(&c, &s, "asha").await;
    assert_eq!(c.get(s.url("/api/transcripts")).bearer_auth(&tok).send().await.unwrap().status(), StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(400)).await;
    assert_eq!(c.get(s.url("/api/transcripts")).bearer_auth(&tok).send().await.unwrap().status(), StatusCode::UNAUTHORIZED);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn language_scoping_and_audio() {
    let dir = tempfile::tempdir().unwrap();
    seed(dir.path());
    let s = Server::start(&ServiceConfig::new(dir.path())).await;
    let c = Client::new();
    let hi = login(&c, &s, "asha").await;
    let mr = login(&c, &s, "meera").await;
    let list: Value = c.get(s.url("/api/transcripts")).bearer_auth(&hi).send().await.unwrap().json().await.unwrap();
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|d| d["doc_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["utt1", "utt2"]);
    let r = c.get(s.url("/api/transcripts/utt1")).bearer_auth(&mr).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = c.put(s.url("/api/transcripts/utt1")).bearer_auth(&mr).json(&json!({"text": "x", "base_version": 1})).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = c.get(s.url("/api/transcripts/mr1")).bearer_auth(&mr).send().await.unwrap();
    assert_eq!(r.json::<Value>().await.unwrap()["text"], "पाणी");

    let r = c.get(s.url(&format!("/audio/utt1.wav?token={hi}"))).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.bytes().await.unwrap().as_ref(), silence_wav(160).as_slice());
    let r = c.get(s.url("/audio/..%2Fusers.json")).bearer_auth(&hi).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn stale_saves_conflict_and_history_is_kept() {
    let dir = tempfile::tempdir().unwrap();
    seed(dir.path());
    let s = Server::start(&ServiceConfig::new(dir.path())).await;
    let c = Client::new();
    let a = login(&c, &s, "asha").await;
    let b = login(&c, &s, "ravi").await;
    let put = |tok: &str, text: &str, base: u64| {
        c.put(s.url("/api/transcripts/utt2")).bearer_auth(tok).json(&json!({"text": text, "base_version": base})).send()
    };
    let r = put(&a, "कमल का फूल", 1).await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Value>().await.unwrap()["version"], 2);
    let r = put(&b, "कमल!", 1).await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    assert_eq!(r.json::<Value>().await.unwrap(), json!({"error": "version_conflict", "current_version": 2}));
    assert_eq!(put(&b, "कमल!", 2).await.unwrap().status(), StatusCode::OK);

    let hist: Value = c.get(s.url("/api/edits?doc=utt2")).bearer_auth(&a).send().await.unwrap().json().await.unwrap();
    let hist = hist.as_array().unwrap();
    assert_eq!(hist.len(), 2);
    assert_eq!(hist[0]["before_text"], "कमल");
    assert_eq!(hist[1]["user_id"], "ravi");
    assert_eq!(hist[1]["resulting_version"], 3);
    assert!(hist[0]["timestamp_ms"].as_u64() <= hist[1]["timestamp_ms"].as_u64());
    let mine: Value = c.get(s.url("/api/edits?user=asha")).bearer_auth(&a).send().await.unwrap().json().await.unwrap();
    assert_eq!(mine.as_array().unwrap().len(), 1);

    let r = c.put(s.url("/api/transcripts/utt2")).bearer_auth(&a).json(&json!({"text": 5})).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn normalize_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    seed(dir.path());
    let s = Server::start(&ServiceConfig::new(dir.path())).await;
    let c = Client::new();
    let t = login(&c, &s, "asha").await;
    let norm = |text: &str, kind: &str| {
        c.post(s.url("/api/normalize")).bearer_auth(&t).json(&json!({"text": text, "kind": kind})).send()
    };
    let r: Value = norm("19", "numbers").await.unwrap().json().await.unwrap();
    assert_eq!(r["text"], "उन्नीस");
    let r: Value = norm("डॉ. 5", "abbrev").await.unwrap().json().await.unwrap();
    assert_eq!(r["text"], "डॉक्टर 5");
    let r: Value = norm("क्ष.ज्ञ. बाद", "abbrev").await.unwrap().json().await.unwrap();
    assert_eq!(r["text"], "क्ष.ज्ञ. बाद");
    let r: Value = norm("", "numbers").await.unwrap().json().await.unwrap();
    assert_eq!(r["text"], "");
    assert_eq!(norm("x", "shout").await.unwrap().status(), StatusCode::BAD_REQUEST);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn recognize_in_all_three_encodings() {
    let dir = tempfile::tempdir().unwrap();
    seed(dir.path());
    let c = Client::new();

    let s = Server::start(&ServiceConfig::new(dir.path())).await;
    let t = login(&c, &s, "asha").await;
    let r = c.post(s.url("/api/recognize")).bearer_auth(&t).body(silence_wav(1600)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(r.json::<Value>().await.unwrap(), json!({"error": "no_model_loaded"}));
    s.stop().await;

    let model = dir.path().join("model.json");
    write_biased_model(&model);
    let mut cfg = ServiceConfig::new(dir.path());
    cfg.model_path = Some(model);
    let s = Server::start(&cfg).await;
    let t = login(&c, &s, "asha").await;

    let r: Value = c
        .post(s.url("/api/recognize"))
        .bearer_auth(&t)
        .header("content-type", "audio/wav")
        .body(silence_wav(16_000))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(r, json!({"segments": [], "state_sequence": [], "phone_sequence": []}));

    let wav = tone_wav(0.5);
    let b64 = base64::engine::general_purpose::STANDARD.encode(&wav);
    let boundary = "XbOuNdArYx";
    let mut mp = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"audio\"; filename=\"a.wav\"\r\nContent-Type: audio/wav\r\n\r\n"
    )
    .into_bytes();
    mp.extend_from_slice(&wav);
    mp.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let bodies = [
        c.post(s.url("/api/recognize")).bearer_auth(&t).body(wav.clone()),
        c.post(s.url("/api/recognize")).bearer_auth(&t).json(&json!({"audio_base64": b64})),
        c.post(s.url("/api/recognize"))
            .bearer_auth(&t)
            .header("content-type", format!("multipart/form-data; boundary={boundary}"))
            .body(mp),
    ];
    let mut seen = Vec::new();
    for req in bodies {
        let r = req.send().await.unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        let v: Value = r.json().await.unwrap();
        let states = v["state_sequence"].as_array().unwrap();
        assert!(!states.is_empty());
        assert!(states.iter().all(|s| s == 2));
        assert_eq!(v["segments"], json!([{"start": 0, "end": 8000}]));
        seen.push(v);
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));

    let stereo: Vec<f32> = (0..22_050).flat_map(|i| [0.4 * (i as f32 * 0.05).sin(), 0.2]).collect();
    let wav = write_wav(&AudioBuffer::new(stereo, 44_100, 2).unwrap());
    let v: Value = c.post(s.url("/api/recognize")).bearer_auth(&t).body(wav).send().await.unwrap().json().await.unwrap();
    assert_eq!(v["segments"], json!([{"start": 0, "end": 8000}]));
    assert_eq!(v["phone_sequence"], json!(["a"]));

    let r = c.post(s.url("/api/recognize")).bearer_auth(&t).body(b"RIFFjunk".to_vec()).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_preserves_everything_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    seed(dir.path());
    let c = Client::new();
    let s = Server::start(&ServiceConfig::new(dir.path())).await;
    let t = login(&c, &s, "asha").await;
    for (i, text) in ["एक", "दो", "तीन"].iter().enumerate() {
        let r = c
            .put(s.url("/api/transcripts/utt1"))
            .bearer_auth(&t)
            .json(&json!({"text": text, "base_version": i + 1}))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), StatusCode::OK);
    }
    let doc_before = c.get(s.url("/api/transcripts/utt1")).bearer_auth(&t).send().await.unwrap().bytes().await.unwrap();
    let log_before = c.get(s.url("/api/edits")).bearer_auth(&t).send().await.unwrap().bytes().await.unwrap();
    s.stop().await;
    let files_before = snapshot(dir.path());

    let s = Server::start(&ServiceConfig::new(dir.path())).await;
    let t = login(&c, &s, "asha").await;
    let doc_after = c.get(s.url("/api/transcripts/utt1")).bearer_auth(&t).send().await.unwrap().bytes().await.unwrap();
    let log_after = c.get(s.url("/api/edits")).bearer_auth(&t).send().await.unwrap().bytes().await.unwrap();
    s.stop().await;
    assert_eq!(doc_before, doc_after);
    assert_eq!(log_before, log_after);
    assert_eq!(files_before, snapshot(dir.path()));
    let txt = std::fs::read_to_string(dir.path().join("txt/utt1.txt")).unwrap();
    assert_eq!(txt.trim_end(), "तीन");
}
