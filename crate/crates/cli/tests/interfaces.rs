//! Contracts the exporter and review UI rely on, exercised through the binary.

use std::fs;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segtriage_core::score::ScoreFile;
use serde_json::{json, Value};

const C: usize = 3;
const SIDE: usize = 4;

/// Encodes a bundle by hand, laid out the way an external exporter would:
/// key order and whitespace differ from ours.
fn exporter_bundle(id: &str, passes: &[Vec<f32>], label: Option<&[u8]>) -> Vec<u8> {
    let mut payload = Vec::new();
    for pass in passes {
        for p in pass {
            payload.extend_from_slice(&p.to_le_bytes());
        }
    }
    if let Some(l) = label {
        payload.extend_from_slice(l);
    }
    let header = serde_json::to_string_pretty(&json!({
        "prob_dtype": "f32le",
        "payload_crc32": crc32fast::hash(&payload),
        "has_source_image": false,
        "has_label": label.is_some(),
        "class_names": ["background", "tool", "wear"],
        "background_index": 0,
        "w": SIDE, "h": SIDE, "c": C, "t": passes.len(),
        "image_id": id,
        "version": 1,
        "meta": { "exporter": "toy-unet", "dropout": "0.5" },
    }))
    .unwrap();
    let mut out = b"UBND1\n".to_vec();
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);
    out
}

/// One softmax pass, class-major.
fn softmax_pass(rng: &mut ChaCha8Rng, sharpness: f64) -> Vec<f32> {
    let n = SIDE * SIDE;
    let mut values = vec![0f32; C * n];
    for i in 0..n {
        let logits: Vec<f64> = (0..C).map(|_| sharpness * rng.random::<f64>()).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for (c, l) in logits.iter().enumerate() {
            values[c * n + i] = (l.exp() / z) as f32;
        }
    }
    values
}

fn exporter_corpus(dir: &Path, count: usize, dropout: bool) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    fs::create_dir_all(dir).unwrap();
    (0..count)
        .map(|i| {
            let sharpness = rng.random_range(1.0..8.0);
            let base = softmax_pass(&mut rng, sharpness);
            let passes: Vec<Vec<f32>> = (0..5)
                .map(|_| if dropout { softmax_pass(&mut rng, sharpness) } else { base.clone() })
                .collect();
            let label: Vec<u8> = (0..SIDE * SIDE).map(|_| rng.random_range(0..C as u8)).collect();
            let bytes = exporter_bundle(&format!("toy-{i:03}"), &passes, Some(&label));
            fs::write(dir.join(format!("toy-{i:03}.ubnd")), &bytes).unwrap();
            bytes
        })
        .collect()
}

fn segtriage(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_segtriage"));
    cmd.current_dir(dir);
    cmd
}

#[test]
fn exporter_bundles_validate_and_score_unmodified() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    exporter_corpus(&d.join("off"), 6, false);
    exporter_corpus(&d.join("on"), 6, true);
    for corpus in ["off", "on"] {
        let out = segtriage(d).args(["validate", "--input", corpus]).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
        let scores = format!("{corpus}.csv");
        let out = segtriage(d).args(["score", "--input", corpus, "--output", &scores]).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let file = ScoreFile::load(&d.join(&scores)).unwrap();
        assert_eq!(file.class_names, ["background", "tool", "wear"]);
        assert_eq!(file.records.len(), 6);
        assert!(file.records.iter().all(|r| r.mean_dice().is_some()));
    }

    // With identical passes the mean stack is the single pass.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pass = softmax_pass(&mut rng, 3.0);
    fs::create_dir(d.join("pair")).unwrap();
    fs::write(d.join("pair/a.ubnd"), exporter_bundle("one-pass", std::slice::from_ref(&pass), None)).unwrap();
    fs::write(d.join("pair/b.ubnd"), exporter_bundle("five-pass", &vec![pass; 5], None)).unwrap();
    let out = segtriage(d).args(["score", "--input", "pair", "--output", "pair.json"]).output().unwrap();
    assert!(out.status.success());
    let file = ScoreFile::load(&d.join("pair.json")).unwrap();
    assert_eq!(file.records[0].uncertainty, file.records[1].uncertainty);
    assert_eq!(file.records[0].mean_entropy, file.records[1].mean_entropy);
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[tokio::test]
async fn review_ui_contract_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let _server = Server(
        segtriage(d)
            .arg("serve")
            .env("SEGTRIAGE_DATA_DIR", d.join("data"))
            .env("SEGTRIAGE_BIND", format!("127.0.0.1:{port}"))
            .env_remove("SEGTRIAGE_PALETTE")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let base = format!("http://127.0.0.1:{port}");
    let client = reqwest::Client::new();
    let mut ready = false;
    for _ in 0..200 {
        if client.get(format!("{base}/v1/metrics")).send().await.is_ok() {
            ready = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert!(ready, "service did not come up");

    for bytes in exporter_corpus(&d.join("corpus"), 10, true) {
        let res = client.post(format!("{base}/v1/bundles")).body(bytes).send().await.unwrap();
        assert_eq!(res.status(), 201);
    }
    let res = client.post(format!("{base}/v1/model/fit")).send().await.unwrap();
    assert_eq!(res.status(), 200);

    let queue: Value = client.get(format!("{base}/v1/queue")).send().await.unwrap().json().await.unwrap();
    let items = queue["items"].as_array().unwrap();
    let predicted: Vec<f64> = items.iter().map(|i| i["predicted_mean_dice"].as_f64().unwrap()).collect();
    assert!(predicted.windows(2).all(|w| w[0] <= w[1]));
    for item in items {
        assert!((item["max_entropy"].as_f64().unwrap() - (C as f64).ln()).abs() < 1e-12);
    }

    let first = items[0]["item_id"].as_str().unwrap();
    let res = client
        .post(format!("{base}/v1/items/{first}/decision"))
        .json(&json!({ "action": "accept", "decided_by": "reviewer" }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 200);
    let metrics: Value = client.get(format!("{base}/v1/metrics")).send().await.unwrap().json().await.unwrap();
    let counts = &metrics["counts"];
    let sum = ["pending", "accepted", "annotated"].iter().map(|k| counts[k].as_u64().unwrap()).sum::<u64>();
    assert_eq!(sum, counts["total"].as_u64().unwrap());
    assert_eq!(counts["accepted"], 1);

    // The UI renders the service order as is; a second read agrees.
    let again: Value = client.get(format!("{base}/v1/queue")).send().await.unwrap().json().await.unwrap();
    let ids = |q: &Value| -> Vec<String> {
        q["items"].as_array().unwrap().iter().map(|i| i["item_id"].as_str().unwrap().to_string()).collect()
    };
    let expected: Vec<String> = ids(&queue).into_iter().skip(1).collect();
    assert_eq!(ids(&again), expected);
}
