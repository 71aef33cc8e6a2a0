use std::io::Write;
use std::net::TcpListener as StdListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use coe_core::labeler::Level;
use coe_core::router::{FeaturizerSpec, TrainConfig};
use coe_core::{
    build_query_labels, build_subject_labels, compute_leaderboard, emit_report, load_params,
    read_dataset, replay, route, save_leaderboard, save_matrix, save_params, synthetic, train, write_dataset,
    CorrectnessMatrix, Policy, ReportFormat,
};
use coe_gateway::{MockExpert, MockExpertConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coe")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = coe(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn matrix(&self, name: &str, m: &CorrectnessMatrix) -> PathBuf {
        let p = self.path(name);
        save_matrix(m, &p).unwrap();
        p
    }
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn labels_match_library() {
    let w = Work::new();
    let m = synthetic::random_matrix(&mut ChaCha8Rng::seed_from_u64(3), 3, 60, 4, synthetic::Grading::Binary);
    let mp = w.matrix("m.jsonl", &m);
    for (level, expect) in [("query", build_query_labels(&m)), ("subject", build_subject_labels(&m))] {
        let out = w.path(&format!("{level}.jsonl"));
        ok(&["labels", "--matrix", s(&mp), "--level", level, "--out", s(&out)]);
        assert_eq!(read_dataset(&out).unwrap(), expect);
        let lib = w.path(&format!("{level}-lib.jsonl"));
        write_dataset(&expect, &lib).unwrap();
        assert_eq!(bytes(&out), bytes(&lib));
    }
}

#[test]
fn leaderboard_matches_library() {
    let w = Work::new();
    let m = synthetic::subject_fixture();
    let mp = w.matrix("m.jsonl", &m);
    let out = w.path("lb.json");
    ok(&["leaderboard", "--matrix", s(&mp), "--out", s(&out)]);
    let lib = w.path("lib.json");
    save_leaderboard(&compute_leaderboard(&m), &lib).unwrap();
    assert_eq!(bytes(&out), bytes(&lib));
}

#[test]
fn train_and_eval_match_library() {
    let w = Work::new();
    let m = synthetic::keyword_corpus(3, 30, 4);
    let mp = w.matrix("m.jsonl", &m);
    let dp = w.path("d.jsonl");
    ok(&["labels", "--matrix", s(&mp), "--level", "query", "--out", s(&dp)]);
    let pp = w.path("p.json");
    ok(&["train", "--dataset", s(&dp), "--dim", "4096", "--epochs", "5", "--lr", "0.2", "--seed", "7", "--out", s(&pp)]);

    let cfg = TrainConfig {
        epochs: 5,
        learning_rate: 0.2,
        seed: 7,
        ..TrainConfig::default()
    };
    let d = build_query_labels(&m).restrict_to_model_set();
    let params = train(&d, FeaturizerSpec::new(4096, 0), &cfg).unwrap();
    let lib = w.path("lib.json");
    save_params(&params, &lib).unwrap();
    assert_eq!(bytes(&pp), bytes(&lib));

    for format in ["structured", "table"] {
        let rp = w.path(&format!("r.{format}"));
        ok(&["eval", "--matrix", s(&mp), "--router", s(&pp), "--report", s(&rp), "--format", format]);
        let expect = w.path(&format!("lib.{format}"));
        let fmt = format.parse::<ReportFormat>().unwrap();
        emit_report(&replay(&m, Policy::Router(&params)).unwrap(), &expect, fmt).unwrap();
        assert_eq!(bytes(&rp), bytes(&expect));
    }
}

#[test]
fn training_defaults_are_reproducible() {
    let w = Work::new();
    let mp = w.matrix("m.jsonl", &synthetic::keyword_corpus(2, 20, 1));
    let dp = w.path("d.jsonl");
    ok(&["labels", "--matrix", s(&mp), "--out", s(&dp)]);
    let (a, b) = (w.path("a.json"), w.path("b.json"));
    ok(&["train", "--dataset", s(&dp), "--out", s(&a)]);
    ok(&["train", "--dataset", s(&dp), "--out", s(&b)]);
    assert_eq!(bytes(&a), bytes(&b));
    let p = load_params(&a).unwrap();
    assert_eq!(p.spec, FeaturizerSpec::default());
    assert_eq!(p.meta.epochs, TrainConfig::default().epochs);
}

#[test]
fn fixed_policies_and_two_stage_eval() {
    let w = Work::new();
    let m = synthetic::subject_fixture();
    let mp = w.matrix("m.jsonl", &m);
    for (policy, expect) in [
        ("fixed:B", Policy::Fixed("B")),
        ("best-single", Policy::BestSingle),
        ("query-oracle", Policy::QueryOracle),
        ("subject-oracle", Policy::SubjectOracle),
    ] {
        let rp = w.path("r.json");
        ok(&["eval", "--matrix", s(&mp), "--policy", policy, "--report", s(&rp)]);
        let lib = w.path("lib.json");
        emit_report(&replay(&m, expect).unwrap(), &lib, ReportFormat::Structured).unwrap();
        assert_eq!(bytes(&rp), bytes(&lib), "{policy}");
    }

    let lbp = w.path("lb.json");
    ok(&["leaderboard", "--matrix", s(&mp), "--out", s(&lbp)]);
    let mut subject_router = coe_core::RouterParams::zeros(FeaturizerSpec::new(16, 0), m.subjects().to_vec());
    subject_router.bias = vec![0.0, 1.0];
    let sp = w.path("s.json");
    save_params(&subject_router, &sp).unwrap();
    let rp = w.path("two.json");
    ok(&["eval", "--matrix", s(&mp), "--subject-router", s(&sp), "--leaderboard", s(&lbp), "--report", s(&rp)]);
    let r: serde_json::Value = serde_json::from_slice(&bytes(&rp)).unwrap();
    // every query is sent to s2's winner
    assert_eq!(r["routing_histogram"]["B"], 1.0);

    assert!(!coe(&["eval", "--matrix", s(&mp), "--policy", "fixed:Z", "--report", s(&rp)]).status.success());
}

#[test]
fn oracle_prints_bounds() {
    let w = Work::new();
    let mp = w.matrix("m.jsonl", &synthetic::subject_fixture());
    let out = ok(&["oracle", "--matrix", s(&mp)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "query 1.0000 / subject 1.0000 / single 0.6667\n");
}

#[test]
fn diversity_prints_json() {
    let w = Work::new();
    let mp = w.matrix("m.jsonl", &synthetic::subject_fixture());
    let out = ok(&["diversity", "--matrix", s(&mp)]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["dataset"], "subject-fixture");
    assert!(r["dominant_model"].is_null());
}

#[test]
fn scenario_matches_library() {
    let w = Work::new();
    let (train_m, test_m) = synthetic::drift_pair(120, 9);
    let (a, b) = (w.matrix("train.jsonl", &train_m), w.matrix("test.jsonl", &test_m));
    let rp = w.path("r.json");
    ok(&["scenario", "--train-matrix", s(&a), "--test-matrix", s(&b), "--level", "subject", "--report", s(&rp)]);
    let r = coe_core::scenario_run(&train_m, &test_m, Level::Subject, FeaturizerSpec::default(), &TrainConfig::default())
        .unwrap();
    let lib = w.path("lib.json");
    emit_report(&r, &lib, ReportFormat::Structured).unwrap();
    assert_eq!(bytes(&rp), bytes(&lib));
}

#[test]
fn usage_errors_exit_2() {
    let w = Work::new();
    let mp = w.matrix("m.jsonl", &synthetic::subject_fixture());
    let r = w.path("r.json");
    let cases: &[&[&str]] = &[
        &["frobnicate"],
        &[],
        &["labels", "--matrix", s(&mp), "--level", "nope", "--out", s(&r)],
        &["eval", "--matrix", s(&mp), "--report", s(&r)],
        &["eval", "--matrix", s(&mp), "--policy", "best-single", "--router", s(&r), "--report", s(&r)],
        &["eval", "--matrix", s(&mp), "--subject-router", s(&r), "--report", s(&r)],
        &["eval", "--matrix", s(&mp), "--policy", "worst", "--report", s(&r)],
        &["serve", "--experts", s(&r)],
    ];
    for args in cases {
        let out = coe(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("Usage") || err.contains("--help"), "{args:?}");
    }
    let out = coe(&["frobnicate"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage: coe <COMMAND>"));
}

#[test]
fn operation_errors_exit_1_with_one_line() {
    let w = Work::new();
    let bad = w.path("bad.jsonl");
    std::fs::write(&bad, "{\"type\":\"header\"}\nnot json\n").unwrap();
    for args in [
        vec!["oracle", "--matrix", "/definitely/not/here.jsonl"],
        vec!["leaderboard", "--matrix", s(&bad), "--out", "/tmp/never"],
    ] {
        let out = coe(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().filter(|l| l.starts_with("error:")).count(), 1, "{err}");
    }
}

fn free_port() -> u16 {
    StdListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_end_to_end() {
    let w = Work::new();
    let m = synthetic::keyword_corpus(3, 40, 2);
    let mp = w.matrix("m.jsonl", &m);
    let dp = w.path("d.jsonl");
    ok(&["labels", "--matrix", s(&mp), "--out", s(&dp)]);
    let pp = w.path("p.json");
    ok(&["train", "--dataset", s(&dp), "--out", s(&pp)]);

    let mut mocks = Vec::new();
    for name in ["A", "B", "C"] {
        mocks.push(MockExpert::spawn(MockExpertConfig::named(name), "127.0.0.1:0").await.unwrap());
    }
    let experts = serde_json::json!({
        "experts": mocks.iter().map(|m| serde_json::json!({"name": m.name(), "url": m.url()})).collect::<Vec<_>>()
    });
    let ep = w.path("experts.json");
    std::fs::File::create(&ep).unwrap().write_all(experts.to_string().as_bytes()).unwrap();

    let addr = format!("127.0.0.1:{}", free_port());
    let _server = Killed(
        Command::new(env!("CARGO_BIN_EXE_coe"))
            .args(["serve", "--router", s(&pp), "--experts", s(&ep), "--addr", &addr])
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );

    let client = reqwest::Client::new();
    let base = format!("http://{addr}");
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        if client.get(format!("{base}/healthz")).send().await.is_ok() {
            break;
        }
        assert!(Instant::now() < deadline, "gateway did not start");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }

    let params = load_params(&pp).unwrap();
    for text in ["alpha3 alpha17", "beta2 beta9 beta11", "gamma0"] {
        let resp: serde_json::Value = client
            .post(format!("{base}/v1/query"))
            .json(&serde_json::json!({ "text": text }))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(resp["model"], route(&params, text).label);
        assert_eq!(resp["fallback_used"], false);
    }
}
