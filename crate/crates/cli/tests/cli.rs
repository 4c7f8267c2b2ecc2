use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_motion-compose"));
    c.env("RUST_BACKTRACE", "0").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "motion-compose {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn prompts(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("prompts.json");
    std::fs::write(
        &path,
        r#"[{"text": "walk forward", "duration_s": 1.0}, {"text": "wave right hand", "duration_s": 1.0}]"#,
    )
    .unwrap();
    path
}

fn trained(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    run(&["synth", "--out", p(&corpus), "--sequences", "6", "--seed", "2", "--val-fraction", "0.34"]);
    let runs = dir.join("run");
    run(&[
        "train", "--manifest", p(&corpus.join("manifest.json")), "--out", p(&runs), "--preset", "tiny",
        "--epochs", "1", "--val-limit", "2",
    ]);
    runs.join("last.ckpt.json")
}

#[test]
fn synth_train_compose_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path());
    assert!(ckpt.is_file());
    assert!(tmp.path().join("run/loss.csv").is_file());
    assert!(tmp.path().join("run/run.json").is_file());

    let out = run(&["dataset", "pairs", "--manifest", p(&tmp.path().join("corpus/manifest.json")), "--stats"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("pairs: "));

    let prompts = prompts(tmp.path());
    let compose = |name: &str| {
        let path = tmp.path().join(name);
        run(&["compose", "--prompts", p(&prompts), "--checkpoint", p(&ckpt), "--out", p(&path), "--seed", "3"]);
        std::fs::read(path).unwrap()
    };
    let a = compose("a.json");
    assert_eq!(a, compose("b.json"));
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!(v.is_object());

    let out = run(&[
        "eval", "--checkpoint", p(&ckpt), "--manifest", p(&tmp.path().join("corpus/manifest.json")), "--limit", "2",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["samples"], 2);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["ape"]["mean_global"].as_f64().unwrap().is_finite());
}

#[test]
fn usage_errors_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["compose", "--prompts", "missing.json", "--checkpoint", "x", "--out", "y"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["train", "--epochs", "1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--manifest"));
    let out = bin().args(["synth", "--out", p(tmp.path()), "--val-fraction", "2"]).output().unwrap();
    assert!(!out.status.success());
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_and_session_run_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path());
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port().to_string();
    let _server = Server(
        bin()
            .args(["serve", "--checkpoint", p(&ckpt), "--port", &port])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let url = format!("http://127.0.0.1:{port}");
    let start = Instant::now();
    while std::net::TcpStream::connect(format!("127.0.0.1:{port}")).is_err() {
        assert!(start.elapsed() < Duration::from_secs(30), "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    let prompts = prompts(tmp.path());
    let session_run = |name: &str| {
        let path = tmp.path().join(name);
        run(&["session", "run", "--url", &url, "--prompts", p(&prompts), "--out", p(&path), "--seed", "12"]);
        std::fs::read(path).unwrap()
    };
    assert_eq!(session_run("s1.json"), session_run("s2.json"));

    let out = run(&["session", "new", "--url", &url]);
    let id = String::from_utf8(out.stdout).unwrap().trim().to_string();
    let out = bin().args(["session", "export", "--url", &url, &id, "--out", p(&tmp.path().join("e.json"))]).output().unwrap();
    assert!(!out.status.success());
    run(&["session", "append", "--url", &url, &id, "--text", "walk forward", "--duration", "1"]);
    run(&["session", "export", "--url", &url, &id, "--out", p(&tmp.path().join("e.json"))]);
    run(&["session", "delete", "--url", &url, &id]);
}
