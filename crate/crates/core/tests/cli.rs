use std::path::{Path, PathBuf};

use dadh::cli::{run_from, EXIT_CONFIG, EXIT_DATA};
use dadh::codes::CodeMatrix;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn dadh(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_from(std::iter::once("dadh").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let r = dadh(args);
    assert_eq!(r.code, 0, "dadh {args:?} failed: {}", r.stderr);
    r.stdout
}

/// Small synthetic dataset plus a training config in `dir`.
struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(extra: &str) -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&[
            "synth",
            "--classes",
            "3",
            "--per-class",
            "20",
            "--dim",
            "16",
            "--seed",
            "4",
            "--out",
            &f.p("data"),
        ]);
        let cfg = format!(
            r#"{{"features": "data/features.bin", "labels": "data/labels.txt", "n_query": 12, "n_train": 48,
               "hidden": [24], "hyperparams": {{"k": 16, "outer_iters": 4{extra}}}}}"#
        );
        std::fs::write(f.path("config.json"), cfg).unwrap();
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn p(&self, rel: &str) -> String {
        self.path(rel).to_string_lossy().into_owned()
    }

    fn train(&self, extra: &[&str]) {
        let cfg = self.p("config.json");
        let mut args = vec!["train", "--config", &cfg];
        args.extend_from_slice(extra);
        ok(&args);
    }

    fn encode(&self, subset: &str, stream: &str, out: &str) {
        ok(&[
            "encode",
            "--checkpoint",
            &self.p("run/model.ckpt"),
            "--features",
            &self.p("data/features.bin"),
            "--split",
            &self.p("run/split.json"),
            "--subset",
            subset,
            "--stream",
            stream,
            "--out",
            &self.p(out),
        ]);
    }

    fn manifest(&self) -> serde_json::Value {
        serde_json::from_slice(&std::fs::read(self.path("run/manifest.json")).unwrap()).unwrap()
    }
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let fx = Fixture::new("");
    fx.train(&[]);
    fx.encode("query", "fused", "q.codes");
    fx.encode("retrieval", "fused", "db.codes");
    let text = ok(&[
        "eval",
        "--queries",
        &fx.p("q.codes"),
        "--db",
        &fx.p("db.codes"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--split",
        &fx.p("run/split.json"),
        "--topk",
        "10",
        "--pr",
        &fx.p("pr.csv"),
    ]);
    let metrics: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(metrics["n_queries"], 12);
    for key in ["map", "map_at_k", "precision_at_k"] {
        let v = metrics[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(fx.path("pr.csv").exists());

    let hits = ok(&[
        "search",
        "--db",
        &fx.p("db.codes"),
        "--queries",
        &fx.p("q.codes"),
        "--query-row",
        "0",
        "--topk",
        "5",
        "--split",
        &fx.p("run/split.json"),
    ]);
    let line: serde_json::Value = serde_json::from_str(hits.lines().next().unwrap()).unwrap();
    let hits = line["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 5);
    let d: Vec<u64> = hits.iter().map(|h| h["distance"].as_u64().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn missing_tau_defaults_and_is_echoed() {
    let fx = Fixture::new("");
    fx.train(&[]);
    let m = fx.manifest();
    assert_eq!(m["hyperparams"]["tau"], 10.0);
    assert_eq!(m["mode"], "full");
}

#[test]
fn ablate_flag_recorded() {
    let fx = Fixture::new("");
    fx.train(&["--ablate"]);
    assert_eq!(fx.manifest()["mode"], "ablated");
}

#[test]
fn rerun_gives_identical_digests() {
    let fx = Fixture::new("");
    fx.train(&[]);
    let first = fx.manifest();
    let ckpt = read(fx.path("run/model.ckpt"));
    fx.train(&[]);
    let second = fx.manifest();
    assert_eq!(read(fx.path("run/model.ckpt")), ckpt);
    assert_eq!(first["checkpoint_sha256"], second["checkpoint_sha256"]);
    assert_eq!(first["codes_sha256"], second["codes_sha256"]);
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let fx = Fixture::new(r#", "tua": 3"#);
    let r = dadh(&["train", "--config", &fx.p("config.json")]);
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("tua"), "{}", r.stderr);
}

#[test]
fn empty_query_file_is_rejected() {
    let fx = Fixture::new("");
    dadh::io::save_codes(&fx.path("empty.codes"), &CodeMatrix::all_positive(0, 16)).unwrap();
    dadh::io::save_codes(&fx.path("db.codes"), &CodeMatrix::all_positive(4, 16)).unwrap();
    let r = dadh(&[
        "eval",
        "--queries",
        &fx.p("empty.codes"),
        "--db",
        &fx.p("db.codes"),
        "--labels",
        &fx.p("data/labels.txt"),
    ]);
    assert_eq!(r.code, EXIT_DATA, "{}", r.stderr);
}

#[test]
fn short_label_file_is_a_data_error() {
    let fx = Fixture::new("");
    dadh::io::save_codes(&fx.path("db.codes"), &CodeMatrix::all_positive(4, 16)).unwrap();
    std::fs::write(fx.path("short.txt"), "0\n1\n").unwrap();
    let r = dadh(&[
        "eval",
        "--queries",
        &fx.p("db.codes"),
        "--db",
        &fx.p("db.codes"),
        "--labels",
        &fx.p("short.txt"),
    ]);
    assert_eq!(r.code, EXIT_DATA, "{}", r.stderr);
}

#[test]
fn database_as_its_own_queries_scores_one_at_depth_one() {
    let fx = Fixture::new("");
    fx.train(&[]);
    fx.encode("retrieval", "fused", "db.codes");
    // labels indexed by database row
    let split: serde_json::Value = serde_json::from_slice(&read(fx.path("run/split.json"))).unwrap();
    let all = std::fs::read_to_string(fx.path("data/labels.txt")).unwrap();
    let lines: Vec<&str> = all.lines().collect();
    let rows: String = split["retrieval"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| format!("{}\n", lines[i.as_u64().unwrap() as usize]))
        .collect();
    std::fs::write(fx.path("db_labels.txt"), rows).unwrap();
    // distinct codes so every query's nearest entry is itself
    let n = split["retrieval"].as_array().unwrap().len();
    let mut codes = CodeMatrix::all_negative(n, 16);
    for i in 0..n {
        for c in 0..16 {
            codes.set(i, c, i >> c & 1 == 1);
        }
    }
    dadh::io::save_codes(&fx.path("distinct.codes"), &codes).unwrap();
    let text = ok(&[
        "eval",
        "--queries",
        &fx.p("distinct.codes"),
        "--db",
        &fx.p("distinct.codes"),
        "--labels",
        &fx.p("db_labels.txt"),
        "--topk",
        "1",
    ]);
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["map_at_k"], 1.0);
    assert_eq!(m["precision_at_k"], 1.0);
}

#[test]
fn encode_rejects_mismatched_bit_count() {
    let fx = Fixture::new("");
    fx.train(&[]);
    let r = dadh(&[
        "encode",
        "--checkpoint",
        &fx.p("run/model.ckpt"),
        "--features",
        &fx.p("data/features.bin"),
        "--k",
        "32",
        "--out",
        &fx.p("x.codes"),
    ]);
    assert_eq!(r.code, EXIT_DATA, "{}", r.stderr);
    assert!(!fx.path("x.codes").exists());
}

#[test]
fn single_stream_encoding_is_deterministic() {
    let fx = Fixture::new("");
    fx.train(&[]);
    fx.encode("query", "f", "a.codes");
    fx.encode("query", "f", "b.codes");
    assert_eq!(read(fx.path("a.codes")), read(fx.path("b.codes")));
    fx.encode("query", "g", "g.codes");
    let f = dadh::io::load_codes(&fx.path("a.codes")).unwrap();
    let g = dadh::io::load_codes(&fx.path("g.codes")).unwrap();
    assert_eq!((f.n(), f.k()), (g.n(), g.k()));
}

#[test]
fn usage_errors_exit_with_config_code() {
    assert_eq!(dadh(&["train"]).code, EXIT_CONFIG);
    assert_eq!(dadh(&["bogus"]).code, EXIT_CONFIG);
}
