use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn expected(name: &str) -> Vec<u8> {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/expected").join(name);
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn cobweb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cobweb"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cobweb(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    cobweb(dir, args).status.code().expect("exited normally")
}

fn logged_config(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let line = stderr.lines().next().expect("config line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON: {line}: {e}"))
}

/// whiten, then build, leaving `c.cweb`, `q.cweb`, `t.cwwt` and `tree.cwtr` in `dir`.
fn prepare(dir: &Path) {
    let corpus = fixture("corpus.cweb");
    let queries = fixture("queries.cweb");
    ok(
        dir,
        &[
            "whiten",
            "--corpus",
            corpus.to_str().unwrap(),
            "--queries",
            queries.to_str().unwrap(),
            "--queries-out",
            "q.cweb",
            "--transform-out",
            "t.cwwt",
            "--out",
            "c.cweb",
        ],
    );
    ok(dir, &["build", "--corpus", "c.cweb", "--out", "tree.cwtr"]);
}

fn search<'a>(method: &'a str, rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--tree", "tree.cwtr", "--corpus", "c.cweb", "--queries", "q.cweb", "--method", method];
    v.extend_from_slice(rest);
    v
}

fn run_query(dir: &Path, method: &str) -> Vec<u8> {
    let mut args = vec!["query"];
    args.extend(search(method, &["-k", "10"]));
    ok(dir, &args).stdout
}

fn run_eval(dir: &Path, method: &str) -> Vec<u8> {
    let qrels = fixture("qrels.tsv");
    let mut args = vec!["eval"];
    args.extend(search(method, &["--qrels", qrels.to_str().unwrap(), "--cutoffs", "5,10", "--no-latency"]));
    ok(dir, &args).stdout
}

#[test]
fn help_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["whiten", "build", "query", "eval", "bench", "export"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(code(tmp.path(), &["query", "--help"]), 0);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["build", "--out", "x.cwtr"]), 2);
    assert_eq!(code(d, &["frobnicate"]), 2);
    assert_eq!(
        code(d, &["whiten", "--corpus", "a", "--transform-out", "t", "--out", "o", "--no-ica", "--ica-seed", "3"]),
        2
    );
    assert_eq!(code(d, &["whiten", "--corpus", "a", "--transform", "t", "--in", "i", "--out", "o"]), 2);
    assert_eq!(code(d, &["query", "--tree", "t", "--queries", "q", "--method", "dot"]), 2);
    assert_eq!(code(d, &["query", "--tree", "t", "--queries", "q", "--method", "annoy"]), 2);
    assert_eq!(code(d, &["export", "--tree", "t", "--format", "svg"]), 2);
}

#[test]
fn data_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["build", "--corpus", "missing.cweb", "--out", "x.cwtr"]), 1);
    fs::write(d.join("bad.cfg"), "no_such_key = 1\n").unwrap();
    let corpus = fixture("corpus.cweb");
    assert_eq!(
        code(d, &["--config", "bad.cfg", "build", "--corpus", corpus.to_str().unwrap(), "--out", "x.cwtr"]),
        1
    );
    fs::write(d.join("junk.cwtr"), "not a tree").unwrap();
    let queries = fixture("queries.cweb");
    assert_eq!(code(d, &["query", "--tree", "junk.cwtr", "--queries", queries.to_str().unwrap()]), 1);
}

#[test]
fn dimension_mismatch_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let raw = fixture("queries.cweb");
    let out = cobweb(d, &["query", "--tree", "tree.cwtr", "--queries", raw.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    fs::write(d.join("run.cfg"), "# defaults for this run\nmethod = dot\nk = 3\nn_max = 50\n").unwrap();
    let out = ok(d, &["--config", "run.cfg", "query", "--corpus", "c.cweb", "--queries", "q.cweb", "-k", "4"]);
    let cfg = logged_config(&out);
    assert_eq!(cfg["subcommand"], "query");
    assert_eq!(cfg["method"], "dot");
    assert_eq!(cfg["k"], 4);
    assert_eq!(cfg["n_max"], 50);
    assert_eq!(cfg["whiten_threshold"], 0.96);
    assert_eq!(cfg["variance_floor"], 0.001);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("qry00\t")).count(), 4);
}

#[test]
fn every_run_logs_one_config_line() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let out = ok(d, &["export", "--tree", "tree.cwtr", "--max-depth", "1"]);
    let cfg = logged_config(&out);
    assert_eq!(cfg["subcommand"], "export");
    assert_eq!(cfg["paths"]["tree"], "tree.cwtr");
    assert_eq!(cfg["seed"], 0);
    assert_eq!(cfg["use_ica"], true);
}

#[test]
fn pipeline_matches_verified_outputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    for method in ["bfs", "pathsum", "dot"] {
        assert!(
            run_query(d, method) == expected(&format!("query_{method}.tsv")),
            "{method} rankings differ from tests/expected"
        );
        let report = run_eval(d, method);
        assert!(report == expected(&format!("eval_{method}.json")), "{method} report differs");
        let json: serde_json::Value = serde_json::from_slice(&report).unwrap();
        assert_eq!(json["query_count"], 40);
        assert!(json.get("latency").is_none());
    }
}

#[test]
fn eval_with_latency_reports_it() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let qrels = fixture("qrels.tsv");
    let mut args = vec!["eval"];
    args.extend(search("pathsum", &["--qrels", qrels.to_str().unwrap(), "--gain", "exponential"]));
    let out = ok(d, &args);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["gain"], "exponential");
    let lat = &json["latency"];
    assert!(lat["p50_ms"].as_f64().unwrap() <= lat["p95_ms"].as_f64().unwrap());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nDCG"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|_| {
            let tmp = TempDir::new().unwrap();
            let d = tmp.path();
            prepare(d);
            ok(d, &["build", "--corpus", "c.cweb", "--out", "tree.json", "--shuffle-seed", "5"]);
            let docs = fixture("docs.tsv");
            let mut outputs = Vec::new();
            for f in ["c.cweb", "c.cweb.ids", "q.cweb", "t.cwwt", "tree.cwtr", "tree.json"] {
                outputs.push((f.to_owned(), fs::read(d.join(f)).unwrap()));
            }
            for m in ["bfs", "pathsum", "dot"] {
                outputs.push((format!("query {m}"), run_query(d, m)));
                outputs.push((format!("eval {m}"), run_eval(d, m)));
            }
            let mut explain = vec!["query", "--explain"];
            explain.extend(search("bfs", &["-k", "3"]));
            outputs.push(("explain".into(), ok(d, &explain).stdout));
            for fmt in ["json", "dot"] {
                let args = ["export", "--tree", "tree.cwtr", "--format", fmt, "--docs", docs.to_str().unwrap()];
                outputs.push((format!("export {fmt}"), ok(d, &args).stdout));
            }
            outputs
        })
        .collect();
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        assert_eq!(a.0, b.0);
        assert!(a.1 == b.1, "{} differs between runs", a.0);
    }
}

#[test]
fn apply_mode_reproduces_fitted_queries() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let queries = fixture("queries.cweb");
    ok(d, &["whiten", "--transform", "t.cwwt", "--in", queries.to_str().unwrap(), "--out", "q2.cweb"]);
    assert_eq!(fs::read(d.join("q.cweb")).unwrap(), fs::read(d.join("q2.cweb")).unwrap());
    assert_eq!(fs::read(d.join("q.cweb.ids")).unwrap(), fs::read(d.join("q2.cweb.ids")).unwrap());
}

#[test]
fn query_transform_flag_whitens_raw_queries() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let raw = fixture("queries.cweb");
    let out = ok(
        d,
        &["query", "--tree", "tree.cwtr", "--queries", raw.to_str().unwrap(), "--transform", "t.cwwt", "--method", "bfs"],
    );
    assert!(out.stdout == expected("query_bfs.tsv"));
}

#[test]
fn json_tree_ranks_like_the_snapshot() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    ok(d, &["build", "--corpus", "c.cweb", "--out", "tree.json"]);
    let text = fs::read_to_string(d.join("tree.json")).unwrap();
    assert!(text.trim_start().starts_with('{'));
    let out = ok(d, &["query", "--tree", "tree.json", "--queries", "q.cweb", "--method", "pathsum"]);
    assert!(out.stdout == expected("query_pathsum.tsv"));
}

#[test]
fn tree_is_built_on_the_fly_from_a_corpus() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let out = ok(d, &["query", "--corpus", "c.cweb", "--queries", "q.cweb", "--method", "bfs"]);
    assert!(out.stdout == expected("query_bfs.tsv"));
}

#[test]
fn explain_path_scores_sum_to_the_pathsum_score() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let mut args = vec!["query", "--explain"];
    args.extend(search("pathsum", &["-k", "5"]));
    let text = String::from_utf8(ok(d, &args).stdout).unwrap();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    let mut checked = 0;
    for pair in lines.windows(2) {
        let [result, path] = pair else { unreachable!() };
        if result.starts_with('#') || !path.starts_with("# ") {
            continue;
        }
        let score: f64 = result.split('\t').nth(3).unwrap().parse().unwrap();
        let steps: Vec<f64> = path
            .rsplit('\t')
            .next()
            .unwrap()
            .split(' ')
            .map(|s| s.rsplit(':').next().unwrap().parse().unwrap())
            .collect();
        // The leaf itself is the last step and is not part of the default path sum.
        let sum: f64 = steps[..steps.len() - 1].iter().sum();
        assert!((sum - score).abs() <= 1e-9 * score.abs().max(1.0), "{sum} vs {score}");
        checked += 1;
    }
    assert_eq!(checked, 40 * 5);
}

#[test]
fn export_renders_json_and_dot() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    prepare(d);
    let docs = fixture("docs.tsv");
    ok(
        d,
        &["export", "--tree", "tree.cwtr", "--format", "dot", "--docs", docs.to_str().unwrap(), "--out", "tree.dot"],
    );
    let dot = fs::read_to_string(d.join("tree.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("topic"));
    let full: serde_json::Value = serde_json::from_slice(&ok(d, &["export", "--tree", "tree.cwtr"]).stdout).unwrap();
    let shallow: serde_json::Value =
        serde_json::from_slice(&ok(d, &["export", "--tree", "tree.cwtr", "--max-depth", "1"]).stdout).unwrap();
    let count = |v: &serde_json::Value| v["nodes"].as_array().map(Vec::len).unwrap_or(0);
    assert!(count(&full) > count(&shallow) && count(&shallow) > 1, "{} {}", count(&full), count(&shallow));
}

#[test]
fn bench_prints_tsv() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        &["bench", "--sizes", "200,100", "--methods", "dot,bfs", "--trials", "1", "--dim", "8", "--n-queries", "12"],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "size\tmethod\tmean_ms");
    let keys: Vec<(&str, &str)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert!(f[2].parse::<f64>().unwrap() >= 0.0);
            (f[0], f[1])
        })
        .collect();
    assert_eq!(keys, [("100", "dot"), ("100", "bfs"), ("200", "dot"), ("200", "bfs")]);
}
