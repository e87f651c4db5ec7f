//! End-to-end runs of the command-line pipeline on the fixture city.

mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;
use support::{fixture_config, fixture_dir, path_arg, run_cli, tree_digest};
use urbangraph_cli::{run_dataset_build, PipelineConfig};
use urbangraph_core::bench::{parse_instances, planted_embeddings, EmbeddingRecord};
use urbangraph_core::graph::read_graph;

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

fn config_arg() -> String {
    fixture_dir()
        .join("pipeline.toml")
        .to_string_lossy()
        .into_owned()
}

/// Writes a copy of the fixture config with absolute input paths and extra
/// TOML appended.
fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let base = fs::read_to_string(fixture_dir().join("pipeline.toml")).unwrap();
    let fixtures = fixture_dir();
    let abs = |name: &str| fixtures.join(name).to_string_lossy().replace('\\', "/");
    let text = base
        .replace("\"city.geojson\"", &format!("{:?}", abs("city.geojson")))
        .replace("\"images.csv\"", &format!("{:?}", abs("images.csv")))
        .replace(
            "\"perception.csv\"",
            &format!("{:?}", abs("perception.csv")),
        );
    let path = dir.join("pipeline.toml");
    fs::write(&path, format!("{text}\n{extra}")).unwrap();
    path
}

#[test]
fn manifest_counts_match_an_independent_recount() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let m = run_dataset_build(&fixture_config(&out)).unwrap();
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let counts = &manifest["counts"];

    let (g, _) = read_graph(&out.join("graph")).unwrap();
    assert_eq!(counts["nodes"], g.node_count());
    assert_eq!(counts["edges"], g.edge_count());
    let subgraphs = fs::read_dir(out.join("subgraphs"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension() == Some("subgraph".as_ref()))
        .count();
    assert_eq!(counts["subgraphs"], subgraphs);
    let images = lines(&fixture_dir().join("images.csv")).len() - 1;
    assert_eq!(subgraphs, images);
    for (key, file) in [
        ("srps", "srp.jsonl"),
        ("stage1_samples", "stage1.jsonl"),
        ("stage2_samples", "stage2.jsonl"),
        ("caption_prompts", "caption_prompts.jsonl"),
    ] {
        assert_eq!(counts[key], lines(&out.join(file)).len(), "{key}");
    }
    assert_eq!(counts["caption_prompts"], images);

    // Mean hop count recomputed from the path records.
    let hops: Vec<f64> = lines(&out.join("srp.jsonl"))
        .iter()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["hops"]
                .as_f64()
                .unwrap()
        })
        .collect();
    let mean = hops.iter().sum::<f64>() / hops.len() as f64;
    assert!((manifest["avg_srp_hops"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(hops.iter().all(|h| (2.0..=8.0).contains(h)));

    for file in manifest["files"].as_object().unwrap().values() {
        assert!(out.join(file.as_str().unwrap()).exists(), "{file}");
    }
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["city"], "Astoria");
    assert!(manifest["config"].get("out").is_none());
    assert_eq!(m.counts.srps, hops.len());
}

#[test]
fn staged_commands_reproduce_full_build() {
    let tmp = tempfile::tempdir().unwrap();
    let (full, staged) = (tmp.path().join("full"), tmp.path().join("staged"));
    let cfg = config_arg();
    assert_eq!(
        run_cli(&["--config", &cfg, "--out", path_arg(&full), "full-build"]),
        0
    );
    for cmd in [
        "build-graph",
        "anchor-images",
        "extract-subgraphs",
        "gen-srp",
        "gen-captions-prompts",
        "emit-samples",
    ] {
        assert_eq!(
            run_cli(&["--config", &cfg, "--out", path_arg(&staged), cmd]),
            0,
            "{cmd}"
        );
    }
    let mut a = tree_digest(&full);
    assert!(a.remove("manifest.json").is_some());
    assert_eq!(a, tree_digest(&staged));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for jobs in ["1", "3"] {
        let out = tmp.path().join(jobs);
        let code = run_cli(&[
            "--config",
            &config_arg(),
            "--out",
            path_arg(&out),
            "--jobs",
            jobs,
            "full-build",
        ]);
        assert_eq!(code, 0);
        digests.push(tree_digest(&out));
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn seed_override_changes_only_the_recorded_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = config_arg();
    assert_eq!(
        run_cli(&["--config", &cfg, "--out", path_arg(&a), "full-build"]),
        0
    );
    let code = run_cli(&[
        "--config",
        &cfg,
        "--out",
        path_arg(&b),
        "--seed",
        "7",
        "full-build",
    ]);
    assert_eq!(code, 0);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    // Dataset stages are deterministic functions of the inputs.
    assert_eq!(
        fs::read(a.join("srp.jsonl")).unwrap(),
        fs::read(b.join("srp.jsonl")).unwrap()
    );
}

#[test]
fn empty_image_list_gives_a_valid_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("none.csv");
    fs::write(&csv, "id,lon,lat\n").unwrap();
    let mut cfg = fixture_config(&tmp.path().join("out"));
    cfg.images = Some(csv);
    cfg.perception = None;
    let m = run_dataset_build(&cfg).unwrap();
    assert!(m.counts.nodes > 0 && m.counts.edges > 0);
    assert_eq!(
        (m.counts.subgraphs, m.counts.srps, m.counts.stage1_samples),
        (0, 0, 0)
    );
    assert_eq!(m.avg_srp_hops, 0.0);
    let out = tmp.path().join("out");
    assert_eq!(fs::read(out.join("stage2.jsonl")).unwrap(), b"");
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn bad_input_leaves_no_output_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let geo = tmp.path().join("broken.geojson");
    fs::write(&geo, "{\"type\": \"FeatureCollection\", \"features\": [").unwrap();
    let mut cfg = fixture_config(&tmp.path().join("out"));
    cfg.geojson = vec![geo];
    let err = run_dataset_build(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    assert!(!tmp.path().join("out").exists());
    let leftovers: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "broken.geojson")
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn failed_rebuild_keeps_the_previous_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    run_dataset_build(&fixture_config(&out)).unwrap();
    let before = tree_digest(&out);
    let csv = tmp.path().join("bad.csv");
    fs::write(&csv, "id,lon,lat\nx,1.0,95.0\n").unwrap();
    let mut cfg = fixture_config(&out);
    cfg.images = Some(csv);
    assert_eq!(run_dataset_build(&cfg).unwrap_err().exit_code(), 3);
    assert_eq!(tree_digest(&out), before);
}

#[test]
fn refuses_to_replace_a_foreign_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep me").unwrap();
    let err = run_dataset_build(&fixture_config(&out)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert_eq!(
        fs::read_to_string(out.join("notes.txt")).unwrap(),
        "keep me"
    );

    // A previous build is replaced without complaint.
    let prev = tmp.path().join("prev");
    run_dataset_build(&fixture_config(&prev)).unwrap();
    fs::write(prev.join("stray.txt"), "old").unwrap();
    run_dataset_build(&fixture_config(&prev)).unwrap();
    assert!(!prev.join("stray.txt").exists());
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    assert_eq!(run_cli(&["no-such-command"]), 2);
    assert_eq!(
        run_cli(&["--config", "/nonexistent/x.toml", "full-build"]),
        2
    );
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[extract]\nradius_m = -1.0\n").unwrap();
    assert_eq!(run_cli(&["--config", path_arg(&bad), "gen-srp"]), 2);
    fs::write(&bad, "mystery = true\n").unwrap();
    assert_eq!(run_cli(&["--config", path_arg(&bad), "gen-srp"]), 2);
    assert_eq!(run_cli(&["--help"]), 0);
}

// ---------- benchmark evaluation ----------

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it).unwrap());
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Generates the fixture benchmark, then plants ranks so that every
/// (task, city) row has a hand-computable score.
fn planted_eval_setup(tmp: &Path) -> (std::path::PathBuf, BTreeMap<String, (f64, f64)>) {
    let out = tmp.join("out");
    let cfg = config_arg();
    assert_eq!(
        run_cli(&["--config", &cfg, "--out", path_arg(&out), "full-build"]),
        0
    );
    assert_eq!(
        run_cli(&["--config", &cfg, "--out", path_arg(&out), "gen-bench"]),
        0
    );
    let instances =
        parse_instances(&fs::read_to_string(out.join("bench/instances.jsonl")).unwrap()).unwrap();
    assert!(instances.len() > 50);
    let ranks: Vec<usize> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| i % inst.candidates.len() + 1)
        .collect();
    let (q, c) = planted_embeddings(&instances, &ranks, 12).unwrap();
    write_jsonl(&tmp.join("q.jsonl"), &q.records());
    write_jsonl(&tmp.join("c.jsonl"), &c.records());

    // Per-row oracle: mean of the hit indicator and of 1/log2(rank+1).
    let mut acc: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
    for (inst, &r) in instances.iter().zip(&ranks) {
        let e = acc
            .entry(format!("{},{}", inst.task, inst.city))
            .or_default();
        if r <= 5 {
            e.0 += 1.0;
            e.1 += 1.0 / ((r + 1) as f64).log2();
        }
        e.2 += 1.0;
    }
    let want = acc
        .into_iter()
        .map(|(k, (h, n, c))| (k, (100.0 * h / c, 100.0 * n / c)))
        .collect();
    let cfg_path = write_config(
        tmp,
        &format!(
            "[eval]\ninstances = {:?}\nquery_embeddings = \"q.jsonl\"\ncandidate_embeddings = \"c.jsonl\"\n",
            out.join("bench/instances.jsonl").to_string_lossy()
        ),
    );
    (cfg_path, want)
}

#[test]
fn eval_reports_planted_scores_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, want) = planted_eval_setup(tmp.path());
    let out = tmp.path().join("out");
    let args = ["--config", path_arg(&cfg), "--out", path_arg(&out), "eval"];
    assert_eq!(run_cli(&args), 0);

    let mut rdr = csv::Reader::from_path(out.join("eval/report.csv")).unwrap();
    let mut got = BTreeMap::new();
    for row in rdr.records() {
        let row = row.unwrap();
        let key = format!("{},{}", &row[0], &row[1]);
        got.insert(
            key,
            (
                row[2].parse::<f64>().unwrap(),
                row[3].parse::<f64>().unwrap(),
            ),
        );
    }
    assert_eq!(
        got.keys().collect::<Vec<_>>(),
        want.keys().collect::<Vec<_>>()
    );
    for (k, (h, n)) in &want {
        let (gh, gn) = got[k];
        assert!(
            (gh - h).abs() < 5e-5 && (gn - n).abs() < 5e-5,
            "{k}: {gh},{gn} vs {h},{n}"
        );
    }
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
    assert_eq!(report["report"]["k"], 5);

    let first = tree_digest(&out.join("eval"));
    assert_eq!(run_cli(&args), 0);
    assert_eq!(tree_digest(&out.join("eval")), first);
}

#[test]
fn eval_with_a_missing_embedding_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, _) = planted_eval_setup(tmp.path());
    let q = tmp.path().join("q.jsonl");
    let mut recs: Vec<EmbeddingRecord> = lines(&q)
        .iter()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    recs.remove(recs.len() / 2);
    write_jsonl(&q, &recs);
    let out = tmp.path().join("out");
    let code = run_cli(&["--config", path_arg(&cfg), "--out", path_arg(&out), "eval"]);
    assert_eq!(code, 3);
    assert!(!out.join("eval").exists());
}

#[test]
fn eval_without_embeddings_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "--config",
        &config_arg(),
        "--out",
        path_arg(tmp.path()),
        "eval",
    ]);
    assert_eq!(code, 2);
}

// ---------- encoder commands ----------

#[test]
fn train_toy_writes_checkpoint_log_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("steps = 200", "steps = 30");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let args = [
        "--config",
        path_arg(&cfg),
        "--out",
        path_arg(&out),
        "train-toy",
    ];
    assert_eq!(run_cli(&args), 0);
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("train/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"], 30);
    assert!(summary["loss_after"].as_f64() < summary["loss_before"].as_f64());
    // Header plus one row per step.
    assert_eq!(lines(&out.join("train/log.csv")).len(), 31);
    let first = tree_digest(&out.join("train"));
    assert_eq!(run_cli(&args), 0);
    assert_eq!(tree_digest(&out.join("train")), first);
}

#[test]
fn grad_check_passes_and_reports_tolerance_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path_arg(tmp.path());
    assert_eq!(run_cli(&["--out", out, "grad-check"]), 0);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("grad_check.json")).unwrap())
            .unwrap();
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert!(report["sampled_params"].as_u64().unwrap() >= 100);
    assert_eq!(
        run_cli(&["--out", out, "grad-check", "--tolerance", "1e-12"]),
        4
    );
    assert_eq!(run_cli(&["--out", out, "grad-check", "--samples", "0"]), 2);
}

#[test]
fn config_echo_round_trips() {
    let cfg = fixture_config(Path::new("/tmp/unused"));
    let echo = cfg.echo();
    let back: PipelineConfig = serde_json::from_value(echo.clone()).unwrap();
    assert_eq!(back.echo(), echo);
}
