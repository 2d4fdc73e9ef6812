use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dksel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dksel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_pool(path: &Path, n: usize, d: usize, data: &[f32]) {
    let mut bytes = b"DKSEL1".to_vec();
    bytes.extend((n as u32).to_le_bytes());
    bytes.extend((d as u32).to_le_bytes());
    for x in data {
        bytes.extend(x.to_le_bytes());
    }
    fs::write(path, bytes).unwrap();
}

/// Three unit rows: two near-duplicates and one orthogonal item.
fn three_item_pool(dir: &Path) -> (String, String) {
    let pool = dir.join("pool.bin");
    write_pool(&pool, 3, 2, &[1.0, 0.0, 0.995, 0.0998749, 0.0, 1.0]);
    let rel = dir.join("rel.json");
    fs::write(&rel, "[0.9, 0.1, 0.5]").unwrap();
    (pool.display().to_string(), rel.display().to_string())
}

fn selected(out: &Output) -> Vec<u64> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    v["selected"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect()
}

#[test]
fn topk_and_fw_on_the_three_item_pool() {
    let dir = tempfile::tempdir().unwrap();
    let (pool, rel) = three_item_pool(dir.path());
    let base = ["select", "--pool", &pool, "--relevance", &rel, "--k", "2"];
    let topk = dksel(&[&base[..], &["--method", "topk"]].concat());
    assert_eq!(selected(&topk), vec![0, 2]);
    let fw = dksel(&[&base[..], &["--method", "fw", "--theta", "0.5"]].concat());
    assert_eq!(selected(&fw), vec![0, 2]);
    let v: Value = serde_json::from_slice(&fw.stdout).unwrap();
    assert_eq!(v["config"]["method"], "fw");
    assert_eq!(v["local_max_certified"], true);
    assert!(v["certificate"].is_object());
}

#[test]
fn fw_at_theta_one_matches_topk() {
    let dir = tempfile::tempdir().unwrap();
    let (pool, rel) = three_item_pool(dir.path());
    let base = ["select", "--pool", &pool, "--relevance", &rel, "--k", "2", "--theta", "1"];
    let fw = dksel(&[&base[..], &["--method", "fw"]].concat());
    let topk = dksel(&[&base[..], &["--method", "topk"]].concat());
    assert_eq!(selected(&fw), selected(&topk));
}

#[test]
fn validation_failures_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let (pool, rel) = three_item_pool(dir.path());
    let out = dksel(&["select", "--pool", &pool, "--relevance", &rel, "--k", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");

    let bad = dir.path().join("bad.bin");
    fs::write(&bad, b"DKSEL1\x02\x00").unwrap();
    let out = dksel(&["select", "--pool", &bad.display().to_string(), "--relevance", &rel, "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exact_refuses_large_enumerations() {
    let dir = tempfile::tempdir().unwrap();
    let n = 40;
    let mut data = vec![0.0f32; n * 2];
    for i in 0..n {
        let a = i as f32 * 0.07;
        data[2 * i] = a.cos();
        data[2 * i + 1] = a.sin();
    }
    let pool = dir.path().join("p.bin");
    write_pool(&pool, n, 2, &data);
    let rel = dir.path().join("r.json");
    fs::write(&rel, serde_json::to_string(&vec![0.5; n]).unwrap()).unwrap();
    let out = dksel(&[
        "select",
        "--pool",
        &pool.display().to_string(),
        "--relevance",
        &rel.display().to_string(),
        "--k",
        "10",
        "--method",
        "exact",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1000000") || err.contains("10^6") || err.contains("1e6"), "{err}");
}

fn synth_into(dir: &Path) -> Vec<String> {
    let out = dksel(&[
        "synth",
        "--n",
        "400",
        "--d",
        "16",
        "--clusters",
        "10",
        "--redundancy",
        "20",
        "--queries",
        "10",
        "--relevant-per-query",
        "3",
        "--out-dir",
        &dir.display().to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn synth_is_reproducible_and_feeds_sweep() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files_a = synth_into(a.path());
    let files_b = synth_into(b.path());
    assert_eq!(files_a.len(), 4);
    for (x, y) in files_a.iter().zip(&files_b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{x}");
    }

    let csv = a.path().join("sweep.csv");
    let summary = a.path().join("summary.json");
    let out = dksel(&[
        "sweep",
        "--pool",
        &files_a[0],
        "--query-pool",
        &files_a[1],
        "--gold",
        &files_a[2],
        "--methods",
        "mmr",
        "--k",
        "5",
        "--out",
        &csv.display().to_string(),
        "--summary",
        &summary.display().to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("method,theta,k,query_id"));
    assert_eq!(lines.count(), 9 * 10);
    let points: Value = serde_json::from_slice(&fs::read(&summary).unwrap()).unwrap();
    assert_eq!(points.as_array().unwrap().len(), 9);
}

#[test]
fn bench_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_into(dir.path());
    let csv = dir.path().join("bench.csv");
    let out = dksel(&[
        "bench",
        "--pool",
        &files[0],
        "--queries",
        &files[1],
        "--methods",
        "fw",
        "--k-values",
        "5",
        "--thetas",
        "0.7",
        "--warmup",
        "2",
        "--runs",
        "5",
        "--out",
        &csv.display().to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2);
    let sidecar: Value = serde_json::from_slice(&fs::read(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(sidecar["runs"], 5);
}
