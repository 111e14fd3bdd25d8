use std::path::Path;
use std::process::{Command, Output};

use beamgraph::io::{read_ground_truth, read_vectors_bin};
use beamgraph::ElementKind;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamgraph"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn beamgraph")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

/// Writes base/query files and ground truth into `dir`.
fn prepare(dir: &Path, count: &str) {
    ok(
        &["synth", "--count", count, "--dims", "16", "--seed", "3", "--queries", "50", "--queries-out", "q.fbin", "--out", "base.fbin"],
        dir,
    );
    ok(&["gt", "--data", "base.fbin", "--queries", "q.fbin", "--k", "10", "--out", "gt.bin"], dir);
}

fn recall_column(csv: &str) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect()
}

#[test]
fn build_then_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "2000");
    assert_eq!(read_vectors_bin(d.join("base.fbin"), ElementKind::F32).unwrap().len(), 2000);
    let gt = read_ground_truth(d.join("gt.bin")).unwrap();
    assert_eq!((gt.query_count, gt.k), (50, 10));

    ok(&["build", "--input", "base.fbin", "--R", "16", "--beam", "32", "--alpha", "1.2", "--out", "idx"], d);
    for f in ["data.fbin", "graph.bin", "params.json"] {
        assert!(d.join("idx").join(f).exists(), "{f}");
    }
    let csv = ok(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "10", "--beams", "10,20,40,80"], d);
    assert_eq!(csv.lines().next().unwrap(), "beam_width,k,recall,qps,mean_latency_us");
    let recalls = recall_column(&csv);
    assert_eq!(recalls.len(), 4);
    assert!(recalls.iter().all(|r| (0.0..=1.0).contains(r)));
    assert!(recalls[3] > 0.9, "{csv}");

    ok(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "10", "--beams", "40", "--threads", "1", "--out", "s.csv"], d);
    assert_eq!(std::fs::read_to_string(d.join("s.csv")).unwrap().lines().count(), 2);
}

#[test]
fn empty_beam_list_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "300");
    ok(&["build", "--input", "base.fbin", "--R", "8", "--beam", "16", "--out", "idx"], d);
    let csv = ok(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "10", "--beams", ""], d);
    assert_eq!(csv, "beam_width,k,recall,qps,mean_latency_us\n");
}

#[test]
fn validation_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "300");
    let err = fails(&["build", "--input", "base.fbin", "--R", "1", "--out", "idx"], d);
    assert!(err.contains("degree_cap"), "{err}");
    assert!(!d.join("idx").exists());

    ok(&["build", "--input", "base.fbin", "--R", "8", "--beam", "16", "--out", "idx"], d);
    let err = fails(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "10", "--beams", "16,0"], d);
    assert!(err.contains("beam_width"), "{err}");
    let err = fails(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "11", "--beams", "16"], d);
    assert!(err.contains("k"), "{err}");
    let err = fails(&["build", "--input", "base.bin", "--out", "x"], d);
    assert!(err.contains(".fbin or .u8bin"), "{err}");
    let err = fails(&["insert", "--index", "idx", "--input", "q.fbin", "--batch-pct", "0"], d);
    assert!(err.contains("batch-pct"), "{err}");
    let err = fails(&["build", "--input", "base.fbin", "--metric", "rabitq", "--out", "y"], d);
    assert!(err.contains("--bits"), "{err}");
    let err = fails(&["search", "--index", "idx", "--queries", "q.fbin", "--k", "5", "--metric", "pq"], d);
    assert!(err.contains("pq"), "{err}");
    fails(&["quantize", "--index", "idx", "--bits", "3", "--seed", "1"], d);
}

#[test]
fn insert_in_percentage_batches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--count", "1500", "--dims", "16", "--seed", "5", "--queries", "550", "--queries-out", "rest.fbin", "--out", "base.fbin"], d);
    let rest = read_vectors_bin(d.join("rest.fbin"), ElementKind::F32).unwrap();
    beamgraph::io::write_vectors_bin(d.join("more.fbin"), &rest.slice(0..500).unwrap()).unwrap();
    beamgraph::io::write_vectors_bin(d.join("q.fbin"), &rest.slice(500..550).unwrap()).unwrap();
    ok(&["build", "--input", "base.fbin", "--R", "16", "--beam", "32", "--out", "idx"], d);
    ok(&["insert", "--index", "idx", "--input", "more.fbin", "--batch-pct", "2"], d);
    let data = read_vectors_bin(d.join("idx/data.fbin"), ElementKind::F32).unwrap();
    assert_eq!(data.len(), 2000);
    let graph = beamgraph::GraphIndex::load(d.join("idx/graph.bin")).unwrap();
    assert_eq!(graph.active_count(), 2000);
    graph.check_invariants().unwrap();

    ok(&["gt", "--data", "idx/data.fbin", "--queries", "q.fbin", "--k", "10", "--out", "gt.bin"], d);
    let csv = ok(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "10", "--beams", "64"], d);
    assert!(recall_column(&csv)[0] > 0.9, "{csv}");
}

#[test]
fn quantize_then_search_with_rerank() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "1000");
    ok(&["build", "--input", "base.fbin", "--R", "16", "--beam", "32", "--out", "idx"], d);
    ok(&["quantize", "--index", "idx", "--bits", "4", "--seed", "1"], d);
    assert!(d.join("idx/rabitq.bin").exists());
    let csv = ok(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "10", "--beams", "64", "--metric", "rabitq", "--rerank"], d);
    assert!(recall_column(&csv)[0] > 0.85, "{csv}");

    let rows = ok(&["search", "--index", "idx", "--queries", "q.fbin", "--k", "3", "--beam", "16"], d);
    let mut lines = rows.lines();
    assert_eq!(lines.next().unwrap(), "query,rank,id,distance");
    assert_eq!(lines.count(), 150);

    // Quantizer seeds are explicit, so refitting reproduces the file.
    let first = std::fs::read(d.join("idx/rabitq.bin")).unwrap();
    ok(&["quantize", "--index", "idx", "--bits", "4", "--seed", "1"], d);
    assert_eq!(std::fs::read(d.join("idx/rabitq.bin")).unwrap(), first);
}

#[test]
fn quantized_build_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "800");
    ok(&["build", "--input", "base.fbin", "--R", "16", "--beam", "32", "--metric", "rabitq", "--bits", "8", "--seed", "2", "--out", "idx"], d);
    assert!(d.join("idx/rabitq.bin").exists());
    let csv = ok(&["sweep", "--index", "idx", "--queries", "q.fbin", "--gt", "gt.bin", "--k", "10", "--beams", "64"], d);
    assert!(recall_column(&csv)[0] > 0.85, "{csv}");
}

#[test]
fn inner_product_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "200");
    ok(&["gt", "--data", "base.fbin", "--queries", "q.fbin", "--k", "5", "--distance", "ip", "--out", "ip.bin"], d);
    let gt = read_ground_truth(d.join("ip.bin")).unwrap();
    assert!(gt.distances.iter().all(|&x| x.is_finite()));
    gt.validate().unwrap();
}
