use std::path::Path;
use std::process::{Command, Output};

use trvqe_core::bench::read_gradcheck_csv;
use trvqe_core::{random_graph, TrainTrace, WeightedGraph};

fn trvqe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trvqe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn trvqe_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trvqe"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_trace(dir: &Path) -> TrainTrace {
    serde_json::from_str(&std::fs::read_to_string(dir.join("trace.json")).unwrap()).unwrap()
}

#[test]
fn gen_graph_is_byte_identical_per_seed_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let out = trvqe(&["gen-graph", "--nodes", "6", "--seed", "2", "--out", path_str(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let g = dir.path().join("g10.txt");
    assert!(
        trvqe(&["gen-graph", "--gen", "10", "--seed", "1", "--out", path_str(&g)])
            .status
            .success()
    );
    let loaded = WeightedGraph::parse_edge_list(&std::fs::read_to_string(&g).unwrap()).unwrap();
    assert_eq!(loaded, random_graph(10, 1).unwrap());

    let j = dir.path().join("g.json");
    assert!(
        trvqe(&["gen-graph", "--nodes", "8", "--seed", "3", "--out", path_str(&j)])
            .status
            .success()
    );
    let loaded = WeightedGraph::from_json(&std::fs::read_to_string(&j).unwrap()).unwrap();
    assert_eq!(loaded, random_graph(8, 3).unwrap());
}

#[test]
fn gen_graph_rejects_infeasible_size() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.txt");
    let out = trvqe(&["gen-graph", "--nodes", "3", "--seed", "0", "--out", path_str(&p)]);
    assert!(!out.status.success());
    assert!(!p.exists());
}

#[test]
fn solve_triangle_with_exact_backend_reaches_max_cut() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("triangle.txt");
    std::fs::write(&graph, "3\n1 2 1\n2 3 1\n1 3 1\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = trvqe(&[
        "solve",
        "--graph",
        path_str(&graph),
        "--backend",
        "exact",
        "--iters",
        "300",
        "--lr",
        "0.2",
        "--out",
        path_str(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read_trace(&out_dir);
    assert_eq!(trace.extremes, Some((3.0, -1.0)));
    assert!(
        (trace.best_ratio().unwrap() - 1.0).abs() < 1e-6,
        "best ratio {:?}",
        trace.best_ratio()
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("best_ratio=") && stdout.contains("final_energy=") && stdout.contains("total_seconds="));
}

#[test]
fn solve_writes_matching_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = trvqe(&[
        "solve",
        "--gen",
        "6",
        "--seed",
        "1",
        "--chi",
        "4",
        "--iters",
        "3",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read_trace(dir.path());
    let csv = std::fs::read(dir.path().join("trace.csv")).unwrap();
    assert!(String::from_utf8(csv.clone())
        .unwrap()
        .starts_with("iter,energy,approx_ratio,grad_norm,ms\n"));
    assert_eq!(TrainTrace::read_csv_records(csv.as_slice()).unwrap(), trace.records);
    assert_eq!(trace.records.len(), 3);
}

#[test]
fn missing_graph_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = trvqe(&[
        "solve",
        "--graph",
        path_str(&dir.path().join("nope.txt")),
        "--out",
        path_str(&out_dir),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
    assert!(!out_dir.exists());
}

#[test]
fn invalid_graph_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("bad.txt");
    std::fs::write(&graph, "3\n1 1 2\n").unwrap();
    let out = trvqe(&["solve", "--graph", path_str(&graph), "--out", path_str(dir.path())]);
    assert!(!out.status.success());
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn full_rank_and_exact_traces_agree() {
    let dir = tempfile::tempdir().unwrap();
    let tr = dir.path().join("tr");
    let ex = dir.path().join("ex");
    let common = ["solve", "--gen", "6", "--seed", "4", "--depth", "1", "--iters", "5"];
    let mut a: Vec<&str> = common.to_vec();
    a.extend(["--chi", "8", "--out", path_str(&tr)]);
    let mut b: Vec<&str> = common.to_vec();
    b.extend(["--backend", "exact", "--out", path_str(&ex)]);
    assert!(trvqe(&a).status.success());
    assert!(trvqe(&b).status.success());
    let (ta, tb) = (read_trace(&tr), read_trace(&ex));
    for (x, y) in ta.records.iter().zip(&tb.records) {
        assert!((x.energy - y.energy).abs() < 1e-7, "{} vs {}", x.energy, y.energy);
    }
}

#[test]
fn solve_is_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<TrainTrace> = ["a", "b"]
        .iter()
        .map(|name| {
            let d = dir.path().join(name);
            let out = trvqe(&[
                "solve",
                "--gen",
                "7",
                "--seed",
                "9",
                "--chi",
                "3",
                "--depth",
                "2",
                "--iters",
                "4",
                "--out",
                path_str(&d),
            ]);
            assert!(out.status.success());
            read_trace(&d)
        })
        .collect();
    assert_eq!(runs[0].without_timing(), runs[1].without_timing());
}

#[test]
fn exact_backend_warns_about_chi() {
    let dir = tempfile::tempdir().unwrap();
    let out = trvqe(&[
        "solve",
        "--gen",
        "4",
        "--backend",
        "exact",
        "--chi",
        "4",
        "--iters",
        "1",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ignored"));
}

#[test]
fn fix_node_uses_one_fewer_qubit() {
    let dir = tempfile::tempdir().unwrap();
    let out = trvqe(&[
        "solve",
        "--gen",
        "6",
        "--seed",
        "2",
        "--fix-node",
        "--chi",
        "4",
        "--iters",
        "2",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success());
    assert_eq!(read_trace(dir.path()).num_qubits, 5);
}

#[test]
fn bench_runtime_single_cell_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = trvqe(&[
        "bench-runtime",
        "--qubits",
        "4",
        "--chi",
        "2",
        "--repeats",
        "3",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "N,D,median_ms,min_ms,max_ms,repeats");
    assert!(lines[1].starts_with("4,1,"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    assert!(json["fingerprint"]["cpu"].is_string());

    for bad in [
        vec!["bench-runtime", "--qubits", "4", "--repeats", "2"],
        vec!["bench-runtime", "--depths", "2,1"],
    ] {
        let mut args = bad.clone();
        args.extend(["--out", path_str(dir.path())]);
        assert!(!trvqe(&args).status.success());
    }
}

#[test]
fn bench_runtime_depth_grid_reports_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = trvqe(&[
        "bench-runtime",
        "--depths",
        "1,2",
        "--qubit-count",
        "4",
        "--chi",
        "2",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("fit: t ="));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("bench.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn gradcheck_at_full_rank_is_tiny() {
    let dir = tempfile::tempdir().unwrap();
    let out = trvqe(&[
        "gradcheck",
        "--qubits",
        "6",
        "--depths",
        "1",
        "--chis",
        "8",
        "--points",
        "3",
        "--seed",
        "5",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_gradcheck_csv(std::fs::File::open(dir.path().join("gradcheck.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].num_qubits, rows[0].depth, rows[0].bond_dim), (6, 1, 8));
    assert!(rows[0].mean_distance < 1e-7);
}

#[test]
fn gradcheck_rejects_oversized_register() {
    let dir = tempfile::tempdir().unwrap();
    let out = trvqe(&["gradcheck", "--qubits", "17", "--out", path_str(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "solve",
        "--gen",
        "4",
        "--iters",
        "1",
        "--chi",
        "2",
        "--out",
        path_str(dir.path()),
    ];
    assert!(!trvqe_env(&args, "TRVQE_THREADS", "0").status.success());
    assert!(!trvqe_env(&args, "TRVQE_THREADS", "many").status.success());
    assert!(trvqe_env(&args, "TRVQE_THREADS", "1").status.success());
}

#[test]
fn graph_source_is_required_and_exclusive() {
    assert!(!trvqe(&["solve"]).status.success());
    assert!(!trvqe(&["solve", "--gen", "4", "--graph", "x.txt"]).status.success());
}
