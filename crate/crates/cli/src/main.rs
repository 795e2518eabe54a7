use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trvqe_core::bench::{bench_runtime, gradcheck_cell, write_atomic, write_gradcheck_csv, BenchAxis, BenchConfig};
use trvqe_core::vqe::{run_vqe, Backend, ExactBackend, OptimizerConfig, TensorRingBackend};
use trvqe_core::{random_graph, ContractionMethod, WeightedGraph};

/// Largest register the gradient check compares against the dense oracle.
const GRADCHECK_MAX_QUBITS: usize = 16;

#[derive(Parser)]
#[command(name = "trvqe", version, about = "Tensor-ring VQE for weighted Max-Cut")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the ring ansatz on one graph and write its training trace.
    Solve(SolveArgs),
    /// Median per-iteration wall time over a grid of depths or qubit counts.
    BenchRuntime(BenchArgs),
    /// Mean gradient distance between the tensor-ring and exact backends.
    Gradcheck(GradcheckArgs),
    /// Write a seeded random graph in edge-list format.
    GenGraph(GenGraphArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Tr,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Contraction {
    Transfer,
    Amplitudes,
    Auto,
}

impl From<Contraction> for ContractionMethod {
    fn from(c: Contraction) -> Self {
        match c {
            Contraction::Transfer => ContractionMethod::TransferMatrix,
            Contraction::Amplitudes => ContractionMethod::Amplitudes,
            Contraction::Auto => ContractionMethod::Auto,
        }
    }
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "tr")]
    backend: BackendChoice,
    /// Tensor-ring bond dimension.
    #[arg(long)]
    chi: Option<usize>,
    /// How tensor-ring expectations are contracted.
    #[arg(long, value_enum, default_value = "transfer")]
    contraction: Contraction,
}

impl BackendArgs {
    fn build(&self) -> Result<Box<dyn Backend>> {
        match self.backend {
            BackendChoice::Exact => {
                if self.chi.is_some() {
                    eprintln!("warning: --chi is ignored by the exact backend");
                }
                Ok(Box::new(ExactBackend))
            }
            BackendChoice::Tr => {
                let chi = self.chi.unwrap_or(10);
                if chi == 0 {
                    bail!("--chi must be at least 1");
                }
                Ok(Box::new(
                    TensorRingBackend::new(chi).with_method(self.contraction.into()),
                ))
            }
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Graph file: edge list, or JSON when the name ends in `.json`.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    graph: Option<PathBuf>,
    /// Generate a random graph with this many nodes.
    #[arg(long, value_name = "K")]
    gen: Option<usize>,
    /// Graph-generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for the initial angles; defaults to `--seed`.
    #[arg(long)]
    param_seed: Option<u64>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Pin the last node to one side of the cut and drop its qubit.
    #[arg(long)]
    fix_node: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Depths to sweep at fixed `--qubit-count`.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "qubits",
        required_unless_present = "qubits"
    )]
    depths: Option<Vec<usize>>,
    /// Qubit counts to sweep at fixed `--depth`.
    #[arg(long, value_delimiter = ',')]
    qubits: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    qubit_count: usize,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "10")]
    qubits: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    depths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    chis: Vec<usize>,
    /// Random parameter points per cell.
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "transfer")]
    contraction: Contraction,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GenGraphArgs {
    /// Number of nodes.
    #[arg(long, alias = "gen", value_name = "K")]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; `.json` selects the JSON schema.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Solve(a) => solve(a),
        Command::BenchRuntime(a) => bench(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::GenGraph(a) => gen_graph(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("TRVQE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .with_context(|| format!("TRVQE_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn load_graph(path: &Path) -> Result<WeightedGraph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read graph {}", path.display()))?;
    let graph = if is_json(path) {
        WeightedGraph::from_json(&text)
    } else {
        WeightedGraph::parse_edge_list(&text)
    };
    graph.with_context(|| format!("invalid graph {}", path.display()))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn solve(a: SolveArgs) -> Result<()> {
    let graph = match (&a.graph, a.gen) {
        (Some(path), _) => load_graph(path)?,
        (None, Some(k)) => random_graph(k, a.seed)?,
        (None, None) => unreachable!("clap requires --graph or --gen"),
    };
    let backend = a.backend.build()?;
    let config = OptimizerConfig {
        iterations: a.iters,
        learning_rate: a.lr,
        seed: a.param_seed.unwrap_or(a.seed),
        depth: a.depth,
        fix_node: a.fix_node,
        ..Default::default()
    };
    let trace = run_vqe(backend.as_ref(), &graph, &config)?;

    prepare_out_dir(&a.out)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write_atomic(&a.out.join("trace.csv"), &csv)?;
    write_atomic(
        &a.out.join("trace.json"),
        serde_json::to_string_pretty(&trace)?.as_bytes(),
    )?;

    let ratio = trace
        .best_ratio()
        .map_or_else(|| "n/a".to_string(), |r| format!("{r:.6}"));
    println!(
        "backend={} qubits={} final_energy={:.6} best_ratio={} total_seconds={:.3}",
        trace.backend,
        trace.num_qubits,
        trace.final_energy().unwrap_or(f64::NAN),
        ratio,
        trace.total_seconds()
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let (axis, values) = match (a.depths, a.qubits) {
        (Some(d), _) => (BenchAxis::Depth, d),
        (None, Some(q)) => (BenchAxis::Qubits, q),
        (None, None) => unreachable!("clap requires --depths or --qubits"),
    };
    let config = BenchConfig {
        axis,
        values,
        num_qubits: a.qubit_count,
        depth: a.depth,
        repeats: a.repeats,
        graph_seed: a.seed,
        param_seed: a.seed,
    };
    config.validate()?;
    let backend = a.backend.build()?;
    let report = bench_runtime(backend.as_ref(), &config)?;

    prepare_out_dir(&a.out)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_atomic(&a.out.join("bench.csv"), &csv)?;
    write_atomic(
        &a.out.join("bench.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;

    for row in &report.rows {
        println!("N={} D={} median_ms={:.3}", row.num_qubits, row.depth, row.median_ms);
    }
    if let Some(fit) = &report.fit {
        let axis = match axis {
            BenchAxis::Depth => "D",
            BenchAxis::Qubits => "N",
        };
        let exponent = fit.exponent.map_or_else(|| "n/a".to_string(), |k| format!("{k:.3}"));
        println!(
            "fit: t = {:.3} + {:.3}*{axis} ms (r2={:.4}), power-law exponent {exponent}, last/first={:.3}",
            fit.intercept_ms,
            fit.slope_ms,
            fit.r_squared,
            report.end_to_end_ratio().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.points == 0 {
        bail!("--points must be at least 1");
    }
    if let Some(&n) = a.qubits.iter().find(|&&n| n > GRADCHECK_MAX_QUBITS) {
        bail!("gradcheck compares against dense simulation; N={n} exceeds {GRADCHECK_MAX_QUBITS}");
    }
    if a.chis.contains(&0) || a.depths.contains(&0) {
        bail!("--chis and --depths entries must be at least 1");
    }
    let mut rows = Vec::new();
    for &n in &a.qubits {
        for &d in &a.depths {
            for &chi in &a.chis {
                let backend = TensorRingBackend::new(chi).with_method(a.contraction.into());
                let row = gradcheck_cell(&backend, n, d, a.points, a.seed, a.seed)?;
                println!("N={n} D={d} chi={chi} mean_distance={:.6e}", row.mean_distance);
                rows.push(row);
            }
        }
    }
    prepare_out_dir(&a.out)?;
    let mut csv = Vec::new();
    write_gradcheck_csv(&rows, &mut csv)?;
    write_atomic(&a.out.join("gradcheck.csv"), &csv)?;
    Ok(())
}

fn gen_graph(a: GenGraphArgs) -> Result<()> {
    let graph = random_graph(a.nodes, a.seed)?;
    let text = if is_json(&a.out) {
        graph.to_json()?
    } else {
        graph.to_edge_list()
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_out_dir(dir)?;
    }
    write_atomic(&a.out, text.as_bytes())?;
    Ok(())
}
