//! Subcommand implementations.
//!
//! Each command reads what it needs from the [`RunConfig`], does its work
//! through the library, and leaves files behind: every stage's artifact
//! is a file so pipelines can resume from any point. All outputs are
//! deterministic functions of config plus seed; nothing embeds wall-clock
//! time or machine identity.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use sevo::graph::{
    adjacency_stats, build_from_sequences, read_graph, write_graph, InteractionLog,
    SequenceSlice, SparseGraph,
};
use sevo::harness::{
    generate_synthetic, leave_one_out, quadratic_benchmark, train, BenchStatus, MetricValue,
    SyntheticSpec, TrainOutcome,
};
use sevo::optim::save_checkpoint;
use sevo::sparse::symmetric_eigen_bounds;
use sevo::transform::TransformVariant;
use sevo::{sha256_hex, SevoError};

use crate::config::RunConfig;

/// Eigen bounds are part of graph stats only below this node count; the
/// dense eigendecomposition is cubic and meant for desk-scale graphs.
const EIGEN_STATS_CAP: usize = 512;

pub fn variant_name(v: TransformVariant) -> &'static str {
    match v {
        TransformVariant::Exact => "exact",
        TransformVariant::Iterative => "iterative",
        TransformVariant::Neumann => "neumann",
        TransformVariant::RescaledNeumann => "rescaled-neumann",
    }
}

fn status_name(s: BenchStatus) -> &'static str {
    match s {
        BenchStatus::Converged => "converged",
        BenchStatus::ExhaustedSteps => "exhausted-steps",
        BenchStatus::Diverged => "diverged",
    }
}

/// Content hash in git object style: `blob <len>\0<bytes>`, SHA-256.
fn blob_hash(bytes: &[u8]) -> String {
    let mut framed = format!("blob {}\0", bytes.len()).into_bytes();
    framed.extend_from_slice(bytes);
    sha256_hex(&framed)
}

fn hash_file(path: &Path) -> anyhow::Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("reading {} for hashing", path.display()))?;
    Ok(blob_hash(&bytes))
}

fn load_interactions(config: &RunConfig) -> anyhow::Result<(PathBuf, InteractionLog)> {
    let path = config
        .input
        .interactions
        .clone()
        .ok_or_else(|| SevoError::Validation("input.interactions is not set".into()))?;
    let file =
        File::open(&path).with_context(|| format!("opening interactions {}", path.display()))?;
    let log = InteractionLog::from_tsv(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((path, log))
}

fn load_graph(config: &RunConfig) -> anyhow::Result<(PathBuf, SparseGraph)> {
    let path = config
        .input
        .graph
        .clone()
        .ok_or_else(|| SevoError::Validation("input.graph is not set".into()))?;
    let file = File::open(&path).with_context(|| format!("opening graph {}", path.display()))?;
    let adjacency = read_graph(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))?;
    let graph = SparseGraph::normalize(adjacency)?;
    Ok((path, graph))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Synthesizes a clustered interaction log and writes it as the same TSV
/// format the other commands consume, plus the ground-truth cluster of
/// every item.
pub fn cmd_gen_synthetic(config: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        n_items: config.synthetic.n_items,
        n_users: config.synthetic.n_users,
        n_clusters: config.synthetic.n_clusters,
        seq_len: config.synthetic.seq_len,
        intra_cluster_prob: config.synthetic.intra_cluster_prob,
        seed: config.seed.0,
    };
    let (log, clusters) = generate_synthetic(&spec)?;
    fs::create_dir_all(out_dir)?;

    let tsv_path = out_dir.join("interactions.tsv");
    let mut tsv = String::new();
    for (user, seq) in log.sequences() {
        for (t, item) in seq.iter().enumerate() {
            tsv.push_str(&format!("{user}\t{item}\t{t}\n"));
        }
    }
    write_bytes(&tsv_path, tsv.as_bytes())?;
    write_json(&out_dir.join("clusters.json"), &clusters)?;

    println!(
        "wrote {} ({} users, {} items, {} interactions) and clusters.json",
        tsv_path.display(),
        log.n_users(),
        log.n_items(),
        log.sequences().values().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

#[derive(Serialize)]
struct GraphReport {
    stats: sevo::graph::GraphStats,
    /// Extremes of the normalized adjacency spectrum; present only when
    /// the graph is small enough for a dense eigendecomposition.
    normalized_eigen_bounds: Option<(f64, f64)>,
}

/// Builds the co-occurrence graph from an interaction TSV and writes the
/// triplet file plus a JSON stats report.
pub fn cmd_build_graph(
    config: &RunConfig,
    out_dir: &Path,
    slice: Option<SequenceSlice>,
    sweep_windows: Option<Vec<usize>>,
) -> anyhow::Result<()> {
    let (_, log) = load_interactions(config)?;
    let mut similarity = config.similarity.clone();
    if let Some(s) = slice {
        similarity.slice = s;
    }
    fs::create_dir_all(out_dir)?;

    if let Some(windows) = sweep_windows {
        if windows.is_empty() {
            bail!(SevoError::Validation(
                "slice sweep needs at least one window size".into()
            ));
        }
        // One row per (slice end, window): how much graph each end of the
        // sequences yields, for judging which side carries the signal.
        let mut csv = String::from(
            "slice,window,n_nodes,n_edges,nnz,mean_weighted_degree,max_weighted_degree\n",
        );
        for s in [SequenceSlice::FirstK, SequenceSlice::LastK] {
            for &w in &windows {
                let mut cfg = similarity.clone();
                cfg.slice = s;
                cfg.window = Some(w);
                let g = build_from_sequences(&log, &cfg)?;
                let st = adjacency_stats(g.adjacency());
                let name = match s {
                    SequenceSlice::FirstK => "first",
                    SequenceSlice::LastK => "last",
                };
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    name,
                    w,
                    st.n_nodes,
                    st.n_edges,
                    st.nnz,
                    st.mean_weighted_degree,
                    st.max_weighted_degree
                ));
            }
        }
        let path = out_dir.join("slice_sweep.csv");
        write_bytes(&path, csv.as_bytes())?;
        println!("wrote {}", path.display());
        return Ok(());
    }

    let graph = build_from_sequences(&log, &similarity)?;
    let graph_path = out_dir.join("graph.txt");
    let mut writer = BufWriter::new(File::create(&graph_path)?);
    write_graph(&mut writer, graph.adjacency())?;
    writer.flush()?;

    let stats = adjacency_stats(graph.adjacency());
    let normalized_eigen_bounds = if stats.n_nodes <= EIGEN_STATS_CAP {
        Some(symmetric_eigen_bounds(graph.normalized())?)
    } else {
        None
    };
    let report = GraphReport {
        stats,
        normalized_eigen_bounds,
    };
    write_json(&out_dir.join("graph_stats.json"), &report)?;

    println!(
        "wrote {} ({} nodes, {} edges, {} stored entries) and graph_stats.json",
        graph_path.display(),
        report.stats.n_nodes,
        report.stats.n_edges,
        report.stats.nnz
    );
    Ok(())
}

#[derive(Serialize)]
struct InputDigest {
    role: &'static str,
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    run_id: String,
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

fn run_id(config: &RunConfig) -> anyhow::Result<String> {
    let canonical = serde_json::to_vec(config)?;
    Ok(sha256_hex(&canonical)[..12].to_string())
}

fn metric_rows(
    csv: &mut String,
    id: &str,
    config: &RunConfig,
    metrics: &[MetricValue],
) {
    for m in metrics {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            id,
            config.seed.0,
            variant_name(config.sevo.variant),
            config.sevo.beta,
            config.sevo.layers,
            m.metric,
            m.cutoff,
            m.value
        ));
    }
}

/// Trains the factorization model and writes metrics, traces, manifest,
/// model export, and an optimizer checkpoint.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    let (inter_path, log) = load_interactions(config)?;
    let (graph_path, graph) = load_graph(config)?;
    let log = log.filter_min_len(config.input.min_sequence_length.0);
    let split = leave_one_out(&log)?;
    let train_cfg = config.train_config();

    if train_cfg.optimizer.sevo.variant == TransformVariant::Iterative
        && train_cfg.optimizer.sevo.beta >= 0.5
    {
        eprintln!(
            "warning: the iterative operator preserves update direction only \
             for beta < 0.5; beta = {} can reverse updates on bipartite-like \
             structure",
            train_cfg.optimizer.sevo.beta
        );
    }

    let outcome: TrainOutcome = train(&split, &graph, &train_cfg)?;
    fs::create_dir_all(out_dir)?;
    let id = run_id(config)?;

    for epoch in &outcome.epochs {
        let valid = match &epoch.valid_metrics {
            Some(ms) => {
                let parts: Vec<String> = ms
                    .iter()
                    .map(|m| format!("{}@{} {:.4}", m.metric, m.cutoff, m.value))
                    .collect();
                format!(" valid: {}", parts.join(" "))
            }
            None => String::new(),
        };
        println!(
            "epoch {:>3} loss {:.5} smoothness {:.4}{}",
            epoch.epoch, epoch.mean_loss, epoch.embedding_smoothness, valid
        );
    }

    let mut metrics_csv = String::from("run_id,seed,variant,beta,layers,metric,N,value\n");
    metric_rows(&mut metrics_csv, &id, config, &outcome.test_metrics.metrics);
    write_bytes(&out_dir.join("metrics.csv"), metrics_csv.as_bytes())?;

    let mut trace_csv = String::from(
        "step,loss,smoothness,raw_delta_smoothness,transformed_delta_smoothness\n",
    );
    for e in &outcome.epochs {
        trace_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch,
            e.mean_loss,
            e.embedding_smoothness,
            e.mean_raw_update_smoothness,
            e.mean_smoothed_update_smoothness
        ));
    }
    write_bytes(&out_dir.join("trace.csv"), trace_csv.as_bytes())?;

    let checkpoint_path = out_dir.join("checkpoint.json");
    let mut ck = BufWriter::new(File::create(&checkpoint_path)?);
    save_checkpoint(&mut ck, &outcome.item_state, &train_cfg.optimizer)?;
    ck.flush()?;

    #[derive(Serialize)]
    struct ModelExport<'a> {
        n_users: usize,
        n_items: usize,
        dimension: usize,
        user_embeddings: &'a [f64],
        item_embeddings: &'a [f64],
    }
    write_json(
        &out_dir.join("model.json"),
        &ModelExport {
            n_users: outcome.model.user_embeddings.rows(),
            n_items: outcome.model.item_embeddings.embeddings.rows(),
            dimension: outcome.model.dimension,
            user_embeddings: outcome.model.user_embeddings.data(),
            item_embeddings: outcome.model.item_embeddings.embeddings.data(),
        },
    )?;

    // The resolved config (file plus CLI overrides) is itself an artifact:
    // re-running with it reproduces this run without the override flags.
    write_bytes(
        &out_dir.join("config.toml"),
        config.to_toml()?.as_bytes(),
    )?;

    let manifest = Manifest {
        run_id: id.clone(),
        tool: "sevo-cli",
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed.0,
        config,
        inputs: vec![
            InputDigest {
                role: "interactions",
                sha256: hash_file(&inter_path)?,
                path: inter_path,
            },
            InputDigest {
                role: "graph",
                sha256: hash_file(&graph_path)?,
                path: graph_path,
            },
        ],
        outputs: vec![
            "metrics.csv".into(),
            "trace.csv".into(),
            "checkpoint.json".into(),
            "model.json".into(),
            "config.toml".into(),
        ],
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    for m in &outcome.test_metrics.metrics {
        println!("test {}@{} = {:.4}", m.metric, m.cutoff, m.value);
    }
    println!(
        "run {id}: {} steps, final smoothness {:.4}, outputs in {}",
        outcome.steps_taken,
        outcome.final_embedding_smoothness,
        out_dir.display()
    );
    Ok(())
}

/// Runs the quadratic benchmark for every configured variant on the same
/// graph and seed, writing one CSV row per variant.
pub fn cmd_bench_quadratic(config: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    let (_, graph) = load_graph(config)?;
    if config.bench.variants.is_empty() {
        bail!(SevoError::Validation(
            "bench.variants must name at least one operator".into()
        ));
    }
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("variant,beta,layers,status,steps,initial_value,final_value\n");
    for &variant in &config.bench.variants {
        let qcfg = config.quadratic_config(variant);
        let outcome = quadratic_benchmark(&graph, &qcfg)?;
        println!(
            "{:<17} {}: {} steps (f {:.3e} -> {:.3e})",
            variant_name(variant),
            status_name(outcome.status),
            outcome.steps,
            outcome.initial_value,
            outcome.final_value
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            variant_name(variant),
            config.sevo.beta,
            config.sevo.layers,
            status_name(outcome.status),
            outcome.steps,
            outcome.initial_value,
            outcome.final_value
        ));
    }
    let path = out_dir.join("bench.csv");
    write_bytes(&path, csv.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Runs the invariant suite; returns whether every check passed.
pub fn cmd_verify(
    seed: u64,
    fault: Option<sevo::verify::FaultMode>,
    out: Option<&Path>,
) -> anyhow::Result<bool> {
    let options = sevo::verify::VerifyOptions { seed, fault };
    let reports = sevo::verify::run_all(&options);
    let mut failures = 0usize;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} ({})", r.name, r.details);
        if !r.passed {
            failures += 1;
        }
    }
    if let Some(path) = out {
        write_json(path, &reports)?;
        println!("wrote {}", path.display());
    }
    println!(
        "{} checks, {} failed{}",
        reports.len(),
        failures,
        if fault.is_some() {
            " (fault injection active)"
        } else {
            ""
        }
    );
    Ok(failures == 0)
}
