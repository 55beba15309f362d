//! Full-pipeline orchestration: ingest, distances, clustering, then the
//! per-cluster analyses, each writing its artifacts into the output
//! directory. A manifest with input content hashes and every parameter is
//! written last, so any output can be reproduced from the manifest alone.
//!
//! Stage errors abort the run carrying the stage name. The worker count is
//! deliberately not a parameter: output bytes are identical for any
//! parallelism.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{cut_tree, goodness_of_fit, ward_cluster, WardVariant};
use crate::ena::{fit_ena, strong_edges};
use crate::hmm::{select_states, viterbi, EmOptions};
use crate::io;
use crate::reliability::alpha_report;
use crate::render;
use crate::scheme::{build_sequences, ConflictPolicy, MultichannelSequence};
use crate::scoring::cluster_performance;
use crate::seqdist::{distance_matrix, Normalize};
use crate::stats::code_frequencies;
use crate::{Error, Result};

/// Everything a run needs; echoed verbatim into the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub events: PathBuf,
    pub scheme: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// ENA stanza window, in positions.
    pub window: usize,
    /// Fixed cluster count; `None` takes the goodness-of-fit suggestion.
    pub k: Option<usize>,
    /// Candidate range for the fit diagnostics (clamped to [2, n-1]).
    pub k_range: (usize, usize),
    /// HMM state-count sweep, inclusive.
    pub state_range: (usize, usize),
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub normalize: Normalize,
    pub linkage: WardVariant,
    pub on_conflict: ConflictPolicy,
    /// Drop all-missing positions before HMM fitting (kept everywhere else;
    /// they carry duration information through the transition chain).
    pub drop_blank: bool,
    /// Edge threshold for the per-cluster network plots.
    pub ena_threshold: f64,
}

impl PipelineConfig {
    pub fn new(events: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> PipelineConfig {
        PipelineConfig {
            events: events.into(),
            scheme: None,
            scores: None,
            ratings: None,
            out_dir: out_dir.into(),
            window: 4,
            k: None,
            k_range: (2, 8),
            state_range: (2, 9),
            restarts: 100,
            seed: 0,
            tol: 1e-8,
            max_iter: 1000,
            normalize: Normalize::None,
            linkage: WardVariant::WardD2,
            on_conflict: ConflictPolicy::Error,
            drop_blank: false,
            ena_threshold: 0.4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub n_sequences: usize,
    /// Total positions across all sequences.
    pub n_positions: usize,
    /// Total non-missing channel states (raw code tokens).
    pub n_code_tokens: usize,
    pub suggested_k: usize,
    pub chosen_k: usize,
    /// Positions and code tokens per cluster, keyed by cluster id.
    pub cluster_positions: BTreeMap<usize, usize>,
    pub cluster_code_tokens: BTreeMap<usize, usize>,
}

/// The reproducibility record written last.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub parameters: PipelineConfig,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
    pub metadata: RunMetadata,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// Runs ingest -> distances -> cluster -> {stats, ena, hmm, score} and
/// writes every artifact plus the manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest> {
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut outputs: Vec<String> = Vec::new();
    let emit = |name: &str, contents: &str, outputs: &mut Vec<String>| -> Result<()> {
        io::write_file(&out.join(name), contents)?;
        outputs.push(name.to_string());
        Ok(())
    };

    // ---- ingest ----------------------------------------------------------
    let stage = "ingest";
    let scheme = io::scheme_or_default(config.scheme.as_deref()).map_err(|e| e.at_stage(stage))?;
    let events = io::read_events(&config.events).map_err(|e| e.at_stage(stage))?;
    let seqs = build_sequences(&events, &scheme, config.on_conflict)
        .map_err(|e| e.at_stage(stage))?;
    if seqs.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 sessions, got {}",
            seqs.len()
        ))
        .at_stage(stage));
    }
    emit("sequences.csv", &io::sequences_to_csv(&seqs, &scheme), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;

    // ---- distances -------------------------------------------------------
    let stage = "distances";
    let matrix = distance_matrix(&seqs, &scheme, config.normalize).map_err(|e| e.at_stage(stage))?;
    emit("distances.csv", &io::matrix_to_csv(&matrix), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;

    // ---- cluster ---------------------------------------------------------
    let stage = "cluster";
    let dend = ward_cluster(&matrix, config.linkage).map_err(|e| e.at_stage(stage))?;
    emit("merges.csv", &io::merges_to_csv(&dend), &mut outputs).map_err(|e| e.at_stage(stage))?;
    emit("dendrogram.svg", &render::dendrogram_svg(&dend), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;

    let n = seqs.len();
    let k_lo = config.k_range.0.max(2);
    let k_hi = config.k_range.1.min(n.saturating_sub(1));
    // with only two sequences no candidate k is evaluable; fall back to a
    // single cluster unless the caller fixed k
    let (suggested_k, gof_rows) = if k_lo <= k_hi {
        let gof = goodness_of_fit(&matrix, &dend, k_lo..=k_hi).map_err(|e| e.at_stage(stage))?;
        (gof.suggested_k, gof.rows)
    } else {
        (1, Vec::new())
    };
    emit("gof.csv", &io::gof_to_csv(&gof_rows), &mut outputs).map_err(|e| e.at_stage(stage))?;
    let chosen_k = config.k.unwrap_or(suggested_k);
    let partition = cut_tree(&dend, chosen_k).map_err(|e| e.at_stage(stage))?;
    emit("partition.csv", &io::partition_to_csv(&partition), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;

    // ---- stats -----------------------------------------------------------
    let stage = "stats";
    let freq = code_frequencies(&seqs, &partition, &scheme).map_err(|e| e.at_stage(stage))?;
    let rows = io::stats_rows(&freq).map_err(|e| e.at_stage(stage))?;
    emit("stats.csv", &io::stats_to_csv(&rows, partition.k), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;

    // ---- ena --------------------------------------------------------------
    let stage = "ena";
    let ena = fit_ena(&seqs, &partition, &scheme, config.window).map_err(|e| e.at_stage(stage))?;
    emit("ena_edges.csv", &io::ena_edges_to_csv(&ena), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;
    emit("ena_points.csv", &io::ena_points_to_csv(&ena), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;
    emit("ena_centroids.csv", &io::ena_centroids_to_csv(&ena), &mut outputs)
        .map_err(|e| e.at_stage(stage))?;
    for cluster in 1..=partition.k {
        // strong-edge list doubles as a sanity check that the cluster exists
        let _ = strong_edges(&ena, cluster, config.ena_threshold).map_err(|e| e.at_stage(stage))?;
        emit(
            &format!("ena_cluster_{cluster}.svg"),
            &render::ena_network_svg(&ena, cluster, config.ena_threshold),
            &mut outputs,
        )
        .map_err(|e| e.at_stage(stage))?;
    }

    // ---- hmm ---------------------------------------------------------------
    let stage = "hmm";
    let mut cluster_positions = BTreeMap::new();
    let mut cluster_code_tokens = BTreeMap::new();
    for cluster in 1..=partition.k {
        let members: Vec<MultichannelSequence> = partition
            .members(cluster)
            .iter()
            .map(|label| {
                let seq = seqs.iter().find(|s| s.session_id == **label).expect("member");
                if config.drop_blank {
                    seq.without_blanks()
                } else {
                    seq.clone()
                }
            })
            .collect();
        cluster_positions
            .insert(cluster, members.iter().map(MultichannelSequence::len).sum::<usize>());
        cluster_code_tokens.insert(
            cluster,
            members.iter().map(MultichannelSequence::n_observed).sum::<usize>(),
        );
        let opts = EmOptions {
            restarts: config.restarts,
            seed: config.seed,
            tol: config.tol,
            max_iter: config.max_iter,
        };
        let (s_min, s_max) = config.state_range;
        let (best, table) =
            select_states(&members, s_min, s_max, &scheme, &opts).map_err(|e| e.at_stage(stage))?;
        emit(
            &format!("hmm_cluster_{cluster}_model.json"),
            &serde_json::to_string_pretty(&best).expect("serializable"),
            &mut outputs,
        )
        .map_err(|e| e.at_stage(stage))?;
        emit(
            &format!("hmm_cluster_{cluster}_bic.csv"),
            &io::bic_table_to_csv(&table),
            &mut outputs,
        )
        .map_err(|e| e.at_stage(stage))?;
        emit(
            &format!("hmm_cluster_{cluster}.svg"),
            &render::hmm_graph_svg(&best.model, &scheme),
            &mut outputs,
        )
        .map_err(|e| e.at_stage(stage))?;
        let paths: Vec<(String, Vec<usize>)> = members
            .iter()
            .map(|seq| {
                viterbi(&best.model, seq)
                    .map(|(path, _)| (seq.session_id.clone(), path))
                    .map_err(|e| e.at_stage(stage))
            })
            .collect::<Result<_>>()?;
        emit(
            &format!("hmm_cluster_{cluster}_paths.csv"),
            &io::viterbi_paths_to_csv(&paths),
            &mut outputs,
        )
        .map_err(|e| e.at_stage(stage))?;
    }

    // ---- score -------------------------------------------------------------
    if let Some(scores_path) = &config.scores {
        let stage = "score";
        let tallies = io::read_scores(scores_path).map_err(|e| e.at_stage(stage))?;
        let totals: BTreeMap<String, f64> = tallies
            .iter()
            .map(|(k, t)| (k.clone(), t.total as f64))
            .collect();
        let report = cluster_performance(&totals, &partition).map_err(|e| e.at_stage(stage))?;
        emit("performance.csv", &io::performance_to_csv(&report), &mut outputs)
            .map_err(|e| e.at_stage(stage))?;
        emit(
            "performance.json",
            &serde_json::to_string_pretty(&report).expect("serializable"),
            &mut outputs,
        )
        .map_err(|e| e.at_stage(stage))?;
    }

    // ---- reliability ---------------------------------------------------------
    if let Some(ratings_path) = &config.ratings {
        let stage = "reliability";
        let table = io::read_rater_table(ratings_path).map_err(|e| e.at_stage(stage))?;
        let report = alpha_report(&table).map_err(|e| e.at_stage(stage))?;
        emit(
            "reliability.json",
            &serde_json::to_string_pretty(&report).expect("serializable"),
            &mut outputs,
        )
        .map_err(|e| e.at_stage(stage))?;
    }

    // ---- render ---------------------------------------------------------------
    let stage = "render";
    emit(
        "sequence_index.svg",
        &render::sequence_index_plot(&seqs, &partition, &scheme),
        &mut outputs,
    )
    .map_err(|e| e.at_stage(stage))?;

    // ---- manifest (always last) -------------------------------------------------
    let mut inputs = vec![InputHash {
        path: config.events.clone(),
        sha256: sha256_file(&config.events)?,
    }];
    for optional in [&config.scheme, &config.scores, &config.ratings].into_iter().flatten() {
        inputs.push(InputHash { path: optional.clone(), sha256: sha256_file(optional)? });
    }
    let manifest = Manifest {
        tool: format!("mcsa {}", env!("CARGO_PKG_VERSION")),
        parameters: config.clone(),
        inputs,
        metadata: RunMetadata {
            n_sequences: seqs.len(),
            n_positions: seqs.iter().map(MultichannelSequence::len).sum(),
            n_code_tokens: seqs.iter().map(MultichannelSequence::n_observed).sum(),
            suggested_k,
            chosen_k,
            cluster_positions,
            cluster_code_tokens,
        },
        outputs: {
            let mut o = outputs.clone();
            o.push("manifest.json".to_string());
            o
        },
    };
    io::write_file(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(manifest)
}
