//! `mcsa`: multichannel sequence analysis of coded collaborative-process
//! logs. Subcommands cover each stage (ingest, reliability, distances,
//! cluster, stats, ena, hmm, score, render) plus `run` for the full
//! pipeline.
//!
//! Exit codes: 0 success, 1 validation error, 2 computation error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use mcsa_core::clustering::{cut_tree, goodness_of_fit, ward_cluster, WardVariant};
use mcsa_core::ena::fit_ena;
use mcsa_core::hmm::{select_states, viterbi, EmOptions};
use mcsa_core::io;
use mcsa_core::pipeline::{run_pipeline, PipelineConfig};
use mcsa_core::reliability::alpha_report;
use mcsa_core::render;
use mcsa_core::scheme::{build_sequences, ConflictPolicy, MultichannelSequence};
use mcsa_core::scoring::cluster_performance;
use mcsa_core::seqdist::{distance_matrix, Normalize};
use mcsa_core::stats::code_frequencies;
use mcsa_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mcsa", version, about = "Multichannel sequence analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct IngestArgs {
    /// Event log CSV (session_id,unit_index,actor_id,modality,codes).
    #[arg(long)]
    events: PathBuf,
    /// Scheme config (TOML); omitted = built-in default scheme.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Same-channel double-coding policy: error | first.
    #[arg(long, default_value = "error")]
    on_conflict: String,
}

impl IngestArgs {
    fn load(&self) -> Result<(mcsa_core::CodingScheme, Vec<MultichannelSequence>)> {
        let scheme = io::scheme_or_default(self.scheme.as_deref())?;
        let events = io::read_events(&self.events)?;
        let policy = ConflictPolicy::from_str(&self.on_conflict)?;
        let seqs = build_sequences(&events, &scheme, policy)?;
        Ok((scheme, seqs))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate an event log and write the canonical sequence form.
    Ingest {
        #[command(flatten)]
        input: IngestArgs,
        /// Output CSV path (canonical event rows); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Krippendorff's alpha over a rater table CSV.
    Reliability {
        /// Wide CSV: unit[,channel],<rater columns>; empty cell = unrated.
        #[arg(long)]
        ratings: PathBuf,
        /// Output JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise optimal-matching distance matrix.
    Distances {
        #[command(flatten)]
        input: IngestArgs,
        /// Length normalization: none | maxlen.
        #[arg(long, default_value = "none")]
        normalize: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ward clustering over a distance matrix: merge list, partition,
    /// dendrogram, fit diagnostics.
    Cluster {
        /// Distance matrix CSV (from `distances`).
        #[arg(long)]
        distances: PathBuf,
        /// Fixed cluster count; omitted = best silhouette in --k-range.
        #[arg(long)]
        k: Option<usize>,
        /// Candidate range "lo:hi" for the diagnostics.
        #[arg(long, default_value = "2:8")]
        k_range: String,
        /// Linkage: ward2 (squared criterion) | ward1 (legacy).
        #[arg(long, default_value = "ward2")]
        linkage: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Code-frequency table with ANOVA / Levene / Kruskal-Wallis per code.
    Stats {
        #[command(flatten)]
        input: IngestArgs,
        /// Partition CSV (session_id,cluster).
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Epistemic network accumulation, projection, and per-cluster plots.
    Ena {
        #[command(flatten)]
        input: IngestArgs,
        #[arg(long)]
        partition: PathBuf,
        /// Stanza window (positions).
        #[arg(long, default_value_t = 4)]
        window: usize,
        /// Edge threshold for plots and the strong-edge listing.
        #[arg(long, default_value_t = 0.4)]
        threshold: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-cluster hidden Markov models with BIC state selection.
    Hmm {
        #[command(flatten)]
        input: IngestArgs,
        #[arg(long)]
        partition: PathBuf,
        /// State range "lo:hi".
        #[arg(long, default_value = "2:9")]
        states: String,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// EM convergence tolerance (relative log-likelihood improvement).
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        /// Drop all-missing positions before fitting.
        #[arg(long)]
        drop_blank: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Concept-map performance comparison across clusters.
    Score {
        /// CSV: session_id,propositions,hierarchies,examples.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sequence index plot (per cluster, per channel) as SVG.
    Render {
        #[command(flatten)]
        input: IngestArgs,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: ingest -> distances -> cluster -> stats/ena/hmm/score.
    Run {
        #[command(flatten)]
        input: IngestArgs,
        /// Concept-map score CSV (optional).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Rater table CSV (optional).
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "2:8")]
        k_range: String,
        #[arg(long, default_value = "2:9")]
        states: String,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        #[arg(long, default_value_t = 4)]
        window: usize,
        #[arg(long, default_value_t = 0.4)]
        threshold: f64,
        #[arg(long, default_value = "none")]
        normalize: String,
        #[arg(long, default_value = "ward2")]
        linkage: String,
        #[arg(long)]
        drop_blank: bool,
        /// Worker threads (default: all cores). Output is byte-identical
        /// for any value.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::Validation(format!("range '{s}' must look like lo:hi")))?;
    let lo = usize::from_str(lo.trim())
        .map_err(|_| Error::Validation(format!("bad range bound '{lo}'")))?;
    let hi = usize::from_str(hi.trim())
        .map_err(|_| Error::Validation(format!("bad range bound '{hi}'")))?;
    if lo > hi {
        return Err(Error::Validation(format!("empty range {lo}:{hi}")));
    }
    Ok((lo, hi))
}

fn emit(out: Option<&PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(path) => io::write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out } => {
            let (scheme, seqs) = input.load()?;
            let total_positions: usize = seqs.iter().map(MultichannelSequence::len).sum();
            eprintln!(
                "{} sessions, {} positions, {} code tokens",
                seqs.len(),
                total_positions,
                seqs.iter().map(MultichannelSequence::n_observed).sum::<usize>()
            );
            emit(out.as_ref(), &io::sequences_to_csv(&seqs, &scheme))
        }
        Command::Reliability { ratings, out } => {
            let table = io::read_rater_table(&ratings)?;
            let report = alpha_report(&table)?;
            eprintln!("pooled alpha = {:.4}", report.pooled.alpha);
            emit(
                out.as_ref(),
                &format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable")),
            )
        }
        Command::Distances { input, normalize, out } => {
            let (scheme, seqs) = input.load()?;
            let matrix = distance_matrix(&seqs, &scheme, Normalize::from_str(&normalize)?)?;
            io::write_file(&out, &io::matrix_to_csv(&matrix))
        }
        Command::Cluster { distances, k, k_range, linkage, out_dir } => {
            let matrix = io::read_matrix(&distances)?;
            let dend = ward_cluster(&matrix, WardVariant::from_str(&linkage)?)?;
            io::write_file(&out_dir.join("merges.csv"), &io::merges_to_csv(&dend))?;
            io::write_file(&out_dir.join("dendrogram.svg"), &render::dendrogram_svg(&dend))?;
            let (lo, hi) = parse_range(&k_range)?;
            let n = matrix.len();
            let (k_lo, k_hi) = (lo.max(2), hi.min(n.saturating_sub(1)));
            let (suggested, rows, flat) = if k_lo <= k_hi {
                let gof = goodness_of_fit(&matrix, &dend, k_lo..=k_hi)?;
                (gof.suggested_k, gof.rows, gof.no_structure)
            } else {
                (1, Vec::new(), false)
            };
            io::write_file(&out_dir.join("gof.csv"), &io::gof_to_csv(&rows))?;
            let chosen = k.unwrap_or(suggested);
            let partition = cut_tree(&dend, chosen)?;
            io::write_file(&out_dir.join("partition.csv"), &io::partition_to_csv(&partition))?;
            eprintln!(
                "k = {chosen} (suggested {suggested}{})",
                if flat { ", no substantial structure" } else { "" }
            );
            Ok(())
        }
        Command::Stats { input, partition, out } => {
            let (scheme, seqs) = input.load()?;
            let partition = io::read_partition(&partition)?;
            let freq = code_frequencies(&seqs, &partition, &scheme)?;
            let rows = io::stats_rows(&freq)?;
            io::write_file(&out, &io::stats_to_csv(&rows, partition.k))
        }
        Command::Ena { input, partition, window, threshold, out_dir } => {
            let (scheme, seqs) = input.load()?;
            let partition = io::read_partition(&partition)?;
            let model = fit_ena(&seqs, &partition, &scheme, window)?;
            io::write_file(&out_dir.join("ena_edges.csv"), &io::ena_edges_to_csv(&model))?;
            io::write_file(&out_dir.join("ena_points.csv"), &io::ena_points_to_csv(&model))?;
            io::write_file(&out_dir.join("ena_centroids.csv"), &io::ena_centroids_to_csv(&model))?;
            for cluster in 1..=partition.k {
                io::write_file(
                    &out_dir.join(format!("ena_cluster_{cluster}.svg")),
                    &render::ena_network_svg(&model, cluster, threshold),
                )?;
            }
            Ok(())
        }
        Command::Hmm {
            input,
            partition,
            states,
            restarts,
            seed,
            tol,
            max_iter,
            drop_blank,
            out_dir,
        } => {
            let (scheme, seqs) = input.load()?;
            let partition = io::read_partition(&partition)?;
            let (s_min, s_max) = parse_range(&states)?;
            let opts = EmOptions { restarts, seed, tol, max_iter };
            for cluster in 1..=partition.k {
                let members: Vec<MultichannelSequence> = partition
                    .members(cluster)
                    .iter()
                    .filter_map(|label| seqs.iter().find(|s| &s.session_id == *label))
                    .map(|s| if drop_blank { s.without_blanks() } else { s.clone() })
                    .collect();
                let (best, table) = select_states(&members, s_min, s_max, &scheme, &opts)?;
                io::write_file(
                    &out_dir.join(format!("hmm_cluster_{cluster}_model.json")),
                    &serde_json::to_string_pretty(&best).expect("serializable"),
                )?;
                io::write_file(
                    &out_dir.join(format!("hmm_cluster_{cluster}_bic.csv")),
                    &io::bic_table_to_csv(&table),
                )?;
                io::write_file(
                    &out_dir.join(format!("hmm_cluster_{cluster}.svg")),
                    &render::hmm_graph_svg(&best.model, &scheme),
                )?;
                let paths: Vec<(String, Vec<usize>)> = members
                    .iter()
                    .map(|seq| viterbi(&best.model, seq).map(|(p, _)| (seq.session_id.clone(), p)))
                    .collect::<Result<_>>()?;
                io::write_file(
                    &out_dir.join(format!("hmm_cluster_{cluster}_paths.csv")),
                    &io::viterbi_paths_to_csv(&paths),
                )?;
                eprintln!("cluster {cluster}: {} states (BIC {:.2})", best.model.n_states(), best.bic);
            }
            Ok(())
        }
        Command::Score { scores, partition, out } => {
            let tallies = io::read_scores(&scores)?;
            let partition = io::read_partition(&partition)?;
            let totals: BTreeMap<String, f64> =
                tallies.iter().map(|(k, t)| (k.clone(), t.total as f64)).collect();
            let report = cluster_performance(&totals, &partition)?;
            if let Some(anova) = &report.anova {
                eprintln!("{}", io::describe_test(&anova.result));
                if report.no_significant_difference == Some(true) {
                    eprintln!("no significant performance difference across clusters");
                }
            }
            for w in &report.excluded_clusters {
                eprintln!("warning: cluster {w} has fewer than 2 members, excluded from ANOVA");
            }
            emit(out.as_ref(), &io::performance_to_csv(&report))
        }
        Command::Render { input, partition, out } => {
            let (scheme, seqs) = input.load()?;
            let partition = io::read_partition(&partition)?;
            io::write_file(&out, &render::sequence_index_plot(&seqs, &partition, &scheme))
        }
        Command::Run {
            input,
            scores,
            ratings,
            out_dir,
            k,
            k_range,
            states,
            restarts,
            seed,
            tol,
            max_iter,
            window,
            threshold,
            normalize,
            linkage,
            drop_blank,
            workers,
        } => {
            let mut config = PipelineConfig::new(&input.events, &out_dir);
            config.scheme = input.scheme.clone();
            config.scores = scores;
            config.ratings = ratings;
            config.k = k;
            config.k_range = parse_range(&k_range)?;
            config.state_range = parse_range(&states)?;
            config.restarts = restarts;
            config.seed = seed;
            config.tol = tol;
            config.max_iter = max_iter;
            config.window = window;
            config.ena_threshold = threshold;
            config.normalize = Normalize::from_str(&normalize)?;
            config.linkage = WardVariant::from_str(&linkage)?;
            config.on_conflict = ConflictPolicy::from_str(&input.on_conflict)?;
            config.drop_blank = drop_blank;

            let manifest = match workers {
                Some(n) => {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .map_err(|e| Error::Computation(format!("thread pool: {e}")))?;
                    pool.install(|| run_pipeline(&config))?
                }
                None => run_pipeline(&config)?,
            };
            eprintln!(
                "wrote {} artifacts to {} (k = {})",
                manifest.outputs.len(),
                out_dir.display(),
                manifest.metadata.chosen_k
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
