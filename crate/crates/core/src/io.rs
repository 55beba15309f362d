//! File formats: the event-log CSV, scheme config documents, rater tables,
//! score sheets, and the numeric CSV artifacts the pipeline emits.
//!
//! Numeric CSVs use `.` decimals at full precision (17 significant digits)
//! so cross-run diffs are meaningful; every emitted CSV can be read back
//! by the readers in this module.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::clustering::{Dendrogram, KDiagnostics, Merge, Partition};
use crate::ena::EnaModel;
use crate::hmm::BicRow;
use crate::reliability::RaterTable;
use crate::scheme::{CodedEvent, CodingScheme, Modality, MultichannelSequence};
use crate::seqdist::DistanceMatrix;
use crate::stats::{FrequencyTable, TestResult};
use crate::{Error, Result};

/// Full-precision float formatting: 17 significant digits, `.` decimal.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    f64::from_str(s.trim()).map_err(|_| Error::Validation(format!("bad number '{s}'")))
}

fn parse_usize(s: &str) -> Result<usize> {
    usize::from_str(s.trim()).map_err(|_| Error::Validation(format!("bad integer '{s}'")))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

// ---------------------------------------------------------------------------
// event log
// ---------------------------------------------------------------------------

pub const EVENT_HEADER: [&str; 5] = ["session_id", "unit_index", "actor_id", "modality", "codes"];

/// Reads an event log: `session_id,unit_index,actor_id,modality,codes` with
/// `|`-separated codes.
pub fn read_events(path: &Path) -> Result<Vec<CodedEvent>> {
    let mut rdr = csv_reader(path)?;
    {
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?;
        if headers.iter().ne(EVENT_HEADER) {
            return Err(Error::Validation(format!(
                "{}: expected header {:?}",
                path.display(),
                EVENT_HEADER.join(",")
            )));
        }
    }
    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |n: usize| record.get(n).unwrap_or("").to_string();
        let unit_index = u64::from_str(record.get(1).unwrap_or("").trim()).map_err(|_| {
            Error::Validation(format!("{} row {}: bad unit_index", path.display(), i + 2))
        })?;
        let codes_field = field(4);
        let codes: Vec<String> = if codes_field.is_empty() {
            Vec::new()
        } else {
            codes_field.split('|').map(str::to_string).collect()
        };
        events.push(CodedEvent {
            session_id: field(0),
            unit_index,
            actor_id: field(2),
            modality: Modality::from_str(record.get(3).unwrap_or(""))?,
            codes,
        });
    }
    Ok(events)
}

pub fn events_to_csv(events: &[CodedEvent]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(EVENT_HEADER).expect("in-memory write");
    for ev in events {
        wtr.write_record([
            ev.session_id.as_str(),
            &ev.unit_index.to_string(),
            ev.actor_id.as_str(),
            &ev.modality.to_string(),
            &ev.codes.join("|"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Serializes sequences back to canonical event-log rows.
pub fn sequences_to_csv(seqs: &[MultichannelSequence], scheme: &CodingScheme) -> String {
    let events: Vec<CodedEvent> = seqs.iter().flat_map(|s| s.to_events(scheme)).collect();
    events_to_csv(&events)
}

// ---------------------------------------------------------------------------
// scheme config
// ---------------------------------------------------------------------------

pub fn read_scheme(path: &Path) -> Result<CodingScheme> {
    CodingScheme::from_toml(&read_to_string(path)?)
}

/// Loads the scheme from `path`, or the built-in default when absent.
pub fn scheme_or_default(path: Option<&Path>) -> Result<CodingScheme> {
    match path {
        Some(p) => read_scheme(p),
        None => Ok(CodingScheme::default_scheme()),
    }
}

// ---------------------------------------------------------------------------
// rater table
// ---------------------------------------------------------------------------

/// Reads a wide rater CSV: `unit[,channel],<rater>...`; empty cells mean
/// "not rated".
pub fn read_rater_table(path: &Path) -> Result<RaterTable> {
    let mut rdr = csv_reader(path)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.first().map(String::as_str) != Some("unit") {
        return Err(Error::Validation(format!(
            "{}: first column must be 'unit'",
            path.display()
        )));
    }
    let has_channel = headers.get(1).map(String::as_str) == Some("channel");
    let rater_start = if has_channel { 2 } else { 1 };
    let raters: Vec<String> = headers[rater_start..].to_vec();

    let mut units = Vec::new();
    let mut channels = if has_channel { Some(Vec::new()) } else { None };
    let mut ratings: Vec<Vec<Option<String>>> = vec![Vec::new(); raters.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        units.push(record.get(0).unwrap_or("").to_string());
        if let Some(ch) = &mut channels {
            ch.push(record.get(1).unwrap_or("").to_string());
        }
        for (r, slot) in ratings.iter_mut().enumerate() {
            let cell = record.get(rater_start + r).unwrap_or("");
            slot.push(if cell.is_empty() { None } else { Some(cell.to_string()) });
        }
    }
    RaterTable::new(raters, units, channels, ratings)
}

// ---------------------------------------------------------------------------
// concept-map scores
// ---------------------------------------------------------------------------

/// Reads `session_id,propositions,hierarchies,examples` and returns audited
/// totals keyed by session.
pub fn read_scores(path: &Path) -> Result<BTreeMap<String, crate::scoring::ConceptMapTally>> {
    let mut rdr = csv_reader(path)?;
    {
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?;
        let want = ["session_id", "propositions", "hierarchies", "examples"];
        if headers.iter().ne(want) {
            return Err(Error::Validation(format!(
                "{}: expected header {}",
                path.display(),
                want.join(",")
            )));
        }
    }
    let mut out = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let count = |n: usize, name: &str| -> Result<u32> {
            u32::from_str(record.get(n).unwrap_or("").trim()).map_err(|_| {
                Error::Validation(format!(
                    "{} row {}: {name} must be a nonnegative integer",
                    path.display(),
                    i + 2
                ))
            })
        };
        let tally = crate::scoring::score_concept_map(
            count(1, "propositions")?,
            count(2, "hierarchies")?,
            count(3, "examples")?,
        );
        out.insert(record.get(0).unwrap_or("").to_string(), tally);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// distance matrix
// ---------------------------------------------------------------------------

/// Full symmetric matrix; header row and first column carry session ids.
pub fn matrix_to_csv(m: &DistanceMatrix) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["session_id".to_string()];
    header.extend(m.labels().iter().cloned());
    wtr.write_record(&header).expect("in-memory write");
    for i in 0..m.len() {
        let mut row = vec![m.labels()[i].clone()];
        row.extend((0..m.len()).map(|j| fmt_f64(m.get(i, j))));
        wtr.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_matrix(path: &Path) -> Result<DistanceMatrix> {
    let mut rdr = csv_reader(path)?;
    let labels: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let n = labels.len();
    let mut values = vec![0.0; n * n];
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if i >= n {
            return Err(Error::Validation(format!("{}: too many rows", path.display())));
        }
        if record.get(0) != Some(labels[i].as_str()) {
            return Err(Error::Validation(format!(
                "{}: row label '{}' does not match header order",
                path.display(),
                record.get(0).unwrap_or("")
            )));
        }
        for j in 0..n {
            values[i * n + j] = parse_f64(record.get(j + 1).unwrap_or(""))?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Validation(format!(
            "{}: expected {n} rows, got {rows}",
            path.display()
        )));
    }
    DistanceMatrix::from_values(labels, values)
}

// ---------------------------------------------------------------------------
// clustering artifacts
// ---------------------------------------------------------------------------

pub fn merges_to_csv(dend: &Dendrogram) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["step", "left", "right", "height", "size"]).expect("write");
    for (i, m) in dend.merges.iter().enumerate() {
        wtr.write_record([
            i.to_string(),
            m.left.to_string(),
            m.right.to_string(),
            fmt_f64(m.height),
            m.size.to_string(),
        ])
        .expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

/// Reads a merge list back; `labels` restores the leaf names.
pub fn read_merges(path: &Path, labels: Vec<String>) -> Result<Dendrogram> {
    let mut rdr = csv_reader(path)?;
    let mut merges = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        merges.push(Merge {
            left: parse_usize(record.get(1).unwrap_or(""))?,
            right: parse_usize(record.get(2).unwrap_or(""))?,
            height: parse_f64(record.get(3).unwrap_or(""))?,
            size: parse_usize(record.get(4).unwrap_or(""))?,
        });
    }
    Ok(Dendrogram { merges, labels })
}

pub fn partition_to_csv(p: &Partition) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["session_id", "cluster"]).expect("write");
    for (label, cluster) in p.labels().iter().zip(p.assignment()) {
        wtr.write_record([label.as_str(), &cluster.to_string()]).expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let mut rdr = csv_reader(path)?;
    let mut labels = Vec::new();
    let mut assignment = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        labels.push(record.get(0).unwrap_or("").to_string());
        assignment.push(parse_usize(record.get(1).unwrap_or(""))?);
    }
    Partition::new(labels, assignment)
}

pub fn gof_to_csv(rows: &[KDiagnostics]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["k", "avg_silhouette", "within_ss", "height_gap"]).expect("write");
    for r in rows {
        wtr.write_record([
            r.k.to_string(),
            fmt_f64(r.avg_silhouette),
            fmt_f64(r.within_ss),
            fmt_f64(r.height_gap),
        ])
        .expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_gof(path: &Path) -> Result<Vec<KDiagnostics>> {
    let mut rdr = csv_reader(path)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        rows.push(KDiagnostics {
            k: parse_usize(record.get(0).unwrap_or(""))?,
            avg_silhouette: parse_f64(record.get(1).unwrap_or(""))?,
            within_ss: parse_f64(record.get(2).unwrap_or(""))?,
            height_gap: parse_f64(record.get(3).unwrap_or(""))?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// stats table
// ---------------------------------------------------------------------------

/// One reported row of the frequency/ANOVA table.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsRow {
    pub code: String,
    /// (mean, sd) per cluster, cluster id order.
    pub cluster_summaries: Vec<(f64, f64)>,
    pub f_statistic: f64,
    pub p_value: f64,
    pub levene_p: f64,
    pub kruskal_p: f64,
    /// Significant (corrected) pairwise directions, e.g. `1>2;1>3`.
    pub significant_pairs: String,
}

/// Formats significant post-hoc comparisons as `a>b` terms joined by `;`.
pub fn significant_pairs_label(posthoc: &[crate::stats::PosthocComparison]) -> String {
    let mut terms = Vec::new();
    for c in posthoc.iter().filter(|c| c.significant()) {
        let (hi, lo) = if c.direction() == std::cmp::Ordering::Greater {
            (c.group_a, c.group_b)
        } else {
            (c.group_b, c.group_a)
        };
        terms.push(format!("{}>{}", hi + 1, lo + 1));
    }
    terms.join(";")
}

/// Cross-cluster tests per code over a frequency table.
pub fn stats_rows(table: &FrequencyTable) -> Result<Vec<StatsRow>> {
    let codes: Vec<String> = {
        let mut seen = Vec::new();
        for row in &table.rows {
            if !seen.contains(&row.code) {
                seen.push(row.code.clone());
            }
        }
        seen
    };
    let mut out = Vec::new();
    for code in codes {
        let groups = table.groups_for(&code);
        let usable: Vec<Vec<f64>> = groups.iter().filter(|g| g.len() >= 2).cloned().collect();
        let summaries: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.code == code)
            .map(|r| (r.mean, r.sd))
            .collect();
        let (f, p, lev, kw, pairs) = if usable.len() >= 2 {
            let anova = crate::stats::one_way_anova(&usable)?;
            let lev = crate::stats::levene_test(&usable)?;
            let kw = crate::stats::kruskal_wallis(&usable)?;
            (
                anova.result.statistic,
                anova.result.p_value,
                lev.p_value,
                kw.p_value,
                significant_pairs_label(&anova.posthoc),
            )
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN, String::new())
        };
        out.push(StatsRow {
            code,
            cluster_summaries: summaries,
            f_statistic: f,
            p_value: p,
            levene_p: lev,
            kruskal_p: kw,
            significant_pairs: pairs,
        });
    }
    Ok(out)
}

pub fn stats_to_csv(rows: &[StatsRow], n_clusters: usize) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["code".to_string()];
    for c in 1..=n_clusters {
        header.push(format!("cluster{c}_mean"));
        header.push(format!("cluster{c}_sd"));
    }
    header.extend(["F", "p", "levene_p", "kruskal_p", "significant_pairs"].map(String::from));
    wtr.write_record(&header).expect("write");
    for r in rows {
        let mut rec = vec![r.code.clone()];
        for &(m, s) in &r.cluster_summaries {
            rec.push(fmt_f64(m));
            rec.push(fmt_f64(s));
        }
        rec.push(fmt_f64(r.f_statistic));
        rec.push(fmt_f64(r.p_value));
        rec.push(fmt_f64(r.levene_p));
        rec.push(fmt_f64(r.kruskal_p));
        rec.push(r.significant_pairs.clone());
        wtr.write_record(&rec).expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_stats(path: &Path) -> Result<Vec<StatsRow>> {
    let mut rdr = csv_reader(path)?;
    let n_clusters = {
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?;
        (headers.len() - 6) / 2
    };
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let mut summaries = Vec::new();
        for c in 0..n_clusters {
            summaries.push((
                parse_f64(record.get(1 + 2 * c).unwrap_or(""))?,
                parse_f64(record.get(2 + 2 * c).unwrap_or(""))?,
            ));
        }
        let base = 1 + 2 * n_clusters;
        out.push(StatsRow {
            code: record.get(0).unwrap_or("").to_string(),
            cluster_summaries: summaries,
            f_statistic: parse_f64(record.get(base).unwrap_or(""))?,
            p_value: parse_f64(record.get(base + 1).unwrap_or(""))?,
            levene_p: parse_f64(record.get(base + 2).unwrap_or(""))?,
            kruskal_p: parse_f64(record.get(base + 3).unwrap_or(""))?,
            significant_pairs: record.get(base + 4).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// ena artifacts
// ---------------------------------------------------------------------------

pub fn ena_edges_to_csv(model: &EnaModel) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["cluster", "code_a", "code_b", "weight"]).expect("write");
    for (&cluster, edge) in &model.edges {
        for (&(i, j), &w) in model.pairs.iter().zip(edge) {
            wtr.write_record([
                cluster.to_string(),
                model.codes[i].clone(),
                model.codes[j].clone(),
                fmt_f64(w),
            ])
            .expect("write");
        }
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_ena_edges(path: &Path) -> Result<Vec<(usize, String, String, f64)>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        out.push((
            parse_usize(record.get(0).unwrap_or(""))?,
            record.get(1).unwrap_or("").to_string(),
            record.get(2).unwrap_or("").to_string(),
            parse_f64(record.get(3).unwrap_or(""))?,
        ));
    }
    Ok(out)
}

pub fn ena_points_to_csv(model: &EnaModel) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["session_id", "x", "y"]).expect("write");
    for (label, point) in model.labels.iter().zip(&model.points) {
        wtr.write_record([label.as_str(), &fmt_f64(point[0]), &fmt_f64(point[1])])
            .expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn ena_centroids_to_csv(model: &EnaModel) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["cluster", "x", "y"]).expect("write");
    for (cluster, c) in &model.centroids {
        wtr.write_record([cluster.to_string(), fmt_f64(c[0]), fmt_f64(c[1])]).expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_points(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        out.push((
            record.get(0).unwrap_or("").to_string(),
            parse_f64(record.get(1).unwrap_or(""))?,
            parse_f64(record.get(2).unwrap_or(""))?,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// hmm artifacts
// ---------------------------------------------------------------------------

pub fn bic_table_to_csv(rows: &[BicRow]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["states", "log_likelihood", "n_parameters", "bic", "converged"])
        .expect("write");
    for r in rows {
        wtr.write_record([
            r.states.to_string(),
            fmt_f64(r.log_likelihood),
            r.n_parameters.to_string(),
            fmt_f64(r.bic),
            r.converged.to_string(),
        ])
        .expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_bic_table(path: &Path) -> Result<Vec<BicRow>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        out.push(BicRow {
            states: parse_usize(record.get(0).unwrap_or(""))?,
            log_likelihood: parse_f64(record.get(1).unwrap_or(""))?,
            n_parameters: parse_usize(record.get(2).unwrap_or(""))?,
            bic: parse_f64(record.get(3).unwrap_or(""))?,
            converged: record.get(4) == Some("true"),
        });
    }
    Ok(out)
}

/// Per-sequence most probable paths: `session_id,t,state`.
pub fn viterbi_paths_to_csv(paths: &[(String, Vec<usize>)]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["session_id", "t", "state"]).expect("write");
    for (sid, path) in paths {
        for (t, state) in path.iter().enumerate() {
            wtr.write_record([sid.as_str(), &t.to_string(), &state.to_string()]).expect("write");
        }
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_viterbi_paths(path: &Path) -> Result<Vec<(String, Vec<usize>)>> {
    let mut rdr = csv_reader(path)?;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let sid = record.get(0).unwrap_or("").to_string();
        let state = parse_usize(record.get(2).unwrap_or(""))?;
        match out.last_mut() {
            Some((last, path)) if *last == sid => path.push(state),
            _ => out.push((sid, vec![state])),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// performance report
// ---------------------------------------------------------------------------

pub fn performance_to_csv(report: &crate::scoring::PerformanceReport) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["cluster", "n", "mean", "sd"]).expect("write");
    for c in &report.per_cluster {
        wtr.write_record([
            c.cluster.to_string(),
            c.n.to_string(),
            fmt_f64(c.mean),
            fmt_f64(c.sd),
        ])
        .expect("write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

/// p-value band used in human-facing reports; machine output always carries
/// the exact p.
pub fn p_band(p: f64) -> &'static str {
    if p < 0.001 {
        "<.001"
    } else if p < 0.05 {
        "<.05"
    } else if p < 0.10 {
        "<.10"
    } else {
        ">.10"
    }
}

/// Renders a [`TestResult`] for log output.
pub fn describe_test(r: &TestResult) -> String {
    let df = match r.df2 {
        Some(d2) => format!("({}, {})", r.df1, d2),
        None => format!("({})", r.df1),
    };
    format!(
        "{:?} statistic = {:.4}, df = {df}, p = {:.6} [{}]{}",
        r.method,
        r.statistic,
        r.p_value,
        p_band(r.p_value),
        if r.degenerate { " (degenerate)" } else { "" }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{cut_tree, ward_cluster, WardVariant};
    use crate::scheme::{build_sequences, ConflictPolicy};
    use crate::seqdist::{distance_matrix, Normalize};
    use tempfile::tempdir;

    const EVENTS: &str = "session_id,unit_index,actor_id,modality,codes\n\
        s1,0,a1,verbal,Int-C\n\
        s1,1,a2,behavioural,CM|Int-B\n\
        s1,2,a1,verbal,\n\
        s2,0,a3,text,KS\n\
        s2,1,a3,verbal,Int-C|ALR\n";

    #[test]
    fn event_log_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("events.csv");
        write_file(&path, EVENTS).unwrap();
        let events = read_events(&path).unwrap();
        assert_eq!(events.len(), 5);
        assert_eq!(events[1].codes, vec!["CM", "Int-B"]);
        assert!(events[2].codes.is_empty());

        let csv = events_to_csv(&events);
        let path2 = dir.path().join("again.csv");
        write_file(&path2, &csv).unwrap();
        assert_eq!(read_events(&path2).unwrap(), events);
    }

    #[test]
    fn sequences_round_trip_through_event_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("events.csv");
        write_file(&path, EVENTS).unwrap();
        let scheme = scheme_or_default(None).unwrap();
        let events = read_events(&path).unwrap();
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();

        let csv = sequences_to_csv(&seqs, &scheme);
        let path2 = dir.path().join("canonical.csv");
        write_file(&path2, &csv).unwrap();
        let again = build_sequences(&read_events(&path2).unwrap(), &scheme, ConflictPolicy::Error)
            .unwrap();
        assert_eq!(seqs, again);
    }

    #[test]
    fn bad_event_header_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("events.csv");
        write_file(&path, "session,unit,actor,modality,codes\na,0,x,verbal,\n").unwrap();
        assert!(read_events(&path).is_err());
    }

    #[test]
    fn matrix_round_trip_preserves_bits() {
        let dir = tempdir().unwrap();
        let scheme = scheme_or_default(None).unwrap();
        let events = {
            let path = dir.path().join("events.csv");
            write_file(&path, EVENTS).unwrap();
            read_events(&path).unwrap()
        };
        let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
        let m = distance_matrix(&seqs, &scheme, Normalize::None).unwrap();
        let path = dir.path().join("matrix.csv");
        write_file(&path, &matrix_to_csv(&m)).unwrap();
        let again = read_matrix(&path).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn partition_and_merges_round_trip() {
        let dir = tempdir().unwrap();
        let labels: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        let mut values = vec![0.0; 36];
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    values[i * 6 + j] = ((i * 7 + j * 3) % 11) as f64 + 1.0;
                }
            }
        }
        for i in 0..6 {
            for j in 0..i {
                let v = values[i * 6 + j].min(values[j * 6 + i]);
                values[i * 6 + j] = v;
                values[j * 6 + i] = v;
            }
        }
        let d = DistanceMatrix::from_values(labels.clone(), values).unwrap();
        let dend = ward_cluster(&d, WardVariant::WardD2).unwrap();
        let p = cut_tree(&dend, 3).unwrap();

        let mp = dir.path().join("merges.csv");
        write_file(&mp, &merges_to_csv(&dend)).unwrap();
        assert_eq!(read_merges(&mp, labels).unwrap(), dend);

        let pp = dir.path().join("partition.csv");
        write_file(&pp, &partition_to_csv(&p)).unwrap();
        assert_eq!(read_partition(&pp).unwrap(), p);
    }

    #[test]
    fn rater_table_with_and_without_channel() {
        let dir = tempdir().unwrap();
        let with = dir.path().join("with.csv");
        write_file(&with, "unit,channel,r1,r2\nu0,Cog,KS,KS\nu1,Reg,TU,\n").unwrap();
        let t = read_rater_table(&with).unwrap();
        assert_eq!(t.raters, vec!["r1", "r2"]);
        assert_eq!(t.channels.as_ref().unwrap().len(), 2);
        assert_eq!(t.ratings[1][1], None);

        let without = dir.path().join("without.csv");
        write_file(&without, "unit,r1,r2\nu0,x,x\n").unwrap();
        let t = read_rater_table(&without).unwrap();
        assert!(t.channels.is_none());
    }

    #[test]
    fn scores_reader_audits_totals() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_file(
            &path,
            "session_id,propositions,hierarchies,examples\ns1,10,3,5\ns2,0,0,0\n",
        )
        .unwrap();
        let scores = read_scores(&path).unwrap();
        assert_eq!(scores["s1"].total, 30);
        assert_eq!(scores["s2"].total, 0);

        let bad = dir.path().join("bad.csv");
        write_file(&bad, "session_id,propositions,hierarchies,examples\ns1,-3,0,0\n").unwrap();
        assert!(read_scores(&bad).is_err());
    }

    #[test]
    fn fmt_f64_is_17_significant_digits_and_parses_back() {
        let cases = [0.0, 1.0, -3.25, 14.91, 1.0 / 3.0, 1e-12, 123456789.123456789];
        for &x in &cases {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn p_bands() {
        assert_eq!(p_band(0.0005), "<.001");
        assert_eq!(p_band(0.01), "<.05");
        assert_eq!(p_band(0.07), "<.10");
        assert_eq!(p_band(0.5), ">.10");
    }
}
