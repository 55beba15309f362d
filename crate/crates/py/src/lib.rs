//! Python bindings for the multichannel sequence analysis toolkit.
//!
//! The module mirrors the Rust API at the level a notebook needs: build a
//! scheme, ingest events, compute optimal-matching distances, cluster,
//! then run the per-cluster analyses (frequency statistics, epistemic
//! networks, hidden Markov models, concept-map scoring).

use std::collections::BTreeMap;
use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mcsa_core::clustering;
use mcsa_core::ena;
use mcsa_core::hmm;
use mcsa_core::reliability;
use mcsa_core::scheme;
use mcsa_core::scoring;
use mcsa_core::seqdist;
use mcsa_core::special;
use mcsa_core::stats;
use mcsa_core::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Computation(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPyErr<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPyErr<T> for mcsa_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Coding scheme: channels, code alphabets, and edit costs.
#[pyclass(frozen)]
struct Scheme {
    inner: scheme::CodingScheme,
}

#[pymethods]
impl Scheme {
    /// The built-in five-channel, fourteen-code scheme with unit costs.
    #[staticmethod]
    fn default() -> Scheme {
        Scheme { inner: scheme::CodingScheme::default_scheme() }
    }

    /// Parse a scheme config document (TOML).
    #[staticmethod]
    fn from_toml(doc: &str) -> PyResult<Scheme> {
        Ok(Scheme { inner: scheme::CodingScheme::from_toml(doc).or_py()? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Channels as (name, [codes]) pairs, in order.
    fn channels(&self) -> Vec<(String, Vec<String>)> {
        self.inner
            .channels()
            .iter()
            .map(|c| (c.name.clone(), c.codes.clone()))
            .collect()
    }

    #[getter]
    fn n_codes(&self) -> usize {
        self.inner.n_codes()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scheme({} channels, {} codes)",
            self.inner.n_channels(),
            self.inner.n_codes()
        )
    }
}

/// One session as aligned per-channel state arrays (code strings or None).
#[pyclass(frozen)]
struct Sequence {
    inner: scheme::MultichannelSequence,
}

#[pymethods]
impl Sequence {
    #[getter]
    fn session_id(&self) -> String {
        self.inner.session_id.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Channel-major states as code strings, None = missing.
    fn states(&self, scheme: &Scheme) -> Vec<Vec<Option<String>>> {
        self.inner
            .states()
            .iter()
            .enumerate()
            .map(|(c, ch)| {
                ch.iter()
                    .map(|s| s.map(|k| scheme.inner.code_name(c, k).to_string()))
                    .collect()
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Sequence('{}', T={})", self.inner.session_id, self.inner.len())
    }
}

/// Builds one sequence per session from event tuples
/// `(session_id, unit_index, actor_id, modality, [codes])`.
#[pyfunction]
#[pyo3(signature = (events, scheme, on_conflict="error"))]
fn build_sequences(
    events: Vec<(String, u64, String, String, Vec<String>)>,
    scheme: &Scheme,
    on_conflict: &str,
) -> PyResult<Vec<Sequence>> {
    let events: Vec<scheme::CodedEvent> = events
        .into_iter()
        .map(|(session_id, unit_index, actor_id, modality, codes)| {
            Ok(scheme::CodedEvent {
                session_id,
                unit_index,
                actor_id,
                modality: scheme::Modality::from_str(&modality).or_py()?,
                codes,
            })
        })
        .collect::<PyResult<_>>()?;
    let policy = scheme::ConflictPolicy::from_str(on_conflict).or_py()?;
    Ok(scheme::build_sequences(&events, &scheme.inner, policy)
        .or_py()?
        .into_iter()
        .map(|inner| Sequence { inner })
        .collect())
}

/// Optimal-matching edit distance between two sequences.
#[pyfunction]
fn om_distance(a: &Sequence, b: &Sequence, scheme: &Scheme) -> f64 {
    seqdist::om_distance(&a.inner, &b.inner, &scheme.inner)
}

/// Full pairwise distance matrix: (labels, row-major nested lists).
#[pyfunction]
#[pyo3(signature = (seqs, scheme, normalize="none"))]
fn distance_matrix(
    seqs: Vec<PyRef<Sequence>>,
    scheme: &Scheme,
    normalize: &str,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let seqs: Vec<scheme::MultichannelSequence> =
        seqs.iter().map(|s| s.inner.clone()).collect();
    let norm = seqdist::Normalize::from_str(normalize).or_py()?;
    let m = seqdist::distance_matrix(&seqs, &scheme.inner, norm).or_py()?;
    let n = m.len();
    let rows = (0..n)
        .map(|i| (0..n).map(|j| m.get(i, j)).collect())
        .collect();
    Ok((m.labels().to_vec(), rows))
}

/// Ward merge tree over a labeled distance matrix.
#[pyclass(frozen)]
struct Dendrogram {
    inner: clustering::Dendrogram,
    matrix: seqdist::DistanceMatrix,
}

#[pymethods]
impl Dendrogram {
    /// Merges as (left, right, height, size); leaves are 0..n-1, merge i
    /// creates node n+i.
    fn merges(&self) -> Vec<(usize, usize, f64, usize)> {
        self.inner
            .merges
            .iter()
            .map(|m| (m.left, m.right, m.height, m.size))
            .collect()
    }

    /// Partition at k clusters: label -> cluster id (1-based).
    fn cut(&self, k: usize) -> PyResult<BTreeMap<String, usize>> {
        let p = clustering::cut_tree(&self.inner, k).or_py()?;
        Ok(p.labels()
            .iter()
            .cloned()
            .zip(p.assignment().iter().copied())
            .collect())
    }

    /// Per-k diagnostics: (k, avg_silhouette, within_ss, height_gap) rows
    /// plus the silhouette-suggested k.
    fn goodness_of_fit(
        &self,
        k_min: usize,
        k_max: usize,
    ) -> PyResult<(Vec<(usize, f64, f64, f64)>, usize, bool)> {
        let gof = clustering::goodness_of_fit(&self.matrix, &self.inner, k_min..=k_max).or_py()?;
        Ok((
            gof.rows
                .iter()
                .map(|r| (r.k, r.avg_silhouette, r.within_ss, r.height_gap))
                .collect(),
            gof.suggested_k,
            gof.no_structure,
        ))
    }
}

/// Ward clustering of a labeled distance matrix (row-major nested lists).
#[pyfunction]
#[pyo3(signature = (labels, values, linkage="ward2"))]
fn ward_cluster(labels: Vec<String>, values: Vec<Vec<f64>>, linkage: &str) -> PyResult<Dendrogram> {
    let n = labels.len();
    let flat: Vec<f64> = values.into_iter().flatten().collect();
    if flat.len() != n * n {
        return Err(PyValueError::new_err("values must be an n x n matrix"));
    }
    let matrix = seqdist::DistanceMatrix::from_values(labels, flat).or_py()?;
    let variant = clustering::WardVariant::from_str(linkage).or_py()?;
    let inner = clustering::ward_cluster(&matrix, variant).or_py()?;
    Ok(Dendrogram { inner, matrix })
}

fn partition_from_map(assignment: &BTreeMap<String, usize>) -> PyResult<clustering::Partition> {
    let labels: Vec<String> = assignment.keys().cloned().collect();
    let ids: Vec<usize> = assignment.values().copied().collect();
    clustering::Partition::new(labels, ids).or_py()
}

/// Nominal Krippendorff's alpha; `ratings[rater][unit]` is a label or None.
#[pyfunction]
fn krippendorff_alpha(py: Python<'_>, ratings: Vec<Vec<Option<String>>>) -> PyResult<Py<PyAny>> {
    let n_units = ratings.first().map_or(0, Vec::len);
    let table = reliability::RaterTable::new(
        (0..ratings.len()).map(|r| format!("r{r}")).collect(),
        (0..n_units).map(|u| format!("u{u}")).collect(),
        None,
        ratings,
    )
    .or_py()?;
    let result = reliability::krippendorff_alpha(&table).or_py()?;
    json_to_py(py, &serde_json::to_value(&result).expect("serializable"))
}

fn test_result_to_py(py: Python<'_>, value: impl serde::Serialize) -> PyResult<Py<PyAny>> {
    json_to_py(py, &serde_json::to_value(value).expect("serializable"))
}

/// One-way ANOVA over raw groups; returns the test plus post-hoc list.
#[pyfunction]
fn one_way_anova(py: Python<'_>, groups: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    test_result_to_py(py, stats::one_way_anova(&groups).or_py()?)
}

/// ANOVA from per-group mean / sample SD / n.
#[pyfunction]
fn anova_from_summary(
    py: Python<'_>,
    means: Vec<f64>,
    sds: Vec<f64>,
    ns: Vec<usize>,
) -> PyResult<Py<PyAny>> {
    test_result_to_py(py, stats::anova_from_summary(&means, &sds, &ns).or_py()?)
}

/// Levene's homogeneity-of-variance test.
#[pyfunction]
fn levene_test(py: Python<'_>, groups: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    test_result_to_py(py, stats::levene_test(&groups).or_py()?)
}

/// Kruskal-Wallis H with midrank ties.
#[pyfunction]
fn kruskal_wallis(py: Python<'_>, groups: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    test_result_to_py(py, stats::kruskal_wallis(&groups).or_py()?)
}

/// Upper-tail probability under F(d1, d2) or chi-square(d1).
#[pyfunction]
#[pyo3(signature = (statistic, distribution, d1, d2=None))]
fn tail_probability(statistic: f64, distribution: &str, d1: f64, d2: Option<f64>) -> PyResult<f64> {
    let dist = match distribution {
        "f" => special::TailDistribution::F {
            d1,
            d2: d2.ok_or_else(|| PyValueError::new_err("F needs d2"))?,
        },
        "chi_square" => special::TailDistribution::ChiSquare { d: d1 },
        other => return Err(PyValueError::new_err(format!("unknown distribution '{other}'"))),
    };
    special::tail_probability(statistic, dist).or_py()
}

/// Per-code frequency summaries by cluster: code -> cluster -> (mean, sd, counts).
#[pyfunction]
fn code_frequencies(
    seqs: Vec<PyRef<Sequence>>,
    assignment: BTreeMap<String, usize>,
    scheme: &Scheme,
) -> PyResult<BTreeMap<String, BTreeMap<usize, (f64, f64, Vec<u64>)>>> {
    let seqs: Vec<scheme::MultichannelSequence> = seqs.iter().map(|s| s.inner.clone()).collect();
    let partition = partition_from_map(&assignment)?;
    let table = stats::code_frequencies(&seqs, &partition, &scheme.inner).or_py()?;
    let mut out: BTreeMap<String, BTreeMap<usize, (f64, f64, Vec<u64>)>> = BTreeMap::new();
    for row in table.rows {
        out.entry(row.code)
            .or_default()
            .insert(row.cluster, (row.mean, row.sd, row.counts));
    }
    Ok(out)
}

/// Fitted epistemic network model.
#[pyclass(frozen)]
struct EnaModel {
    inner: ena::EnaModel,
}

#[pymethods]
impl EnaModel {
    #[getter]
    fn codes(&self) -> Vec<String> {
        self.inner.codes.clone()
    }

    /// Per-sequence 2-D coordinates, keyed by session id.
    fn points(&self) -> BTreeMap<String, (f64, f64)> {
        self.inner
            .labels
            .iter()
            .cloned()
            .zip(self.inner.points.iter().map(|p| (p[0], p[1])))
            .collect()
    }

    fn centroids(&self) -> BTreeMap<usize, (f64, f64)> {
        self.inner
            .centroids
            .iter()
            .map(|(&c, p)| (c, (p[0], p[1])))
            .collect()
    }

    /// Cluster edges above `threshold` as ((code_a, code_b), weight),
    /// strongest first.
    #[pyo3(signature = (cluster, threshold=0.0))]
    fn strong_edges(
        &self,
        cluster: usize,
        threshold: f64,
    ) -> PyResult<Vec<((String, String), f64)>> {
        Ok(ena::strong_edges(&self.inner, cluster, threshold)
            .or_py()?
            .into_iter()
            .map(|((i, j), w)| {
                ((self.inner.codes[i].clone(), self.inner.codes[j].clone()), w)
            })
            .collect())
    }

    #[getter]
    fn singular_values(&self) -> (f64, f64) {
        (self.inner.singular_values[0], self.inner.singular_values[1])
    }

    #[getter]
    fn variance_share(&self) -> (f64, f64) {
        (self.inner.variance_share[0], self.inner.variance_share[1])
    }
}

/// Raw co-occurrence vector of one sequence over all code pairs.
#[pyfunction]
#[pyo3(signature = (seq, scheme, window=4))]
fn ena_accumulate(seq: &Sequence, scheme: &Scheme, window: usize) -> Vec<f64> {
    ena::accumulate(&seq.inner, &scheme.inner, window)
}

/// Accumulates every sequence and fits the network model.
#[pyfunction]
#[pyo3(signature = (seqs, assignment, scheme, window=4))]
fn ena_fit(
    seqs: Vec<PyRef<Sequence>>,
    assignment: BTreeMap<String, usize>,
    scheme: &Scheme,
    window: usize,
) -> PyResult<EnaModel> {
    let seqs: Vec<scheme::MultichannelSequence> = seqs.iter().map(|s| s.inner.clone()).collect();
    let partition = partition_from_map(&assignment)?;
    Ok(EnaModel { inner: ena::fit_ena(&seqs, &partition, &scheme.inner, window).or_py()? })
}

/// One fitted hidden Markov model.
#[pyclass(frozen)]
struct HmmFit {
    inner: hmm::FitReport,
}

#[pymethods]
impl HmmFit {
    #[getter]
    fn n_states(&self) -> usize {
        self.inner.model.n_states()
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    #[getter]
    fn bic(&self) -> f64 {
        self.inner.bic
    }

    #[getter]
    fn initial(&self) -> Vec<f64> {
        self.inner.model.initial.clone()
    }

    #[getter]
    fn transition(&self) -> Vec<Vec<f64>> {
        self.inner.model.transition.clone()
    }

    /// Emission tables per channel: [channel][state][symbol].
    #[getter]
    fn emission(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.model.emission.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// Most probable state path and its log-probability.
    fn viterbi(&self, seq: &Sequence) -> PyResult<(Vec<usize>, f64)> {
        hmm::viterbi(&self.inner.model, &seq.inner).or_py()
    }

    fn __repr__(&self) -> String {
        format!(
            "HmmFit(states={}, logL={:.4}, BIC={:.2})",
            self.inner.model.n_states(),
            self.inner.log_likelihood,
            self.inner.bic
        )
    }
}

/// Baum-Welch fit with seeded random restarts.
#[pyfunction]
#[pyo3(signature = (seqs, n_states, scheme, restarts=100, seed=0, tol=1e-8, max_iter=1000))]
#[allow(clippy::too_many_arguments)]
fn em_fit(
    seqs: Vec<PyRef<Sequence>>,
    n_states: usize,
    scheme: &Scheme,
    restarts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> PyResult<HmmFit> {
    let seqs: Vec<scheme::MultichannelSequence> = seqs.iter().map(|s| s.inner.clone()).collect();
    let opts = hmm::EmOptions { restarts, seed, tol, max_iter };
    Ok(HmmFit { inner: hmm::em_fit(&seqs, n_states, &scheme.inner, &opts).or_py()? })
}

/// Sweeps the state range and returns the BIC-minimizing fit plus the
/// (states, logL, n_parameters, bic) table.
#[pyfunction]
#[pyo3(signature = (seqs, scheme, s_min=2, s_max=9, restarts=100, seed=0, tol=1e-8, max_iter=1000))]
#[allow(clippy::too_many_arguments)]
fn select_states(
    seqs: Vec<PyRef<Sequence>>,
    scheme: &Scheme,
    s_min: usize,
    s_max: usize,
    restarts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> PyResult<(HmmFit, Vec<(usize, f64, usize, f64)>)> {
    let seqs: Vec<scheme::MultichannelSequence> = seqs.iter().map(|s| s.inner.clone()).collect();
    let opts = hmm::EmOptions { restarts, seed, tol, max_iter };
    let (best, table) = hmm::select_states(&seqs, s_min, s_max, &scheme.inner, &opts).or_py()?;
    Ok((
        HmmFit { inner: best },
        table
            .into_iter()
            .map(|r| (r.states, r.log_likelihood, r.n_parameters, r.bic))
            .collect(),
    ))
}

/// Concept-map rubric total: propositions + 5 * hierarchies + examples.
#[pyfunction]
fn score_concept_map(propositions: u32, hierarchies: u32, examples: u32) -> u32 {
    scoring::score_concept_map(propositions, hierarchies, examples).total
}

/// Per-cluster score comparison; returns (per-cluster rows, anova-or-None).
#[pyfunction]
fn cluster_performance(
    py: Python<'_>,
    scores: BTreeMap<String, f64>,
    assignment: BTreeMap<String, usize>,
) -> PyResult<Py<PyAny>> {
    let partition = partition_from_map(&assignment)?;
    let report = scoring::cluster_performance(&scores, &partition).or_py()?;
    test_result_to_py(py, report)
}

/// Converts a serde_json value into plain Python objects.
fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use pyo3::types::{PyDict, PyList, PyNone};
    Ok(match value {
        serde_json::Value::Null => PyNone::get(py).to_owned().into_any().unbind(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

#[pymodule]
fn mcsa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scheme>()?;
    m.add_class::<Sequence>()?;
    m.add_class::<Dendrogram>()?;
    m.add_class::<EnaModel>()?;
    m.add_class::<HmmFit>()?;
    m.add_function(wrap_pyfunction!(build_sequences, m)?)?;
    m.add_function(wrap_pyfunction!(om_distance, m)?)?;
    m.add_function(wrap_pyfunction!(distance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(ward_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(krippendorff_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(one_way_anova, m)?)?;
    m.add_function(wrap_pyfunction!(anova_from_summary, m)?)?;
    m.add_function(wrap_pyfunction!(levene_test, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(tail_probability, m)?)?;
    m.add_function(wrap_pyfunction!(code_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(ena_accumulate, m)?)?;
    m.add_function(wrap_pyfunction!(ena_fit, m)?)?;
    m.add_function(wrap_pyfunction!(em_fit, m)?)?;
    m.add_function(wrap_pyfunction!(select_states, m)?)?;
    m.add_function(wrap_pyfunction!(score_concept_map, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_performance, m)?)?;
    Ok(())
}
