//! Epistemic network analysis: code co-occurrence accumulation over
//! stanza windows, unit-norm scaling, a rank-2 projection of the centered
//! vectors, and per-cluster centroids and edge weights.
//!
//! Accumulation is binary per stanza: at each position `t` the stanza is
//! the trailing window of `W` positions, and every unordered pair of
//! distinct codes present anywhere in it (across any channels) scores 1.
//! The projection is a plain SVD of the centered normalized vectors; each
//! direction's sign is fixed so its largest-magnitude loading is positive.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::clustering::Partition;
use crate::scheme::{CodingScheme, MultichannelSequence};
use crate::{Error, Result};

/// Unordered code pairs (i < j) over the scheme's flattened code list.
pub fn pair_index(n_codes: usize) -> Vec<(usize, usize)> {
    (0..n_codes)
        .flat_map(|i| (i + 1..n_codes).map(move |j| (i, j)))
        .collect()
}

/// Raw co-occurrence vector of one sequence over all code pairs.
///
/// `window` is the stanza length in positions; codes at the same position
/// co-occur when `window == 1`.
pub fn accumulate(seq: &MultichannelSequence, scheme: &CodingScheme, window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let n_codes = scheme.n_codes();
    let mut offsets = vec![0usize; scheme.n_channels()];
    let mut off = 0;
    for (ci, ch) in scheme.channels().iter().enumerate() {
        offsets[ci] = off;
        off += ch.codes.len();
    }

    let mut vector = vec![0.0; n_codes * (n_codes - 1) / 2];
    let mut present = vec![false; n_codes];
    for t in 0..seq.len() {
        let start = (t + 1).saturating_sub(window);
        present.fill(false);
        for pos in start..=t {
            for (ci, ch) in seq.states().iter().enumerate() {
                if let Some(k) = ch[pos] {
                    present[offsets[ci] + k as usize] = true;
                }
            }
        }
        let codes: Vec<usize> = (0..n_codes).filter(|&c| present[c]).collect();
        for (a, &i) in codes.iter().enumerate() {
            for &j in codes.iter().skip(a + 1) {
                vector[pair_slot(i, j, n_codes)] += 1.0;
            }
        }
    }
    vector
}

/// Flat index of pair (i, j), i < j, in the pair list.
fn pair_slot(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// The fitted network model over all sequences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnaModel {
    /// Flattened scheme codes, fixing node order.
    pub codes: Vec<String>,
    /// Unordered code pairs indexing every vector.
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<String>,
    pub raw_vectors: Vec<Vec<f64>>,
    /// Unit-norm vectors; `None` flags a zero raw vector (excluded from the
    /// projection fit, its point pinned to the origin).
    pub normalized_vectors: Vec<Option<Vec<f64>>>,
    /// Two orthonormal projection directions in pair space.
    pub directions: [Vec<f64>; 2],
    /// Singular values of the centered matrix, non-increasing.
    pub singular_values: [f64; 2],
    /// Share of total centered variance captured per direction.
    pub variance_share: [f64; 2],
    /// Per-sequence 2-D coordinates.
    pub points: Vec<[f64; 2]>,
    /// Mean member point per cluster.
    pub centroids: BTreeMap<usize, [f64; 2]>,
    /// Mean member normalized weight per pair, per cluster.
    pub edges: BTreeMap<usize, Vec<f64>>,
    /// Stanza window the raw vectors were accumulated with.
    pub window: usize,
}

/// Scales vectors to unit norm, centers, projects onto the top-2 singular
/// directions, and aggregates cluster centroids and edge weights.
pub fn normalize_and_project(
    labels: Vec<String>,
    raw_vectors: Vec<Vec<f64>>,
    partition: &Partition,
    scheme: &CodingScheme,
    window: usize,
) -> Result<EnaModel> {
    if raw_vectors.len() < 2 {
        return Err(Error::Validation("projection needs at least 2 sequences".into()));
    }
    if labels.len() != raw_vectors.len() {
        return Err(Error::Validation("labels/vectors length mismatch".into()));
    }
    let n_codes = scheme.n_codes();
    let pairs = pair_index(n_codes);
    let dim = pairs.len();
    if raw_vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Validation("raw vector has wrong pair dimension".into()));
    }

    let normalized: Vec<Option<Vec<f64>>> = raw_vectors
        .iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                Some(v.iter().map(|x| x / norm).collect())
            } else {
                None
            }
        })
        .collect();
    let included: Vec<usize> = (0..normalized.len())
        .filter(|&i| normalized[i].is_some())
        .collect();
    if included.is_empty() {
        return Err(Error::Computation("no co-occurrence structure: all vectors zero".into()));
    }

    // mean-center the included vectors
    let mut center = vec![0.0; dim];
    for &i in &included {
        for (c, x) in center.iter_mut().zip(normalized[i].as_ref().unwrap()) {
            *c += x;
        }
    }
    for c in &mut center {
        *c /= included.len() as f64;
    }
    let centered: Vec<Vec<f64>> = included
        .iter()
        .map(|&i| {
            normalized[i]
                .as_ref()
                .unwrap()
                .iter()
                .zip(&center)
                .map(|(x, c)| x - c)
                .collect()
        })
        .collect();

    let (mut directions, singular_values, total_variance) = top2_directions(&centered, dim);
    // sign convention: largest-magnitude loading positive
    for dir in &mut directions {
        if let Some(extreme) = dir
            .iter()
            .cloned()
            .reduce(|a, b| if b.abs() > a.abs() { b } else { a })
        {
            if extreme < 0.0 {
                for x in dir.iter_mut() {
                    *x = -*x;
                }
            }
        }
    }

    let project = |v: &[f64]| -> [f64; 2] {
        [
            v.iter().zip(&directions[0]).map(|(x, d)| x * d).sum(),
            v.iter().zip(&directions[1]).map(|(x, d)| x * d).sum(),
        ]
    };
    let mut points = vec![[0.0, 0.0]; raw_vectors.len()];
    for (row, &i) in included.iter().enumerate() {
        points[i] = project(&centered[row]);
    }

    // cluster aggregates: centroids over member points, edges over member
    // normalized vectors (zero vectors contribute zero rows)
    let mut centroids = BTreeMap::new();
    let mut edges = BTreeMap::new();
    for cluster in 1..=partition.k {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| partition.cluster_of(l) == Some(cluster))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let mut centroid = [0.0, 0.0];
        let mut edge = vec![0.0; dim];
        for &i in &members {
            centroid[0] += points[i][0];
            centroid[1] += points[i][1];
            if let Some(v) = &normalized[i] {
                for (e, x) in edge.iter_mut().zip(v) {
                    *e += x;
                }
            }
        }
        centroid[0] /= m;
        centroid[1] /= m;
        for e in &mut edge {
            *e /= m;
        }
        centroids.insert(cluster, centroid);
        edges.insert(cluster, edge);
    }

    let var_share = |sv: f64| {
        if total_variance > 0.0 {
            sv * sv / total_variance
        } else {
            0.0
        }
    };
    Ok(EnaModel {
        codes: scheme.all_codes().iter().map(|s| s.to_string()).collect(),
        pairs,
        labels,
        raw_vectors,
        normalized_vectors: normalized,
        variance_share: [var_share(singular_values[0]), var_share(singular_values[1])],
        directions,
        singular_values,
        points,
        centroids,
        edges,
        window,
    })
}

/// Convenience: accumulate every sequence and fit the model.
pub fn fit_ena(
    seqs: &[MultichannelSequence],
    partition: &Partition,
    scheme: &CodingScheme,
    window: usize,
) -> Result<EnaModel> {
    let raw = seqs.iter().map(|s| accumulate(s, scheme, window)).collect();
    normalize_and_project(
        seqs.iter().map(|s| s.session_id.clone()).collect(),
        raw,
        partition,
        scheme,
        window,
    )
}

/// Cluster edges strictly above `threshold`, sorted by descending weight
/// (ties by pair order).
pub fn strong_edges(
    model: &EnaModel,
    cluster: usize,
    threshold: f64,
) -> Result<Vec<((usize, usize), f64)>> {
    let edge = model
        .edges
        .get(&cluster)
        .ok_or_else(|| Error::Validation(format!("no cluster {cluster} in model")))?;
    let mut out: Vec<((usize, usize), f64)> = model
        .pairs
        .iter()
        .zip(edge)
        .filter(|(_, &w)| w > threshold)
        .map(|(&p, &w)| (p, w))
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

/// Top-2 singular directions of the centered row matrix, plus singular
/// values and total variance (sum of squared entries).
///
/// Works on the Gram matrix of the smaller side and finishes with an exact
/// Jacobi eigendecomposition, so directions are orthonormal to machine
/// precision. Rank-deficient inputs get their missing directions completed
/// deterministically from the standard basis.
fn top2_directions(rows: &[Vec<f64>], dim: usize) -> ([Vec<f64>; 2], [f64; 2], f64) {
    let m = rows.len();
    let total_variance: f64 = rows.iter().flatten().map(|x| x * x).sum();

    let mut directions: Vec<Vec<f64>> = Vec::new();
    let mut sigmas: Vec<f64> = Vec::new();

    if m <= dim {
        // eigen of the m x m Gram matrix G = R R^T; v = R^T u / sigma
        let mut gram = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let g: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                gram[i * m + j] = g;
                gram[j * m + i] = g;
            }
        }
        let (eigvals, eigvecs) = jacobi_eigen(&gram, m);
        for e in 0..2.min(m) {
            let lambda = eigvals[e].max(0.0);
            let sigma = lambda.sqrt();
            if sigma > 1e-12 * total_variance.sqrt().max(1.0) {
                let u: Vec<f64> = (0..m).map(|i| eigvecs[i * m + e]).collect();
                let mut v = vec![0.0; dim];
                for (i, row) in rows.iter().enumerate() {
                    for (vk, x) in v.iter_mut().zip(row) {
                        *vk += u[i] * x;
                    }
                }
                for vk in &mut v {
                    *vk /= sigma;
                }
                directions.push(v);
                sigmas.push(sigma);
            }
        }
    } else {
        // eigen of the dim x dim Gram matrix R^T R
        let mut gram = vec![0.0; dim * dim];
        for row in rows {
            for a in 0..dim {
                if row[a] == 0.0 {
                    continue;
                }
                for b in a..dim {
                    gram[a * dim + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                gram[a * dim + b] = gram[b * dim + a];
            }
        }
        let (eigvals, eigvecs) = jacobi_eigen(&gram, dim);
        for e in 0..2.min(dim) {
            let sigma = eigvals[e].max(0.0).sqrt();
            if sigma > 1e-12 * total_variance.sqrt().max(1.0) {
                directions.push((0..dim).map(|i| eigvecs[i * dim + e]).collect());
                sigmas.push(sigma);
            }
        }
    }

    // complete a deficient basis deterministically from standard basis vectors
    let mut basis_probe = 0;
    while directions.len() < 2 && basis_probe < dim {
        let mut cand = vec![0.0; dim];
        cand[basis_probe] = 1.0;
        for d in &directions {
            let dot: f64 = cand.iter().zip(d).map(|(a, b)| a * b).sum();
            for (c, dk) in cand.iter_mut().zip(d) {
                *c -= dot * dk;
            }
        }
        let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for c in &mut cand {
                *c /= norm;
            }
            directions.push(cand);
            sigmas.push(0.0);
        }
        basis_probe += 1;
    }

    (
        [directions[0].clone(), directions[1].clone()],
        [sigmas[0], sigmas[1]],
        total_variance,
    )
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, eigenvalues
/// sorted descending with matching eigenvector columns.
fn jacobi_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() < 1e-15 * (1.0 + a.iter().map(|x| x.abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    // sort descending by eigenvalue
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigvals: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigvecs = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            eigvecs[row * n + col] = v[row * n + src];
        }
    }
    (eigvals, eigvecs)
}
