//! Ward's hierarchical agglomerative clustering over a distance matrix,
//! tree cutting, and cluster-count diagnostics.
//!
//! The default linkage is the squared-distance Ward criterion ("ward.D2"):
//! the Lance-Williams update runs on squared input distances and merge
//! heights are reported as the square root of the updated criterion. The
//! legacy variant ("ward1") applies the same update to raw distances.
//! Tie-breaking is deterministic: among pairs with equal criterion the
//! lexicographically smallest node-id pair merges first.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::seqdist::DistanceMatrix;
use crate::{Error, Result};

/// Which Ward formulation to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WardVariant {
    /// Squared-distance criterion, rooted heights.
    #[default]
    WardD2,
    /// Lance-Williams update applied directly to raw distances.
    Ward1,
}

impl std::str::FromStr for WardVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<WardVariant> {
        match s {
            "ward2" | "ward.d2" | "ward-d2" => Ok(WardVariant::WardD2),
            "ward1" | "ward.d" => Ok(WardVariant::Ward1),
            other => Err(Error::Validation(format!("unknown linkage '{other}'"))),
        }
    }
}

/// One agglomeration step. Node ids follow the stepwise convention:
/// leaves are `0..n-1`, the cluster created by merge `i` is `n + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Stepwise dendrogram: `n - 1` merges with non-decreasing heights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub labels: Vec<String>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }
}

/// Flat partition of the leaves into `k` non-empty clusters, ids `1..=k`
/// assigned in order of first leaf appearance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    labels: Vec<String>,
    assignment: Vec<usize>,
}

impl Partition {
    /// Builds a partition from parallel label/cluster-id arrays, checking
    /// that ids cover `1..=k` with no empty cluster.
    pub fn new(labels: Vec<String>, assignment: Vec<usize>) -> Result<Partition> {
        if labels.len() != assignment.len() {
            return Err(Error::Validation("labels/assignment length mismatch".into()));
        }
        if labels.is_empty() {
            return Err(Error::Validation("empty partition".into()));
        }
        let k = *assignment.iter().max().unwrap();
        let mut seen = vec![false; k];
        for &c in &assignment {
            if c == 0 || c > k {
                return Err(Error::Validation(format!("cluster id {c} out of range 1..={k}")));
            }
            seen[c - 1] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Validation("empty cluster id in partition".into()));
        }
        Ok(Partition { k, labels, assignment })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, label: &str) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.assignment[i])
    }

    /// Member labels of one cluster, in leaf order.
    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.labels
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &c)| c == cluster)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    /// Cluster sizes indexed by id (position 0 = cluster 1).
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &c in &self.assignment {
            sizes[c - 1] += 1;
        }
        sizes
    }
}

/// Agglomerates with the Ward criterion via the Lance-Williams update.
pub fn ward_cluster(d: &DistanceMatrix, variant: WardVariant) -> Result<Dendrogram> {
    d.validate()?;
    let n = d.len();
    if n < 2 {
        return Err(Error::Validation("clustering needs at least 2 observations".into()));
    }

    // Working criterion between active clusters, indexed by slot. For
    // ward.D2 the criterion is the squared updated distance.
    let mut crit = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = d.get(i, j);
            crit[i * n + j] = match variant {
                WardVariant::WardD2 => v * v,
                WardVariant::Ward1 => v,
            };
        }
    }
    let mut active: Vec<usize> = (0..n).collect(); // slots still alive
    let mut node_id: Vec<usize> = (0..n).collect(); // slot -> stepwise node id
    let mut size: Vec<usize> = vec![1; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        // pick the active pair with minimal criterion; ties -> smallest
        // (id_i, id_j) with id_i < id_j
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (ai, &si) in active.iter().enumerate() {
            for &sj in active.iter().skip(ai + 1) {
                let c = crit[si * n + sj];
                let (lo, hi) = if node_id[si] < node_id[sj] {
                    (node_id[si], node_id[sj])
                } else {
                    (node_id[sj], node_id[si])
                };
                let cand = (c, lo, hi, si, sj);
                if best.map_or(true, |b| (cand.0, cand.1, cand.2) < (b.0, b.1, b.2)) {
                    best = Some(cand);
                }
            }
        }
        let (c_min, lo, hi, si, sj) = best.expect("at least one active pair");
        let height = match variant {
            WardVariant::WardD2 => c_min.max(0.0).sqrt(),
            WardVariant::Ward1 => c_min,
        };
        let new_size = size[si] + size[sj];
        merges.push(Merge { left: lo, right: hi, height, size: new_size });

        // Lance-Williams Ward update into slot si; retire slot sj.
        let (sa, sb) = (size[si] as f64, size[sj] as f64);
        for &sx in &active {
            if sx == si || sx == sj {
                continue;
            }
            let sxn = size[sx] as f64;
            let t = sa + sb + sxn;
            let updated = ((sa + sxn) * crit[si * n + sx] + (sb + sxn) * crit[sj * n + sx]
                - sxn * c_min)
                / t;
            crit[si * n + sx] = updated;
            crit[sx * n + si] = updated;
        }
        size[si] = new_size;
        node_id[si] = n + step;
        active.retain(|&s| s != sj);
    }

    Ok(Dendrogram { merges, labels: d.labels().to_vec() })
}

/// Partition obtained by removing the `k - 1` highest merges.
pub fn cut_tree(dend: &Dendrogram, k: usize) -> Result<Partition> {
    let n = dend.n_leaves();
    if k == 0 || k > n {
        return Err(Error::Validation(format!("k = {k} out of range 1..={n}")));
    }
    // union-find over the first n - k merges
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, m) in dend.merges.iter().take(n - k).enumerate() {
        let node = n + i;
        let rl = find(&mut parent, m.left);
        let rr = find(&mut parent, m.right);
        parent[rl] = node;
        parent[rr] = node;
    }
    // cluster ids in order of first leaf appearance
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut assignment = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = ids.len() + 1;
        assignment.push(*ids.entry(root).or_insert(next));
    }
    Partition::new(dend.labels.clone(), assignment)
}

/// Diagnostics for one candidate cluster count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KDiagnostics {
    pub k: usize,
    pub avg_silhouette: f64,
    /// Within-cluster sum of squared distances, summed over clusters.
    pub within_ss: f64,
    /// Height difference between the first removed merge and the last kept one.
    pub height_gap: f64,
}

/// Report over a k-range, with the silhouette-maximizing suggestion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GofReport {
    pub rows: Vec<KDiagnostics>,
    pub suggested_k: usize,
    /// Set when even the best average silhouette shows no substantial
    /// structure (below 0.25).
    pub no_structure: bool,
}

/// Average silhouette width of a partition under the given distances.
/// Zero for the trivial one-cluster partition and for singleton members.
pub fn avg_silhouette(d: &DistanceMatrix, p: &Partition) -> f64 {
    if p.k < 2 {
        return 0.0;
    }
    let n = d.len();
    let sizes = p.sizes();
    let assign = p.assignment();
    let mut total = 0.0;
    for i in 0..n {
        let ci = assign[i];
        if sizes[ci - 1] == 1 {
            continue; // s(i) = 0 for singletons
        }
        let mut sums = vec![0.0; p.k];
        for j in 0..n {
            if j != i {
                sums[assign[j] - 1] += d.get(i, j);
            }
        }
        let a = sums[ci - 1] / (sizes[ci - 1] - 1) as f64;
        let b = (0..p.k)
            .filter(|&c| c + 1 != ci && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Per-k diagnostics over `k_range`, suggesting the k that maximizes the
/// average silhouette (ties -> smallest k). Interpretation stays with the
/// reader: every candidate row is reported.
pub fn goodness_of_fit(
    d: &DistanceMatrix,
    dend: &Dendrogram,
    k_range: std::ops::RangeInclusive<usize>,
) -> Result<GofReport> {
    let n = d.len();
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi > n.saturating_sub(1) || lo > hi {
        return Err(Error::Validation(format!(
            "k range {lo}..={hi} outside [2, {}]",
            n.saturating_sub(1)
        )));
    }
    let mut rows = Vec::new();
    for k in k_range {
        let p = cut_tree(dend, k)?;
        let asw = avg_silhouette(d, &p);
        let mut wss = 0.0;
        for c in 1..=p.k {
            let idx: Vec<usize> = (0..n).filter(|&i| p.assignment()[i] == c).collect();
            let mut s = 0.0;
            for (a, &i) in idx.iter().enumerate() {
                for &j in idx.iter().skip(a + 1) {
                    s += d.get(i, j) * d.get(i, j);
                }
            }
            wss += s / idx.len() as f64;
        }
        let heights: Vec<f64> = dend.merges.iter().map(|m| m.height).collect();
        let height_gap = heights[n - k] - heights[n - k - 1];
        rows.push(KDiagnostics { k, avg_silhouette: asw, within_ss: wss, height_gap });
    }
    let best = rows
        .iter()
        .fold(None::<&KDiagnostics>, |acc, r| match acc {
            Some(b) if r.avg_silhouette > b.avg_silhouette => Some(r),
            None => Some(r),
            _ => acc,
        })
        .expect("non-empty k range");
    Ok(GofReport {
        suggested_k: best.k,
        no_structure: best.avg_silhouette < 0.25,
        rows,
    })
}

/// Adjusted Rand index between two partitions over the same labels.
/// 1.0 means identical up to cluster relabeling.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.labels() != b.labels() {
        return Err(Error::Validation("partitions cover different labels".into()));
    }
    let n = a.labels().len();
    let mut table = vec![vec![0u64; b.k]; a.k];
    for i in 0..n {
        table[a.assignment()[i] - 1][b.assignment()[i] - 1] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..b.k)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0); // both partitions trivial
    }
    Ok((sum_ij - expected) / (max - expected))
}
