//! Role interpretation against classical node measures, and clustering of
//! nodes by their transition models.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RowSolveOptions};
use crate::par;
use crate::roles::MembershipSeries;
use crate::temporal_graph::{Snapshot, SnapshotSeries};
use crate::transitions::TransitionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    TotalDegree,
    WeightedDegree,
    PageRank,
    LocalClusteringCoefficient,
    Betweenness,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::TotalDegree,
        Measure::WeightedDegree,
        Measure::PageRank,
        Measure::LocalClusteringCoefficient,
        Measure::Betweenness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::TotalDegree => "total_degree",
            Measure::WeightedDegree => "weighted_degree",
            Measure::PageRank => "pagerank",
            Measure::LocalClusteringCoefficient => "local_clustering_coefficient",
            Measure::Betweenness => "betweenness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureOptions {
    pub measures: Vec<Measure>,
    /// Betweenness is refused on snapshots with more active nodes.
    pub betweenness_cap: usize,
    pub damping: f64,
    /// PageRank stops once the L1 change of one sweep is below this.
    pub pagerank_tol: f64,
    pub pagerank_max_iter: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            measures: Measure::ALL.to_vec(),
            betweenness_cap: 20_000,
            damping: 0.85,
            pagerank_tol: 1e-8,
            pagerank_max_iter: 1000,
        }
    }
}

/// Active nodes × measures for one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureMatrix {
    pub snapshot_index: usize,
    pub columns: Vec<Measure>,
    pub values: Array2<f64>,
    pub max_normalized: bool,
}

impl MeasureMatrix {
    /// Every column divided by its maximum; all-zero columns stay zero.
    pub fn max_normalized(&self) -> MeasureMatrix {
        let mut values = self.values.clone();
        for mut col in values.axis_iter_mut(Axis(1)) {
            let m = col.iter().copied().fold(0.0, f64::max);
            if m > 0.0 {
                col.mapv_inplace(|v| v / m);
            }
        }
        MeasureMatrix { values, max_normalized: true, columns: self.columns.clone(), ..*self }
    }
}

pub fn node_measures(snapshot: &Snapshot, opts: &MeasureOptions) -> Result<MeasureMatrix> {
    let n = snapshot.num_active();
    if n == 0 {
        return Err(Error::arg(format!("snapshot {} has no active nodes", snapshot.index)));
    }
    if opts.measures.contains(&Measure::Betweenness) && n > opts.betweenness_cap {
        return Err(Error::TooLarge { snapshot: snapshot.index, nodes: n, cap: opts.betweenness_cap });
    }
    let mut values = Array2::zeros((n, opts.measures.len()));
    for (j, m) in opts.measures.iter().enumerate() {
        let col = match m {
            Measure::TotalDegree => (0..n).map(|v| (snapshot.out_edges(v).len() + snapshot.in_edges(v).len()) as f64).collect(),
            Measure::WeightedDegree => (0..n)
                .map(|v| snapshot.out_edges(v).iter().chain(snapshot.in_edges(v)).map(|e| e.1).sum())
                .collect(),
            Measure::PageRank => pagerank(snapshot, opts.damping, opts.pagerank_tol, opts.pagerank_max_iter),
            Measure::LocalClusteringCoefficient => local_clustering(snapshot),
            Measure::Betweenness => betweenness(snapshot),
        };
        values.column_mut(j).assign(&ndarray::Array1::from_vec(col));
    }
    Ok(MeasureMatrix { snapshot_index: snapshot.index, columns: opts.measures.clone(), values, max_normalized: false })
}

/// Weighted PageRank with uniform teleport; dangling mass is spread uniformly.
pub fn pagerank(snapshot: &Snapshot, damping: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = snapshot.num_active();
    if n == 0 {
        return Vec::new();
    }
    let out_weight: Vec<f64> = (0..n).map(|v| snapshot.out_edges(v).iter().map(|e| e.1).sum()).collect();
    let mut pr = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&v| out_weight[v] <= 0.0).map(|v| pr[v]).sum();
        let base = (1.0 - damping) / n as f64 + damping * dangling / n as f64;
        let mut next = vec![base; n];
        for v in 0..n {
            if out_weight[v] > 0.0 {
                let share = damping * pr[v] / out_weight[v];
                for &(u, w) in snapshot.out_edges(v) {
                    next[u as usize] += share * w;
                }
            }
        }
        let delta: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if delta < tol {
            break;
        }
    }
    pr
}

/// Clustering coefficient on the undirected simple projection.
pub fn local_clustering(snapshot: &Snapshot) -> Vec<f64> {
    let n = snapshot.num_active();
    par::map_range(n, |v| {
        let nbrs = snapshot.neighbors(v);
        let d = nbrs.len();
        if d < 2 {
            return 0.0;
        }
        let mut links = 0usize;
        for &u in nbrs {
            for &w in snapshot.neighbors(u as usize) {
                if w > u && nbrs.binary_search(&w).is_ok() {
                    links += 1;
                }
            }
        }
        2.0 * links as f64 / (d * (d - 1)) as f64
    })
}

/// Exact betweenness on the undirected unweighted projection, normalized
/// by the `(n−1)(n−2)/2` pairs not involving the node.
pub fn betweenness(snapshot: &Snapshot) -> Vec<f64> {
    let n = snapshot.num_active();
    if n < 3 {
        return vec![0.0; n];
    }
    let chunk = 64;
    let partials = par::map_range(n.div_ceil(chunk), |c| {
        let mut acc = vec![0.0; n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        let mut delta = vec![0.0f64; n];
        let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();
        for src in c * chunk..((c + 1) * chunk).min(n) {
            for v in 0..n {
                sigma[v] = 0.0;
                dist[v] = usize::MAX;
                delta[v] = 0.0;
                preds[v].clear();
            }
            order.clear();
            sigma[src] = 1.0;
            dist[src] = 0;
            queue.push_back(src);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in snapshot.neighbors(v) {
                    let w = w as usize;
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        preds[w].push(v as u32);
                    }
                }
            }
            for &w in order.iter().rev() {
                for &v in &preds[w] {
                    let v = v as usize;
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
                if w != src {
                    acc[w] += delta[w];
                }
            }
        }
        acc
    });
    let mut bc = vec![0.0; n];
    for p in partials {
        for (a, b) in bc.iter_mut().zip(p) {
            *a += b;
        }
    }
    // Each unordered pair was counted from both ends.
    let scale = 2.0 / ((n - 1) * (n - 2)) as f64;
    bc.iter().map(|x| x / 2.0 * scale).collect()
}

/// Measures for every snapshot; empty snapshots yield empty matrices.
pub fn measure_series(series: &SnapshotSeries, opts: &MeasureOptions) -> Result<Vec<MeasureMatrix>> {
    series
        .snapshots
        .iter()
        .map(|s| {
            if s.num_active() == 0 {
                Ok(MeasureMatrix {
                    snapshot_index: s.index,
                    columns: opts.measures.clone(),
                    values: Array2::zeros((0, opts.measures.len())),
                    max_normalized: false,
                })
            } else {
                node_measures(s, opts)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleExplanation {
    /// Roles × measures, averaged over the snapshots where a role is used.
    pub values: Array2<f64>,
    pub columns: Vec<Measure>,
    /// Largest-contribution measure per role; `None` if the role never
    /// receives membership.
    pub labels: Vec<Option<Measure>>,
    /// Snapshots in which each role's membership column was all zero.
    pub degenerate_steps: Vec<usize>,
}

impl RoleExplanation {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let names: Vec<&str> = self.columns.iter().map(|m| m.name()).collect();
        writeln!(out, "role,{},label", names.join(","))?;
        for (r, row) in self.values.axis_iter(Axis(0)).enumerate() {
            let vals: Vec<String> = row.iter().map(|&v| crate::fmt_num(v)).collect();
            let label = self.labels[r].map_or("unexplained", Measure::name);
            writeln!(out, "{r},{},{label}", vals.join(","))?;
        }
        Ok(())
    }
}

/// Fits `G_t E_t ≈ M_t` with `E_t ≥ 0` on the active rows of each snapshot
/// (inactive column dropped, measures max-normalized) and averages `E_t`.
pub fn explain_roles(
    memberships: &MembershipSeries,
    snapshots: &SnapshotSeries,
    measures: &[MeasureMatrix],
) -> Result<RoleExplanation> {
    if memberships.len() != snapshots.len() || measures.len() != snapshots.len() {
        return Err(Error::shape("memberships, snapshots and measures differ in length"));
    }
    let columns = measures.first().map(|m| m.columns.clone()).unwrap_or_default();
    let r = memberships.roles;
    let m = columns.len();
    let fits = par::map_range(snapshots.len(), |t| -> Result<Option<(Array2<f64>, Vec<bool>)>> {
        let active = snapshots.snapshots[t].active();
        if active.is_empty() {
            return Ok(None);
        }
        if measures[t].values.nrows() != active.len() || measures[t].columns != columns {
            return Err(Error::shape(format!("measure matrix {t} does not match its snapshot")));
        }
        let g = memberships.at(t).select(Axis(0), active).slice(s![.., ..r]).to_owned();
        let mt = measures[t].max_normalized().values;
        let used: Vec<bool> = g.axis_iter(Axis(1)).map(|c| c.iter().any(|&x| x > 0.0)).collect();
        Ok(Some((fit_explanation(g.view(), mt.view()), used)))
    });
    let mut sum = Array2::zeros((r, m));
    let mut counts = vec![0usize; r];
    let mut degenerate = vec![0usize; r];
    for fit in fits {
        if let Some((e, used)) = fit? {
            for k in 0..r {
                if used[k] {
                    sum.row_mut(k).scaled_add(1.0, &e.row(k));
                    counts[k] += 1;
                } else {
                    degenerate[k] += 1;
                }
            }
        }
    }
    let mut labels = Vec::with_capacity(r);
    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            labels.push(None);
            continue;
        }
        sum.row_mut(k).mapv_inplace(|v| v / count as f64);
        let row = sum.row(k);
        let best = (0..m).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        labels.push((m > 0).then(|| columns[best]));
    }
    Ok(RoleExplanation { values: sum, columns, labels, degenerate_steps: degenerate })
}

/// `min_{E ≥ 0} ½‖M − G E‖²`, one measure column at a time.
pub fn fit_explanation(g: ArrayView2<'_, f64>, m: ArrayView2<'_, f64>) -> Array2<f64> {
    let gram = g.t().dot(&g);
    let cross = m.t().dot(&g);
    let target_sq: Vec<f64> = m.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let (et, _) = linalg::mu_rows(
        gram.view(),
        cross.view(),
        &target_sq,
        Array2::ones(cross.dim()),
        RowSolveOptions { max_iter: 2000, tol: 1e-12 },
    );
    et.reversed_axes()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Embedding dimension, 2 or 3.
    pub dims: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions { k: 4, restarts: 50, max_iter: 300, seed: 0x5eed, dims: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionClustering {
    /// Node ids, in input order.
    pub nodes: Vec<usize>,
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
    pub embedding: Array2<f64>,
}

impl TransitionClustering {
    pub fn write_csv<W: Write>(&self, node_labels: &[String], mut out: W) -> std::io::Result<()> {
        let axes = ["x", "y", "z"];
        writeln!(out, "node,cluster,{}", axes[..self.embedding.ncols()].join(","))?;
        for (i, (&node, &c)) in self.nodes.iter().zip(&self.labels).enumerate() {
            let coords: Vec<String> = self.embedding.row(i).iter().map(|&v| crate::fmt_num(v)).collect();
            writeln!(out, "{},{c},{}", node_labels[node], coords.join(","))?;
        }
        Ok(())
    }
}

/// k-means on row-major flattened transition matrices, plus a rank-`d`
/// embedding of the same vectors.
pub fn cluster_transitions(models: &[(usize, TransitionMatrix)], opts: &ClusterOptions) -> Result<TransitionClustering> {
    if opts.k < 2 {
        return Err(Error::arg(format!("k must be at least 2, got {}", opts.k)));
    }
    if opts.k > models.len() {
        return Err(Error::arg(format!("k = {} exceeds the {} defined node models", opts.k, models.len())));
    }
    if !(2..=3).contains(&opts.dims) {
        return Err(Error::arg(format!("embedding dimension must be 2 or 3, got {}", opts.dims)));
    }
    let p = models[0].1.values.len();
    if models.iter().any(|(_, m)| m.values.len() != p) {
        return Err(Error::shape("node models differ in dimension"));
    }
    let mut x = Array2::zeros((models.len(), p));
    for (i, (_, m)) in models.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::Array1::from_vec(m.to_vector()));
    }
    let km = kmeans(x.view(), opts.k, opts.restarts, opts.max_iter, opts.seed);
    let embedding = low_rank_embedding(x.view(), opts.dims);
    Ok(TransitionClustering {
        nodes: models.iter().map(|(i, _)| *i).collect(),
        labels: km.labels,
        centroids: km.centroids,
        inertia: km.inertia,
        inertia_history: km.history,
        embedding,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds; the restart with the lowest
/// inertia wins, the earliest one on ties.
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, restarts: usize, max_iter: usize, seed: u64) -> KMeans {
    let runs = par::map_range(restarts.max(1), |run| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        lloyd(x, k, max_iter, &mut rng)
    });
    let mut best: Option<KMeans> = None;
    for r in runs {
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    best.expect("at least one restart")
}

fn lloyd(x: ArrayView2<'_, f64>, k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = x.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = vec![rows[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centers.push(rows[pick].clone());
        for (d, r) in d2.iter_mut().zip(&rows) {
            *d = d.min(sq_dist(r, centers.last().expect("pushed")));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, r) in rows.iter().enumerate() {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, sq_dist(r, ctr)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            inertia += d;
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let p = x.ncols();
        let mut sums = vec![vec![0.0; p]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    let mut centroids = Array2::zeros((k, x.ncols()));
    for (c, ctr) in centers.iter().enumerate() {
        centroids.row_mut(c).assign(&ndarray::Array1::from_vec(ctr.clone()));
    }
    KMeans { labels, centroids, inertia, history }
}

/// Coordinates `X V_d` where `V_d` spans the top `d` right singular vectors
/// of `X`, i.e. the best rank-`d` least-squares approximation.
pub fn low_rank_embedding(x: ArrayView2<'_, f64>, d: usize) -> Array2<f64> {
    let v = top_right_singular_vectors(x, d);
    x.dot(&v)
}

/// `‖X − X V_d V_dᵀ‖²_F`.
pub fn embedding_residual(x: ArrayView2<'_, f64>, d: usize) -> f64 {
    let v = top_right_singular_vectors(x, d);
    let approx = x.dot(&v).dot(&v.t());
    linalg::frobenius_sq((&x - &approx).view())
}

fn top_right_singular_vectors(x: ArrayView2<'_, f64>, d: usize) -> Array2<f64> {
    let p = x.ncols();
    let xtx = x.t().dot(&x);
    let eig = SymmetricEigen::new(DMatrix::from_fn(p, p, |i, j| xtx[[i, j]]));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let d = d.min(p);
    let mut v = Array2::zeros((p, d));
    for (c, &idx) in order[..d].iter().enumerate() {
        let col = eig.eigenvectors.column(idx);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = (0..p).fold(0, |b, i| if col[i].abs() > col[b].abs() { i } else { b });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            v[[i, c]] = sign * col[i];
        }
    }
    v
}

/// Mean membership per cluster, timestep and state: `[cluster][t][state]`.
pub fn cluster_profiles(clustering: &TransitionClustering, memberships: &MembershipSeries) -> Vec<Vec<Vec<f64>>> {
    let k = clustering.centroids.nrows();
    let w = memberships.width();
    let mut out = vec![vec![vec![0.0; w]; memberships.len()]; k];
    let mut counts = vec![0usize; k];
    for &c in &clustering.labels {
        counts[c] += 1;
    }
    for (t, m) in memberships.matrices.iter().enumerate() {
        for (&node, &c) in clustering.nodes.iter().zip(&clustering.labels) {
            for (acc, v) in out[c][t].iter_mut().zip(m.values.row(node)) {
                *acc += v / counts[c] as f64;
            }
        }
    }
    out
}

pub fn write_profiles_csv<W: Write>(profiles: &[Vec<Vec<f64>>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "cluster,t,role,mean_membership")?;
    for (c, series) in profiles.iter().enumerate() {
        for (t, row) in series.iter().enumerate() {
            let last = row.len().saturating_sub(1);
            for (j, v) in row.iter().enumerate() {
                if j == last {
                    writeln!(out, "{c},{t},inactive,{}", crate::fmt_num(*v))?;
                } else {
                    writeln!(out, "{c},{t},{j},{}", crate::fmt_num(*v))?;
                }
            }
        }
    }
    Ok(())
}
