//! Recursive structural features.
//!
//! Every active node starts with ten degree and egonet measures. Each
//! recursion level appends the neighbor sum and neighbor mean of the
//! previous level's features; columns whose vertically log-binned values
//! duplicate an older feature are pruned. Discovery runs on a reference
//! sample and freezes the surviving definitions, which are then evaluated on
//! every snapshot so all feature matrices share one column space.

use std::fmt;

use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::temporal_graph::{Snapshot, SnapshotSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMeasure {
    InDegree,
    OutDegree,
    TotalDegree,
    WeightedInDegree,
    WeightedOutDegree,
    WeightedTotalDegree,
    EgonetInternalEdges,
    EgonetInternalWeight,
    EgonetBoundaryEdges,
    EgonetBoundaryWeight,
}

impl BaseMeasure {
    pub const ALL: [BaseMeasure; 10] = [
        BaseMeasure::InDegree,
        BaseMeasure::OutDegree,
        BaseMeasure::TotalDegree,
        BaseMeasure::WeightedInDegree,
        BaseMeasure::WeightedOutDegree,
        BaseMeasure::WeightedTotalDegree,
        BaseMeasure::EgonetInternalEdges,
        BaseMeasure::EgonetInternalWeight,
        BaseMeasure::EgonetBoundaryEdges,
        BaseMeasure::EgonetBoundaryWeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseMeasure::InDegree => "in_degree",
            BaseMeasure::OutDegree => "out_degree",
            BaseMeasure::TotalDegree => "total_degree",
            BaseMeasure::WeightedInDegree => "weighted_in_degree",
            BaseMeasure::WeightedOutDegree => "weighted_out_degree",
            BaseMeasure::WeightedTotalDegree => "weighted_total_degree",
            BaseMeasure::EgonetInternalEdges => "egonet_internal_edges",
            BaseMeasure::EgonetInternalWeight => "egonet_internal_weight",
            BaseMeasure::EgonetBoundaryEdges => "egonet_boundary_edges",
            BaseMeasure::EgonetBoundaryWeight => "egonet_boundary_weight",
        }
    }

    fn column(self) -> usize {
        BaseMeasure::ALL.iter().position(|&m| m == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Sum,
    Mean,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Sum => "sum",
            Aggregator::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Base(BaseMeasure),
    Aggregate { parent: usize, aggregator: Aggregator },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDefinition {
    pub id: usize,
    pub kind: FeatureKind,
    pub generation: usize,
    pub name: String,
}

impl FeatureDefinition {
    pub fn base(measure: BaseMeasure) -> Self {
        FeatureDefinition {
            id: measure.column(),
            kind: FeatureKind::Base(measure),
            generation: 0,
            name: measure.name().to_string(),
        }
    }

    fn aggregate(id: usize, parent: &FeatureDefinition, aggregator: Aggregator) -> Self {
        FeatureDefinition {
            id,
            kind: FeatureKind::Aggregate { parent: parent.id, aggregator },
            generation: parent.generation + 1,
            name: format!("{}({})", aggregator.name(), parent.name),
        }
    }
}

impl fmt::Display for FeatureDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub fn base_definitions() -> Vec<FeatureDefinition> {
    BaseMeasure::ALL.iter().map(|&m| FeatureDefinition::base(m)).collect()
}

/// Node-by-feature values for one snapshot; rows follow `Snapshot::active`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub snapshot_index: usize,
    pub values: Array2<f64>,
}

/// The ten base measures for every active node.
pub fn base_features(snapshot: &Snapshot) -> FeatureMatrix {
    let n = snapshot.num_active();
    let width = BaseMeasure::ALL.len();
    let chunk = chunk_len(n);
    let chunks = if n == 0 { 0 } else { n.div_ceil(chunk) };
    let parts: Vec<Vec<[f64; 10]>> = par::map_range(chunks, |c| {
        let lo = c * chunk;
        let hi = ((c + 1) * chunk).min(n);
        let mut mark = vec![usize::MAX; n];
        (lo..hi).map(|v| base_row(snapshot, v, &mut mark)).collect()
    });
    let mut values = Array2::zeros((n, width));
    for (v, row) in parts.into_iter().flatten().enumerate() {
        for (j, x) in row.into_iter().enumerate() {
            values[[v, j]] = x;
        }
    }
    FeatureMatrix { snapshot_index: snapshot.index, values }
}

fn chunk_len(n: usize) -> usize {
    (n / (4 * par::current_threads()).max(1)).clamp(64, 16_384)
}

fn base_row(s: &Snapshot, v: usize, mark: &mut [usize]) -> [f64; 10] {
    let out = s.out_edges(v);
    let inn = s.in_edges(v);
    let in_deg = inn.len() as f64;
    let out_deg = out.len() as f64;
    let w_in: f64 = inn.iter().map(|e| e.1).sum();
    let w_out: f64 = out.iter().map(|e| e.1).sum();

    mark[v] = v;
    for &u in s.neighbors(v) {
        mark[u as usize] = v;
    }
    let (mut int_e, mut int_w, mut bnd_e, mut bnd_w) = (0.0, 0.0, 0.0, 0.0);
    for u in std::iter::once(v).chain(s.neighbors(v).iter().map(|&u| u as usize)) {
        for &(w, wt) in s.out_edges(u) {
            if mark[w as usize] == v {
                int_e += 1.0;
                int_w += wt;
            } else {
                bnd_e += 1.0;
                bnd_w += wt;
            }
        }
        for &(w, wt) in s.in_edges(u) {
            if mark[w as usize] != v {
                bnd_e += 1.0;
                bnd_w += wt;
            }
        }
    }
    [in_deg, out_deg, in_deg + out_deg, w_in, w_out, w_in + w_out, int_e, int_w, bnd_e, bnd_w]
}

/// Neighbor sum and mean of the given columns, interleaved as
/// `[sum(c0), mean(c0), sum(c1), mean(c1), ...]`.
fn aggregate_columns(values: ArrayView2<'_, f64>, columns: &[usize], snapshot: &Snapshot) -> Array2<f64> {
    let n = snapshot.num_active();
    debug_assert_eq!(values.nrows(), n);
    let rows: Vec<Vec<f64>> = par::map_range(n, |v| {
        let nb = snapshot.neighbors(v);
        let mut row = Vec::with_capacity(2 * columns.len());
        for &c in columns {
            let s: f64 = nb.iter().map(|&u| values[[u as usize, c]]).sum();
            let mean = if nb.is_empty() { 0.0 } else { s / nb.len() as f64 };
            row.push(s);
            row.push(mean);
        }
        row
    });
    let mut out = Array2::zeros((n, 2 * columns.len()));
    for (v, row) in rows.into_iter().enumerate() {
        for (j, x) in row.into_iter().enumerate() {
            out[[v, j]] = x;
        }
    }
    out
}

/// Appends the neighbor sum and mean of every existing column.
pub fn recursive_aggregate(v: &FeatureMatrix, snapshot: &Snapshot) -> FeatureMatrix {
    let cols: Vec<usize> = (0..v.values.ncols()).collect();
    let agg = aggregate_columns(v.values.view(), &cols, snapshot);
    FeatureMatrix {
        snapshot_index: v.snapshot_index,
        values: concatenate(Axis(1), &[v.values.view(), agg.view()]).expect("row counts agree"),
    }
}

/// Vertical logarithmic binning of one column.
///
/// The `p` fraction of nodes with the smallest values goes to bin 0, the
/// same fraction of the remainder to bin 1, and so on. Equal values always
/// share a bin, where equal allows a relative gap of `TIE_TOLERANCE` so that
/// summation order cannot split a tie.
pub fn log_bin(column: ArrayView1<'_, f64>, p: f64) -> Vec<u32> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let mut bins = vec![0u32; n];
    let mut start = 0;
    let mut bin = 0u32;
    while start < n {
        let remaining = n - start;
        let take = ((p * remaining as f64).ceil() as usize).clamp(1, remaining);
        let mut end = start + take;
        while end < n && ties(column[order[end]], column[order[end - 1]]) {
            end += 1;
        }
        for &i in &order[start..end] {
            bins[i] = bin;
        }
        start = end;
        bin += 1;
    }
    bins
}

pub const TIE_TOLERANCE: f64 = 1e-12;

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

fn disagreements(a: &[u32], b: &[u32], limit: usize) -> usize {
    let mut d = 0;
    for (x, y) in a.iter().zip(b) {
        if x != y {
            d += 1;
            if d > limit {
                break;
            }
        }
    }
    d
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Removes log-binning duplicates.
///
/// Two features are duplicates when their binned columns disagree on at most
/// `tolerance` rows. In each connected component of the duplicate relation
/// only the feature with the smallest `(generation, id)` survives.
pub fn prune_correlated(
    v: &FeatureMatrix,
    defs: &[FeatureDefinition],
    bin_fraction: f64,
    tolerance: usize,
) -> Result<(FeatureMatrix, Vec<FeatureDefinition>)> {
    check_binning(bin_fraction)?;
    if defs.len() != v.values.ncols() {
        return Err(Error::shape(format!("{} definitions for {} columns", defs.len(), v.values.ncols())));
    }
    let binned: Vec<Vec<u32>> = v.values.columns().into_iter().map(|c| log_bin(c, bin_fraction)).collect();
    let f = defs.len();
    let mut dsu = DisjointSet::new(f);
    for a in 0..f {
        for b in (a + 1)..f {
            if disagreements(&binned[a], &binned[b], tolerance) <= tolerance {
                dsu.union(a, b);
            }
        }
    }
    let mut best: Vec<Option<usize>> = vec![None; f];
    for j in 0..f {
        let root = dsu.find(j);
        let key = |k: usize| (defs[k].generation, defs[k].id);
        best[root] = match best[root] {
            Some(cur) if key(cur) <= key(j) => Some(cur),
            _ => Some(j),
        };
    }
    let mut keep: Vec<usize> = best.into_iter().flatten().collect();
    keep.sort_unstable();
    let values = v.values.select(Axis(1), &keep);
    let kept_defs = keep.iter().map(|&j| defs[j].clone()).collect();
    Ok((FeatureMatrix { snapshot_index: v.snapshot_index, values }, kept_defs))
}

fn check_binning(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("bin fraction must lie in (0, 1), got {p}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// Discover on the vertical stack of every snapshot's candidates.
    AllSnapshots,
    /// Discover on the first nonempty snapshot only.
    FirstSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub bin_fraction: f64,
    pub tolerance: usize,
    pub max_generation: usize,
    pub reference: ReferencePolicy,
    /// Apply `x ↦ ln(1 + x)` to every evaluated column.
    pub log_transform: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            bin_fraction: 0.5,
            tolerance: 0,
            max_generation: 4,
            reference: ReferencePolicy::AllSnapshots,
            log_transform: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureMatrixSeries {
    pub definitions: Vec<FeatureDefinition>,
    pub matrices: Vec<FeatureMatrix>,
    /// True when recursion stopped at the generation cap rather than
    /// converging.
    pub generation_cap_hit: bool,
}

impl FeatureMatrixSeries {
    pub fn num_features(&self) -> usize {
        self.definitions.len()
    }

    /// Long-format CSV: one row per active node per snapshot.
    pub fn write_csv<W: std::io::Write>(&self, snapshots: &SnapshotSeries, mut out: W) -> std::io::Result<()> {
        let names: Vec<&str> = self.definitions.iter().map(|d| d.name.as_str()).collect();
        writeln!(out, "node,t,{}", names.join(","))?;
        for (m, snap) in self.matrices.iter().zip(&snapshots.snapshots) {
            for (row, &node) in m.values.axis_iter(Axis(0)).zip(snap.active()) {
                let vals: Vec<String> = row.iter().map(|&v| crate::fmt_num(v)).collect();
                writeln!(out, "{},{},{}", snapshots.labels[node], m.snapshot_index, vals.join(","))?;
            }
        }
        Ok(())
    }

    /// All snapshots' rows stacked vertically.
    pub fn stacked(&self) -> Array2<f64> {
        let views: Vec<_> = self.matrices.iter().map(|m| m.values.view()).collect();
        if views.is_empty() {
            return Array2::zeros((0, self.num_features()));
        }
        concatenate(Axis(0), &views).expect("feature matrices share a column count")
    }
}

/// Discovers features on the reference data and evaluates them everywhere.
pub fn discover_features(series: &SnapshotSeries, opts: &FeatureOptions) -> Result<FeatureMatrixSeries> {
    check_binning(opts.bin_fraction)?;
    if series.is_empty() {
        return Err(Error::arg("snapshot series is empty"));
    }
    let reference: Vec<&Snapshot> = match opts.reference {
        ReferencePolicy::AllSnapshots => series.snapshots.iter().filter(|s| s.num_active() > 0).collect(),
        ReferencePolicy::FirstSnapshot => series.snapshots.iter().find(|s| s.num_active() > 0).into_iter().collect(),
    };
    if reference.is_empty() {
        return Err(Error::arg("every snapshot is empty"));
    }

    let mut defs = base_definitions();
    let mut ref_values: Vec<Array2<f64>> = par::map_slice(&reference, |s| base_features(s).values);
    let stack = |vals: &[Array2<f64>], lo: usize, hi: usize| -> Array2<f64> {
        let views: Vec<_> = vals.iter().map(|m| m.slice(ndarray::s![.., lo..hi])).collect();
        concatenate(Axis(0), &views).expect("reference rows align")
    };
    let base_stack = stack(&ref_values, 0, defs.len());
    let mut binned: Vec<Vec<u32>> =
        base_stack.columns().into_iter().map(|c| log_bin(c, opts.bin_fraction)).collect();

    let mut frontier: Vec<usize> = (0..defs.len()).collect();
    let mut cap_hit = false;
    for generation in 1..=opts.max_generation {
        let width = defs.len();
        let new_vals: Vec<Array2<f64>> = par::map_range(reference.len(), |k| {
            aggregate_columns(ref_values[k].view(), &frontier, reference[k])
        });
        let new_stack = stack(&new_vals, 0, 2 * frontier.len());
        let new_bins: Vec<Vec<u32>> = new_stack.columns().into_iter().map(|c| log_bin(c, opts.bin_fraction)).collect();

        // Candidates are pruned against the frozen older features and each other.
        let total = width + new_bins.len();
        let mut dsu = DisjointSet::new(total);
        for (a, nb) in new_bins.iter().enumerate() {
            for (b, ob) in binned.iter().enumerate() {
                if disagreements(nb, ob, opts.tolerance) <= opts.tolerance {
                    dsu.union(width + a, b);
                }
            }
            for (b, other) in new_bins.iter().enumerate().skip(a + 1) {
                if disagreements(nb, other, opts.tolerance) <= opts.tolerance {
                    dsu.union(width + a, width + b);
                }
            }
        }
        // Roots are the minimum index, so a component touching an older
        // feature has a root below `width`.
        let mut survivors = Vec::new();
        for a in 0..new_bins.len() {
            if dsu.find(width + a) == width + a {
                survivors.push(a);
            }
        }
        log::debug!("generation {generation}: {} candidates, {} survive", new_bins.len(), survivors.len());
        if survivors.is_empty() {
            break;
        }

        let mut next_frontier = Vec::with_capacity(survivors.len());
        for &a in &survivors {
            let parent = &defs[frontier[a / 2]];
            let aggregator = if a % 2 == 0 { Aggregator::Sum } else { Aggregator::Mean };
            let def = FeatureDefinition::aggregate(defs.len(), parent, aggregator);
            next_frontier.push(def.id);
            defs.push(def);
        }
        for (k, vals) in ref_values.iter_mut().enumerate() {
            let picked = new_vals[k].select(Axis(1), &survivors);
            *vals = concatenate(Axis(1), &[vals.view(), picked.view()]).expect("rows align");
        }
        binned.extend(survivors.iter().map(|&a| new_bins[a].clone()));
        frontier = next_frontier;
        if generation == opts.max_generation {
            cap_hit = true;
            log::warn!("feature recursion stopped at the generation cap ({})", opts.max_generation);
        }
    }

    let matrices = par::map_slice(&series.snapshots, |s| {
        let mut m = evaluate_definitions(&defs, s);
        if opts.log_transform {
            m.values.mapv_inplace(f64::ln_1p);
        }
        m
    });
    Ok(FeatureMatrixSeries { definitions: defs, matrices, generation_cap_hit: cap_hit })
}

/// Evaluates a frozen definition list on one snapshot.
///
/// Definitions must be ordered so parents precede their aggregates and ids
/// must equal positions, as produced by discovery.
pub fn evaluate_definitions(defs: &[FeatureDefinition], snapshot: &Snapshot) -> FeatureMatrix {
    let n = snapshot.num_active();
    let base = base_features(snapshot).values;
    let mut values = Array2::zeros((n, defs.len()));
    for (j, def) in defs.iter().enumerate() {
        debug_assert_eq!(def.id, j);
        match def.kind {
            FeatureKind::Base(m) => values.column_mut(j).assign(&base.column(m.column())),
            FeatureKind::Aggregate { parent, aggregator } => {
                for v in 0..n {
                    let nb = snapshot.neighbors(v);
                    let s: f64 = nb.iter().map(|&u| values[[u as usize, parent]]).sum();
                    values[[v, j]] = match aggregator {
                        Aggregator::Sum => s,
                        Aggregator::Mean if nb.is_empty() => 0.0,
                        Aggregator::Mean => s / nb.len() as f64,
                    };
                }
            }
        }
    }
    FeatureMatrix { snapshot_index: snapshot.index, values }
}
