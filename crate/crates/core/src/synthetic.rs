//! Dynamic graphs with planted behavioral patterns.
//!
//! Every timestep contains stars, cliques and bridge nodes linking a star
//! center to a clique member. Nodes keep their pattern over time unless an
//! anomaly is injected.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{discover_features, FeatureMatrixSeries, FeatureOptions};
use crate::prediction::modal_role;
use crate::roles::{build_membership_series, MembershipSeries, RoleOptions};
use crate::temporal_graph::{build_snapshots, EdgeList, SnapshotOptions, SnapshotSeries, TemporalEdge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "S-CENTER")]
    StarCenter,
    #[serde(rename = "S-EDGE")]
    StarEdge,
    #[serde(rename = "BRIDGE")]
    Bridge,
    #[serde(rename = "CLIQUE")]
    Clique,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::StarCenter, Pattern::StarEdge, Pattern::Bridge, Pattern::Clique];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::StarCenter => "S-CENTER",
            Pattern::StarEdge => "S-EDGE",
            Pattern::Bridge => "BRIDGE",
            Pattern::Clique => "CLIQUE",
        }
    }

    pub fn index(self) -> usize {
        Pattern::ALL.iter().position(|&p| p == self).expect("listed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Injected star-edge nodes leave their star and join a clique for good.
    PatternSwitch,
    /// All bridge–bridge edges appear at the injection time only.
    GlobalBridgeLink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// Number of injected nodes (pattern switches only).
    pub injected: usize,
    /// `None` draws a time uniformly from `1 ..= timesteps − 2`.
    pub time: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_stars: usize,
    pub star_size: usize,
    pub n_cliques: usize,
    pub clique_size: usize,
    pub n_bridges: usize,
    pub edge_noise_p: f64,
    pub timesteps: usize,
    pub seed: u64,
    pub anomaly: Option<AnomalySpec>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_stars: 10,
            star_size: 4,
            n_cliques: 5,
            clique_size: 5,
            n_bridges: 10,
            edge_noise_p: 0.002,
            timesteps: 10,
            seed: 1,
            anomaly: None,
        }
    }
}

/// Default time of the global bridge-link event.
pub const DEFAULT_GLOBAL_ANOMALY_TIME: usize = 6;

impl GeneratorConfig {
    pub fn num_nodes(&self) -> usize {
        self.n_stars * self.star_size + self.n_cliques * self.clique_size + self.n_bridges
    }

    /// Edges per snapshot before noise and anomalies.
    pub fn base_edge_count(&self) -> usize {
        self.n_stars * (self.star_size - 1) + self.n_cliques * self.clique_size * (self.clique_size - 1) / 2 + 2 * self.n_bridges
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stars == 0 || self.n_cliques == 0 {
            return Err(Error::arg("need at least one star and one clique"));
        }
        if self.star_size < 2 {
            return Err(Error::arg(format!("star size must be at least 2, got {}", self.star_size)));
        }
        if self.clique_size < 3 {
            return Err(Error::arg(format!("clique size must be at least 3, got {}", self.clique_size)));
        }
        if !(0.0..1.0).contains(&self.edge_noise_p) {
            return Err(Error::arg(format!("edge noise must lie in [0, 1), got {}", self.edge_noise_p)));
        }
        if self.timesteps == 0 {
            return Err(Error::arg("need at least one timestep"));
        }
        if let Some(a) = self.anomaly {
            if let Some(t) = a.time {
                if t >= self.timesteps {
                    return Err(Error::arg(format!("injection time {t} outside {} timesteps", self.timesteps)));
                }
            } else if self.timesteps < 3 {
                return Err(Error::arg("a random injection time needs at least three timesteps"));
            }
            match a.kind {
                AnomalyKind::PatternSwitch => {
                    let edges = self.n_stars * (self.star_size - 1);
                    if a.injected == 0 || a.injected > edges {
                        return Err(Error::arg(format!("cannot inject {} of {edges} star-edge nodes", a.injected)));
                    }
                }
                AnomalyKind::GlobalBridgeLink => {
                    if self.n_bridges < 2 {
                        return Err(Error::arg("bridge linking needs at least two bridges"));
                    }
                }
            }
        }
        Ok(())
    }

    fn star_center(&self, s: usize) -> usize {
        s * self.star_size
    }

    fn clique_member(&self, c: usize, m: usize) -> usize {
        self.n_stars * self.star_size + c * self.clique_size + m
    }

    fn bridge(&self, b: usize) -> usize {
        self.n_stars * self.star_size + self.n_cliques * self.clique_size + b
    }
}

/// `patterns[t][node]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatternLabels {
    pub patterns: Vec<Vec<Pattern>>,
}

impl PatternLabels {
    pub fn at(&self, t: usize) -> &[Pattern] {
        &self.patterns[t]
    }

    pub fn write_csv<W: Write>(&self, labels: &[String], mut out: W) -> std::io::Result<()> {
        writeln!(out, "node,t,pattern")?;
        for (t, row) in self.patterns.iter().enumerate() {
            for (node, p) in row.iter().enumerate() {
                writeln!(out, "{},{t},{}", labels[node], p.name())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGraph {
    pub edges: EdgeList,
    pub labels: PatternLabels,
    pub injected: Vec<usize>,
    pub injection_time: Option<usize>,
}

impl SyntheticGraph {
    /// Windows the edges into one snapshot per timestep, both directions.
    pub fn snapshots(&self) -> Result<SnapshotSeries> {
        build_snapshots(&self.edges, 1.0, &SnapshotOptions { symmetrize: true })
    }
}

/// Draws the edge list; each undirected edge is emitted once with
/// `timestamp = t` and weight 1.
pub fn generate_edges(config: &GeneratorConfig) -> Result<SyntheticGraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_nodes();

    let mut base_patterns = vec![Pattern::Clique; n];
    for s in 0..config.n_stars {
        base_patterns[config.star_center(s)] = Pattern::StarCenter;
        for m in 1..config.star_size {
            base_patterns[config.star_center(s) + m] = Pattern::StarEdge;
        }
    }
    for b in 0..config.n_bridges {
        base_patterns[config.bridge(b)] = Pattern::Bridge;
    }

    let injection_time = config.anomaly.map(|a| a.time.unwrap_or_else(|| rng.gen_range(1..=config.timesteps - 2)));
    let mut injected = Vec::new();
    // Injected star-edge node → clique it joins.
    let mut switched: Vec<(usize, usize)> = Vec::new();
    if let Some(a) = config.anomaly.filter(|a| a.kind == AnomalyKind::PatternSwitch) {
        let mut candidates: Vec<usize> = (0..n).filter(|&i| base_patterns[i] == Pattern::StarEdge).collect();
        candidates.shuffle(&mut rng);
        candidates.truncate(a.injected);
        candidates.sort_unstable();
        for &node in &candidates {
            switched.push((node, rng.gen_range(0..config.n_cliques)));
        }
        injected = candidates;
    }

    let mut edges = Vec::new();
    let mut patterns = Vec::with_capacity(config.timesteps);
    for t in 0..config.timesteps {
        let active_switch = injection_time.is_some_and(|ti| t >= ti);
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(config.base_edge_count());
        let mut row = base_patterns.clone();
        for s in 0..config.n_stars {
            let c = config.star_center(s);
            for m in 1..config.star_size {
                let leaf = c + m;
                if !(active_switch && switched.iter().any(|&(v, _)| v == leaf)) {
                    pairs.push((c, leaf));
                }
            }
        }
        for c in 0..config.n_cliques {
            for a in 0..config.clique_size {
                for b in a + 1..config.clique_size {
                    pairs.push((config.clique_member(c, a), config.clique_member(c, b)));
                }
            }
        }
        if active_switch {
            for &(v, c) in &switched {
                row[v] = Pattern::Clique;
                for m in 0..config.clique_size {
                    pairs.push((v, config.clique_member(c, m)));
                }
            }
        }
        for b in 0..config.n_bridges {
            let v = config.bridge(b);
            let clique = b % config.n_cliques;
            let member = (b / config.n_cliques) % config.clique_size;
            pairs.push((v, config.star_center(b % config.n_stars)));
            pairs.push((v, config.clique_member(clique, member)));
        }
        let global_event = config.anomaly.is_some_and(|a| a.kind == AnomalyKind::GlobalBridgeLink) && injection_time == Some(t);
        if global_event {
            for a in 0..config.n_bridges {
                for b in a + 1..config.n_bridges {
                    pairs.push((config.bridge(a), config.bridge(b)));
                }
            }
        }
        for (mut u, mut v) in pairs {
            if config.edge_noise_p > 0.0 {
                if rng.gen::<f64>() < config.edge_noise_p {
                    u = resample(&mut rng, n, v);
                }
                if rng.gen::<f64>() < config.edge_noise_p {
                    v = resample(&mut rng, n, u);
                }
            }
            edges.push(TemporalEdge { source: u, target: v, weight: 1.0, timestamp: t as f64 });
        }
        patterns.push(row);
    }

    Ok(SyntheticGraph {
        edges: EdgeList::from_edges(n, edges)?,
        labels: PatternLabels { patterns },
        injected,
        injection_time,
    })
}

fn resample(rng: &mut ChaCha8Rng, n: usize, avoid: usize) -> usize {
    loop {
        let x = rng.gen_range(0..n);
        if x != avoid {
            return x;
        }
    }
}

pub fn generate(config: &GeneratorConfig) -> Result<(SnapshotSeries, PatternLabels)> {
    let g = generate_edges(config)?;
    Ok((g.snapshots()?, g.labels))
}

/// Pattern-by-pattern sums of pairwise Euclidean distances, row-normalized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyMatrix {
    pub values: Array2<f64>,
    /// `false` for patterns without nodes; their rows are zero.
    pub defined: [bool; 4],
}

impl ContingencyMatrix {
    /// For each defined row: is the diagonal strictly below every other entry?
    pub fn diagonal_is_row_minimum(&self) -> [Option<bool>; 4] {
        let mut out = [None; 4];
        for (p, slot) in out.iter_mut().enumerate() {
            if self.defined[p] {
                let d = self.values[[p, p]];
                *slot = Some((0..4).filter(|&q| q != p && self.defined[q]).all(|q| d < self.values[[p, q]]));
            }
        }
        out
    }
}

/// `rows[i]` describes `nodes[i]`, whose pattern is `patterns[nodes[i]]`.
pub fn contingency(rows: ArrayView2<'_, f64>, nodes: &[usize], patterns: &[Pattern]) -> Result<ContingencyMatrix> {
    if rows.nrows() != nodes.len() {
        return Err(Error::shape(format!("{} rows for {} nodes", rows.nrows(), nodes.len())));
    }
    let labels: Vec<usize> = nodes.iter().map(|&v| patterns[v].index()).collect();
    let mut c = Array2::zeros((4, 4));
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let d = rows.row(i).iter().zip(rows.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            c[[labels[i], labels[j]]] += d;
            c[[labels[j], labels[i]]] += d;
        }
    }
    let mut defined = [false; 4];
    for &l in &labels {
        defined[l] = true;
    }
    for mut row in c.axis_iter_mut(Axis(0)) {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    Ok(ContingencyMatrix { values: c, defined })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternReport {
    pub reference_t: usize,
    pub roles: usize,
    pub features: ContingencyMatrix,
    pub memberships: ContingencyMatrix,
    pub feature_diagonal_ok: [Option<bool>; 4],
    pub membership_diagonal_ok: [Option<bool>; 4],
    /// Modal-role counts per pattern over all timesteps, `[pattern][role]`.
    pub modal_histograms: Vec<Vec<usize>>,
    /// Every pair of populated patterns has a different normalized histogram.
    pub histograms_distinct: bool,
}

impl PatternReport {
    pub fn passed(&self) -> bool {
        self.feature_diagonal_ok.iter().chain(&self.membership_diagonal_ok).all(|x| *x != Some(false))
    }
}

/// Runs feature discovery and role extraction, then checks that nodes of a
/// pattern look alike at `t = 0`. Failures are reported, not raised.
pub fn validate_patterns(
    series: &SnapshotSeries,
    labels: &PatternLabels,
    features: &FeatureOptions,
    roles: &RoleOptions,
) -> Result<(PatternReport, MembershipSeries)> {
    let fs = discover_features(series, features)?;
    let model = build_membership_series(&fs, series, roles)?;
    let report = pattern_report(series, labels, &fs, &model.memberships)?;
    Ok((report, model.memberships))
}

/// Contingency checks at `t = 0` and modal-role histograms over all steps
/// for features and memberships that were already computed.
pub fn pattern_report(
    series: &SnapshotSeries,
    labels: &PatternLabels,
    features: &FeatureMatrixSeries,
    memberships: &MembershipSeries,
) -> Result<PatternReport> {
    let t0 = 0;
    let active = series.snapshots[t0].active();
    let v = &features.matrices[t0].values;
    let g = memberships.at(t0).select(Axis(0), active);
    let fc = contingency(v.view(), active, labels.at(t0))?;
    let gc = contingency(g.view(), active, labels.at(t0))?;

    let width = memberships.width();
    let mut hist = vec![vec![0usize; width]; 4];
    for (t, m) in memberships.matrices.iter().enumerate() {
        for (node, row) in m.values.axis_iter(Axis(0)).enumerate() {
            if m.is_active(node) {
                hist[labels.at(t)[node].index()][modal_role(&row.to_vec())] += 1;
            }
        }
    }
    let norm: Vec<Option<Vec<f64>>> = hist
        .iter()
        .map(|h| {
            let s: usize = h.iter().sum();
            (s > 0).then(|| h.iter().map(|&x| x as f64 / s as f64).collect())
        })
        .collect();
    let mut distinct = true;
    for a in 0..4 {
        for b in a + 1..4 {
            if let (Some(x), Some(y)) = (&norm[a], &norm[b]) {
                if x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() < 1e-12 {
                    distinct = false;
                }
            }
        }
    }
    Ok(PatternReport {
        reference_t: t0,
        roles: memberships.roles,
        feature_diagonal_ok: fc.diagonal_is_row_minimum(),
        membership_diagonal_ok: gc.diagonal_is_row_minimum(),
        features: fc,
        memberships: gc,
        modal_histograms: hist,
        histograms_distinct: distinct,
    })
}

/// Membership traces per node and timestep, with the planted pattern.
pub fn write_trace_csv<W: Write>(
    memberships: &MembershipSeries,
    labels: &PatternLabels,
    node_labels: &[String],
    mut out: W,
) -> std::io::Result<()> {
    let r = memberships.roles;
    let roles: Vec<String> = (0..r).map(|j| format!("role_{j}")).collect();
    writeln!(out, "node,t,pattern,{},inactive", roles.join(","))?;
    for (t, m) in memberships.matrices.iter().enumerate() {
        for (node, row) in m.values.axis_iter(Axis(0)).enumerate() {
            let vals: Vec<String> = row.iter().map(|&v| crate::fmt_num(v)).collect();
            writeln!(out, "{},{t},{},{}", node_labels[node], labels.at(t)[node].name(), vals.join(","))?;
        }
    }
    Ok(())
}
