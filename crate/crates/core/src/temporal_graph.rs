//! Edge-list ingestion and interval windowing into snapshots.
//!
//! Node labels are interned once into a global universe so that a node keeps
//! the same id in every snapshot. A snapshot only stores the nodes incident
//! to its own edges (its *active* nodes) and indexes them locally in
//! ascending global-id order.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalEdge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    pub timestamp: f64,
}

/// Parsed edges plus the label interning table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeList {
    /// `labels[id]` is the external label interned as `id`.
    pub labels: Vec<String>,
    pub edges: Vec<TemporalEdge>,
    pub dropped_self_loops: usize,
}

impl EdgeList {
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Builds an edge list from already-interned ids; labels are the ids.
    pub fn from_edges(num_nodes: usize, edges: Vec<TemporalEdge>) -> Result<Self> {
        let mut kept = Vec::with_capacity(edges.len());
        let mut dropped = 0;
        for e in edges {
            if e.source >= num_nodes || e.target >= num_nodes {
                return Err(Error::arg(format!(
                    "edge {}->{} outside a universe of {num_nodes} nodes",
                    e.source, e.target
                )));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(Error::arg(format!("edge weight {} is not a finite non-negative value", e.weight)));
            }
            if !(e.timestamp >= 0.0 && e.timestamp.is_finite()) {
                return Err(Error::arg(format!("timestamp {} is not a finite non-negative value", e.timestamp)));
            }
            if e.source == e.target {
                dropped += 1;
            } else {
                kept.push(e);
            }
        }
        Ok(EdgeList {
            labels: (0..num_nodes).map(|i| i.to_string()).collect(),
            edges: kept,
            dropped_self_loops: dropped,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct ParseOptions {
    /// Treat the input as one static graph: the timestamp column becomes
    /// optional and a three-column record reads as `source target weight`.
    pub static_graph: bool,
}

/// Reads a whitespace-, tab- or comma-separated edge list.
///
/// Records are `source target [weight] timestamp`. With a static graph the
/// timestamp may be omitted. Self-loops are counted and dropped here.
pub fn parse_edge_list<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<EdgeList> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut out = EdgeList::default();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split([',', '\t', ' '])
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .collect();

        let (weight, timestamp) = match (fields.len(), opts.static_graph) {
            (2, true) => (1.0, 0.0),
            (3, true) => (parse_num(fields[2], "weight", lineno)?, 0.0),
            (3, false) => (1.0, parse_num(fields[2], "timestamp", lineno)?),
            (4, _) => (
                parse_num(fields[2], "weight", lineno)?,
                parse_num(fields[3], "timestamp", lineno)?,
            ),
            (2, false) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "missing timestamp column (pass the static-graph option for untimed input)".into(),
                })
            }
            (n, _) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 2 to 4 fields, found {n}"),
                })
            }
        };
        if weight < 0.0 {
            return Err(Error::Parse { line: lineno, message: format!("negative weight {weight}") });
        }
        if timestamp < 0.0 {
            return Err(Error::Parse { line: lineno, message: format!("negative timestamp {timestamp}") });
        }

        let mut intern = |label: &str| -> usize {
            if let Some(&id) = ids.get(label) {
                return id;
            }
            let id = out.labels.len();
            out.labels.push(label.to_string());
            ids.insert(label.to_string(), id);
            id
        };
        let source = intern(fields[0]);
        let target = intern(fields[1]);
        if source == target {
            out.dropped_self_loops += 1;
            continue;
        }
        out.edges.push(TemporalEdge { source, target, weight, timestamp });
    }
    Ok(out)
}

/// Writes `source,target,weight,timestamp` records under a commented header,
/// readable by [`parse_edge_list`].
pub fn write_edge_list<W: std::io::Write>(edges: &EdgeList, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# source,target,weight,timestamp")?;
    for e in &edges.edges {
        writeln!(out, "{},{},{},{}", edges.labels[e.source], edges.labels[e.target], e.weight, e.timestamp)?;
    }
    Ok(())
}

fn parse_num(field: &str, what: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { line, message: format!("non-numeric {what} {field:?}") }),
    }
}

/// One merged directed edge between local node indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEdge {
    pub source: u32,
    pub target: u32,
    pub weight: f64,
}

/// The graph of one time interval.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub index: usize,
    active: Vec<usize>,
    edges: Vec<LocalEdge>,
    raw_edge_count: usize,
    out_adj: Vec<Vec<(u32, f64)>>,
    in_adj: Vec<Vec<(u32, f64)>>,
    neighbors: Vec<Vec<u32>>,
}

impl Snapshot {
    /// Builds a snapshot from global-id edges. Parallel edges are merged by
    /// summing weights and self-loops are discarded.
    pub fn from_edges(index: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut active: Vec<usize> = edges
            .iter()
            .filter(|(s, t, _)| s != t)
            .flat_map(|&(s, t, _)| [s, t])
            .collect();
        active.sort_unstable();
        active.dedup();

        let local = |g: usize| active.binary_search(&g).expect("endpoint is active") as u32;
        let mut merged: Vec<LocalEdge> = edges
            .iter()
            .filter(|(s, t, _)| s != t)
            .map(|&(s, t, w)| LocalEdge { source: local(s), target: local(t), weight: w })
            .collect();
        let raw_edge_count = merged.len();
        merged.sort_by_key(|e| (e.source, e.target));
        merged.dedup_by(|next, kept| {
            if next.source == kept.source && next.target == kept.target {
                kept.weight += next.weight;
                true
            } else {
                false
            }
        });

        let n = active.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for e in &merged {
            out_adj[e.source as usize].push((e.target, e.weight));
            in_adj[e.target as usize].push((e.source, e.weight));
        }
        let neighbors = (0..n)
            .map(|v| {
                let mut nb: Vec<u32> = out_adj[v].iter().chain(in_adj[v].iter()).map(|&(u, _)| u).collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();

        Snapshot { index, active, edges: merged, raw_edge_count, out_adj, in_adj, neighbors }
    }

    /// Active nodes as global ids, ascending. Local index `i` is `active()[i]`.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn num_active(&self) -> usize {
        self.active.len()
    }

    pub fn edges(&self) -> &[LocalEdge] {
        &self.edges
    }

    /// Edge records assigned to this interval before merging.
    pub fn raw_edge_count(&self) -> usize {
        self.raw_edge_count
    }

    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.active.binary_search(&global).ok()
    }

    pub fn out_edges(&self, v: usize) -> &[(u32, f64)] {
        &self.out_adj[v]
    }

    pub fn in_edges(&self, v: usize) -> &[(u32, f64)] {
        &self.in_adj[v]
    }

    /// Union of in- and out-neighbors, ascending.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[v]
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct SnapshotOptions {
    /// Add the reverse of every edge before merging (undirected input).
    pub symmetrize: bool,
}

/// A dynamic network windowed into consecutive equal-length intervals.
#[derive(Debug, Clone)]
pub struct SnapshotSeries {
    pub labels: Vec<String>,
    pub snapshots: Vec<Snapshot>,
    pub interval_length: f64,
    pub t_min: f64,
    pub max_timestamp: f64,
    pub input_edges: usize,
    pub dropped_self_loops: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IngestSummary {
    pub nodes: usize,
    pub edges: usize,
    pub snapshots: usize,
    pub dropped_self_loops: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl SnapshotSeries {
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn summary(&self) -> IngestSummary {
        IngestSummary {
            nodes: self.num_nodes(),
            edges: self.input_edges,
            snapshots: self.len(),
            dropped_self_loops: self.dropped_self_loops,
            t_min: self.t_min,
            t_max: self.max_timestamp,
        }
    }

    /// Start of the half-open interval covered by snapshot `t`.
    pub fn interval_start(&self, t: usize) -> f64 {
        self.t_min + t as f64 * self.interval_length
    }
}

/// Windows edges into snapshots `[t_min + tΔ, t_min + (t+1)Δ)`.
///
/// Intervals without edges are kept as empty snapshots.
pub fn build_snapshots(edges: &EdgeList, interval_length: f64, opts: &SnapshotOptions) -> Result<SnapshotSeries> {
    if !(interval_length > 0.0 && interval_length.is_finite()) {
        return Err(Error::arg(format!("interval length must be positive, got {interval_length}")));
    }
    if edges.edges.is_empty() {
        return Err(Error::arg("cannot window an empty edge list"));
    }
    let t_min = edges.edges.iter().map(|e| e.timestamp).fold(f64::INFINITY, f64::min);
    let t_last = edges.edges.iter().map(|e| e.timestamp).fold(f64::NEG_INFINITY, f64::max);
    let bucket = |ts: f64| ((ts - t_min) / interval_length).floor() as usize;
    let count = bucket(t_last) + 1;

    let mut per: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); count];
    for e in &edges.edges {
        let b = bucket(e.timestamp);
        per[b].push((e.source, e.target, e.weight));
        if opts.symmetrize {
            per[b].push((e.target, e.source, e.weight));
        }
    }
    let snapshots = per
        .into_iter()
        .enumerate()
        .map(|(t, es)| Snapshot::from_edges(t, &es))
        .collect();

    Ok(SnapshotSeries {
        labels: edges.labels.clone(),
        snapshots,
        interval_length,
        t_min,
        max_timestamp: t_last,
        input_edges: edges.edges.len(),
        dropped_self_loops: edges.dropped_self_loops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<EdgeList> {
        parse_edge_list(text.as_bytes(), &ParseOptions::default())
    }

    #[test]
    fn parses_space_separated_records() {
        let el = parse("a b 1.0 0\nb c 2.0 5").unwrap();
        assert_eq!(el.labels, vec!["a", "b", "c"]);
        assert_eq!(el.edges.len(), 2);
        assert_eq!(el.edges[1], TemporalEdge { source: 1, target: 2, weight: 2.0, timestamp: 5.0 });
    }

    #[test]
    fn parses_comma_separated_records() {
        let el = parse("a,b,3.5,10").unwrap();
        assert_eq!(el.edges, vec![TemporalEdge { source: 0, target: 1, weight: 3.5, timestamp: 10.0 }]);
    }

    #[test]
    fn written_edge_list_parses_back() {
        let el = parse("a b 2 1\nb c 1 3\n").unwrap();
        let mut buf = Vec::new();
        write_edge_list(&el, &mut buf).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), el);
    }

    #[test]
    fn rejects_non_numeric_weight_with_line_number() {
        match parse("a b x 0") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse("# header\n\na b 1 0\nc d -1 3") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_empty_list() {
        let el = parse("").unwrap();
        assert!(el.edges.is_empty());
        assert!(el.labels.is_empty());
    }

    #[test]
    fn timestamp_required_unless_static() {
        assert!(matches!(parse("a b"), Err(Error::Parse { line: 1, .. })));
        let el = parse_edge_list("a b\nb c 2.5".as_bytes(), &ParseOptions { static_graph: true }).unwrap();
        assert_eq!(el.edges[1].weight, 2.5);
        assert_eq!(el.edges[1].timestamp, 0.0);
        // Three columns on timed input means an unweighted, timestamped edge.
        let el = parse("a b 7").unwrap();
        assert_eq!((el.edges[0].weight, el.edges[0].timestamp), (1.0, 7.0));
    }

    #[test]
    fn self_loops_are_dropped_and_counted() {
        let el = parse("a a 1 0\na b 1 0\nb b 1 1").unwrap();
        assert_eq!(el.edges.len(), 1);
        assert_eq!(el.dropped_self_loops, 2);
    }

    #[test]
    fn windows_by_interval() {
        let el = parse("a b 1 0\nb c 1 5\nc a 1 10").unwrap();
        let s = build_snapshots(&el, 10.0, &SnapshotOptions::default()).unwrap();
        let counts: Vec<usize> = s.snapshots.iter().map(|sn| sn.edges().len()).collect();
        assert_eq!(counts, vec![2, 1]);
    }

    #[test]
    fn merges_parallel_edges() {
        let el = parse("a b 1 1\na b 1 1").unwrap();
        let s = build_snapshots(&el, 10.0, &SnapshotOptions::default()).unwrap();
        assert_eq!(s.snapshots[0].edges(), &[LocalEdge { source: 0, target: 1, weight: 2.0 }]);
        assert_eq!(s.snapshots[0].raw_edge_count(), 2);
    }

    #[test]
    fn keeps_empty_intervals() {
        let el = parse("a b 1 0\nb c 1 35").unwrap();
        let s = build_snapshots(&el, 10.0, &SnapshotOptions::default()).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.snapshots[1].num_active(), 0);
        assert_eq!(s.snapshots[2].edges().len(), 0);
        assert_eq!(s.snapshots[3].active(), &[1, 2]);
    }

    #[test]
    fn rejects_bad_interval_and_empty_edges() {
        let el = parse("a b 1 0").unwrap();
        assert!(build_snapshots(&el, 0.0, &SnapshotOptions::default()).is_err());
        assert!(build_snapshots(&el, -1.0, &SnapshotOptions::default()).is_err());
        assert!(build_snapshots(&EdgeList::default(), 1.0, &SnapshotOptions::default()).is_err());
    }

    #[test]
    fn symmetrize_adds_reverse_edges() {
        let el = parse("a b 2 0").unwrap();
        let s = build_snapshots(&el, 1.0, &SnapshotOptions { symmetrize: true }).unwrap();
        assert_eq!(s.snapshots[0].edges().len(), 2);
        assert_eq!(s.snapshots[0].in_edges(0), &[(1, 2.0)]);
    }

    #[test]
    fn summary_reports_ingestion_counts() {
        let el = parse("x y 1 3\ny y 1 4\ny z 1 9").unwrap();
        let s = build_snapshots(&el, 2.0, &SnapshotOptions::default()).unwrap();
        let sum = s.summary();
        assert_eq!(sum.nodes, 3);
        assert_eq!(sum.edges, 2);
        assert_eq!(sum.snapshots, 4);
        assert_eq!(sum.dropped_self_loops, 1);
        assert_eq!((sum.t_min, sum.t_max), (3.0, 9.0));
        let json = serde_json::to_value(&sum).unwrap();
        for key in ["nodes", "edges", "snapshots", "dropped_self_loops", "t_min", "t_max"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
