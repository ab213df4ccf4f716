//! Writes run artifacts under the output directory, each tagged with the
//! config hash.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rolecast::analysis::write_profiles_csv;
use rolecast::anomaly::top_k_report;
use rolecast::pipeline::{BenchRow, PipelineRun, RunConfig};
use rolecast::prediction::write_evaluation_csv;
use rolecast::synthetic::{pattern_report, write_trace_csv, PatternLabels};
use rolecast::temporal_graph::{write_edge_list, EdgeList};
use serde::Serialize;
use serde_json::{json, Value};

pub struct Outputs {
    root: PathBuf,
    hash: String,
}

impl Outputs {
    pub fn new(root: &Path, hash: String) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Outputs { root: root.to_path_buf(), hash })
    }

    fn path(&self, rel: &str) -> anyhow::Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }

    /// Writes a CSV whose first line is the provenance comment.
    pub fn csv<F>(&self, rel: &str, body: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let p = self.path(rel)?;
        let mut w = BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
        writeln!(w, "# config_hash={}", self.hash)?;
        body(&mut w).with_context(|| format!("writing {}", p.display()))?;
        w.flush()?;
        Ok(())
    }

    /// Writes JSON with a top-level `config_hash` field. Non-object values
    /// are nested under `data`.
    pub fn json<T: Serialize>(&self, rel: &str, value: &T) -> anyhow::Result<()> {
        let mut v = serde_json::to_value(value)?;
        match v {
            Value::Object(ref mut map) => {
                map.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            other => v = json!({ "config_hash": self.hash, "data": other }),
        }
        let p = self.path(rel)?;
        fs::write(&p, serde_json::to_string_pretty(&v)? + "\n").with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }

    pub fn text(&self, rel: &str, body: &str) -> anyhow::Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }
}

pub fn write_generated(out: &Outputs, edges: &EdgeList, labels: Option<&PatternLabels>) -> anyhow::Result<()> {
    out.csv("edges.csv", |w| write_edge_list(edges, w))?;
    if let Some(l) = labels {
        out.csv("labels.csv", |w| l.write_csv(&edges.labels, w))?;
    }
    Ok(())
}

/// Everything the run computed, stage by stage.
pub fn write_run(out: &Outputs, cfg: &RunConfig, run: &PipelineRun) -> anyhow::Result<()> {
    let labels = &run.snapshots.labels;
    out.json("ingest.json", &run.snapshots.summary())?;

    if let Some(f) = &run.features {
        out.csv("features/features.csv", |w| f.write_csv(&run.snapshots, w))?;
        out.json(
            "features/definitions.json",
            &json!({ "definitions": f.definitions, "generation_cap_hit": f.generation_cap_hit }),
        )?;
    }
    if let Some(r) = &run.roles {
        let names: Vec<String> = run.features.as_ref().map_or_else(Vec::new, |f| f.definitions.iter().map(|d| d.name.clone()).collect());
        out.csv("roles/basis.csv", |w| r.basis.write_csv(&names, w))?;
        out.csv("roles/memberships.csv", |w| r.memberships.write_csv(labels, w))?;
        out.json(
            "roles/mdl.json",
            &json!({
                "rank": r.memberships.roles,
                "selected_automatically": r.selection.is_some(),
                "curve": r.selection.as_ref().map(|s| &s.curve),
                "dropped_roles": r.dropped_roles,
                "uniform_rows": r.uniform_rows,
            }),
        )?;
        if let (Some(patterns), Some(f)) = (&run.patterns, &run.features) {
            out.csv("roles/traces.csv", |w| write_trace_csv(&r.memberships, patterns, labels, w))?;
            out.json("roles/pattern_check.json", &pattern_report(&run.snapshots, patterns, f, &r.memberships)?)?;
        }
    }
    if let Some(t) = &run.transitions {
        out.csv("transitions/stacked.csv", |w| t.stacked.write_csv(w))?;
        out.json("transitions/stacked_heatmap.json", &t.stacked.heatmap())?;
        out.csv("transitions/summary.csv", |w| t.summary.write_csv(w))?;
        out.json("transitions/summary_heatmap.json", &t.summary.heatmap())?;
    }
    if let Some(rows) = &run.evaluation {
        out.csv("predictions/evaluation.csv", |w| write_evaluation_csv(rows, w))?;
    }
    if let Some(a) = &run.anomalies {
        // `t` is the snapshot being scored, as in the time series.
        let scored = a.scores.t_evaluated + 1;
        out.csv("anomalies/scores.csv", |w| {
            writeln!(w, "node,t,score,defined")?;
            for (i, s) in a.scores.scores.iter().enumerate() {
                match s {
                    Some(s) => writeln!(w, "{},{scored},{},true", labels[i], rolecast::fmt_num(*s))?,
                    None => writeln!(w, "{},{scored},,false", labels[i])?,
                }
            }
            Ok(())
        })?;
        out.csv("anomalies/timeseries.csv", |w| a.timeseries.write_csv(labels, w))?;
        out.json(
            "anomalies/top_k.json",
            &json!({
                "t_evaluated": a.scores.t_evaluated,
                "t": scored,
                "top": top_k_report(&a.scores, cfg.anomaly.top_k, labels),
            }),
        )?;
    }
    if let Some(a) = &run.analysis {
        out.csv("analysis/explanation.csv", |w| a.explanation.write_csv(w))?;
        if let Some(c) = &a.clustering {
            out.csv("analysis/clusters.csv", |w| c.write_csv(labels, w))?;
            out.csv("analysis/profiles.csv", |w| write_profiles_csv(&a.profiles, w))?;
            out.json("analysis/clustering.json", &json!({ "k": c.centroids.nrows(), "inertia": c.inertia }))?;
        }
    }
    out.json("run.json", &json!({ "summary": run.summary(), "timings": run.timings }))?;
    Ok(())
}

pub fn write_bench(out: &Outputs, rows: &[BenchRow]) -> anyhow::Result<()> {
    out.csv("bench.csv", |w| {
        let stages: Vec<&str> = rows.first().map_or_else(Vec::new, |r| r.stages.iter().map(|s| s.stage.name()).collect());
        writeln!(w, "factor,nodes,edges,{},total_seconds,ratio_to_previous", stages.join(","))?;
        let mut prev: Option<f64> = None;
        for r in rows {
            let secs: Vec<String> = r.stages.iter().map(|s| format!("{:.6}", s.seconds)).collect();
            let ratio = prev.map_or(String::new(), |p| format!("{:.3}", r.total_seconds / p));
            writeln!(w, "{},{},{},{},{:.6},{ratio}", r.factor, r.nodes, r.edges, secs.join(","), r.total_seconds)?;
            prev = Some(r.total_seconds);
        }
        Ok(())
    })?;
    out.json("bench.json", &json!({ "rows": rows }))
}
