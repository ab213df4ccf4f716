//! End-to-end runs driven by one serializable configuration.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    cluster_profiles, cluster_transitions, explain_roles, measure_series, ClusterOptions, Measure, MeasureOptions,
    RoleExplanation, TransitionClustering,
};
use crate::anomaly::{anomaly_scores, anomaly_timeseries, node_transition_model, AnomalyOptions, AnomalyScores, AnomalyTimeSeries, NodePrior};
use crate::error::{Error, Result};
use crate::features::{discover_features, FeatureMatrixSeries, FeatureOptions};
use crate::par;
use crate::prediction::{evaluate_series, AucOptions, EvaluationRow, Predictor};
use crate::roles::{build_membership_series, RoleModel, RoleOptions};
use crate::synthetic::{generate_edges, GeneratorConfig, PatternLabels};
use crate::temporal_graph::{build_snapshots, parse_edge_list, EdgeList, ParseOptions, SnapshotOptions, SnapshotSeries};
use crate::transitions::{stacked_transition, summary_transition, KernelSpec, TransitionMatrix, TransitionOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Edge-list file; without one a graph is generated from `[generator]`.
    pub path: Option<PathBuf>,
    pub static_graph: bool,
    pub symmetrize: bool,
    pub interval_length: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig { path: None, static_graph: false, symmetrize: false, interval_length: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyConfig {
    /// Window of the sliding score curves.
    pub window: usize,
    pub top_k: usize,
    pub prior_strength: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            window: crate::anomaly::DEFAULT_TIMESERIES_WINDOW,
            top_k: 10,
            prior_strength: AnomalyOptions::default().prior_strength,
        }
    }
}

impl AnomalyConfig {
    pub fn options(&self) -> AnomalyOptions {
        AnomalyOptions { prior_strength: self.prior_strength, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub measures: MeasureOptions,
    pub clustering: ClusterOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub input: InputConfig,
    pub generator: GeneratorConfig,
    pub features: FeatureOptions,
    pub roles: RoleOptions,
    pub transitions: KernelSpec,
    pub prediction: AucOptions,
    pub anomaly: AnomalyConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("rolecast-out"),
            input: InputConfig::default(),
            generator: GeneratorConfig::default(),
            features: FeatureOptions::default(),
            roles: RoleOptions::default(),
            transitions: KernelSpec::default(),
            prediction: AucOptions::default(),
            anomaly: AnomalyConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Features,
    Roles,
    Transitions,
    Predictions,
    Anomalies,
    Analysis,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Roles => "roles",
            Stage::Transitions => "transitions",
            Stage::Predictions => "predictions",
            Stage::Anomalies => "anomalies",
            Stage::Analysis => "analysis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TransitionModels {
    /// Fitted on every consecutive pair.
    pub stacked: TransitionMatrix,
    /// Kernel summary model at the last snapshot, used for forecasting.
    pub summary: TransitionMatrix,
}

#[derive(Debug, Clone)]
pub struct AnomalyOutputs {
    /// Full-history scores at the last scorable time.
    pub scores: AnomalyScores,
    pub timeseries: AnomalyTimeSeries,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutputs {
    pub measures: Vec<Measure>,
    pub explanation: RoleExplanation,
    pub clustering: Option<TransitionClustering>,
    pub profiles: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub snapshots: SnapshotSeries,
    pub patterns: Option<PatternLabels>,
    pub features: Option<FeatureMatrixSeries>,
    pub roles: Option<RoleModel>,
    pub transitions: Option<TransitionModels>,
    pub evaluation: Option<Vec<EvaluationRow>>,
    pub anomalies: Option<AnomalyOutputs>,
    pub analysis: Option<AnalysisOutputs>,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub nodes: usize,
    pub edges: usize,
    pub snapshots: usize,
    pub features: Option<usize>,
    pub roles: Option<usize>,
    pub seconds: f64,
}

impl PipelineRun {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            nodes: self.snapshots.num_nodes(),
            edges: self.snapshots.input_edges,
            snapshots: self.snapshots.len(),
            features: self.features.as_ref().map(FeatureMatrixSeries::num_features),
            roles: self.roles.as_ref().map(|r| r.memberships.roles),
            seconds: self.timings.iter().map(|t| t.seconds).sum(),
        }
    }
}

/// Reads or generates the edge list named by the config.
pub fn load_edges(cfg: &RunConfig) -> Result<(EdgeList, Option<PatternLabels>)> {
    match &cfg.input.path {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::Input { path: path.clone(), source: e })?;
            let edges = parse_edge_list(BufReader::new(file), &ParseOptions { static_graph: cfg.input.static_graph })?;
            Ok((edges, None))
        }
        None => {
            let g = generate_edges(&cfg.generator)?;
            Ok((g.edges, Some(g.labels)))
        }
    }
}

/// Runs every stage up to and including `last`. Synthetic input is
/// windowed with unit intervals and symmetrized, matching its generator.
pub fn run_until(cfg: &RunConfig, last: Stage) -> Result<PipelineRun> {
    let (edges, patterns) = load_edges(cfg).map_err(|e| e.in_stage(Stage::Ingest.name()))?;
    run_on_edges(cfg, &edges, patterns, last)
}

pub fn run_on_edges(cfg: &RunConfig, edges: &EdgeList, patterns: Option<PatternLabels>, last: Stage) -> Result<PipelineRun> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: Stage, timings: &mut Vec<StageTiming>| {
        timings.push(StageTiming { stage, seconds: clock.elapsed().as_secs_f64() });
        clock = Instant::now();
    };

    let (interval, snap_opts) = if cfg.input.path.is_none() {
        (1.0, SnapshotOptions { symmetrize: true })
    } else {
        (cfg.input.interval_length, SnapshotOptions { symmetrize: cfg.input.symmetrize })
    };
    let snapshots = build_snapshots(edges, interval, &snap_opts).map_err(|e| e.in_stage(Stage::Ingest.name()))?;
    lap(Stage::Ingest, &mut timings);
    let mut run = PipelineRun {
        snapshots,
        patterns,
        features: None,
        roles: None,
        transitions: None,
        evaluation: None,
        anomalies: None,
        analysis: None,
        timings: Vec::new(),
    };
    let stage_err = |s: Stage| move |e: Error| e.in_stage(s.name());

    if last >= Stage::Features {
        run.features = Some(discover_features(&run.snapshots, &cfg.features).map_err(stage_err(Stage::Features))?);
        lap(Stage::Features, &mut timings);
    }
    if last >= Stage::Roles {
        let features = run.features.as_ref().expect("features ran");
        run.roles = Some(build_membership_series(features, &run.snapshots, &cfg.roles).map_err(stage_err(Stage::Roles))?);
        lap(Stage::Roles, &mut timings);
    }
    let len = run.snapshots.len();
    if last >= Stage::Transitions {
        let series = &run.roles.as_ref().expect("roles ran").memberships;
        if len < 2 {
            log::warn!("a single snapshot has no transitions; skipping the transition stage");
        } else {
            let fit = || -> Result<TransitionModels> {
                let opts = TransitionOptions::default();
                Ok(TransitionModels {
                    stacked: stacked_transition(series, len - 1, len - 1, &opts)?,
                    summary: summary_transition(series, len - 1, &cfg.transitions, &opts)?,
                })
            };
            run.transitions = Some(fit().map_err(stage_err(Stage::Transitions))?);
        }
        lap(Stage::Transitions, &mut timings);
    }
    if last >= Stage::Predictions {
        let series = &run.roles.as_ref().expect("roles ran").memberships;
        run.evaluation = Some(
            evaluate_series(series, &cfg.transitions, &Predictor::ALL, &cfg.prediction)
                .map_err(stage_err(Stage::Predictions))?,
        );
        lap(Stage::Predictions, &mut timings);
    }
    if last >= Stage::Anomalies {
        let series = &run.roles.as_ref().expect("roles ran").memberships;
        if len < 3 {
            log::warn!("anomaly scores need at least three snapshots; skipping");
        } else {
            let opts = cfg.anomaly.options();
            let scores = anomaly_scores(series, len - 2, &opts).map_err(stage_err(Stage::Anomalies))?;
            let timeseries =
                anomaly_timeseries(series, cfg.anomaly.window, &opts).map_err(stage_err(Stage::Anomalies))?;
            run.anomalies = Some(AnomalyOutputs { scores, timeseries });
        }
        lap(Stage::Anomalies, &mut timings);
    }
    if last >= Stage::Analysis {
        run.analysis = Some(analyze(cfg, &run).map_err(stage_err(Stage::Analysis))?);
        lap(Stage::Analysis, &mut timings);
    }
    run.timings = timings;
    Ok(run)
}

fn analyze(cfg: &RunConfig, run: &PipelineRun) -> Result<AnalysisOutputs> {
    let roles = run.roles.as_ref().expect("roles ran");
    let series = &roles.memberships;
    let mut measure_opts = cfg.analysis.measures.clone();
    let largest = run.snapshots.snapshots.iter().map(|s| s.num_active()).max().unwrap_or(0);
    if largest > measure_opts.betweenness_cap && measure_opts.measures.contains(&Measure::Betweenness) {
        log::warn!(
            "a snapshot has {largest} active nodes, above the betweenness cap of {}; betweenness is left out",
            measure_opts.betweenness_cap
        );
        measure_opts.measures.retain(|&m| m != Measure::Betweenness);
    }
    let measures = measure_series(&run.snapshots, &measure_opts)?;
    let explanation = explain_roles(series, &run.snapshots, &measures)?;

    let mut clustering = None;
    let mut profiles = Vec::new();
    if let Some(tm) = &run.transitions {
        let len = series.len();
        let shared = tm.stacked.row_normalized();
        let prior = NodePrior { values: shared.values.view(), strength: cfg.anomaly.prior_strength };
        let fitted = par::map_range(series.num_nodes(), |i| {
            node_transition_model(series, i, 0, len - 1, Some(prior), &TransitionOptions::default()).ok().map(|m| (i, m))
        });
        let models: Vec<(usize, TransitionMatrix)> = fitted.into_iter().flatten().collect();
        if models.len() >= cfg.analysis.clustering.k {
            let c = cluster_transitions(&models, &cfg.analysis.clustering)?;
            profiles = cluster_profiles(&c, series);
            clustering = Some(c);
        } else {
            log::warn!(
                "only {} node models for {} clusters; skipping transition clustering",
                models.len(),
                cfg.analysis.clustering.k
            );
        }
    }
    Ok(AnalysisOutputs { measures: measure_opts.measures, explanation, clustering, profiles })
}

/// One scale of the timing benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub factor: usize,
    pub nodes: usize,
    pub edges: usize,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
}

/// Stages timed by the benchmark: every model stage, without the
/// post-hoc analysis (betweenness alone is superlinear).
pub const BENCH_LAST_STAGE: Stage = Stage::Anomalies;

/// The generator config with every structure count multiplied by `factor`.
pub fn scaled_generator(base: &GeneratorConfig, factor: usize) -> GeneratorConfig {
    GeneratorConfig {
        n_stars: base.n_stars * factor,
        n_cliques: base.n_cliques * factor,
        n_bridges: base.n_bridges * factor,
        ..*base
    }
}

/// Times the pipeline on synthetic graphs scaled by each factor.
/// Generation itself is not timed.
pub fn run_bench(cfg: &RunConfig, factors: &[usize]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(factors.len());
    for &factor in factors {
        if factor == 0 {
            return Err(Error::arg("bench scale factors must be positive"));
        }
        let generator = scaled_generator(&cfg.generator, factor);
        let scaled = RunConfig { generator, input: InputConfig::default(), ..cfg.clone() };
        let g = generate_edges(&generator)?;
        let run = run_on_edges(&scaled, &g.edges, None, BENCH_LAST_STAGE)?;
        let total_seconds = run.timings.iter().map(|t| t.seconds).sum();
        rows.push(BenchRow {
            factor,
            nodes: g.edges.num_nodes(),
            edges: g.edges.edges.len(),
            stages: run.timings,
            total_seconds,
        });
    }
    Ok(rows)
}
