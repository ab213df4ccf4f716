//! Node-level transition anomalies.
//!
//! Every node gets its own transition model fitted on its membership
//! history. Applying that model to the whole network and measuring how badly
//! it forecasts the next snapshot tells how far the node's dynamics diverge
//! from everyone else's.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::roles::MembershipSeries;
use crate::transitions::{
    fit_transition, fit_transition_exact, stacked_transition, TransitionGram, TransitionMatrix, TransitionOptions, TransitionScope,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScope {
    /// Forecast error of the node's model over the full network.
    Network,
    /// Forecast error on the node's own row only.
    OwnRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyOptions {
    /// Number of membership pairs each node model is fitted on; `None`
    /// uses the whole history.
    pub window: Option<usize>,
    pub scope: ScoreScope,
    /// Weight `λ` of the penalty `½λ‖T⁽ⁱ⁾ − T_global‖²` on node models;
    /// 0 fits each node on its own rows only.
    pub prior_strength: f64,
    pub transition: TransitionOptions,
}

impl Default for AnomalyOptions {
    fn default() -> Self {
        AnomalyOptions {
            window: None,
            scope: ScoreScope::Network,
            prior_strength: 0.1,
            transition: TransitionOptions::default(),
        }
    }
}

/// Default window for the sliding score curves.
pub const DEFAULT_TIMESERIES_WINDOW: usize = 5;

/// Scores at one evaluation time; `None` marks nodes without a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyScores {
    pub t_evaluated: usize,
    pub scores: Vec<Option<f64>>,
}

impl AnomalyScores {
    /// Defined scores as `(node, score)`, highest first; ties by node id.
    pub fn ranking(&self) -> Vec<(usize, f64)> {
        let mut r: Vec<(usize, f64)> = self.scores.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        r
    }

    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut r = self.ranking();
        r.truncate(k);
        r
    }

    pub fn mean_defined(&self) -> Option<f64> {
        let defined: Vec<f64> = self.scores.iter().flatten().copied().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Pulls a node model toward a reference transition matrix.
#[derive(Debug, Clone, Copy)]
pub struct NodePrior<'a> {
    pub values: ArrayView2<'a, f64>,
    pub strength: f64,
}

/// Fits node `node`'s transition model on the pairs `(τ, τ+1)` for
/// `τ ∈ [from, to)`. Pairs where the node is inactive at both ends carry no
/// evidence and are skipped.
///
/// A node's few rows rarely determine every entry of `T`; states it barely
/// visits are otherwise free to take arbitrarily large values. An optional
/// prior regularizes those entries.
pub fn node_transition_model(
    series: &MembershipSeries,
    node: usize,
    from: usize,
    to: usize,
    prior: Option<NodePrior<'_>>,
    opts: &TransitionOptions,
) -> Result<TransitionMatrix> {
    if node >= series.num_nodes() {
        return Err(Error::arg(format!("node {node} outside a universe of {}", series.num_nodes())));
    }
    if to >= series.len() || from >= to {
        return Err(Error::InsufficientHistory { node });
    }
    let mut gram = TransitionGram::zeros(series.width());
    let mut pairs = 0;
    for tau in from..to {
        let (a, b) = (&series.matrices[tau], &series.matrices[tau + 1]);
        if !a.is_active(node) && !b.is_active(node) {
            continue;
        }
        gram.add_rows(&a.values.row(node).to_vec(), &b.values.row(node).to_vec());
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::InsufficientHistory { node });
    }
    let values = match prior.filter(|p| p.strength > 0.0) {
        Some(p) => fit_transition_exact(&gram.with_prior(p.values, p.strength), opts),
        None => fit_transition(&gram, opts),
    };
    Ok(TransitionMatrix {
        values,
        scope: TransitionScope::Node(node),
        window: (from, to),
        row_normalized: opts.row_normalize,
    })
}

/// `‖G_next − G_cur · T‖_F` for many `T` from one pair of Gram statistics.
struct NetworkResidual {
    gram: TransitionGram,
}

impl NetworkResidual {
    fn new(cur: ArrayView2<'_, f64>, next: ArrayView2<'_, f64>) -> Self {
        NetworkResidual { gram: TransitionGram::from_pair(cur, next) }
    }

    fn eval(&self, t: &Array2<f64>) -> f64 {
        (2.0 * self.gram.objective(t.view())).sqrt()
    }
}

/// Stacked model of all nodes over pairs `τ ∈ [from, t)`, rescaled to be
/// row-stochastic. A state with almost no mass in the window leaves its row
/// nearly undetermined and free to grow without bound; rescaling caps it
/// and is a no-op whenever the stacked fit is already stochastic.
fn network_prior(series: &MembershipSeries, t: usize, window: usize, opts: &AnomalyOptions) -> Result<Array2<f64>> {
    let transition = TransitionOptions { row_normalize: true, ..opts.transition };
    Ok(stacked_transition(series, t, window, &transition)?.values)
}

/// Scores every node at `t`: node models are fitted on pairs ending at
/// `(t−1, t)` and forecast `G_{t+1}` from `G_t`. The prior, if enabled, is
/// the stacked model of all nodes over the same pairs.
pub fn anomaly_scores(series: &MembershipSeries, t: usize, opts: &AnomalyOptions) -> Result<AnomalyScores> {
    if t == 0 || t + 1 >= series.len() {
        return Err(Error::arg(format!("anomaly scores need 1 <= t <= {}, got {t}", series.len().saturating_sub(2))));
    }
    if opts.window == Some(0) {
        return Err(Error::arg("anomaly window must be positive"));
    }
    let from = opts.window.map_or(0, |w| t.saturating_sub(w));
    let cur = series.at(t);
    let next = series.at(t + 1);
    let network = NetworkResidual::new(cur, next);
    let global = (opts.prior_strength > 0.0).then(|| network_prior(series, t, t - from, opts)).transpose()?;
    let prior = global.as_ref().map(|g| NodePrior { values: g.view(), strength: opts.prior_strength });
    let scores = par::map_range(series.num_nodes(), |i| {
        let model = node_transition_model(series, i, from, t, prior, &opts.transition).ok()?;
        Some(match opts.scope {
            ScoreScope::Network => network.eval(&model.values),
            ScoreScope::OwnRow => {
                let pred = cur.row(i).dot(&model.values);
                pred.iter().zip(next.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
        })
    });
    Ok(AnomalyScores { t_evaluated: t, scores })
}

/// Per-node score curves from a sliding window of node models.
///
/// A curve point is labeled with the snapshot it scores: the step
/// evaluated at `t` forecasts `G_{t+1}`, so it describes time `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyTimeSeries {
    pub window: usize,
    pub steps: Vec<AnomalyScores>,
}

impl AnomalyTimeSeries {
    /// The scored snapshot of every step.
    pub fn times(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.t_evaluated + 1).collect()
    }

    pub fn node_curve(&self, node: usize) -> Vec<Option<f64>> {
        self.steps.iter().map(|s| s.scores[node]).collect()
    }

    /// Mean of the defined scores at each time.
    pub fn network_mean(&self) -> Vec<Option<f64>> {
        self.steps.iter().map(AnomalyScores::mean_defined).collect()
    }

    pub fn write_csv<W: Write>(&self, labels: &[String], mut out: W) -> std::io::Result<()> {
        writeln!(out, "node,t,score,defined")?;
        let n = self.steps.first().map_or(0, |s| s.scores.len());
        for (node, label) in labels.iter().enumerate().take(n) {
            for step in &self.steps {
                match step.scores[node] {
                    Some(s) => writeln!(out, "{label},{},{},true", step.t_evaluated + 1, crate::fmt_num(s))?,
                    None => writeln!(out, "{label},{},,false", step.t_evaluated + 1)?,
                }
            }
        }
        Ok(())
    }
}

pub fn anomaly_timeseries(series: &MembershipSeries, window: usize, opts: &AnomalyOptions) -> Result<AnomalyTimeSeries> {
    if window < 2 {
        return Err(Error::arg(format!("anomaly window must be at least 2, got {window}")));
    }
    let opts = AnomalyOptions { window: Some(window), ..*opts };
    let steps = if series.len() < 3 {
        Vec::new()
    } else {
        (1..series.len() - 1).map(|t| anomaly_scores(series, t, &opts)).collect::<Result<_>>()?
    };
    Ok(AnomalyTimeSeries { window, steps })
}

/// The detection rule used for accuracy figures: every injected node ranks
/// within the top `2·a` defined scores.
pub fn detected(scores: &AnomalyScores, injected: &[usize]) -> bool {
    let top: Vec<usize> = scores.top_k(2 * injected.len()).into_iter().map(|(i, _)| i).collect();
    injected.iter().all(|i| top.contains(i))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopEntry {
    pub rank: usize,
    pub node: usize,
    pub label: String,
    pub score: f64,
}

pub fn top_k_report(scores: &AnomalyScores, k: usize, labels: &[String]) -> Vec<TopEntry> {
    scores
        .top_k(k)
        .into_iter()
        .enumerate()
        .map(|(rank, (node, score))| TopEntry {
            rank: rank + 1,
            node,
            label: labels.get(node).cloned().unwrap_or_else(|| node.to_string()),
            score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot(states: &[usize], k: usize) -> Array2<f64> {
        let mut m = Array2::zeros((states.len(), k));
        for (i, &s) in states.iter().enumerate() {
            m[[i, s]] = 1.0;
        }
        m
    }

    fn series(states: &[Vec<usize>], k: usize) -> MembershipSeries {
        MembershipSeries::from_matrices(states.iter().map(|s| one_hot(s, k)).collect()).unwrap()
    }

    #[test]
    fn stationary_node_model_is_identity_on_its_state() {
        let s = series(&vec![vec![0, 1]; 4], 3);
        let m = node_transition_model(&s, 0, 0, 3, None, &TransitionOptions::default()).unwrap();
        assert!((m.values[[0, 0]] - 1.0).abs() < 1e-6);
        assert_eq!(m.scope, TransitionScope::Node(0));
    }

    #[test]
    fn alternating_node_swaps_mass() {
        let s = series(&[vec![0], vec![1], vec![0], vec![1], vec![0]], 3);
        let m = node_transition_model(&s, 0, 0, 4, None, &TransitionOptions::default()).unwrap();
        assert!(m.values[[0, 1]] > 0.999 && m.values[[1, 0]] > 0.999);
        assert!(m.values[[0, 0]] < 1e-3 && m.values[[1, 1]] < 1e-3);
    }

    #[test]
    fn node_model_matches_projected_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mats: Vec<Array2<f64>> = (0..8)
            .map(|_| {
                let mut m = Array2::from_shape_fn((1, 3), |_| rng.gen::<f64>());
                crate::linalg::normalize_rows(&mut m);
                m
            })
            .collect();
        let s = MembershipSeries::from_matrices(mats.clone()).unwrap();
        let model = node_transition_model(&s, 0, 0, 7, None, &TransitionOptions::default()).unwrap();
        let p = ndarray::concatenate(Axis(0), &mats[..7].iter().map(|m| m.view()).collect::<Vec<_>>()).unwrap();
        let n = ndarray::concatenate(Axis(0), &mats[1..].iter().map(|m| m.view()).collect::<Vec<_>>()).unwrap();
        let a = p.t().dot(&p);
        let b = p.t().dot(&n);
        let step = 1.0 / a.diag().sum();
        let mut t = Array2::<f64>::zeros((3, 3));
        for _ in 0..200_000 {
            t = (&t - &((a.dot(&t) - &b) * step)).mapv(|x| x.max(0.0));
        }
        let obj = |t: &Array2<f64>| 0.5 * (&n - &p.dot(t)).mapv(|x| x * x).sum();
        let oracle = obj(&t);
        assert!((obj(&model.values) - oracle).abs() <= 1e-4 * oracle.max(1e-12), "{} vs {oracle}", obj(&model.values));
    }

    #[test]
    fn short_or_inactive_history_is_undefined() {
        let s = series(&[vec![0, 2], vec![1, 2], vec![0, 2]], 3);
        assert!(matches!(
            node_transition_model(&s, 1, 0, 2, None, &TransitionOptions::default()),
            Err(Error::InsufficientHistory { node: 1 })
        ));
        let sc = anomaly_scores(&s, 1, &AnomalyOptions::default()).unwrap();
        assert!(sc.scores[0].is_some());
        assert_eq!(sc.scores[1], None);
        assert_eq!(sc.ranking().len(), 1);
    }

    #[test]
    fn prior_keeps_barely_visited_states_bounded() {
        // Rows taken from a fitted series: state 1 carries ~1e-17 mass.
        let rows = [
            [1.016489e-1, 1.125310e-17, 4.455882e-1, 4.527629e-1, 0.0],
            [9.270835e-2, 9.426000e-22, 6.944171e-1, 2.128745e-1, 0.0],
            [1.114301e-1, 4.047121e-15, 4.468822e-1, 4.416877e-1, 0.0],
        ];
        let mats: Vec<Array2<f64>> = rows.iter().map(|r| Array2::from_shape_vec((1, 5), r.to_vec()).unwrap()).collect();
        let s = MembershipSeries::from_matrices(mats).unwrap();
        let opts = TransitionOptions::default();
        let free = node_transition_model(&s, 0, 0, 2, None, &opts).unwrap();
        let eye = Array2::<f64>::eye(5);
        let prior = NodePrior { values: eye.view(), strength: 0.1 };
        let held = node_transition_model(&s, 0, 0, 2, Some(prior), &opts).unwrap();
        assert!(free.values.iter().any(|&x| x > 10.0), "unregularized fit was expected to drift");
        assert!(held.values.iter().all(|&x| x <= 2.0), "{:?}", held.values);
        assert!((held.values[[1, 1]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identical_dynamics_give_equal_scores() {
        let states: Vec<Vec<usize>> = (0..6).map(|t| (0..5).map(|i| (i + t) % 3).collect()).collect();
        let s = series(&states, 4);
        let sc = anomaly_scores(&s, 4, &AnomalyOptions::default()).unwrap();
        let v: Vec<f64> = sc.scores.iter().map(|x| x.unwrap()).collect();
        assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-6), "{v:?}");
    }

    #[test]
    fn exact_global_dynamics_give_global_residual() {
        // Every node follows the cyclic permutation 0 → 1 → 2 → 0.
        let states: Vec<Vec<usize>> = (0..7).map(|t| (0..6).map(|i| (i + t) % 3).collect()).collect();
        let s = series(&states, 4);
        let sc = anomaly_scores(&s, 5, &AnomalyOptions::default()).unwrap();
        let global = crate::transitions::stacked_transition(&s, 5, 10, &TransitionOptions::default()).unwrap();
        let direct = (&s.at(6) - &s.at(5).dot(&global.values)).mapv(|x| x * x).sum().sqrt();
        for x in sc.scores {
            assert!((x.unwrap() - direct).abs() < 1e-6);
        }
    }

    #[test]
    fn barely_visited_state_cannot_blow_up_scores() {
        // Role 0 carries almost no mass before t, then a little at t.
        let eps = 1e-7;
        let mk = |a: f64| {
            let mut g = Array2::zeros((20, 3));
            for i in 0..20 {
                g[[i, 1]] = 1.0 - a;
                g[[i, 0]] = if i % 2 == 0 { a } else { 0.0 };
            }
            g
        };
        let s = MembershipSeries::from_matrices(vec![mk(eps), mk(0.0), mk(0.3), mk(0.0)]).unwrap();
        let sc = anomaly_scores(&s, 2, &AnomalyOptions::default()).unwrap();
        assert!(sc.scores.iter().all(|x| x.unwrap() < 10.0), "{:?}", sc.scores);
    }

    #[test]
    fn gram_residual_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cur = Array2::from_shape_fn((9, 4), |_| rng.gen::<f64>());
        let next = Array2::from_shape_fn((9, 4), |_| rng.gen::<f64>());
        let t = Array2::from_shape_fn((4, 4), |_| rng.gen::<f64>());
        let direct = (&next - &cur.dot(&t)).mapv(|x| x * x).sum().sqrt();
        assert!((NetworkResidual::new(cur.view(), next.view()).eval(&t) - direct).abs() < 1e-9);
    }

    #[test]
    fn inverted_node_scores_highest() {
        // Nine nodes hold their role; node 4 flips between roles 0 and 1.
        let mut states = Vec::new();
        for t in 0..6 {
            let mut row: Vec<usize> = (0..10).map(|i| i % 3).collect();
            row[4] = t % 2;
            states.push(row);
        }
        let s = series(&states, 4);
        let sc = anomaly_scores(&s, 4, &AnomalyOptions::default()).unwrap();
        assert_eq!(sc.ranking()[0].0, 4);
        assert!(detected(&sc, &[4]));
        let own_opts = AnomalyOptions { scope: ScoreScope::OwnRow, prior_strength: 0.0, ..Default::default() };
        let own = anomaly_scores(&s, 4, &own_opts).unwrap();
        assert!(own.scores[4].unwrap() < 1e-3);
    }

    #[test]
    fn scores_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mats: Vec<Array2<f64>> = (0..5)
            .map(|_| {
                let mut m = Array2::from_shape_fn((7, 3), |_| rng.gen::<f64>());
                crate::linalg::normalize_rows(&mut m);
                m
            })
            .collect();
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let permuted: Vec<Array2<f64>> = mats.iter().map(|m| m.select(Axis(0), &perm)).collect();
        let a = anomaly_scores(&MembershipSeries::from_matrices(mats).unwrap(), 3, &AnomalyOptions::default()).unwrap();
        let b = anomaly_scores(&MembershipSeries::from_matrices(permuted).unwrap(), 3, &AnomalyOptions::default()).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert!((a.scores[old].unwrap() - b.scores[new].unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn appended_inactive_nodes_leave_ranking_unchanged() {
        let states: Vec<Vec<usize>> = (0..5).map(|t| vec![0, 1, t % 2, 2]).collect();
        let with_idle: Vec<Vec<usize>> = states.iter().map(|r| [r.clone(), vec![3, 3]].concat()).collect();
        let a = anomaly_scores(&series(&states, 4), 3, &AnomalyOptions::default()).unwrap();
        let b = anomaly_scores(&series(&with_idle, 4), 3, &AnomalyOptions::default()).unwrap();
        let ids = |s: &AnomalyScores| s.ranking().into_iter().map(|x| x.0).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn stationary_curve_is_flat_zero_and_csv_marks_undefined() {
        let s = series(&vec![vec![0, 1, 3]; 6], 4);
        let ts = anomaly_timeseries(&s, 3, &AnomalyOptions::default()).unwrap();
        assert_eq!(ts.times(), vec![2, 3, 4, 5]);
        assert!(ts.node_curve(0).iter().all(|x| x.unwrap() < 1e-6));
        assert!(ts.node_curve(2).iter().all(Option::is_none));
        let mut buf = Vec::new();
        let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        ts.write_csv(&labels, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("c,2,,false"));
        assert!(anomaly_timeseries(&s, 1, &AnomalyOptions::default()).is_err());
    }

    #[test]
    fn single_abnormal_transition_spikes_nearby() {
        let mut states: Vec<Vec<usize>> = (0..16).map(|_| (0..9).map(|i| i % 3).collect()).collect();
        states[7][0] = 2;
        let s = series(&states, 4);
        let ts = anomaly_timeseries(&s, 3, &AnomalyOptions::default()).unwrap();
        let curve: Vec<f64> = ts.node_curve(0).into_iter().map(Option::unwrap).collect();
        let peak = curve.iter().copied().fold(0.0, f64::max);
        let t_peak = ts.times()[curve.iter().position(|&x| x == peak).unwrap()];
        // The abnormal pairs stay inside the 3-pair window until the step
        // that scores t = 11.
        assert!((7..=11).contains(&t_peak), "{curve:?}");
        assert!(peak > 1.0);
        assert!(curve[0] < 1e-6 && *curve.last().unwrap() < 1e-6, "{curve:?}");
    }

    #[test]
    fn one_perturbed_snapshot_lifts_the_two_steps_touching_it() {
        // Every node steps into state 2 at t = 6 only.
        let mut states: Vec<Vec<usize>> = (0..10).map(|_| (0..8).map(|i| i % 2).collect()).collect();
        states[6] = vec![2; 8];
        let ts = anomaly_timeseries(&series(&states, 4), 5, &AnomalyOptions::default()).unwrap();
        let mean: Vec<f64> = ts.network_mean().into_iter().map(Option::unwrap).collect();
        let times = ts.times();
        // Time 6 is forecast from a clean model; time 7 is forecast from G_6.
        let touching = |t: usize| t == 6 || t == 7;
        let low = (0..mean.len()).filter(|&i| !touching(times[i])).map(|i| mean[i]).fold(0.0, f64::max);
        for i in (0..mean.len()).filter(|&i| touching(times[i])) {
            assert!(mean[i] > low + 1.0, "{times:?} {mean:?}");
        }
    }

    #[test]
    fn top_k_report_uses_labels() {
        let sc = AnomalyScores { t_evaluated: 1, scores: vec![Some(0.1), None, Some(0.5)] };
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let r = top_k_report(&sc, 5, &labels);
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].label.as_str(), r[0].rank), ("c", 1));
        assert_eq!(sc.mean_defined(), Some(0.3));
    }
}
