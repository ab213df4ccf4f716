//! Next-step membership forecasts, baselines and their evaluation.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::roles::MembershipSeries;
use crate::transitions::{summary_transition, KernelSpec, TransitionOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    /// `G_t · T` with `T` the kernel-summary transition model.
    Summary,
    PrevRole,
    AvgRole,
}

impl Predictor {
    pub const ALL: [Predictor; 3] = [Predictor::Summary, Predictor::PrevRole, Predictor::AvgRole];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::Summary => "summary",
            Predictor::PrevRole => "prev_role",
            Predictor::AvgRole => "avg_role",
        }
    }
}

/// A forecast of `G_{t+1}` made at `t`, with its scores when the truth is known.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub t: usize,
    pub predictor: Predictor,
    pub predicted: Array2<f64>,
    pub frobenius_loss: f64,
    pub total_auc: Option<f64>,
}

pub fn predict_summary(series: &MembershipSeries, t: usize, kernel: &KernelSpec) -> Result<Array2<f64>> {
    if series.len() < 2 {
        return Err(Error::arg("forecasting needs at least two snapshots"));
    }
    let model = summary_transition(series, t, kernel, &TransitionOptions::default())?;
    Ok(series.at(t).dot(&model.values))
}

pub fn predict_prev_role(series: &MembershipSeries, t: usize) -> Array2<f64> {
    series.at(t).to_owned()
}

pub fn predict_avg_role(series: &MembershipSeries, t: usize) -> Result<Array2<f64>> {
    let g = series.at(t);
    let mean = g.mean_axis(Axis(0)).ok_or_else(|| Error::arg("cannot average an empty membership matrix"))?;
    Ok(mean.broadcast(g.dim()).expect("row broadcast").to_owned())
}

pub fn predict(series: &MembershipSeries, t: usize, predictor: Predictor, kernel: &KernelSpec) -> Result<Array2<f64>> {
    match predictor {
        Predictor::Summary => predict_summary(series, t, kernel),
        Predictor::PrevRole => Ok(predict_prev_role(series, t)),
        Predictor::AvgRole => predict_avg_role(series, t),
    }
}

pub fn frobenius_loss(truth: ArrayView2<'_, f64>, pred: ArrayView2<'_, f64>) -> Result<f64> {
    if truth.dim() != pred.dim() {
        return Err(Error::shape(format!("loss operands {:?} and {:?} differ", truth.dim(), pred.dim())));
    }
    Ok(truth.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Index of the row maximum; ties go to the lowest index.
pub fn modal_role(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AucOptions {
    /// Treat the trailing inactive column as a class.
    pub include_inactive: bool,
}

impl Default for AucOptions {
    fn default() -> Self {
        AucOptions { include_inactive: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalAuc {
    pub value: f64,
    pub pairs_used: usize,
    /// Class pairs skipped because a class had no true instances.
    pub pairs_skipped: usize,
}

/// Hand–Till multi-class AUC of `pred` scores against the modal roles of `truth`.
pub fn total_auc(truth: ArrayView2<'_, f64>, pred: ArrayView2<'_, f64>, opts: &AucOptions) -> Result<TotalAuc> {
    if truth.dim() != pred.dim() {
        return Err(Error::shape(format!("auc operands {:?} and {:?} differ", truth.dim(), pred.dim())));
    }
    let width = truth.ncols();
    let classes = if opts.include_inactive { width } else { width.saturating_sub(1) };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); width];
    for (i, row) in truth.axis_iter(Axis(0)).enumerate() {
        let label = modal_role(&row.to_vec());
        if label < classes {
            members[label].push(i);
        }
    }
    let present: Vec<usize> = (0..classes).filter(|&c| !members[c].is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::UndefinedMetric(format!("total AUC needs two classes, found {}", present.len())));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for (a, &ci) in present.iter().enumerate() {
        for &cj in &present[a + 1..] {
            let aij = mann_whitney(pred.column(ci).to_vec(), &members[ci], &members[cj]);
            let aji = mann_whitney(pred.column(cj).to_vec(), &members[cj], &members[ci]);
            sum += 0.5 * (aij + aji);
            used += 1;
        }
    }
    let all_pairs = classes * (classes - 1) / 2;
    Ok(TotalAuc { value: sum / used as f64, pairs_used: used, pairs_skipped: all_pairs - used })
}

/// Probability that a random `pos` instance outscores a random `neg`
/// instance, ties counting one half, via average ranks.
fn mann_whitney(scores: Vec<f64>, pos: &[usize], neg: &[usize]) -> f64 {
    let mut items: Vec<(f64, bool)> = pos.iter().map(|&i| (scores[i], true)).chain(neg.iter().map(|&i| (scores[i], false))).collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j + 1 < items.len() && items[j + 1].0 == items[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * items[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// One row of the evaluation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvaluationRow {
    pub t: usize,
    pub predictor: Predictor,
    pub frobenius_loss: f64,
    /// Loss divided by `√n`.
    pub loss_per_sqrt_n: f64,
    pub total_auc: Option<f64>,
}

/// Scores every predictor on every `t ∈ [1, len − 2]`, forecasting `G_{t+1}`.
pub fn evaluate_series(
    series: &MembershipSeries,
    kernel: &KernelSpec,
    predictors: &[Predictor],
    auc: &AucOptions,
) -> Result<Vec<EvaluationRow>> {
    if series.len() < 3 {
        return Ok(Vec::new());
    }
    let ts: Vec<usize> = (1..series.len() - 1).collect();
    let n = series.num_nodes().max(1) as f64;
    let per_t = par::map_slice(&ts, |&t| -> Result<Vec<EvaluationRow>> {
        let truth = series.at(t + 1);
        predictors
            .iter()
            .map(|&p| {
                let pred = predict(series, t, p, kernel)?;
                let loss = frobenius_loss(truth, pred.view())?;
                let auc = match total_auc(truth, pred.view(), auc) {
                    Ok(a) => Some(a.value),
                    Err(Error::UndefinedMetric(_)) => None,
                    Err(e) => return Err(e),
                };
                Ok(EvaluationRow { t, predictor: p, frobenius_loss: loss, loss_per_sqrt_n: loss / n.sqrt(), total_auc: auc })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_t {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn write_evaluation_csv<W: Write>(rows: &[EvaluationRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,predictor,frobenius_loss,loss_per_sqrt_n,total_auc")?;
    for r in rows {
        let auc = r.total_auc.map_or(String::new(), crate::fmt_num);
        writeln!(
            out,
            "{},{},{},{},{auc}",
            r.t,
            r.predictor.name(),
            crate::fmt_num(r.frobenius_loss),
            crate::fmt_num(r.loss_per_sqrt_n)
        )?;
    }
    Ok(())
}

/// Memberships driven by a planted Markov chain over hidden states.
///
/// Each node carries a hidden state that moves by `transition` every step;
/// its membership row is `(1 − noise)·e_state + noise·u` with `u` a fresh
/// random point on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSimulation {
    pub transition: Array2<f64>,
    pub nodes: usize,
    pub steps: usize,
    pub noise: f64,
    pub seed: u64,
}

pub fn simulate_chain(sim: &ChainSimulation) -> Result<MembershipSeries> {
    let k = sim.transition.nrows();
    if sim.transition.ncols() != k || k < 2 {
        return Err(Error::arg("planted transition must be square with at least two states"));
    }
    if !(0.0..=1.0).contains(&sim.noise) {
        return Err(Error::arg(format!("noise must lie in [0, 1], got {}", sim.noise)));
    }
    for row in sim.transition.axis_iter(Axis(0)) {
        if row.iter().any(|&x| x < 0.0) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::arg("planted transition must be row-stochastic"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut states: Vec<usize> = (0..sim.nodes).map(|_| rng.gen_range(0..k)).collect();
    let mut mats = Vec::with_capacity(sim.steps);
    for step in 0..sim.steps {
        if step > 0 {
            for s in states.iter_mut() {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let row = sim.transition.row(*s);
                *s = (0..k).find(|&j| {
                    acc += row[j];
                    u < acc
                })
                .unwrap_or(k - 1);
            }
        }
        let mut g = Array2::zeros((sim.nodes, k));
        for (i, &s) in states.iter().enumerate() {
            let mut u: Array1<f64> = (0..k).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
            u /= u.sum();
            let mut row = g.row_mut(i);
            row.assign(&(u * sim.noise));
            row[s] += 1.0 - sim.noise;
        }
        mats.push(g);
    }
    MembershipSeries::from_matrices(mats)
}

/// The same snapshots in a seeded random temporal order.
pub fn shuffle_series(series: &MembershipSeries, seed: u64) -> Result<MembershipSeries> {
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    MembershipSeries::from_matrices(order.into_iter().map(|t| series.at(t).to_owned()).collect())
}
