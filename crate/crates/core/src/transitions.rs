//! Role-transition operators.
//!
//! A transition matrix `T` maps memberships at one step to the next,
//! `G_prev · T ≈ G_next`, and is fitted by nonnegative least squares. All
//! fits go through the Gram form (`PᵀP`, `PᵀN`), so stacking many steps or
//! many nodes costs one small `k × k` solve.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RowSolveOptions};
use crate::roles::MembershipSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionScope {
    Global,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub values: Array2<f64>,
    pub scope: TransitionScope,
    /// Source and target snapshot bounds of the fitted data.
    pub window: (usize, usize),
    pub row_normalized: bool,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// A copy with every row scaled to sum to one. All-zero rows cannot
    /// occur: unobserved source states are fitted as self-transitions.
    pub fn row_normalized(&self) -> TransitionMatrix {
        let mut values = self.values.clone();
        linalg::normalize_rows(&mut values);
        TransitionMatrix { values, row_normalized: true, ..*self }
    }

    /// Row-major flattening, as used for clustering.
    /// Row `i`, column `j` is the weight of moving from state `i` to `j`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let names = state_names(self.dim());
        writeln!(out, "from,{}", names.join(","))?;
        for (name, row) in names.iter().zip(self.values.axis_iter(Axis(0))) {
            let vals: Vec<String> = row.iter().map(|&v| crate::fmt_num(v)).collect();
            writeln!(out, "{name},{}", vals.join(","))?;
        }
        Ok(())
    }

    pub fn heatmap(&self) -> Heatmap {
        let names = state_names(self.dim());
        Heatmap {
            rows: names.clone(),
            cols: names,
            values: self.values.axis_iter(Axis(0)).map(|r| r.to_vec()).collect(),
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

/// Plot-ready form of a square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

fn state_names(k: usize) -> Vec<String> {
    (0..k.saturating_sub(1)).map(|r| format!("role_{r}")).chain(std::iter::once("inactive".to_string())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Rescale rows to sum to one after fitting.
    pub row_normalize: bool,
}

impl Default for TransitionOptions {
    fn default() -> Self {
        TransitionOptions { max_iter: 5000, tol: 1e-12, row_normalize: false }
    }
}

impl TransitionOptions {
    /// Row-stochastic output, for reporting and inspection.
    pub fn interpretation() -> Self {
        TransitionOptions { row_normalize: true, ..Default::default() }
    }
}

/// Sufficient statistics of a stacked least-squares problem
/// `min ½‖N − P·T‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGram {
    /// `PᵀP`
    pub source: Array2<f64>,
    /// `PᵀN`
    pub cross: Array2<f64>,
    /// Squared norms of the columns of `N`.
    pub target_col_sq: Vec<f64>,
}

impl TransitionGram {
    pub fn zeros(k: usize) -> Self {
        TransitionGram { source: Array2::zeros((k, k)), cross: Array2::zeros((k, k)), target_col_sq: vec![0.0; k] }
    }

    pub fn from_pair(prev: ArrayView2<'_, f64>, next: ArrayView2<'_, f64>) -> Self {
        let mut g = TransitionGram::zeros(prev.ncols());
        g.add_pair(prev, next);
        g
    }

    pub fn add_pair(&mut self, prev: ArrayView2<'_, f64>, next: ArrayView2<'_, f64>) {
        self.source += &prev.t().dot(&prev);
        self.cross += &prev.t().dot(&next);
        for (acc, col) in self.target_col_sq.iter_mut().zip(next.axis_iter(Axis(1))) {
            *acc += col.dot(&col);
        }
    }

    /// Adds one row pair `(p, q)`.
    pub fn add_rows(&mut self, p: &[f64], q: &[f64]) {
        let k = p.len();
        for a in 0..k {
            if p[a] == 0.0 {
                continue;
            }
            for b in 0..k {
                self.source[[a, b]] += p[a] * p[b];
                self.cross[[a, b]] += p[a] * q[b];
            }
        }
        for (acc, &x) in self.target_col_sq.iter_mut().zip(q) {
            *acc += x * x;
        }
    }

    /// Adds the penalty `½λ‖T − prior‖²`, which pulls weakly observed
    /// states toward `prior` and leaves well-determined ones alone.
    pub fn with_prior(&self, prior: ArrayView2<'_, f64>, strength: f64) -> TransitionGram {
        let mut g = self.clone();
        for i in 0..g.source.nrows() {
            g.source[[i, i]] += strength;
        }
        g.cross.scaled_add(strength, &prior);
        for (acc, col) in g.target_col_sq.iter_mut().zip(prior.axis_iter(Axis(1))) {
            *acc += strength * col.dot(&col);
        }
        g
    }

    /// `½‖N − P·T‖²` evaluated from the statistics.
    pub fn objective(&self, t: ArrayView2<'_, f64>) -> f64 {
        let quad = (&t * &self.source.dot(&t)).sum();
        let lin = (&t * &self.cross).sum();
        let total: f64 = self.target_col_sq.iter().sum();
        (0.5 * total - lin + 0.5 * quad).max(0.0)
    }
}

/// Nonnegative least-squares transition fit from Gram statistics.
///
/// Source states never observed (zero diagonal in `PᵀP`) get a pure
/// self-transition row; any row there is equally optimal.
pub fn fit_transition(gram: &TransitionGram, opts: &TransitionOptions) -> Array2<f64> {
    let k = gram.source.nrows();
    // Columns of T are independent problems; solve them as rows of Tᵀ.
    let init = Array2::from_shape_fn((k, k), |(a, b)| if a == b { 0.9 } else { 0.0 } + 0.1 / k as f64);
    let cross_t = gram.cross.t().to_owned();
    let (tt, _) = linalg::mu_rows(
        gram.source.view(),
        cross_t.view(),
        &gram.target_col_sq,
        init,
        RowSolveOptions { max_iter: opts.max_iter, tol: opts.tol },
    );
    let mut t = tt.reversed_axes();
    for i in 0..k {
        if gram.source[[i, i]] == 0.0 {
            t.row_mut(i).fill(0.0);
            t[[i, i]] = 1.0;
        }
    }
    if opts.row_normalize {
        linalg::normalize_rows(&mut t);
    }
    t
}

/// Exact fit when `PᵀP` is positive definite, as it is once a prior has
/// been added: every column of `T` is a small strictly convex problem.
pub(crate) fn fit_transition_exact(gram: &TransitionGram, opts: &TransitionOptions) -> Array2<f64> {
    let k = gram.source.nrows();
    let mut t = Array2::zeros((k, k));
    for b in 0..k {
        let col = linalg::nnls_gram(gram.source.view(), gram.cross.column(b), 1e-12, 10 * k + 10);
        t.column_mut(b).assign(&ndarray::Array1::from(col));
    }
    if opts.row_normalize {
        linalg::normalize_rows(&mut t);
    }
    t
}

/// Fits `G_prev · T ≈ G_next` over aligned rows.
pub fn estimate_transition(
    prev: ArrayView2<'_, f64>,
    next: ArrayView2<'_, f64>,
    opts: &TransitionOptions,
) -> Result<TransitionMatrix> {
    if prev.dim() != next.dim() {
        return Err(Error::shape(format!("operands {:?} and {:?} differ", prev.dim(), next.dim())));
    }
    if prev.nrows() == 0 {
        return Err(Error::arg("no rows to fit a transition on"));
    }
    let gram = TransitionGram::from_pair(prev, next);
    Ok(TransitionMatrix {
        values: fit_transition(&gram, opts),
        scope: TransitionScope::Global,
        window: (0, 1),
        row_normalized: opts.row_normalize,
    })
}

/// Fits one transition on the stacked pairs `(G_τ, G_τ+1)` for
/// `τ = max(0, t − w) .. t − 1`.
pub fn stacked_transition(
    series: &MembershipSeries,
    t: usize,
    window: usize,
    opts: &TransitionOptions,
) -> Result<TransitionMatrix> {
    if t == 0 {
        return Err(Error::arg("stacked transition needs t >= 1"));
    }
    if window == 0 {
        return Err(Error::arg("window must be at least 1"));
    }
    if t >= series.len() {
        return Err(Error::arg(format!("t = {t} outside a series of length {}", series.len())));
    }
    let start = t.saturating_sub(window);
    let mut gram = TransitionGram::zeros(series.width());
    for tau in start..t {
        gram.add_pair(series.at(tau), series.at(tau + 1));
    }
    Ok(TransitionMatrix {
        values: fit_transition(&gram, opts),
        scope: TransitionScope::Global,
        window: (start, t),
        row_normalized: opts.row_normalize,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Exponential,
    Linear,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub theta: f64,
    pub window: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { kind: KernelKind::Exponential, theta: 0.7, window: 10 }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::arg(format!("kernel theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.window == 0 {
            return Err(Error::arg("kernel window must be at least 1"));
        }
        Ok(())
    }

    /// Normalized weights `(i, α_i)` for `i = max(0, t − w + 1) ..= t`.
    pub fn weights(&self, t: usize) -> Vec<(usize, f64)> {
        let start = (t + 1).saturating_sub(self.window);
        let raw: Vec<(usize, f64)> = (start..=t)
            .map(|i| {
                let lag = (t - i) as f64;
                let w = match self.kind {
                    KernelKind::Exponential => (1.0 - self.theta).powf(lag),
                    KernelKind::Linear => (1.0 - self.theta * lag / self.window as f64).max(0.0),
                    KernelKind::Uniform => 1.0,
                };
                (i, w)
            })
            .collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        raw.into_iter().map(|(i, w)| (i, w / total)).collect()
    }
}

/// Kernel-weighted sum of the memberships up to `t`.
pub fn summary_snapshot(series: &MembershipSeries, t: usize, kernel: &KernelSpec) -> Result<Array2<f64>> {
    kernel.validate()?;
    if t >= series.len() {
        return Err(Error::arg(format!("t = {t} outside a series of length {}", series.len())));
    }
    let mut acc = Array2::zeros(series.at(t).dim());
    for (i, alpha) in kernel.weights(t) {
        acc.scaled_add(alpha, &series.at(i));
    }
    Ok(acc)
}

/// Fits `G_S(t−1) · T ≈ G_t`, the model used for forecasting.
pub fn summary_transition(
    series: &MembershipSeries,
    t: usize,
    kernel: &KernelSpec,
    opts: &TransitionOptions,
) -> Result<TransitionMatrix> {
    if t == 0 || t >= series.len() {
        return Err(Error::arg(format!("summary transition needs 1 <= t < {}, got {t}", series.len())));
    }
    let summary = summary_snapshot(series, t - 1, kernel)?;
    let mut tm = estimate_transition(summary.view(), series.at(t), opts)?;
    tm.window = ((t).saturating_sub(kernel.window), t);
    Ok(tm)
}
