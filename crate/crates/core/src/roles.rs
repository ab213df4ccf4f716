//! Role discovery by nonnegative factorization.
//!
//! A single role basis `F` (roles × features) is learned from all
//! snapshots' feature rows. Each snapshot's memberships are then fitted with
//! `F` held fixed, normalized to distributions, and embedded in the global
//! node universe with one extra column for the inactive state.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrixSeries;
use crate::linalg;
use crate::par;
use crate::temporal_graph::SnapshotSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfOptions {
    /// Stop once the relative objective decrease of one sweep is below this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Independent random starts; the lowest final objective wins.
    pub restarts: usize,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions { tol: 1e-6, max_iter: 500, seed: 0x5eed, restarts: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct NmfResult {
    pub g: Array2<f64>,
    pub f: Array2<f64>,
    /// `½‖V − GF‖²_F` at the returned factors.
    pub objective: f64,
    /// Objective before the first sweep and after every sweep.
    pub history: Vec<f64>,
}

fn check_nonnegative(v: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite() && *x >= 0.0) {
        Ok(())
    } else {
        Err(Error::arg(format!("{what} must be finite and non-negative")))
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Draws from `(0, 1]`.
fn positive_uniform(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Rank-`r` factorization `V ≈ GF` by alternating multiplicative updates.
pub fn nmf_factorize(v: ArrayView2<'_, f64>, r: usize, opts: &NmfOptions) -> Result<NmfResult> {
    let (n, f) = v.dim();
    if r == 0 || r >= n.min(f) {
        return Err(Error::arg(format!("rank {r} must satisfy 0 < r < min({n}, {f})")));
    }
    check_nonnegative(v, "feature matrix")?;
    let restarts = opts.restarts.max(1);
    let runs = par::map_range(restarts, |k| nmf_single(v, r, opts, &mut restart_rng(opts.seed, k)));
    // Earliest restart wins ties so the result does not depend on scheduling.
    let mut best: Option<NmfResult> = None;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn nmf_single(v: ArrayView2<'_, f64>, r: usize, opts: &NmfOptions, rng: &mut ChaCha8Rng) -> NmfResult {
    let (n, f) = v.dim();
    let mut g = Array2::from_shape_fn((n, r), |_| positive_uniform(rng));
    let mut h = Array2::from_shape_fn((r, f), |_| positive_uniform(rng));
    let v_sq = linalg::frobenius_sq(v);
    // `V Hᵀ` serves both the objective of the current factors and the next G update.
    let mut vht = linalg::dot_abt(v, h.view());
    let mut obj = gram_objective(v_sq, &g, &vht, &h);
    let mut history = vec![obj];
    for _ in 0..opts.max_iter {
        let denom = g.dot(&h.dot(&h.t()));
        linalg::mu_apply(&mut g, &vht, &denom);

        let numer = g.t().dot(&v);
        let denom = g.t().dot(&g).dot(&h);
        linalg::mu_apply(&mut h, &numer, &denom);

        vht = linalg::dot_abt(v, h.view());
        let next = gram_objective(v_sq, &g, &vht, &h);
        history.push(next);
        let done = obj <= 0.0 || (obj - next) < opts.tol * obj;
        obj = next;
        if done {
            break;
        }
    }
    NmfResult { g, f: h, objective: obj, history }
}

/// `½‖V − GH‖²` expanded as `½‖V‖² − ⟨G, VHᵀ⟩ + ½⟨GᵀG, HHᵀ⟩`.
fn gram_objective(v_sq: f64, g: &Array2<f64>, vht: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let cross = (g * vht).sum();
    let quad = (&g.t().dot(g) * &h.dot(&h.t())).sum();
    (0.5 * v_sq - cross + 0.5 * quad).max(0.0)
}

/// Global role × feature basis.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleBasis {
    values: Array2<f64>,
}

impl RoleBasis {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_nonnegative(values.view(), "role basis")?;
        if let Some(i) = values.axis_iter(Axis(0)).position(|row| row.iter().all(|&x| x == 0.0)) {
            return Err(Error::arg(format!("role {i} has an all-zero basis row")));
        }
        Ok(RoleBasis { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn num_roles(&self) -> usize {
        self.values.nrows()
    }

    /// Roles × features, one row per role.
    pub fn write_csv<W: std::io::Write>(&self, feature_names: &[String], mut out: W) -> std::io::Result<()> {
        writeln!(out, "role,{}", feature_names.join(","))?;
        for (r, row) in self.values.axis_iter(Axis(0)).enumerate() {
            let vals: Vec<String> = row.iter().map(|&v| crate::fmt_num(v)).collect();
            writeln!(out, "{r},{}", vals.join(","))?;
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnlsOptions {
    /// Cap on active-set changes per row.
    pub max_iter: usize,
    /// Largest gradient component, relative to the row's largest `v·Fᵀ`
    /// entry, accepted at the optimum.
    pub tol: f64,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions { max_iter: 500, tol: 1e-10 }
    }
}

/// Memberships `G ≥ 0` minimizing `½‖V − GF‖²_F` with `F` fixed.
pub fn nnls_fit(v: ArrayView2<'_, f64>, basis: &RoleBasis, opts: &NnlsOptions) -> Result<Array2<f64>> {
    if v.ncols() != basis.num_features() {
        return Err(Error::shape(format!(
            "feature matrix has {} columns, basis has {}",
            v.ncols(),
            basis.num_features()
        )));
    }
    check_nonnegative(v, "feature matrix")?;
    let f = &basis.values;
    let gram = f.dot(&f.t());
    let cross = v.dot(&f.t());
    let rows = par::map_range(v.nrows(), |i| linalg::nnls_gram(gram.view(), cross.row(i), opts.tol, opts.max_iter));
    let mut g = Array2::zeros((v.nrows(), basis.num_roles()));
    for (mut dst, row) in g.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&ndarray::Array1::from(row));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdlPoint {
    pub rank: usize,
    pub model_bits: f64,
    pub error_bits: f64,
    pub total_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub rank: usize,
    pub curve: Vec<MdlPoint>,
}

/// Residual variance, relative to a typical feature's variance, below
/// which errors are treated as free.
pub const MDL_PRECISION: f64 = 1e-3;

/// Median of the nonzero column variances, or 1 for a constant matrix. A
/// few heavy-tailed features barely move it, unlike the pooled variance.
fn typical_column_variance(v: ArrayView2<'_, f64>) -> f64 {
    let n = v.nrows() as f64;
    let mut vars: Vec<f64> = v
        .axis_iter(Axis(1))
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
        })
        .filter(|&s| s > 0.0)
        .collect();
    if vars.is_empty() {
        return 1.0;
    }
    vars.sort_by(f64::total_cmp);
    let m = vars.len();
    if m % 2 == 1 {
        vars[m / 2]
    } else {
        0.5 * (vars[m / 2 - 1] + vars[m / 2])
    }
}

/// Picks the rank minimizing `bits·(n·r + r·f)` plus the Gaussian code
/// length of the residuals. Ties go to the smaller rank.
///
/// Residuals are coded with their own empirical variance, floored at
/// `MDL_PRECISION` times the median column variance `σ̃²`:
/// `½·N·log2(1 + mse / (MDL_PRECISION·σ̃²))` bits for `N = n·f` entries.
pub fn select_rank(v: ArrayView2<'_, f64>, ranks: &[usize], bits: f64, opts: &NmfOptions) -> Result<RankSelection> {
    if ranks.is_empty() {
        return Err(Error::arg("empty rank range"));
    }
    let (n, f) = v.dim();
    let count = (n * f) as f64;
    let var = typical_column_variance(v);

    let fits = par::map_slice(ranks, |&r| nmf_factorize(v, r, opts));
    let mut curve = Vec::with_capacity(ranks.len());
    for (&r, fit) in ranks.iter().zip(fits) {
        let fit = fit?;
        let mse = 2.0 * fit.objective / count;
        let model_bits = bits * (n * r + r * f) as f64;
        let error_bits = 0.5 * count * (1.0 + mse / (MDL_PRECISION * var)).log2();
        curve.push(MdlPoint { rank: r, model_bits, error_bits, total_bits: model_bits + error_bits });
    }
    let mut best = curve[0];
    for p in &curve[1..] {
        if p.total_bits < best.total_bits || (p.total_bits == best.total_bits && p.rank < best.rank) {
            best = *p;
        }
    }
    Ok(RankSelection { rank: best.rank, curve })
}

/// Node × (roles + 1) memberships over the whole universe. The last column
/// is the inactive state.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    pub snapshot_index: usize,
    pub values: Array2<f64>,
    /// Row sums before normalization; 0 for inactive nodes.
    pub activity: Vec<f64>,
}

impl MembershipMatrix {
    pub fn num_roles(&self) -> usize {
        self.values.ncols() - 1
    }

    /// Whether the row carries any mass outside the inactive state.
    pub fn is_active(&self, node: usize) -> bool {
        self.values[[node, self.num_roles()]] < 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipSeries {
    pub matrices: Vec<MembershipMatrix>,
    pub roles: usize,
}

impl MembershipSeries {
    /// Wraps raw `n × (r+1)` matrices, e.g. simulated memberships.
    pub fn from_matrices(mats: Vec<Array2<f64>>) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::arg("no membership matrices"))?;
        let (n, w) = first.dim();
        if w < 2 {
            return Err(Error::arg("membership matrices need at least one role plus the inactive column"));
        }
        if mats.iter().any(|m| m.dim() != (n, w)) {
            return Err(Error::shape("membership matrices differ in shape"));
        }
        let matrices = mats
            .into_iter()
            .enumerate()
            .map(|(t, values)| {
                let activity = values.axis_iter(Axis(0)).map(|r| r.slice(ndarray::s![..w - 1]).sum()).collect();
                MembershipMatrix { snapshot_index: t, values, activity }
            })
            .collect();
        Ok(MembershipSeries { matrices, roles: w - 1 })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.values.nrows())
    }

    /// Width of a membership row, `roles + 1`.
    pub fn width(&self) -> usize {
        self.roles + 1
    }

    pub fn at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.matrices[t].values.view()
    }

    /// Column names: `role_0 … role_{r−1}, inactive`.
    pub fn state_names(&self) -> Vec<String> {
        (0..self.roles).map(|r| format!("role_{r}")).chain(std::iter::once("inactive".to_string())).collect()
    }

    /// Long-format CSV over every node and snapshot.
    pub fn write_csv<W: std::io::Write>(&self, labels: &[String], mut out: W) -> std::io::Result<()> {
        writeln!(out, "node,t,{}", self.state_names().join(","))?;
        for (t, m) in self.matrices.iter().enumerate() {
            for (i, row) in m.values.axis_iter(Axis(0)).enumerate() {
                let vals: Vec<String> = row.iter().map(|&v| crate::fmt_num(v)).collect();
                writeln!(out, "{},{t},{}", labels[i], vals.join(","))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleOptions {
    /// Fixed role count; `None` selects it by description length.
    pub rank: Option<usize>,
    pub max_rank: usize,
    pub bits: f64,
    pub nmf: NmfOptions,
    pub nnls: NnlsOptions,
    /// Normalize membership rows to distributions.
    pub normalize: bool,
    /// Learn the basis (and rank) on at most this many sampled rows.
    pub max_fit_rows: Option<usize>,
    /// Random starts per candidate rank during rank selection.
    pub selection_restarts: usize,
}

impl Default for RoleOptions {
    fn default() -> Self {
        RoleOptions {
            rank: None,
            max_rank: 10,
            bits: 16.0,
            nmf: NmfOptions::default(),
            nnls: NnlsOptions::default(),
            normalize: true,
            max_fit_rows: Some(20_000),
            selection_restarts: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoleModel {
    pub basis: RoleBasis,
    pub memberships: MembershipSeries,
    pub selection: Option<RankSelection>,
    /// Active rows whose fitted membership was all zero (set to uniform).
    pub uniform_rows: usize,
    /// Roles removed because the factorization left their basis row empty.
    pub dropped_roles: Vec<usize>,
}

/// Learns the role basis and every snapshot's memberships.
pub fn build_membership_series(
    features: &FeatureMatrixSeries,
    snapshots: &SnapshotSeries,
    opts: &RoleOptions,
) -> Result<RoleModel> {
    if features.matrices.is_empty() {
        return Err(Error::arg("feature series is empty"));
    }
    if features.matrices.len() != snapshots.len() {
        return Err(Error::shape("feature series and snapshot series differ in length"));
    }
    let f = features.num_features();
    for (m, s) in features.matrices.iter().zip(&snapshots.snapshots) {
        if m.values.ncols() != f || m.values.nrows() != s.num_active() {
            return Err(Error::shape(format!("feature matrix {} does not match its snapshot", m.snapshot_index)));
        }
    }

    let mut stack = features.stacked();
    if let Some(cap) = opts.max_fit_rows {
        if stack.nrows() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.nmf.seed);
            let mut rows = sample(&mut rng, stack.nrows(), cap).into_vec();
            rows.sort_unstable();
            stack = stack.select(Axis(0), &rows);
        }
    }
    let limit = stack.nrows().min(stack.ncols()).saturating_sub(1);
    let (rank, selection) = match opts.rank {
        Some(r) => (r, None),
        None => {
            let ranks: Vec<usize> = (1..=opts.max_rank.min(limit)).collect();
            let search = NmfOptions { restarts: opts.selection_restarts, ..opts.nmf };
            let sel = select_rank(stack.view(), &ranks, opts.bits, &search)?;
            (sel.rank, Some(sel))
        }
    };
    let fit = nmf_factorize(stack.view(), rank, &opts.nmf)?;

    let zero_rows: Vec<usize> = fit
        .f
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, row)| row.iter().all(|&x| x == 0.0))
        .map(|(i, _)| i)
        .collect();
    let keep: Vec<usize> = (0..rank).filter(|i| !zero_rows.contains(i)).collect();
    if !zero_rows.is_empty() {
        log::warn!("dropping {} role(s) with an empty basis row: {zero_rows:?}", zero_rows.len());
    }
    let basis = RoleBasis::new(fit.f.select(Axis(0), &keep))?;
    let r = basis.num_roles();
    let n = snapshots.num_nodes();

    let fitted = par::map_range(features.matrices.len(), |t| nnls_fit(features.matrices[t].values.view(), &basis, &opts.nnls));
    let mut matrices = Vec::with_capacity(fitted.len());
    let mut uniform_rows = 0;
    for (t, g) in fitted.into_iter().enumerate() {
        let g = g?;
        let mut values = Array2::zeros((n, r + 1));
        values.column_mut(r).fill(1.0);
        let mut activity = vec![0.0; n];
        for (row, &node) in snapshots.snapshots[t].active().iter().enumerate() {
            let src = g.row(row);
            let sum: f64 = src.sum();
            activity[node] = sum;
            let mut dst = values.row_mut(node);
            dst[r] = 0.0;
            if !opts.normalize {
                dst.slice_mut(ndarray::s![..r]).assign(&src);
            } else if sum > 0.0 {
                for j in 0..r {
                    dst[j] = src[j] / sum;
                }
            } else {
                uniform_rows += 1;
                dst.slice_mut(ndarray::s![..r]).fill(1.0 / r as f64);
            }
        }
        matrices.push(MembershipMatrix { snapshot_index: t, values, activity });
    }
    if uniform_rows > 0 {
        log::info!("{uniform_rows} active row(s) had zero membership and were set to uniform");
    }
    Ok(RoleModel {
        basis,
        memberships: MembershipSeries { matrices, roles: r },
        selection,
        uniform_rows,
        dropped_roles: zero_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{discover_features, FeatureOptions};
    use crate::temporal_graph::{build_snapshots, EdgeList, SnapshotOptions, TemporalEdge};
    use ndarray::array;

    fn random(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, m), |_| rng.gen::<f64>())
    }

    #[test]
    fn zero_matrix_reaches_zero_objective() {
        let v = Array2::zeros((5, 4));
        let fit = nmf_factorize(v.view(), 2, &NmfOptions::default()).unwrap();
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn exact_rank_one_is_recovered() {
        let g = array![[1.0], [2.0], [0.5], [3.0]];
        let f = array![[0.2, 1.0, 4.0]];
        let v = g.dot(&f);
        let fit = nmf_factorize(v.view(), 1, &NmfOptions::default()).unwrap();
        assert!(fit.objective < 1e-8 * linalg::frobenius_sq(v.view()));
    }

    #[test]
    fn objective_never_increases() {
        let v = random(12, 7, 3);
        let fit = nmf_factorize(v.view(), 3, &NmfOptions { restarts: 1, ..Default::default() }).unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rank_and_sign_arguments_are_checked() {
        let v = random(4, 3, 1);
        assert!(nmf_factorize(v.view(), 3, &NmfOptions::default()).is_err());
        assert!(nmf_factorize(v.view(), 0, &NmfOptions::default()).is_err());
        let mut neg = v.clone();
        neg[[0, 0]] = -1.0;
        assert!(nmf_factorize(neg.view(), 1, &NmfOptions::default()).is_err());
    }

    #[test]
    fn factorization_is_deterministic_for_a_seed() {
        let v = random(10, 6, 9);
        let a = nmf_factorize(v.view(), 2, &NmfOptions::default()).unwrap();
        let b = nmf_factorize(v.view(), 2, &NmfOptions::default()).unwrap();
        assert_eq!(a.g, b.g);
        assert_eq!(a.f, b.f);
    }

    #[test]
    fn multi_restart_oracle_agreement() {
        // Oracle: best of 200 independent starts run to a tight tolerance.
        let v = random(6, 4, 11);
        let oracle_opts = NmfOptions { tol: 1e-12, max_iter: 5000, seed: 99, restarts: 200 };
        let oracle = nmf_factorize(v.view(), 2, &oracle_opts).unwrap().objective;
        let opts = NmfOptions { restarts: 20, tol: 1e-10, max_iter: 5000, ..Default::default() };
        let got = nmf_factorize(v.view(), 2, &opts).unwrap().objective;
        assert!((got - oracle).abs() <= 1e-3 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn nnls_identity_basis_returns_input() {
        let v = array![[1.0, 0.0, 2.0], [0.5, 3.0, 0.0]];
        let basis = RoleBasis::new(Array2::eye(3)).unwrap();
        let g = nnls_fit(v.view(), &basis, &NnlsOptions::default()).unwrap();
        for (a, b) in g.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn nnls_single_role_closed_form() {
        let basis = RoleBasis::new(array![[2.0, 1.0]]).unwrap();
        let g = nnls_fit(array![[1.0, 2.0]].view(), &basis, &NnlsOptions::default()).unwrap();
        assert!((g[[0, 0]] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn nnls_nonnegativity_binds() {
        let basis = RoleBasis::new(array![[1.0, 0.0]]).unwrap();
        let g = nnls_fit(array![[0.0, 1.0]].view(), &basis, &NnlsOptions::default()).unwrap();
        assert_eq!(g[[0, 0]], 0.0);
    }

    #[test]
    fn zero_basis_row_is_rejected() {
        assert!(RoleBasis::new(array![[1.0, 0.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn rank_one_input_selects_one() {
        let g = random(40, 1, 5);
        let f = random(1, 12, 6);
        let v = g.dot(&f);
        let sel = select_rank(v.view(), &[1, 2, 3, 4], 16.0, &NmfOptions::default()).unwrap();
        assert_eq!(sel.rank, 1);
        assert!(select_rank(v.view(), &[], 16.0, &NmfOptions::default()).is_err());
        for w in sel.curve.windows(2) {
            assert!(w[1].model_bits > w[0].model_bits);
        }
    }

    #[test]
    fn planted_rank_three_is_selected() {
        let g = random(200, 3, 21);
        let f = random(3, 30, 22);
        let v = g.dot(&f);
        let ranks: Vec<usize> = (1..=6).collect();
        let sel = select_rank(v.view(), &ranks, 16.0, &NmfOptions::default()).unwrap();
        assert_eq!(sel.rank, 3, "{:?}", sel.curve);
    }

    fn two_snapshot_series() -> SnapshotSeries {
        let mut edges = Vec::new();
        let mut push = |s, t, ts| edges.push(TemporalEdge { source: s, target: t, weight: 1.0, timestamp: ts });
        for leaf in 1..6 {
            push(0, leaf, 0.0);
        }
        for (a, b) in [(6, 7), (7, 8), (6, 8), (8, 9)] {
            push(a, b, 0.0);
        }
        for leaf in 1..4 {
            push(0, leaf, 1.0);
        }
        for (a, b) in [(6, 7), (7, 8), (6, 8), (8, 10)] {
            push(a, b, 1.0);
        }
        build_snapshots(&EdgeList::from_edges(11, edges).unwrap(), 1.0, &SnapshotOptions { symmetrize: true }).unwrap()
    }

    #[test]
    fn membership_rows_are_distributions_with_inactive_state() {
        let series = two_snapshot_series();
        let fs = discover_features(&series, &FeatureOptions::default()).unwrap();
        let model = build_membership_series(&fs, &series, &RoleOptions::default()).unwrap();
        let r = model.memberships.roles;
        assert_eq!(model.memberships.len(), 2);
        for (t, m) in model.memberships.matrices.iter().enumerate() {
            assert_eq!(m.values.dim(), (11, r + 1));
            for node in 0..11 {
                let row = m.values.row(node);
                assert!((row.sum() - 1.0).abs() < 1e-9);
                if series.snapshots[t].local_index(node).is_none() {
                    assert_eq!(row[r], 1.0);
                    assert!(row.iter().take(r).all(|&x| x == 0.0));
                } else {
                    assert_eq!(row[r], 0.0);
                }
            }
        }
        // Leaves 4, 5 and node 9 drop out at t = 1; node 10 is absent at t = 0.
        assert!(!model.memberships.matrices[1].is_active(4));
        assert!(!model.memberships.matrices[0].is_active(10));
    }

    #[test]
    fn single_snapshot_has_no_inactive_mass_for_active_nodes() {
        let edges: Vec<_> = [(0, 1), (1, 2), (2, 0), (2, 3)]
            .iter()
            .map(|&(s, t)| TemporalEdge { source: s, target: t, weight: 1.0, timestamp: 0.0 })
            .collect();
        let series = build_snapshots(&EdgeList::from_edges(4, edges).unwrap(), 1.0, &SnapshotOptions::default()).unwrap();
        let fs = discover_features(&series, &FeatureOptions::default()).unwrap();
        let model = build_membership_series(&fs, &series, &RoleOptions::default()).unwrap();
        assert_eq!(model.memberships.len(), 1);
        let r = model.memberships.roles;
        assert!(model.memberships.matrices[0].values.column(r).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unnormalized_option_keeps_raw_memberships() {
        let series = two_snapshot_series();
        let fs = discover_features(&series, &FeatureOptions::default()).unwrap();
        let opts = RoleOptions { normalize: false, rank: Some(2), ..Default::default() };
        let model = build_membership_series(&fs, &series, &opts).unwrap();
        let m = &model.memberships.matrices[0];
        let node = 0;
        let raw: f64 = m.values.row(node).iter().take(2).sum();
        assert!((raw - m.activity[node]).abs() < 1e-12);
    }
}
