//! Dense kernels shared by the factorization, transition and explanation code.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::par;

/// Added to multiplicative-update denominators so 0/0 resolves to 0.
pub(crate) const MU_EPS: f64 = 1e-300;

pub fn frobenius_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// `½‖target − left · right‖²_F`, computed entrywise.
pub fn half_residual_sq(
    target: ArrayView2<'_, f64>,
    left: ArrayView2<'_, f64>,
    right: ArrayView2<'_, f64>,
) -> f64 {
    let approx = left.dot(&right);
    0.5 * target
        .iter()
        .zip(approx.iter())
        .map(|(t, a)| (t - a) * (t - a))
        .sum::<f64>()
}

/// `A Bᵀ` by row dot products, faster than a general product when `B` has
/// few rows.
pub fn dot_abt(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    debug_assert_eq!(a.ncols(), b.ncols());
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (ar, mut or) in a.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        for (o, br) in or.iter_mut().zip(b.axis_iter(Axis(0))) {
            *o = ar.dot(&br);
        }
    }
    out
}

/// Options for the row-wise nonnegative least-squares solver.
#[derive(Debug, Clone, Copy)]
pub struct RowSolveOptions {
    pub max_iter: usize,
    /// Stop a row once its relative objective decrease falls below this.
    pub tol: f64,
}

/// Solves `min_{x_i ≥ 0} ½‖y_i − x_i M‖²` independently for every row.
///
/// The problem is passed in Gram form: `gram = M Mᵀ` (k×k), `cross` holds
/// the rows `y_i Mᵀ` (n×k) and `target_sq[i] = ‖y_i‖²`. `init` must be
/// strictly positive wherever a nonzero solution is wanted; multiplicative
/// updates never revive an exact zero.
///
/// Returns the solution and the largest iteration count used by any row.
pub(crate) fn mu_rows(
    gram: ArrayView2<'_, f64>,
    cross: ArrayView2<'_, f64>,
    target_sq: &[f64],
    init: Array2<f64>,
    opts: RowSolveOptions,
) -> (Array2<f64>, usize) {
    let k = gram.nrows();
    debug_assert_eq!(gram.ncols(), k);
    debug_assert_eq!(cross.ncols(), k);
    debug_assert_eq!(init.dim(), cross.dim());
    debug_assert_eq!(target_sq.len(), cross.nrows());

    let rows: Vec<(Vec<f64>, usize)> = par::map_range(cross.nrows(), |i| {
        let mut x: Vec<f64> = init.row(i).to_vec();
        let iters = solve_row(gram, cross.row(i), target_sq[i], &mut x, opts);
        (x, iters)
    });
    let mut out = Array2::zeros(cross.dim());
    let mut max_iters = 0;
    for (i, (x, iters)) in rows.into_iter().enumerate() {
        max_iters = max_iters.max(iters);
        for (dst, v) in out.row_mut(i).iter_mut().zip(x) {
            *dst = v;
        }
    }
    (out, max_iters)
}

fn row_objective(gram: ArrayView2<'_, f64>, c: ArrayView1<'_, f64>, y_sq: f64, x: &[f64]) -> f64 {
    let k = x.len();
    let mut quad = 0.0;
    let mut lin = 0.0;
    for a in 0..k {
        lin += c[a] * x[a];
        let mut s = 0.0;
        for b in 0..k {
            s += gram[[a, b]] * x[b];
        }
        quad += x[a] * s;
    }
    0.5 * y_sq - lin + 0.5 * quad
}

fn solve_row(
    gram: ArrayView2<'_, f64>,
    c: ArrayView1<'_, f64>,
    y_sq: f64,
    x: &mut [f64],
    opts: RowSolveOptions,
) -> usize {
    let k = x.len();
    let mut denom = vec![0.0; k];
    let mut prev = row_objective(gram, c, y_sq, x);
    for iter in 1..=opts.max_iter {
        for a in 0..k {
            let mut s = 0.0;
            for b in 0..k {
                s += x[b] * gram[[b, a]];
            }
            denom[a] = s;
        }
        for a in 0..k {
            let v = x[a] * c[a].max(0.0) / (denom[a] + MU_EPS);
            x[a] = flush(v);
        }
        let cur = row_objective(gram, c, y_sq, x);
        let scale = prev.abs().max(0.5 * y_sq).max(f64::MIN_POSITIVE);
        if prev - cur <= opts.tol * scale {
            return iter;
        }
        prev = cur;
    }
    opts.max_iter
}

/// Exact solution of `min_{x ≥ 0} ½xᵀAx − cᵀx` for a small positive
/// semidefinite `A`, by the Lawson–Hanson active-set method in Gram form.
///
/// `tol` is the largest positive gradient component, relative to
/// `max |c|`, still accepted as optimal. `max_iter` caps the number of
/// variables entering the passive set.
pub(crate) fn nnls_gram(a: ArrayView2<'_, f64>, c: ArrayView1<'_, f64>, tol: f64, max_iter: usize) -> Vec<f64> {
    let k = c.len();
    let mut x = vec![0.0; k];
    let mut passive = vec![false; k];
    // Variables whose subproblem turned out singular are not offered again.
    let mut barred = vec![false; k];
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return x;
    }
    let threshold = tol * scale;
    let gradient = |x: &[f64]| -> Vec<f64> { (0..k).map(|i| c[i] - (0..k).map(|j| a[[i, j]] * x[j]).sum::<f64>()).collect() };

    for _ in 0..max_iter {
        let w = gradient(&x);
        let Some(enter) = (0..k)
            .filter(|&i| !passive[i] && !barred[i] && w[i] > threshold)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]))
        else {
            break;
        };
        passive[enter] = true;
        loop {
            let Some(z) = solve_passive(a, c, &passive) else {
                passive[enter] = false;
                barred[enter] = true;
                break;
            };
            if (0..k).all(|i| !passive[i] || z[i] > 0.0) {
                x = z;
                break;
            }
            // Step from x toward z until the first passive variable hits zero.
            let mut alpha = f64::INFINITY;
            for i in (0..k).filter(|&i| passive[i] && z[i] <= 0.0) {
                alpha = alpha.min(x[i] / (x[i] - z[i]));
            }
            for i in 0..k {
                x[i] += alpha * (z[i] - x[i]);
                if passive[i] && x[i] <= f64::EPSILON * scale {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Unconstrained minimizer over the passive variables, zero elsewhere.
fn solve_passive(a: ArrayView2<'_, f64>, c: ArrayView1<'_, f64>, passive: &[bool]) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let m = nalgebra::DMatrix::from_fn(idx.len(), idx.len(), |r, s| a[[idx[r], idx[s]]]);
    let rhs = nalgebra::DVector::from_fn(idx.len(), |r, _| c[idx[r]]);
    let max_diag = idx.iter().map(|&i| a[[i, i]]).fold(0.0f64, f64::max);
    let chol = m.cholesky()?;
    // A pivot far below the diagonal scale means a dependent column.
    if chol.l_dirty().diagonal().iter().any(|&d| d * d <= 1e-13 * max_diag) {
        return None;
    }
    let z = chol.solve(&rhs);
    let mut out = vec![0.0; passive.len()];
    for (r, &i) in idx.iter().enumerate() {
        out[i] = z[r];
    }
    Some(out)
}

/// `Σ_t Aᵗᵀ Bᵗ` over paired row blocks, the Gram form of a vertical stack.
pub fn stacked_cross(pairs: &[(ArrayView2<'_, f64>, ArrayView2<'_, f64>)]) -> Array2<f64> {
    let k = pairs.first().map(|(a, _)| a.ncols()).unwrap_or(0);
    let m = pairs.first().map(|(_, b)| b.ncols()).unwrap_or(0);
    let mut acc = Array2::zeros((k, m));
    for (a, b) in pairs {
        acc += &a.t().dot(b);
    }
    acc
}

/// Divides every row by its sum; rows summing to zero are left untouched.
pub fn normalize_rows(m: &mut Array2<f64>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
}

/// Elementwise `base ← base ⊙ numer ⊘ (denom + ε)`, zeroing non-finite and subnormal results.
pub(crate) fn mu_apply(base: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>) {
    Zip::from(base).and(numer).and(denom).for_each(|b, &n, &d| {
        let v = *b * n.max(0.0) / (d + MU_EPS);
        *b = flush(v);
    });
}

/// Maps non-finite and subnormal update results to zero. Subnormals are
/// numerically zero here but make every later operation on them very slow.
fn flush(v: f64) -> f64 {
    if v.is_finite() && v >= f64::MIN_POSITIVE {
        v
    } else {
        0.0
    }
}
