//! Continuous piecewise-linear functions on an index grid, in the hat basis.
//!
//! With nodes `p_0 = 0 < p_1 < … < p_M = n-1`, a function is given by its values
//! at the nodes and interpolated linearly in between. Weighted least squares in
//! this basis has a tridiagonal normal matrix.

/// Interpolation weights of index `i` on the segment `[a, b]`.
#[inline]
fn theta(a: usize, b: usize, i: usize) -> f64 {
    (i - a) as f64 / (b - a) as f64
}

/// Normal equations `A c = rhs` of `min Σ wsq_i (f_i - target_i)^2` over
/// functions with the given nodes. Entries with `wsq_i == 0` are skipped, so
/// their targets may be non-finite.
pub(crate) struct Normal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub rhs: Vec<f64>,
}

pub(crate) fn assemble(nodes: &[usize], wsq: &[f64], target: &[f64]) -> Normal {
    let m = nodes.len();
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    let mut rhs = vec![0.0; m];
    for s in 0..m - 1 {
        let (a, b) = (nodes[s], nodes[s + 1]);
        for i in a..b {
            let w = wsq[i];
            if w == 0.0 {
                continue;
            }
            let t = theta(a, b, i);
            let u = 1.0 - t;
            diag[s] += w * u * u;
            diag[s + 1] += w * t * t;
            off[s] += w * u * t;
            rhs[s] += w * u * target[i];
            rhs[s + 1] += w * t * target[i];
        }
    }
    let last = *nodes.last().unwrap();
    if wsq[last] != 0.0 {
        diag[m - 1] += wsq[last];
        rhs[m - 1] += wsq[last] * target[last];
    }
    Normal { diag, off, rhs }
}

/// Solves a symmetric tridiagonal system in place. Returns `None` when a
/// pivot is not positive, i.e. the matrix is not numerically positive definite.
pub(crate) fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let m = diag.len();
    let scale = diag.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut piv = diag[0];
    if !(piv > 1e-14 * scale) {
        return None;
    }
    d[0] = rhs[0] / piv;
    for k in 1..m {
        c[k - 1] = off[k - 1] / piv;
        piv = diag[k] - off[k - 1] * c[k - 1];
        if !(piv > 1e-14 * scale) {
            return None;
        }
        d[k] = (rhs[k] - off[k - 1] * d[k - 1]) / piv;
    }
    for k in (0..m - 1).rev() {
        d[k] -= c[k] * d[k + 1];
    }
    Some(d)
}

/// Evaluates the function with node values `coef` on all `n` indices.
pub(crate) fn expand(nodes: &[usize], coef: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for s in 0..nodes.len() - 1 {
        let (a, b) = (nodes[s], nodes[s + 1]);
        for (i, o) in out.iter_mut().enumerate().take(b).skip(a) {
            let t = theta(a, b, i);
            *o = (1.0 - t) * coef[s] + t * coef[s + 1];
        }
    }
    out[n - 1] = *coef.last().unwrap();
    out
}

/// Second difference of the spline at interior node `k` (1 ≤ k ≤ M-1).
pub(crate) fn kink(nodes: &[usize], coef: &[f64], k: usize) -> f64 {
    let hl = (nodes[k] - nodes[k - 1]) as f64;
    let hr = (nodes[k + 1] - nodes[k]) as f64;
    (coef[k + 1] - coef[k]) / hr - (coef[k] - coef[k - 1]) / hl
}
