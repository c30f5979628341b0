//! Symmetric tridiagonal helpers.

/// Solve `T x = b` for symmetric tridiagonal `T` (diagonal `d`, off-diagonal `e`).
/// Returns `None` on a zero pivot.
pub fn solve_sym_tridiag(d: &[f64], e: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut piv = d[0];
    if piv == 0.0 {
        return None;
    }
    x[0] = b[0] / piv;
    for i in 1..n {
        c[i - 1] = e[i - 1] / piv;
        piv = d[i] - e[i - 1] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        x[i] = (b[i] - e[i - 1] * x[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// Number of eigenvalues strictly below `x` (Sturm sequence).
pub fn count_below(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let qq = if q == 0.0 { f64::EPSILON * (e[i - 1].abs() + 1e-300) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

pub fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    (lo, hi)
}

/// Smallest eigenvalue by bisection on the Sturm count.
pub fn smallest_eigenvalue(d: &[f64], e: &[f64]) -> f64 {
    let (mut lo, mut hi) = gershgorin(d, e);
    let scale = lo.abs().max(hi.abs()).max(1e-300);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        if count_below(d, e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mat_vec(d: &[f64], e: &[f64], x: &[f64]) -> Vec<f64> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let mut s = d[i] * x[i];
            if i > 0 {
                s += e[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += e[i] * x[i + 1];
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let d = [2.0, 2.0, 2.0];
        let e = [-1.0, -1.0];
        let x = solve_sym_tridiag(&d, &e, &[1.0, 0.0, 1.0]).unwrap();
        let b = mat_vec(&d, &e, &x);
        assert!((b[0] - 1.0).abs() < 1e-14 && b[1].abs() < 1e-14 && (b[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn smallest_eigenvalue_of_discrete_laplacian() {
        // eigenvalues 2 - 2cos(kπ/(n+1))
        let n = 50;
        let d = vec![2.0; n];
        let e = vec![-1.0; n - 1];
        let want = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((smallest_eigenvalue(&d, &e) - want).abs() < 1e-13);
        assert_eq!(count_below(&d, &e, 4.1), n);
    }
}
