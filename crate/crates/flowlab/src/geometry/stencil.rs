//! Finite-difference operators on the uniform pole-to-pole grid.
//!
//! Ghost nodes mirror the first interior node across each pole with a
//! parity sign: `+1` for even fields (a, φ), `-1` for odd fields (ψ).

pub const EVEN: f64 = 1.0;
pub const ODD: f64 = -1.0;

#[inline]
fn at(f: &[f64], j: isize, par: f64) -> f64 {
    let n = f.len() as isize;
    if j < 0 {
        par * f[(-j) as usize]
    } else if j >= n {
        par * f[(2 * (n - 1) - j) as usize]
    } else {
        f[j as usize]
    }
}

/// Central first difference.
pub fn d1(f: &[f64], h: f64, par: f64) -> Vec<f64> {
    (0..f.len() as isize)
        .map(|j| (at(f, j + 1, par) - at(f, j - 1, par)) / (2.0 * h))
        .collect()
}

/// Central second difference.
pub fn d2(f: &[f64], h: f64, par: f64) -> Vec<f64> {
    (0..f.len() as isize)
        .map(|j| (at(f, j + 1, par) - 2.0 * at(f, j, par) + at(f, j - 1, par)) / (h * h))
        .collect()
}

#[inline]
fn half_lapse(a: &[f64], j: isize) -> (f64, f64) {
    let c = at(a, j, EVEN);
    ((c + at(a, j + 1, EVEN)) / 2.0, (c + at(a, j - 1, EVEN)) / 2.0)
}

/// Compact second arclength derivative `d/ds (df/ds)` with `ds = a dx`.
pub fn dss(f: &[f64], a: &[f64], h: f64, par: f64) -> Vec<f64> {
    (0..f.len() as isize)
        .map(|j| {
            let (ap, am) = half_lapse(a, j);
            let fc = at(f, j, par);
            ((at(f, j + 1, par) - fc) / ap - (fc - at(f, j - 1, par)) / am) / (h * h * a[j as usize])
        })
        .collect()
}

/// Product of forward and backward arclength slopes; approximates `(df/ds)^2`.
pub fn slope_product(f: &[f64], a: &[f64], h: f64, par: f64) -> Vec<f64> {
    (0..f.len() as isize)
        .map(|j| {
            let (ap, am) = half_lapse(a, j);
            let fc = at(f, j, par);
            (at(f, j + 1, par) - fc) / (h * ap) * (fc - at(f, j - 1, par)) / (h * am)
        })
        .collect()
}

/// Overwrite both pole values by quadratic extrapolation from the interior.
pub fn extrapolate_poles(f: &mut [f64]) {
    let n = f.len();
    f[0] = (4.0 * f[1] - f[2]) / 3.0;
    f[n - 1] = (4.0 * f[n - 2] - f[n - 3]) / 3.0;
}

/// Smoothstep blend weight: 0 on |x| <= 1/2, rising to 1 at the poles.
pub fn pole_weight(x: f64) -> f64 {
    let w = ((x.abs() - 0.5) / 0.5).clamp(0.0, 1.0);
    w * w * (3.0 - 2.0 * w)
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    h * (f[1..n - 1].iter().sum::<f64>() + 0.5 * (f[0] + f[n - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> (Vec<f64>, f64) {
        let h = 2.0 / (n - 1) as f64;
        ((0..n).map(|j| -1.0 + j as f64 * h).collect(), h)
    }

    #[test]
    fn d1_is_second_order_on_interior() {
        let mut errs = Vec::new();
        for &n in &[33usize, 65, 129] {
            let (x, h) = grid(n);
            let f: Vec<f64> = x.iter().map(|x| (1.3 * x).sin()).collect();
            let d = d1(&f, h, ODD);
            let e = x[1..n - 1]
                .iter()
                .zip(&d[1..n - 1])
                .map(|(x, d)| (d - 1.3 * (1.3 * x).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!(r > 3.5 && r < 4.5, "ratio {r}");
        }
    }

    #[test]
    fn ghost_parity() {
        let f = vec![0.0, 1.0, 2.0, 3.0];
        assert_eq!(at(&f, -1, ODD), -1.0);
        assert_eq!(at(&f, 4, EVEN), 2.0);
        // even field has a flat pole slope
        assert_eq!(d1(&[5.0, 4.0, 1.0], 0.1, EVEN)[0], 0.0);
    }

    #[test]
    fn dss_matches_d2_for_constant_lapse() {
        let (x, h) = grid(21);
        let f: Vec<f64> = x.iter().map(|x| x * x * x).collect();
        let a = vec![2.0; 21];
        let a2 = dss(&f, &a, h, ODD);
        let b = d2(&f, h, ODD);
        for (p, q) in a2.iter().zip(&b) {
            assert!((p - q / 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn extrapolation_exact_for_even_quadratics() {
        let (x, _) = grid(17);
        for pole in [-1.0, 1.0] {
            let mut f: Vec<f64> = x.iter().map(|x| 3.0 + (x - pole) * (x - pole)).collect();
            let want = f.clone();
            f[0] = 0.0;
            f[16] = 0.0;
            extrapolate_poles(&mut f);
            let j = if pole < 0.0 { 0 } else { 16 };
            assert!((f[j] - want[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_profile() {
        assert_eq!(pole_weight(0.3), 0.0);
        assert_eq!(pole_weight(-1.0), 1.0);
        assert!((pole_weight(0.75) - 0.5).abs() < 1e-15);
    }
}
