//! Error norms against a known target and log-log convergence rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::StepFunction;
use crate::oracles::Truth;

pub const MIN_GRID: usize = 1000;
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("grid size {0} below the minimum of 1000")]
    GridTooSmall(usize),
    #[error("reconstruction on [{lo}, {hi}] does not fit the target domain [{a}, {b}]")]
    DomainMismatch { lo: f64, hi: f64, a: f64, b: f64 },
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {MIN_FIT_POINTS} usable points, got {0}")]
    TooFewPoints(usize),
    #[error("n values must be positive and strictly increasing")]
    BadAbscissae,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub sup_norm: f64,
    pub l1_norm: f64,
    pub grid_size: usize,
    /// Smallest `F − F_rec` seen by the sup-norm probe; negative means the
    /// reconstruction overshot somewhere.
    pub min_signed_error: f64,
}

/// Sup- and 1-norms of `truth − rec` over `[x_1, b]`.
///
/// The sup-norm probes a uniform grid of `grid_size + 1` points, every
/// breakpoint from both sides and both one-sided limits at each target jump.
/// The 1-norm is integrated cell by cell; a monotone target minus a constant
/// changes sign at most once per cell, so each cell splits into two
/// sign-constant parts at a root found by bisection.
pub fn error_norms(
    rec: &StepFunction,
    truth: &dyn Truth,
    grid_size: usize,
) -> Result<ErrorReport, MetricsError> {
    if grid_size < MIN_GRID {
        return Err(MetricsError::GridTooSmall(grid_size));
    }
    let d = truth.domain();
    let lo = rec.breakpoints[0];
    let hi = rec.right_end;
    if lo < d.lo || hi != d.hi || lo > hi {
        return Err(MetricsError::DomainMismatch {
            lo,
            hi,
            a: d.lo,
            b: d.hi,
        });
    }

    let mut sup = 0.0f64;
    let mut min_signed = f64::INFINITY;
    let mut probe = |e: f64| {
        sup = sup.max(e.abs());
        min_signed = min_signed.min(e);
    };
    let eval = |x: f64| rec.eval(x).expect("x kept inside [x_1, b]");

    for k in 0..=grid_size {
        let x = if k == grid_size {
            hi
        } else {
            lo + (hi - lo) * k as f64 / grid_size as f64
        };
        probe(truth.value(x) - eval(x));
    }
    for (i, &b) in rec.breakpoints.iter().enumerate() {
        probe(truth.value(b) - rec.levels[i]);
        if i > 0 {
            probe(truth.left_limit(b) - rec.levels[i - 1]);
        }
    }
    for j in truth.jumps() {
        if j > lo && j < hi {
            probe(truth.left_limit(j) - rec.left_limit(j).expect("interior"));
            probe(truth.right_limit(j) - eval(j));
        }
    }

    let mut l1 = 0.0;
    for (a, b, level) in rec.pieces() {
        let mut cuts = vec![a];
        cuts.extend(truth.jumps().into_iter().filter(|&j| j > a && j < b));
        cuts.push(b);
        for w in cuts.windows(2) {
            l1 += abs_gap_integral(truth, w[0], w[1], level);
        }
    }

    Ok(ErrorReport {
        sup_norm: sup,
        l1_norm: l1,
        grid_size,
        min_signed_error: min_signed,
    })
}

/// `∫_a^b |F − level|` for `F` monotone and smooth on `(a, b)`.
fn abs_gap_integral(truth: &dyn Truth, a: f64, b: f64, level: f64) -> f64 {
    let signed = |u: f64, v: f64| truth.integral(u, v) - level * (v - u);
    let ga = truth.right_limit(a) - level;
    let gb = truth.left_limit(b) - level;
    if ga >= 0.0 && gb >= 0.0 || ga <= 0.0 && gb <= 0.0 {
        return signed(a, b).abs();
    }
    let (mut l, mut r) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (l + r);
        if mid <= l || mid >= r {
            break;
        }
        if (truth.value(mid) - level).signum() == ga.signum() {
            l = mid;
        } else {
            r = mid;
        }
    }
    let root = 0.5 * (l + r);
    signed(a, root).abs() + signed(root, b).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    /// Points dropped for a non-positive or non-finite error.
    pub excluded: usize,
}

/// Least squares of `ln e` on `ln n`.
pub fn fit_rate(ns: &[f64], errors: &[f64]) -> Result<RateFit, MetricsError> {
    if ns.len() != errors.len() {
        return Err(MetricsError::LengthMismatch(ns.len(), errors.len()));
    }
    if ns.iter().any(|&n| !(n > 0.0)) || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::BadAbscissae);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(&n, &e)| (n.ln(), e.ln()))
        .unzip();
    let used = lx.len();
    if used < MIN_FIT_POINTS {
        return Err(MetricsError::TooFewPoints(used));
    }
    let k = used as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        used,
        excluded: errors.len() - used,
    })
}

/// [`fit_rate`] restricted to `n_lo ≤ n ≤ n_hi`.
pub fn fit_rate_window(
    ns: &[f64],
    errors: &[f64],
    n_lo: f64,
    n_hi: f64,
) -> Result<RateFit, MetricsError> {
    if ns.len() != errors.len() {
        return Err(MetricsError::LengthMismatch(ns.len(), errors.len()));
    }
    let (wn, we): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(errors)
        .filter(|(&n, _)| n >= n_lo && n <= n_hi)
        .map(|(&n, &e)| (n, e))
        .unzip();
    fit_rate(&wn, &we)
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
            e += 1;
        }
        let avg = (s + e) as f64 / 2.0 + 1.0;
        for &k in &idx[s..=e] {
            out[k] = avg;
        }
        s = e + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Domain};
    use crate::oracles::{GroundTruth, Linear};

    fn constant(level: f64, lo: f64, hi: f64) -> StepFunction {
        StepFunction {
            breakpoints: vec![lo],
            levels: vec![level],
            right_end: hi,
        }
    }

    #[test]
    fn constant_one_against_continuous_target() {
        let r = error_norms(&constant(1.0, 1.0, 2.0), &GroundTruth::Continuous, 1000).unwrap();
        assert!((r.sup_norm - 1.0).abs() < 1e-4);
        assert!((r.l1_norm - 0.5).abs() < 1e-4);
        assert!(r.min_signed_error >= -1e-4);
    }

    #[test]
    fn single_cell_triangle() {
        let d = Domain::new(0.0, 1.0).unwrap();
        let t = Linear {
            slope: 2.0,
            intercept: 0.0,
            domain: d,
        };
        let r = error_norms(&constant(0.0, 0.0, 1.0), &t, 1000).unwrap();
        assert!((r.l1_norm - 1.0).abs() < 1e-14);
        assert_eq!(r.sup_norm, 2.0);
    }

    #[test]
    fn sign_change_inside_cell() {
        let d = Domain::new(0.0, 1.0).unwrap();
        let t = Linear {
            slope: 1.0,
            intercept: 0.0,
            domain: d,
        };
        // |x − 0.5| integrates to 1/4.
        let r = error_norms(&constant(0.5, 0.0, 1.0), &t, 1000).unwrap();
        assert!((r.l1_norm - 0.25).abs() < 1e-12);
        assert_eq!(r.min_signed_error, -0.5);
    }

    #[test]
    fn exact_dense_sampling_converges() {
        let d = Domain::new(1.0, 2.0).unwrap();
        let f = GroundTruth::Continuous;
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000] {
            let pairs: Vec<(f64, f64)> = d
                .equispaced(n)
                .into_iter()
                .map(|x| (x, f.value(x)))
                .collect();
            let rec = Dataset::from_xy(d, &pairs).unwrap().reconstruct().unwrap();
            let r = error_norms(&rec, &f, 2000).unwrap();
            assert!(r.l1_norm < prev);
            assert!(r.min_signed_error >= 0.0);
            prev = r.l1_norm;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn jump_floor_on_discontinuous_target() {
        let d = Domain::new(1.0, 2.0).unwrap();
        let f = GroundTruth::Discontinuous;
        let pairs: Vec<(f64, f64)> = d
            .equispaced(1000)
            .into_iter()
            .filter(|&x| x != 1.5)
            .map(|x| (x, f.value(x)))
            .collect();
        let rec = Dataset::from_xy(d, &pairs).unwrap().reconstruct().unwrap();
        let r = error_norms(&rec, &f, 1000).unwrap();
        assert!(r.sup_norm >= 0.05);
    }

    #[test]
    fn norm_inequality() {
        let r = error_norms(&constant(1.2, 1.0, 2.0), &GroundTruth::Discontinuous, 1000).unwrap();
        assert!(r.sup_norm >= r.l1_norm);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = GroundTruth::Continuous;
        assert_eq!(
            error_norms(&constant(1.0, 1.0, 2.0), &f, 999),
            Err(MetricsError::GridTooSmall(999))
        );
        assert!(matches!(
            error_norms(&constant(1.0, 0.5, 2.0), &f, 1000),
            Err(MetricsError::DomainMismatch { .. })
        ));
        assert!(matches!(
            error_norms(&constant(1.0, 1.0, 1.9), &f, 1000),
            Err(MetricsError::DomainMismatch { .. })
        ));
    }

    #[test]
    fn exact_power_laws() {
        let ns: Vec<f64> = (1..=20).map(|k| k as f64 * 10.0).collect();
        let e: Vec<f64> = ns.iter().map(|n| n.powf(-0.5)).collect();
        let fit = fit_rate(&ns, &e).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let e: Vec<f64> = ns.iter().map(|n| 3.0 / n).collect();
        let fit = fit_rate(&ns, &e).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn non_positive_errors_are_excluded() {
        let ns: Vec<f64> = (1..=8).map(f64::from).collect();
        let mut e: Vec<f64> = ns.iter().map(|n| 1.0 / n).collect();
        e[2] = 0.0;
        e[5] = -1.0;
        let fit = fit_rate(&ns, &e).unwrap();
        assert_eq!((fit.used, fit.excluded), (6, 2));
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit_rate(&ns[..4], &e[..4]).is_err());
        assert_eq!(
            fit_rate(&[2.0, 1.0], &[1.0, 1.0]),
            Err(MetricsError::BadAbscissae)
        );
    }

    #[test]
    fn window_selects_range() {
        let ns: Vec<f64> = (1..=30).map(f64::from).collect();
        let e: Vec<f64> = ns
            .iter()
            .map(|&n| if n < 10.0 { 1.0 } else { n.powi(-2) })
            .collect();
        let fit = fit_rate_window(&ns, &e, 10.0, 30.0).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert_eq!(fit.used, 21);
    }

    #[test]
    fn spearman_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&a, &[10.0, 20.0, 30.0, 40.0]), Some(1.0));
        assert_eq!(spearman(&a, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&a, &[1.0, 1.0, 1.0, 1.0]), None);
        let r = spearman(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }
}
