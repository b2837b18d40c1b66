//! Estimators and goodness-of-fit checks shared by the experiments.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{LatticeGraph, VertexId};
use crate::rng::{rng_from_seed, split_seed};
use crate::walker::{run_until_inverse_local, StopReason, WalkOptions};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for a single observation.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub variance: f64,
    pub std_error_of_mean: f64,
    pub min: f64,
    pub max: f64,
    /// `(p, q_p)` on the requested grid.
    pub quantiles: Vec<(f64, f64)>,
}

pub const DEFAULT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

impl SampleSummary {
    pub fn new(xs: &[f64]) -> Result<Self> {
        Self::with_grid(xs, &DEFAULT_QUANTILES)
    }

    pub fn with_grid(xs: &[f64], grid: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        let s = sorted(xs);
        let variance = variance(&s);
        Ok(SampleSummary {
            count: s.len(),
            mean: mean(&s),
            median: quantile_sorted(&s, 0.5),
            variance,
            std_error_of_mean: (variance / s.len() as f64).sqrt(),
            min: s[0],
            max: s[s.len() - 1],
            quantiles: grid.iter().map(|&p| (p, quantile_sorted(&s, p))).collect(),
        })
    }
}

/// Standard error of a binomial proportion estimate.
pub fn proportion_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample Kolmogorov-Smirnov statistic with ties handled exactly.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
    })
}

/// One-sample statistic against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let s = sorted(a);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// One-sample statistic for nonnegative integer data against a CDF on the
/// integers. The p-value uses the continuous Kolmogorov law and is
/// conservative.
pub fn ks_discrete(a: &[u64], cdf: impl Fn(u64) -> f64) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut s = a.to_vec();
    s.sort_unstable();
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut idx = 0;
    for k in 0..=s[s.len() - 1] {
        while idx < s.len() && s[idx] <= k {
            idx += 1;
        }
        d = d.max((idx as f64 / n - cdf(k)).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// Two-sample statistic for integer data.
pub fn ks_two_sample_discrete(a: &[u64], b: &[u64]) -> Result<KsResult> {
    let fa: Vec<f64> = a.iter().map(|&x| x as f64).collect();
    let fb: Vec<f64> = b.iter().map(|&x| x as f64).collect();
    ks_two_sample(&fa, &fb)
}

pub fn poisson_cdf(k: u64, mean: f64) -> f64 {
    let mut term = (-mean).exp();
    let mut sum = term;
    for j in 1..=k {
        term *= mean / j as f64;
        sum += term;
    }
    sum.min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquareCovReport {
    pub empirical_cov: f64,
    pub target: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Samples `(X, Y)` centered Gaussian with variances `sigma1^2, sigma2^2` and
/// covariance `rho`, and compares `cov(X^2, Y^2)` with `2 rho^2`.
pub fn gaussian_square_cov_check(
    rho: f64,
    sigma1: f64,
    sigma2: f64,
    reps: usize,
    seed: u64,
) -> Result<SquareCovReport> {
    if !(sigma1 > 0.0 && sigma2 > 0.0) || rho.abs() > sigma1 * sigma2 {
        return Err(Error::InvalidCorrelation(format!(
            "covariance {rho} impossible for standard deviations {sigma1}, {sigma2}"
        )));
    }
    if reps < 2 {
        return Err(Error::EmptySample);
    }
    let r = rho / (sigma1 * sigma2);
    let mut rng = rng_from_seed(seed);
    let mut xs = Vec::with_capacity(reps);
    let mut ys = Vec::with_capacity(reps);
    for _ in 0..reps {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let x = sigma1 * z1;
        let y = sigma2 * (r * z1 + (1.0 - r * r).max(0.0).sqrt() * z2);
        xs.push(x * x);
        ys.push(y * y);
    }
    let (mx, my) = (mean(&xs), mean(&ys));
    let prods: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let n = reps as f64;
    let empirical_cov = prods.iter().sum::<f64>() / (n - 1.0);
    let std_error = (variance(&prods) / n).sqrt();
    let target = 2.0 * rho * rho;
    Ok(SquareCovReport {
        empirical_cov,
        target,
        std_error,
        pass: (empirical_cov - target).abs() <= 3.0 * std_error,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientDesign("need at least two points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientDesign("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = xs.iter().zip(ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    Ok(LineFit {
        slope,
        intercept,
        residuals,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    /// `(n, median sqrt(tau_cov / 2n^2))`, by increasing n.
    pub points: Vec<(usize, f64)>,
}

pub const MIN_SAMPLES_PER_SIZE: usize = 30;

/// Regresses the median of `sqrt(tau_cov / 2n^2)` on `ln n`.
pub fn fit_cover_scaling(points: &[(usize, Vec<f64>)]) -> Result<CoverFit> {
    let mut pts: Vec<(usize, f64)> = Vec::new();
    for (n, samples) in points {
        if samples.len() < MIN_SAMPLES_PER_SIZE {
            return Err(Error::InsufficientDesign(format!(
                "n = {n} has {} samples, need {MIN_SAMPLES_PER_SIZE}",
                samples.len()
            )));
        }
        let scaled: Vec<f64> = samples
            .iter()
            .map(|t| (t / (2.0 * (*n as f64).powi(2))).sqrt())
            .collect();
        pts.push((*n, median(&scaled)));
    }
    pts.sort_by_key(|p| p.0);
    let mut sizes: Vec<usize> = pts.iter().map(|p| p.0).collect();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InsufficientDesign(format!(
            "{} distinct sizes, need 3",
            sizes.len()
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = fit_line(&xs, &ys)?;
    Ok(CoverFit {
        slope: fit.slope,
        intercept: fit.intercept,
        residuals: fit.residuals,
        points: pts,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauConcentration {
    /// `mean tau(t) / (2 t |E|)`.
    pub mean_ratio: f64,
    pub mean_ratio_se: f64,
    /// `sd tau(t) / (|E| sqrt t)`.
    pub sd_ratio: f64,
    pub samples: Vec<f64>,
}

pub fn tau_concentration_check(
    g: &LatticeGraph,
    v0: VertexId,
    t: f64,
    reps: usize,
    seed: u64,
) -> Result<TauConcentration> {
    if reps < 100 {
        return Err(Error::InvalidParameters(format!("reps = {reps}, need at least 100")));
    }
    let samples: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let rec = run_until_inverse_local(g, v0, t, split_seed(seed, r), WalkOptions::default())?;
            if rec.stop_reason == StopReason::StepBudget {
                return Err(Error::NumericalFailure("step budget exhausted".into()));
            }
            Ok(rec.elapsed)
        })
        .collect::<Result<_>>()?;
    let e = g.edge_count() as f64;
    let scale = 2.0 * t * e;
    let m = mean(&samples);
    let sd = variance(&samples).sqrt();
    Ok(TauConcentration {
        mean_ratio: m / scale,
        mean_ratio_se: sd / (reps as f64).sqrt() / scale,
        sd_ratio: sd / (e * t.sqrt()),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ks_hand_cases() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]).unwrap().statistic, 1.0);
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r.statistic, 1.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn ks_ties_are_not_split() {
        let a = [1.0, 1.0, 1.0, 2.0];
        let b = [1.0, 2.0, 2.0, 2.0];
        assert_abs_diff_eq!(ks_two_sample(&a, &b).unwrap().statistic, 0.5);
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert_abs_diff_eq!(kolmogorov_sf(1.358), 0.05, epsilon = 5e-4);
        assert_abs_diff_eq!(kolmogorov_sf(1.628), 0.01, epsilon = 2e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn one_sample_uniform() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&xs, |x| x).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0005, epsilon = 1e-12);
    }

    #[test]
    fn discrete_and_poisson() {
        assert_abs_diff_eq!(poisson_cdf(0, 2.0), (-2.0f64).exp());
        assert_abs_diff_eq!(poisson_cdf(2, 1.0), 2.5 * (-1.0f64).exp(), epsilon = 1e-15);
        let data = [0u64, 1, 1, 2];
        let r = ks_discrete(&data, |k| [0.25, 0.75, 1.0][k.min(2) as usize]).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0);
    }

    #[test]
    fn summary_fields() {
        let s = SampleSummary::new(&[3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.median, 2.5);
        assert_abs_diff_eq!(s.variance, 5.0 / 3.0, epsilon = 1e-15);
        assert!(s.min <= s.median && s.median <= s.max);
        assert!(SampleSummary::new(&[]).is_err());
    }

    #[test]
    fn square_cov_targets() {
        for (rho, target) in [(0.0, 0.0), (0.5, 0.5), (1.0, 2.0)] {
            let r = gaussian_square_cov_check(rho, 1.0, 1.0, 200_000, 8).unwrap();
            assert_eq!(r.target, target);
            assert!(r.pass, "{r:?}");
        }
        let r = gaussian_square_cov_check(1.5, 1.0, 2.0, 200_000, 9).unwrap();
        assert_eq!(r.target, 4.5);
        assert!(r.pass, "{r:?}");
        assert!(matches!(
            gaussian_square_cov_check(1.2, 1.0, 1.0, 10, 0),
            Err(Error::InvalidCorrelation(_))
        ));
    }

    fn synthetic(f: impl Fn(f64) -> f64, sizes: &[usize]) -> Vec<(usize, Vec<f64>)> {
        sizes
            .iter()
            .map(|&n| {
                let y = f(n as f64);
                (n, vec![2.0 * (n as f64).powi(2) * y * y; MIN_SAMPLES_PER_SIZE])
            })
            .collect()
    }

    #[test]
    fn cover_fit_recovers_exact_line() {
        let pts = synthetic(|n| 0.79788 * n.ln(), &[32, 64, 128, 256]);
        let fit = fit_cover_scaling(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.79788, epsilon = 1e-10);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn cover_fit_with_loglog_correction() {
        // With a log log n correction of weight c the fitted slope moves by
        // c times the regression slope of ln ln n on ln n over the design.
        let sizes = [32usize, 64, 128, 256];
        let c = 1.0;
        let pts = synthetic(|n| 0.79788 * n.ln() - c * n.ln().ln(), &sizes);
        let fit = fit_cover_scaling(&pts).unwrap();
        let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let zs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let beta = fit_line(&xs, &zs).unwrap().slope;
        assert_abs_diff_eq!(fit.slope, 0.79788 - c * beta, epsilon = 1e-9);
        assert!(beta > 0.2 && beta < 0.25);
    }

    #[test]
    fn cover_fit_design_errors() {
        let pts = synthetic(|n| n.ln(), &[32, 64]);
        assert!(matches!(fit_cover_scaling(&pts), Err(Error::InsufficientDesign(_))));
        let pts = vec![(32, vec![1.0; 5]), (64, vec![1.0; 30]), (128, vec![1.0; 30])];
        assert!(matches!(fit_cover_scaling(&pts), Err(Error::InsufficientDesign(_))));
    }

    #[test]
    fn tau_concentration_single_edge() {
        let g = LatticeGraph::single_edge();
        let r = tau_concentration_check(&g, g.special().unwrap(), 1.0, 20_000, 4).unwrap();
        assert!((r.mean_ratio - 1.0).abs() < 3.0 * r.mean_ratio_se, "{}", r.mean_ratio);
        assert!(tau_concentration_check(&g, VertexId(1), 1.0, 10, 4).is_err());
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_monotone_invariant(
            a in proptest::collection::vec(-50.0f64..50.0, 1..40),
            b in proptest::collection::vec(-50.0f64..50.0, 1..40),
        ) {
            let d1 = ks_two_sample(&a, &b).unwrap().statistic;
            let d2 = ks_two_sample(&b, &a).unwrap().statistic;
            prop_assert_eq!(d1, d2);
            let f = |x: f64| (x / 10.0).exp() * 3.0 - 1.0;
            let fa: Vec<f64> = a.iter().map(|&x| f(x)).collect();
            let fb: Vec<f64> = b.iter().map(|&x| f(x)).collect();
            prop_assert!((ks_two_sample(&fa, &fb).unwrap().statistic - d1).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d1));
        }

        #[test]
        fn estimators_are_permutation_invariant(mut xs in proptest::collection::vec(-10.0f64..10.0, 2..50)) {
            let s1 = SampleSummary::new(&xs).unwrap();
            xs.reverse();
            let s2 = SampleSummary::new(&xs).unwrap();
            prop_assert_eq!(s1, s2);
        }

        #[test]
        fn fit_exact_on_affine(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let xs = [1.0, 2.0, 3.5, 7.0];
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let fit = fit_line(&xs, &ys).unwrap();
            prop_assert!((fit.slope - a).abs() < 1e-9);
            prop_assert!(fit.residuals.iter().all(|r| r.abs() < 1e-9));
        }
    }
}
