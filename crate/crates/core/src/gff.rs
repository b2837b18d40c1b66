//! Exact sampling of the discrete Gaussian free field with a zero set.
//!
//! The field vanishes on `U` and has covariance `G_U(x, y) / d_y` elsewhere.
//! Its precision matrix is the Laplacian restricted to `V \ U`, which is
//! sparse, so each draw is one triangular back-solve against the cached
//! Cholesky factor.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exactsolve::{dirichlet_system, DirichletSystem};
use crate::lattice::{Boundary, LatticeGraph, VertexId};
use crate::rng::{rng_from_seed, split_seed};
use crate::stats::{mean, median, proportion_se, variance};

#[derive(Clone, Debug)]
pub struct GffSample {
    pub zero_set: Vec<VertexId>,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl GffSample {
    pub fn value(&self, v: VertexId) -> f64 {
        self.values[v.index()]
    }

    /// `sup_v eta_v` over all vertices, so never below zero.
    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_over(&self, region: &[VertexId]) -> f64 {
        region
            .iter()
            .map(|v| self.values[v.index()])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone)]
pub struct GffSampler {
    system: Arc<DirichletSystem>,
    n_vertices: usize,
}

impl GffSampler {
    pub fn new(g: &LatticeGraph, zero_set: &[VertexId]) -> Result<Self> {
        if zero_set.is_empty() {
            return Err(Error::NoZeroSet);
        }
        Ok(GffSampler {
            system: dirichlet_system(g, zero_set)?,
            n_vertices: g.num_vertices(),
        })
    }

    pub fn zero_set(&self) -> &[VertexId] {
        self.system.absorbing()
    }

    pub fn sample(&self, seed: u64) -> GffSample {
        let mut rng = rng_from_seed(seed);
        let free = self.system.sample_free(&mut rng);
        GffSample {
            zero_set: self.system.absorbing().to_vec(),
            values: self.system.lift(self.n_vertices, &free),
            seed,
        }
    }
}

pub fn sample_gff(g: &LatticeGraph, zero_set: &[VertexId], seed: u64) -> Result<GffSample> {
    Ok(GffSampler::new(g, zero_set)?.sample(seed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxStatistics {
    pub n: usize,
    pub reps: usize,
    pub max_samples: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub std: Option<f64>,
}

impl MaxStatistics {
    pub fn from_samples(n: usize, max_samples: Vec<f64>) -> Result<Self> {
        if max_samples.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(MaxStatistics {
            n,
            reps: max_samples.len(),
            mean: mean(&max_samples),
            median: median(&max_samples),
            std: (max_samples.len() > 1).then(|| variance(&max_samples).sqrt()),
            max_samples,
        })
    }
}

/// Maxima `M_n` of independent fields on the wired `n x n` box. Replica `r`
/// uses seed `split_seed(seed, r)`.
pub fn max_statistics(n: usize, reps: usize, seed: u64) -> Result<MaxStatistics> {
    if reps == 0 {
        return Err(Error::InvalidParameters("reps must be positive".into()));
    }
    let g = LatticeGraph::build_box(n, Boundary::Wired)?;
    let sampler = GffSampler::new(&g, &[g.special().expect("wired box")])?;
    let maxima: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| sampler.sample(split_seed(seed, r)).sup())
        .collect();
    MaxStatistics::from_samples(n, maxima)
}

/// `sqrt(2/pi) (ln n - 3/(8 ln 2) ln ln n)`, the expected maximum up to O(1).
pub fn bz_prediction(n: usize) -> Result<f64> {
    if n < 16 {
        return Err(Error::Domain(format!("n = {n} < 16")));
    }
    let l = (n as f64).ln();
    Ok((2.0 / std::f64::consts::PI).sqrt() * (l - 3.0 / (8.0 * 2f64.ln()) * l.ln()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Detection {
    pub occurred: bool,
    pub witness: Option<VertexId>,
}

/// Whether some `v` in `region` has `|eta_v - level| |eta_u - level| <= 1/4`
/// for every neighbor `u`.
pub fn detection_event(g: &LatticeGraph, s: &GffSample, region: &[VertexId], level: f64) -> Detection {
    let witness = region.iter().copied().find(|&v| {
        let a = (s.value(v) - level).abs();
        g.adjacent(v)
            .iter()
            .all(|&u| a * (s.value(u) - level).abs() <= 0.25)
    });
    Detection {
        occurred: witness.is_some(),
        witness,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DominationReport {
    /// `P(sup_region eta1 >= level)` for the smaller zero set.
    pub p_smaller: f64,
    pub p_larger: f64,
    pub se_smaller: f64,
    pub se_larger: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// Ratio below one half by more than three standard errors.
    pub violated: bool,
}

/// Compares tail probabilities of the regional supremum for fields with
/// nested zero sets `U1 ⊂ U2`, using independent streams for the two fields.
pub fn quantile_domination_check(
    g: &LatticeGraph,
    u1: &[VertexId],
    u2: &[VertexId],
    region: &[VertexId],
    level: f64,
    reps: usize,
    seed: u64,
) -> Result<DominationReport> {
    if let Some(v) = u1.iter().find(|v| !u2.contains(v)) {
        return Err(Error::InvalidNesting(format!("vertex {} is in U1 but not U2", v.0)));
    }
    if reps == 0 || region.is_empty() {
        return Err(Error::InvalidParameters("need reps > 0 and a nonempty region".into()));
    }
    let tail = |zero: &[VertexId], stream: u64| -> Result<f64> {
        let sampler = GffSampler::new(g, zero)?;
        let base = split_seed(seed, stream);
        let hits = (0..reps as u64)
            .into_par_iter()
            .filter(|&r| sampler.sample(split_seed(base, r)).sup_over(region) >= level)
            .count();
        Ok(hits as f64 / reps as f64)
    };
    let p1 = tail(u1, 0)?;
    let p2 = tail(u2, 1)?;
    let (se1, se2) = (proportion_se(p1, reps), proportion_se(p2, reps));
    let (ratio, ratio_se) = if p2 == 0.0 {
        (1.0, 0.0)
    } else if p1 == 0.0 {
        (0.0, se1 / p2)
    } else {
        let r = p1 / p2;
        (r, r * ((se1 / p1).powi(2) + (se2 / p2).powi(2)).sqrt())
    };
    Ok(DominationReport {
        p_smaller: p1,
        p_larger: p2,
        se_smaller: se1,
        se_larger: se2,
        ratio,
        ratio_se,
        violated: ratio < 0.5 - 3.0 * ratio_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactsolve::solve_green;
    use crate::lattice::Site;
    use approx::assert_abs_diff_eq;

    #[test]
    fn center_variance_on_wired_three() {
        let g = LatticeGraph::build_box(3, Boundary::Wired).unwrap();
        let c = g.vertex_at(Site::new(1, 1)).unwrap();
        let sampler = GffSampler::new(&g, &[g.special().unwrap()]).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|r| sampler.sample(split_seed(1, r)).value(c)).collect();
        let v = variance(&xs);
        let se = v * (2.0 / xs.len() as f64).sqrt();
        assert!((v - 0.25).abs() < 3.0 * se, "{v}");
    }

    #[test]
    fn zero_set_is_exact() {
        let g = LatticeGraph::build_torus(5).unwrap();
        let u = [VertexId(0), VertexId(7), VertexId(13)];
        for seed in 0..50 {
            let s = sample_gff(&g, &u, seed).unwrap();
            for &z in &u {
                assert_eq!(s.value(z).to_bits(), 0f64.to_bits());
            }
        }
        assert!(matches!(sample_gff(&g, &[], 0), Err(Error::NoZeroSet)));
    }

    #[test]
    fn markov_field_conditional_variance() {
        let g = LatticeGraph::build_box(7, Boundary::Wired).unwrap();
        let sampler = GffSampler::new(&g, &[g.special().unwrap()]).unwrap();
        let v = g.vertex_at(Site::new(3, 3)).unwrap();
        let nbrs = g.neighbors(v).unwrap().to_vec();
        let n = 100_000;
        let mut own = Vec::with_capacity(n);
        let mut avg = Vec::with_capacity(n);
        for r in 0..n as u64 {
            let s = sampler.sample(split_seed(2, r));
            own.push(s.value(v));
            avg.push(nbrs.iter().map(|&u| s.value(u)).sum::<f64>() / 4.0);
        }
        let resid: Vec<f64> = own.iter().zip(&avg).map(|(a, b)| a - b).collect();
        let var = variance(&resid);
        assert!((var - 0.25).abs() < 3.0 * var * (2.0 / n as f64).sqrt(), "{var}");
        let fit = crate::stats::fit_line(&avg, &own).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.02, "{}", fit.slope);
    }

    #[test]
    fn squared_field_covariance() {
        let g = LatticeGraph::build_box(7, Boundary::Wired).unwrap();
        let u = [g.special().unwrap()];
        let sol = solve_green(&g, &u).unwrap();
        let x = g.vertex_at(Site::new(3, 3)).unwrap();
        let y = g.vertex_at(Site::new(4, 3)).unwrap();
        let k = sol.normalized_row(x)[y.index()];
        let sampler = GffSampler::new(&g, &u).unwrap();
        let n = 200_000;
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for r in 0..n as u64 {
            let s = sampler.sample(split_seed(3, r));
            a.push(s.value(x).powi(2));
            b.push(s.value(y).powi(2));
        }
        let (ma, mb) = (mean(&a), mean(&b));
        let prods: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).collect();
        let c = mean(&prods);
        let se = (variance(&prods) / n as f64).sqrt();
        assert!((c - 2.0 * k * k).abs() < 3.0 * se, "{c} vs {}", 2.0 * k * k);
    }

    #[test]
    fn bz_values() {
        assert_abs_diff_eq!(bz_prediction(1024).unwrap(), 4.6949, epsilon = 1e-3);
        assert_abs_diff_eq!(bz_prediction(16).unwrap(), 1.7720, epsilon = 1e-3);
        assert!(matches!(bz_prediction(15), Err(Error::Domain(_))));
        let mut prev = bz_prediction(16).unwrap();
        for n in 17..2000 {
            let v = bz_prediction(n).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn max_of_three_box() {
        let m = max_statistics(3, 100_000, 5).unwrap();
        let se = m.std.unwrap() / (m.reps as f64).sqrt();
        assert!((m.mean - 0.19947).abs() < 3.0 * se, "{}", m.mean);
        let one = max_statistics(3, 1, 5).unwrap();
        assert!(one.std.is_none());
        assert!(max_statistics(2, 10, 0).is_err());
    }

    #[test]
    fn detection_trivial_cases() {
        let g = LatticeGraph::build_box(3, Boundary::Wired).unwrap();
        let c = g.vertex_at(Site::new(1, 1)).unwrap();
        let s = sample_gff(&g, &[g.special().unwrap()], 3).unwrap();
        let d = detection_event(&g, &s, &[c], 0.0);
        assert!(d.occurred);
        assert_eq!(d.witness, Some(c));
        assert!(!detection_event(&g, &s, &[], 0.0).occurred);
    }

    #[test]
    fn domination_trivial_cases() {
        let g = LatticeGraph::build_box(7, Boundary::Wired).unwrap();
        let v0 = g.special().unwrap();
        let region: Vec<VertexId> = g.vertices().filter(|&v| v != v0).collect();
        let r = quantile_domination_check(&g, &[v0], &[v0], &region, -1e9, 200, 1).unwrap();
        assert_eq!((r.p_smaller, r.p_larger, r.ratio), (1.0, 1.0, 1.0));
        let r = quantile_domination_check(&g, &[v0], &[v0], &region, 0.8, 20_000, 1).unwrap();
        assert!((r.ratio - 1.0).abs() < 3.0 * r.ratio_se, "{r:?}");
        let x = region[0];
        assert!(matches!(
            quantile_domination_check(&g, &[v0, x], &[v0], &region, 0.0, 10, 1),
            Err(Error::InvalidNesting(_))
        ));
    }
}
