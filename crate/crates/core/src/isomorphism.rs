//! Monte Carlo check of the generalized second Ray-Knight isomorphism
//!
//! ```text
//! L^x_{tau(t)} + eta_x^2 / 2  =(law)=  (eta_x + sqrt(2t))^2 / 2
//! ```
//!
//! with the walk started at `v0`, the field vanishing at `v0`, and walk and
//! field independent on the left. Only per-vertex marginals are compared.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gff::GffSampler;
use crate::lattice::{Boundary, LatticeGraph, VertexId};
use crate::rng::{rng_from_seed, split_seed};
use crate::stats::{ks_two_sample, mean, variance};
use crate::walker::{run_until_inverse_local, StopReason, WalkOptions};

pub const DEFAULT_KS_MAX: f64 = 0.01;
/// Below this many replicas the default KS threshold is not meaningful.
pub const LOW_POWER_REPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphPreset {
    SingleEdge,
    WiredPath3,
    Wired5,
    Torus6,
}

impl GraphPreset {
    pub const ALL: [GraphPreset; 4] = [
        GraphPreset::SingleEdge,
        GraphPreset::WiredPath3,
        GraphPreset::Wired5,
        GraphPreset::Torus6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GraphPreset::SingleEdge => "single-edge",
            GraphPreset::WiredPath3 => "wired-path-3",
            GraphPreset::Wired5 => "wired-5",
            GraphPreset::Torus6 => "torus-6",
        }
    }

    /// The graph and its marked vertex. On the torus the mark is site (0, 0).
    pub fn build(self) -> Result<(LatticeGraph, VertexId)> {
        let g = match self {
            GraphPreset::SingleEdge => LatticeGraph::single_edge(),
            GraphPreset::WiredPath3 => LatticeGraph::wired_path(3)?,
            GraphPreset::Wired5 => LatticeGraph::build_box(5, Boundary::Wired)?,
            GraphPreset::Torus6 => LatticeGraph::build_torus(6)?,
        };
        let v0 = g.special().unwrap_or(VertexId(0));
        Ok((g, v0))
    }
}

impl FromStr for GraphPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraphPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::NotFound(format!("graph preset '{s}'")))
    }
}

fn check_level(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("t = {t} must be positive")))
    }
}

/// Streams of replica seed `s`: walk `split_seed(s, 0)`, left field
/// `split_seed(s, 1)`, right field `split_seed(s, 2)`.
fn lhs_with(g: &LatticeGraph, field: &GffSampler, v0: VertexId, t: f64, seed: u64) -> Result<Vec<f64>> {
    let rec = run_until_inverse_local(g, v0, t, split_seed(seed, 0), WalkOptions::default())?;
    if rec.stop_reason == StopReason::StepBudget {
        return Err(Error::NumericalFailure("step budget exhausted".into()));
    }
    let eta = field.sample(split_seed(seed, 1));
    Ok(rec
        .local_time
        .iter()
        .zip(&eta.values)
        .map(|(l, e)| l + 0.5 * e * e)
        .collect())
}

fn rhs_with(field: &GffSampler, t: f64, seed: u64) -> Vec<f64> {
    let a = (2.0 * t).sqrt();
    field
        .sample(split_seed(seed, 2))
        .values
        .iter()
        // On the zero set the value is t; the squared root would round.
        .map(|&e| if e == 0.0 { t } else { 0.5 * (e + a).powi(2) })
        .collect()
}

/// `L^x_{tau(t)} + eta_x^2 / 2` for every vertex, walk and field independent.
pub fn sample_lhs(g: &LatticeGraph, v0: VertexId, t: f64, seed: u64) -> Result<Vec<f64>> {
    check_level(t)?;
    lhs_with(g, &GffSampler::new(g, &[v0])?, v0, t, seed)
}

/// `(eta_x + sqrt(2t))^2 / 2` for every vertex.
pub fn sample_rhs(g: &LatticeGraph, v0: VertexId, t: f64, seed: u64) -> Result<Vec<f64>> {
    check_level(t)?;
    Ok(rhs_with(&GffSampler::new(g, &[v0])?, t, seed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertexReport {
    pub vertex: VertexId,
    pub ks_statistic: f64,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub lhs_var: f64,
    pub rhs_var: f64,
    pub se_mean: f64,
}

impl VertexReport {
    pub fn mean_ok(&self) -> bool {
        (self.lhs_mean - self.rhs_mean).abs() <= 3.0 * self.se_mean
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsomorphismReport {
    pub v0: VertexId,
    pub t: f64,
    pub reps: usize,
    pub ks_max: f64,
    pub per_vertex: Vec<VertexReport>,
    pub pass: bool,
    pub low_power: bool,
}

impl IsomorphismReport {
    pub fn max_ks(&self) -> f64 {
        self.per_vertex.iter().map(|r| r.ks_statistic).fold(0.0, f64::max)
    }
}

/// Draws `reps` independent samples of each side; replica `r` uses seed
/// `split_seed(seed, r)`.
pub fn verify_identity(
    g: &LatticeGraph,
    v0: VertexId,
    t: f64,
    reps: usize,
    seed: u64,
    ks_max: f64,
) -> Result<IsomorphismReport> {
    check_level(t)?;
    if reps < 2 {
        return Err(Error::InvalidParameters("need at least two replicas".into()));
    }
    let field = GffSampler::new(g, &[v0])?;
    let nv = g.num_vertices();
    let rows: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let s = split_seed(seed, r);
            let mut row = lhs_with(g, &field, v0, t, s)?;
            row.extend(rhs_with(&field, t, s));
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut per_vertex = Vec::with_capacity(nv);
    for v in g.vertices() {
        let lhs: Vec<f64> = rows.iter().map(|row| row[v.index()]).collect();
        let rhs: Vec<f64> = rows.iter().map(|row| row[nv + v.index()]).collect();
        let (lhs_var, rhs_var) = (variance(&lhs), variance(&rhs));
        per_vertex.push(VertexReport {
            vertex: v,
            ks_statistic: ks_two_sample(&lhs, &rhs)?.statistic,
            lhs_mean: mean(&lhs),
            rhs_mean: mean(&rhs),
            lhs_var,
            rhs_var,
            se_mean: ((lhs_var + rhs_var) / reps as f64).sqrt(),
        });
    }
    let pass = per_vertex
        .iter()
        .all(|r| r.ks_statistic < ks_max && r.mean_ok());
    Ok(IsomorphismReport {
        v0,
        t,
        reps,
        ks_max,
        per_vertex,
        pass,
        low_power: reps < LOW_POWER_REPS,
    })
}

/// `sum_{i <= N} X_i` with `N ~ Poisson(t / r)` and `X_i ~ Exp(mean r)`.
pub fn compound_marginal<R: Rng + ?Sized>(t: f64, r: f64, rng: &mut R) -> Result<f64> {
    if !(t > 0.0 && r > 0.0) {
        return Err(Error::Domain(format!("need t > 0 and R > 0, got t = {t}, R = {r}")));
    }
    let count: f64 = Poisson::new(t / r)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    if count == 0.0 {
        return Ok(0.0);
    }
    Ok(Gamma::new(count, r)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng))
}

pub fn compound_marginal_sample(t: f64, r: f64, seed: u64) -> Result<f64> {
    compound_marginal(t, r, &mut rng_from_seed(seed))
}

pub fn compound_marginal_draws(t: f64, r: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..count).map(|_| compound_marginal(t, r, &mut rng)).collect()
}
