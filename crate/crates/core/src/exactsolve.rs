//! Exact Green functions, effective resistances and harmonic measures by
//! sparse Cholesky solves, plus the closed-form approximations they are
//! compared against.
//!
//! Conventions. For an absorbing set `U`, the Green function counts visits of
//! the discrete-time walk to `y` from step 0 up to (not including) the hitting
//! time of `U`:
//!
//! ```text
//! G_U(x, y) = E_x #{ 0 <= k < tau_U : S_k = y }
//! ```
//!
//! With `D - A` the graph Laplacian restricted to `V \ U`, `G_U = (D - A)^{-1} D`,
//! so `G_U(x, y) / d_y` is symmetric. That normalized matrix is both the
//! covariance of the free field with zero set `U` and the matrix of effective
//! resistances on the diagonal: `R_eff(x, U) = G_U(x, x) / d_x`.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::{disk_sites, outer_boundary, Boundary, GraphKind, LatticeGraph, Site, VertexId};
use crate::linalg::EnvelopeCholesky;

const ABSORBED: u32 = u32::MAX;

/// The Dirichlet Laplacian of a graph with a fixed absorbing set, factored.
#[derive(Debug)]
pub struct DirichletSystem {
    absorbing: Vec<VertexId>,
    index: Vec<u32>,
    free: Vec<VertexId>,
    factor: EnvelopeCholesky,
}

impl DirichletSystem {
    pub fn new(g: &LatticeGraph, absorbing: &[VertexId]) -> Result<Self> {
        if absorbing.is_empty() {
            return Err(Error::NoAbsorbingSet);
        }
        let mut index = vec![0u32; g.num_vertices()];
        for &u in absorbing {
            if !g.contains(u) {
                return Err(Error::NotFound(format!("vertex {}", u.0)));
            }
            index[u.index()] = ABSORBED;
        }
        let mut free = Vec::with_capacity(g.num_vertices());
        for v in g.vertices() {
            if index[v.index()] != ABSORBED {
                index[v.index()] = free.len() as u32;
                free.push(v);
            }
        }
        let rows: Vec<Vec<(usize, f64)>> = free
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut row = vec![(i, g.degree(v) as f64)];
                for &u in g.adjacent(v) {
                    let j = index[u.index()];
                    if j != ABSORBED && (j as usize) < i {
                        row.push((j as usize, -1.0));
                    }
                }
                row
            })
            .collect();
        let factor = EnvelopeCholesky::factor(&rows)?;
        let mut absorbing = absorbing.to_vec();
        absorbing.sort();
        absorbing.dedup();
        Ok(DirichletSystem {
            absorbing,
            index,
            free,
            factor,
        })
    }

    pub fn absorbing(&self) -> &[VertexId] {
        &self.absorbing
    }

    pub fn free(&self) -> &[VertexId] {
        &self.free
    }

    pub fn is_absorbing(&self, v: VertexId) -> bool {
        self.index[v.index()] == ABSORBED
    }

    /// Position of `v` among the free vertices.
    pub fn free_index(&self, v: VertexId) -> Option<usize> {
        match self.index[v.index()] {
            ABSORBED => None,
            i => Some(i as usize),
        }
    }

    pub fn envelope_size(&self) -> usize {
        self.factor.envelope_size()
    }

    /// Solves `(D - A) x = b` in place on free-vertex coordinates.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.factor.solve(b);
    }

    /// Row `K(v, .)` of `(D - A)^{-1}` in free coordinates.
    pub fn unit_solve(&self, v: VertexId) -> Option<Vec<f64>> {
        let i = self.free_index(v)?;
        let mut b = vec![0.0; self.free.len()];
        b[i] = 1.0;
        self.factor.solve(&mut b);
        Some(b)
    }

    /// Scatters free coordinates back onto all vertices, zero on `U`.
    pub fn lift(&self, n_vertices: usize, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n_vertices];
        for (&v, &x) in self.free.iter().zip(values) {
            out[v.index()] = x;
        }
        out
    }

    /// One exact draw of the field with covariance `(D - A)^{-1}`: with
    /// `D - A = L L^T`, `L^{-T} z` has covariance `(L L^T)^{-1}`.
    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.free.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.factor.backward(&mut z);
        z
    }
}

type CacheKey = (u64, Vec<VertexId>);

/// Read-mostly cache of factored Dirichlet systems, bounded by the total
/// number of stored factor entries.
pub struct FactorCache {
    budget: usize,
    inner: RwLock<CacheInner>,
}

#[derive(Default)]
struct CacheInner {
    map: HashMap<CacheKey, Arc<DirichletSystem>>,
    order: VecDeque<CacheKey>,
    used: usize,
}

impl FactorCache {
    pub fn new(budget: usize) -> Self {
        FactorCache {
            budget,
            inner: RwLock::new(CacheInner::default()),
        }
    }

    pub fn get_or_factor(
        &self,
        g: &LatticeGraph,
        absorbing: &[VertexId],
    ) -> Result<Arc<DirichletSystem>> {
        let mut key_set = absorbing.to_vec();
        key_set.sort();
        key_set.dedup();
        let key = (g.fingerprint(), key_set);
        if let Some(hit) = self.inner.read().unwrap().map.get(&key) {
            return Ok(Arc::clone(hit));
        }
        let system = Arc::new(DirichletSystem::new(g, absorbing)?);
        let size = system.envelope_size();
        let mut inner = self.inner.write().unwrap();
        if let Some(hit) = inner.map.get(&key) {
            return Ok(Arc::clone(hit));
        }
        while inner.used + size > self.budget {
            let Some(old) = inner.order.pop_front() else { break };
            if let Some(evicted) = inner.map.remove(&old) {
                inner.used -= evicted.envelope_size();
            }
        }
        if size <= self.budget {
            inner.used += size;
            inner.order.push_back(key.clone());
            inner.map.insert(key, Arc::clone(&system));
        }
        Ok(system)
    }
}

/// Process-wide cache used by the convenience entry points (~200 MB of
/// factor entries at most).
pub fn global_cache() -> &'static FactorCache {
    static CACHE: OnceLock<FactorCache> = OnceLock::new();
    CACHE.get_or_init(|| FactorCache::new(25_000_000))
}

pub fn dirichlet_system(g: &LatticeGraph, absorbing: &[VertexId]) -> Result<Arc<DirichletSystem>> {
    global_cache().get_or_factor(g, absorbing)
}

/// Green function and effective resistances for a graph and absorbing set.
/// Entries are produced on demand from the cached factorization.
pub struct GreenSolution<'g> {
    graph: &'g LatticeGraph,
    system: Arc<DirichletSystem>,
}

pub fn solve_green<'g>(g: &'g LatticeGraph, absorbing: &[VertexId]) -> Result<GreenSolution<'g>> {
    Ok(GreenSolution {
        graph: g,
        system: dirichlet_system(g, absorbing)?,
    })
}

impl<'g> GreenSolution<'g> {
    pub fn graph(&self) -> &'g LatticeGraph {
        self.graph
    }

    pub fn absorbing(&self) -> &[VertexId] {
        self.system.absorbing()
    }

    pub fn system(&self) -> &Arc<DirichletSystem> {
        &self.system
    }

    /// `G_U(x, y) / d_y` for all `y` (the free-field covariance row).
    pub fn normalized_row(&self, x: VertexId) -> Vec<f64> {
        match self.system.unit_solve(x) {
            Some(k) => self.system.lift(self.graph.num_vertices(), &k),
            None => vec![0.0; self.graph.num_vertices()],
        }
    }

    /// `G_U(x, .)` over all vertices.
    pub fn green_row(&self, x: VertexId) -> Vec<f64> {
        let mut row = self.normalized_row(x);
        for (v, g) in row.iter_mut().enumerate() {
            *g *= self.graph.degree(VertexId(v as u32)) as f64;
        }
        row
    }

    pub fn green(&self, x: VertexId, y: VertexId) -> f64 {
        if self.system.is_absorbing(y) {
            return 0.0;
        }
        self.normalized_row(x)[y.index()] * self.graph.degree(y) as f64
    }

    /// `R_eff(x, U) = G_U(x, x) / d_x`.
    pub fn resistance(&self, x: VertexId) -> f64 {
        match (self.system.unit_solve(x), self.system.free_index(x)) {
            (Some(k), Some(i)) => k[i],
            _ => 0.0,
        }
    }

    /// Dense `G_U`, only sensible for small graphs.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.graph.vertices().map(|x| self.green_row(x)).collect()
    }
}

/// Hitting distribution `H_B(x, .)` of the walk from `source` on `targets`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicMeasure {
    pub source: VertexId,
    pub targets: Vec<VertexId>,
    pub weights: Vec<f64>,
}

impl HarmonicMeasure {
    /// Empirical measure from hit counts over `targets`.
    pub fn from_counts(source: VertexId, targets: Vec<VertexId>, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if targets.len() != counts.len() || total == 0 {
            return Err(Error::IncompatibleMeasures(
                "counts do not match targets or are all zero".into(),
            ));
        }
        let weights = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(HarmonicMeasure {
            source,
            targets,
            weights,
        })
    }

    pub fn weight(&self, y: VertexId) -> f64 {
        self.targets
            .iter()
            .position(|&t| t == y)
            .map_or(0.0, |i| self.weights[i])
    }
}

/// Exact harmonic measure from one linear solve: with `K = (D - A)^{-1}` on
/// `V \ B`, `H_B(x, y) = sum_z K(x, z) A(z, y)`.
pub fn harmonic_measure(g: &LatticeGraph, x: VertexId, targets: &[VertexId]) -> Result<HarmonicMeasure> {
    if targets.is_empty() {
        return Err(Error::NoTarget);
    }
    if !g.contains(x) {
        return Err(Error::NotFound(format!("vertex {}", x.0)));
    }
    let mut targets = targets.to_vec();
    targets.sort();
    targets.dedup();
    if let Ok(i) = targets.binary_search(&x) {
        let mut weights = vec![0.0; targets.len()];
        weights[i] = 1.0;
        return Ok(HarmonicMeasure {
            source: x,
            targets,
            weights,
        });
    }
    let system = dirichlet_system(g, &targets)?;
    let k = system.unit_solve(x).expect("source is free");
    let weights = targets
        .iter()
        .map(|&y| {
            g.adjacent(y)
                .iter()
                .filter_map(|&z| system.free_index(z))
                .map(|i| k[i])
                .sum::<f64>()
        })
        .collect();
    Ok(HarmonicMeasure {
        source: x,
        targets,
        weights,
    })
}

/// The harmonic function equal to `values` on `boundary`, over all vertices.
pub fn harmonic_extension(g: &LatticeGraph, boundary: &[VertexId], values: &[f64]) -> Result<Vec<f64>> {
    if boundary.len() != values.len() {
        return Err(Error::InvalidParameters(
            "boundary and values differ in length".into(),
        ));
    }
    let system = dirichlet_system(g, boundary)?;
    let mut full = vec![0.0; g.num_vertices()];
    for (&b, &v) in boundary.iter().zip(values) {
        full[b.index()] = v;
    }
    let mut rhs = vec![0.0; system.free().len()];
    for (i, &v) in system.free().iter().enumerate() {
        rhs[i] = g
            .adjacent(v)
            .iter()
            .filter(|u| system.is_absorbing(**u))
            .map(|u| full[u.index()])
            .sum();
    }
    system.solve_in_place(&mut rhs);
    for (&v, &h) in system.free().iter().zip(&rhs) {
        full[v.index()] = h;
    }
    Ok(full)
}

/// `P_x(tau_hit < tau_avoid)` for every vertex `x`.
pub fn hitting_probability(g: &LatticeGraph, hit: &[VertexId], avoid: &[VertexId]) -> Result<Vec<f64>> {
    if hit.is_empty() {
        return Err(Error::NoTarget);
    }
    if hit.iter().any(|h| avoid.contains(h)) {
        return Err(Error::InvalidRegions("hit and avoid sets overlap".into()));
    }
    let boundary: Vec<VertexId> = hit.iter().chain(avoid).copied().collect();
    let values: Vec<f64> = hit
        .iter()
        .map(|_| 1.0)
        .chain(avoid.iter().map(|_| 0.0))
        .collect();
    harmonic_extension(g, &boundary, &values)
}

/// `||mu - nu||_TV = (1/2) sum |mu - nu|` for measures on the same target set.
pub fn harmonic_tv_distance(a: &HarmonicMeasure, b: &HarmonicMeasure) -> Result<f64> {
    let mut ta = a.targets.clone();
    let mut tb = b.targets.clone();
    ta.sort();
    tb.sort();
    if ta != tb {
        return Err(Error::IncompatibleMeasures("target sets differ".into()));
    }
    let total: f64 = a
        .targets
        .iter()
        .zip(&a.weights)
        .map(|(&y, &w)| (w - b.weight(y)).abs())
        .sum();
    Ok((0.5 * total).clamp(0.0, 1.0))
}

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `(2 gamma + ln 8) / pi`.
pub fn potential_kernel_constant() -> f64 {
    (2.0 * EULER_GAMMA + 8f64.ln()) / std::f64::consts::PI
}

/// Asymptotic expansion of the potential kernel including the anisotropic
/// `|x|^{-2}` correction: `(2/pi) ln|x| + (2 gamma + ln 8)/pi - cos(4 theta) / (6 pi |x|^2)`.
pub fn potential_kernel_asymptotic(x: Site) -> f64 {
    if x == Site::new(0, 0) {
        return 0.0;
    }
    let (a, b) = (x.x as f64, x.y as f64);
    let r2 = a * a + b * b;
    let cos4 = (a.powi(4) - 6.0 * a * a * b * b + b.powi(4)) / (r2 * r2);
    let pi = std::f64::consts::PI;
    (2.0 / pi) * 0.5 * r2.ln() + potential_kernel_constant() - cos4 / (6.0 * pi * r2)
}

/// Potential kernel of the simple random walk on Z^2, `a(0) = 0`.
///
/// Inside `radius` the values come from the Dirichlet problem "harmonic off
/// the origin, zero at the origin" on a square slightly larger than the disk,
/// with asymptotic boundary data; outside it the expansion is used directly.
pub struct PotentialKernel {
    radius: usize,
    half: i64,
    table: Vec<f64>,
}

pub const DEFAULT_KERNEL_RADIUS: usize = 64;

impl PotentialKernel {
    pub fn new(radius: usize) -> Result<Self> {
        let half = radius as i64 + 8;
        let side = (2 * half + 1) as usize;
        let g = LatticeGraph::build_box(side, Boundary::Free)?;
        let shift = Site::new(half, half);
        let mut boundary = Vec::new();
        let mut values = Vec::new();
        for v in g.vertices() {
            let s = g.site(v).expect("free box") - shift;
            if s.x.abs() == half || s.y.abs() == half || s == Site::new(0, 0) {
                boundary.push(v);
                values.push(potential_kernel_asymptotic(s));
            }
        }
        let table = harmonic_extension(&g, &boundary, &values)?;
        Ok(PotentialKernel {
            radius,
            half,
            table,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn value(&self, x: Site) -> f64 {
        if x.norm() <= self.radius as f64 {
            let side = 2 * self.half + 1;
            self.table[((x.y + self.half) * side + x.x + self.half) as usize]
        } else {
            potential_kernel_asymptotic(x)
        }
    }
}

pub fn default_kernel() -> &'static PotentialKernel {
    static KERNEL: OnceLock<PotentialKernel> = OnceLock::new();
    KERNEL.get_or_init(|| PotentialKernel::new(DEFAULT_KERNEL_RADIUS).expect("kernel table"))
}

pub fn potential_kernel(x: Site) -> f64 {
    default_kernel().value(x)
}

/// Second route to the wired-box Green function:
/// `G(x, y) = E_x a(S_tau - y) - a(x - y)` with `tau` the hitting time of the
/// outer ring. The exit distribution of `x` is computed once.
pub struct KernelGreen {
    side: usize,
    source: Site,
    exits: Vec<(Site, f64)>,
}

impl KernelGreen {
    pub fn new(side: usize, source: Site) -> Result<Self> {
        let g = LatticeGraph::build_box(side, Boundary::Free)?;
        let last = side as i64 - 1;
        let on_ring = |s: Site| s.x == 0 || s.y == 0 || s.x == last || s.y == last;
        let x = g
            .vertex_at(source)
            .ok_or_else(|| Error::NotFound(format!("site {source}")))?;
        if on_ring(source) {
            return Ok(KernelGreen {
                side,
                source,
                exits: Vec::new(),
            });
        }
        let ring: Vec<VertexId> = g
            .vertices()
            .filter(|&v| on_ring(g.site(v).unwrap()))
            .collect();
        let h = harmonic_measure(&g, x, &ring)?;
        let exits = h
            .targets
            .iter()
            .zip(&h.weights)
            .map(|(&v, &w)| (g.site(v).unwrap(), w))
            .collect();
        Ok(KernelGreen {
            side,
            source,
            exits,
        })
    }

    pub fn green(&self, y: Site, kernel: &PotentialKernel) -> Result<f64> {
        let last = self.side as i64 - 1;
        if y.x < 0 || y.y < 0 || y.x > last || y.y > last {
            return Err(Error::NotFound(format!("site {y}")));
        }
        if self.exits.is_empty() || y.x == 0 || y.y == 0 || y.x == last || y.y == last {
            return Ok(0.0);
        }
        let expected: f64 = self.exits.iter().map(|&(z, w)| w * kernel.value(z - y)).sum();
        Ok(expected - kernel.value(self.source - y))
    }
}

pub fn green_via_kernel(g: &LatticeGraph, x: Site, y: Site) -> Result<f64> {
    if g.kind() != GraphKind::WiredBox {
        return Err(Error::InvalidParameters(
            "kernel route needs a wired box".into(),
        ));
    }
    KernelGreen::new(g.side(), x)?.green(y, default_kernel())
}

/// Leading terms of the Green function (free-field normalization) of the walk
/// killed on entering the disk `C_n`:
/// `(1/2pi)(ln|y| - ln|x - y|) + (1/2pi)(ln|x| - ln n)`.
/// The neglected remainder is O(1).
pub fn green_disk_approx(x: Site, y: Site, n: f64) -> Result<f64> {
    let origin = Site::new(0, 0);
    if x == y || x == origin || y == origin {
        return Err(Error::Domain(format!(
            "formula is singular at x = {x}, y = {y}"
        )));
    }
    let c = 1.0 / (2.0 * std::f64::consts::PI);
    Ok(c * (y.norm().ln() - x.dist(y).ln()) + c * (x.norm().ln() - n.ln()))
}

/// Leading term `(ln|x| - ln m) / (ln n - ln m)` of the probability that the
/// walk from `x` leaves `C_n` before entering `C_m`.
pub fn annulus_escape_prob(x: Site, m: f64, n: f64) -> Result<f64> {
    let r = x.norm();
    if !(m > 0.0 && m < n) || r < m || r > n {
        return Err(Error::Domain(format!(
            "|x| = {r:.3} is outside [m, n] = [{m}, {n}]"
        )));
    }
    Ok((r.ln() - m.ln()) / (n.ln() - m.ln()))
}

/// Exact escape probabilities for every site with `m < |x| <= n`, by one
/// Dirichlet solve on `C_n` plus its outer boundary.
pub fn annulus_escape_exact(m: f64, n: f64) -> Result<Vec<(Site, f64)>> {
    if !(m > 0.0 && m < n) {
        return Err(Error::Domain(format!("need 0 < m < n, got m = {m}, n = {n}")));
    }
    let disk = disk_sites(Site::new(0, 0), n);
    let ring = outer_boundary(&disk);
    let g = LatticeGraph::region(disk.iter().copied().chain(ring.iter().copied()))?;
    let mut boundary = Vec::new();
    let mut values = Vec::new();
    for &s in &ring {
        boundary.push(g.vertex_at(s).unwrap());
        values.push(1.0);
    }
    for &s in disk.iter().filter(|s| s.norm() <= m) {
        boundary.push(g.vertex_at(s).unwrap());
        values.push(0.0);
    }
    let h = harmonic_extension(&g, &boundary, &values)?;
    Ok(disk
        .into_iter()
        .filter(|s| s.norm() > m)
        .map(|s| (s, h[g.vertex_at(s).unwrap().index()]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Effective resistance by repeated star-mesh elimination on a dense
    /// conductance matrix, independent of the Cholesky route.
    fn reduced_resistance(g: &LatticeGraph, x: VertexId, ground: &[VertexId]) -> f64 {
        let n = g.num_vertices();
        // node n is the merged ground
        let mut c = vec![vec![0.0; n + 1]; n + 1];
        let map = |v: VertexId| if ground.contains(&v) { n } else { v.index() };
        for v in g.vertices() {
            for &u in g.adjacent(v) {
                let (a, b) = (map(v), map(u));
                if a != b {
                    c[a][b] += 0.5;
                }
            }
        }
        // adjacency was visited from both ends
        for a in 0..=n {
            for b in 0..a {
                let s = c[a][b] + c[b][a];
                c[a][b] = s;
                c[b][a] = s;
            }
        }
        let keep = [x.index(), n];
        for k in 0..n {
            if keep.contains(&k) || ground.contains(&VertexId(k as u32)) {
                continue;
            }
            let total: f64 = (0..=n).filter(|&j| j != k).map(|j| c[k][j]).sum();
            if total == 0.0 {
                continue;
            }
            let row: Vec<f64> = c[k].clone();
            for a in 0..=n {
                if a == k || row[a] == 0.0 {
                    continue;
                }
                for b in 0..=n {
                    if b == k || b == a || row[b] == 0.0 {
                        continue;
                    }
                    c[a][b] += row[a] * row[b] / total;
                }
            }
            for j in 0..=n {
                c[k][j] = 0.0;
                c[j][k] = 0.0;
            }
        }
        1.0 / c[x.index()][n]
    }

    #[test]
    fn wired_three_center() {
        let g = LatticeGraph::build_box(3, Boundary::Wired).unwrap();
        let v0 = g.special().unwrap();
        let c = g.vertex_at(Site::new(1, 1)).unwrap();
        let sol = solve_green(&g, &[v0]).unwrap();
        assert_abs_diff_eq!(sol.green(c, c), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.resistance(c), 0.25, epsilon = 1e-12);
        assert_eq!(sol.green(v0, c), 0.0);
        assert_eq!(sol.green(c, v0), 0.0);
        assert!(matches!(solve_green(&g, &[]), Err(Error::NoAbsorbingSet)));
    }

    #[test]
    fn wired_five_center_matches_network_reduction() {
        let g = LatticeGraph::build_box(5, Boundary::Wired).unwrap();
        let v0 = g.special().unwrap();
        let c = g.vertex_at(Site::new(2, 2)).unwrap();
        let sol = solve_green(&g, &[v0]).unwrap();
        let r = reduced_resistance(&g, c, &[v0]);
        assert_abs_diff_eq!(sol.green(c, c), 4.0 * r, epsilon = 1e-10);
    }

    #[test]
    fn small_graphs_resistance_exhaustive() {
        let graphs = vec![
            LatticeGraph::build_box(5, Boundary::Wired).unwrap(),
            LatticeGraph::build_box(4, Boundary::Free).unwrap(),
            LatticeGraph::build_torus(4).unwrap(),
            LatticeGraph::wired_path(5).unwrap(),
            LatticeGraph::single_edge(),
        ];
        for g in &graphs {
            assert!(g.num_vertices() <= 20);
            let ground = [VertexId(g.num_vertices() as u32 - 1)];
            let sol = solve_green(g, &ground).unwrap();
            for x in g.vertices().filter(|v| *v != ground[0]) {
                let r = reduced_resistance(g, x, &ground);
                assert_abs_diff_eq!(sol.resistance(x), r, epsilon = 1e-9);
                assert_abs_diff_eq!(
                    sol.resistance(x),
                    sol.green(x, x) / g.degree(x) as f64,
                    epsilon = 1e-12
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn normalized_green_is_symmetric(n in 4usize..9, picks in proptest::collection::vec(0usize..64, 1..4)) {
            let g = LatticeGraph::build_box(n, Boundary::Free).unwrap();
            let u: Vec<VertexId> = picks.iter().map(|p| VertexId((p % g.num_vertices()) as u32)).collect();
            let sol = solve_green(&g, &u).unwrap();
            let m = sol.matrix();
            for x in g.vertices() {
                for y in g.vertices() {
                    let (dx, dy) = (g.degree(x) as f64, g.degree(y) as f64);
                    prop_assert!((m[x.index()][y.index()] / dy - m[y.index()][x.index()] / dx).abs() < 1e-9);
                    if u.contains(&x) || u.contains(&y) {
                        prop_assert_eq!(m[x.index()][y.index()], 0.0);
                    } else if x == y {
                        prop_assert!(m[x.index()][x.index()] > 0.0);
                    }
                }
            }
        }

        #[test]
        fn harmonic_rows_are_probability_vectors(n in 4usize..10, sx in 0usize..100, picks in proptest::collection::vec(0usize..100, 1..5)) {
            let g = LatticeGraph::build_box(n, Boundary::Free).unwrap();
            let b: Vec<VertexId> = picks.iter().map(|p| VertexId((p % g.num_vertices()) as u32)).collect();
            let x = VertexId((sx % g.num_vertices()) as u32);
            let h = harmonic_measure(&g, x, &b).unwrap();
            let total: f64 = h.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            prop_assert!(h.weights.iter().all(|&w| w >= -1e-14));
        }
    }

    #[test]
    fn harmonic_measure_edge_cases() {
        let g = LatticeGraph::build_box(5, Boundary::Free).unwrap();
        let x = g.vertex_at(Site::new(1, 1)).unwrap();
        let y = g.vertex_at(Site::new(3, 3)).unwrap();
        let h = harmonic_measure(&g, x, &[x, y]).unwrap();
        assert_eq!(h.weight(x), 1.0);
        assert_eq!(h.weight(y), 0.0);
        assert!(matches!(harmonic_measure(&g, x, &[]), Err(Error::NoTarget)));
    }

    #[test]
    fn harmonic_measure_on_circle_is_symmetric() {
        let g = LatticeGraph::ball_with_boundary(12.0).unwrap();
        let disk = disk_sites(Site::new(0, 0), 12.0);
        let ring: Vec<VertexId> = outer_boundary(&disk)
            .into_iter()
            .map(|s| g.vertex_at(s).unwrap())
            .collect();
        let o = g.vertex_at(Site::new(0, 0)).unwrap();
        let h = harmonic_measure(&g, o, &ring).unwrap();
        let w = |s: Site| h.weight(g.vertex_at(s).unwrap());
        for &v in &ring {
            let s = g.site(v).unwrap();
            let images = [
                Site::new(-s.x, s.y),
                Site::new(s.x, -s.y),
                Site::new(s.y, s.x),
                Site::new(-s.y, -s.x),
                Site::new(-s.x, -s.y),
            ];
            for t in images {
                assert_abs_diff_eq!(w(s), w(t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tv_distance_basics() {
        let t = vec![VertexId(0), VertexId(1)];
        let a = HarmonicMeasure {
            source: VertexId(5),
            targets: t.clone(),
            weights: vec![1.0, 0.0],
        };
        let b = HarmonicMeasure {
            source: VertexId(6),
            targets: t,
            weights: vec![0.0, 1.0],
        };
        assert_eq!(harmonic_tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(harmonic_tv_distance(&a, &b).unwrap(), 1.0);
        let c = HarmonicMeasure {
            source: VertexId(6),
            targets: vec![VertexId(0)],
            weights: vec![1.0],
        };
        assert!(matches!(
            harmonic_tv_distance(&a, &c),
            Err(Error::IncompatibleMeasures(_))
        ));
    }

    #[test]
    fn potential_kernel_classical_values() {
        assert_eq!(potential_kernel(Site::new(0, 0)), 0.0);
        assert_abs_diff_eq!(potential_kernel(Site::new(1, 0)), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(
            potential_kernel(Site::new(1, 1)),
            4.0 / std::f64::consts::PI,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(
            potential_kernel(Site::new(2, 0)),
            4.0 - 8.0 / std::f64::consts::PI,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(potential_kernel_constant(), 1.029_374_5, epsilon = 1e-6);
    }

    #[test]
    fn potential_kernel_regimes_agree_at_switchover() {
        let k = default_kernel();
        for s in [Site::new(64, 0), Site::new(45, 45), Site::new(60, 22), Site::new(0, -64)] {
            let exact = k.value(s);
            assert!(s.norm() <= 64.0);
            assert!((exact - potential_kernel_asymptotic(s)).abs() < 1e-4);
        }
    }

    #[test]
    fn green_via_kernel_matches_solve() {
        for n in [21usize, 41] {
            let g = LatticeGraph::build_box(n, Boundary::Wired).unwrap();
            let sol = solve_green(&g, &[g.special().unwrap()]).unwrap();
            let c = Site::new(n as i64 / 2, n as i64 / 2);
            let cv = g.vertex_at(c).unwrap();
            for y in [c, c + Site::new(1, 0), c + Site::new(3, -5)] {
                let yv = g.vertex_at(y).unwrap();
                let via = green_via_kernel(&g, c, y).unwrap();
                assert!((via - sol.green(cv, yv)).abs() < 1e-3);
            }
        }
        let g = LatticeGraph::build_box(21, Boundary::Wired).unwrap();
        assert_eq!(green_via_kernel(&g, Site::new(0, 4), Site::new(10, 10)).unwrap(), 0.0);
    }

    #[test]
    fn disk_formula_cases() {
        let n = 10.0;
        let x = Site::new(10, 0);
        let y = Site::new(5, 8); // |y| ~ 9.43
        let r = (n * n - 100.0f64).sqrt();
        let _ = r;
        // |x| = |y| = |x - y| = n at the vertices of an equilateral-ish triple
        // is not a lattice configuration; use the formula's own algebra.
        let v = green_disk_approx(x, y, n).unwrap();
        let expected = (y.norm().ln() - x.dist(y).ln() + x.norm().ln() - n.ln())
            / (2.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(v, expected, epsilon = 1e-15);
        // symmetric in x and y
        assert_abs_diff_eq!(v, green_disk_approx(y, x, n).unwrap(), epsilon = 1e-15);
        assert!(green_disk_approx(x, x, n).is_err());
        assert!(green_disk_approx(Site::new(0, 0), x, n).is_err());
    }

    #[test]
    fn annulus_formula_values() {
        assert_abs_diff_eq!(annulus_escape_prob(Site::new(40, 0), 5.0, 40.0).unwrap(), 1.0);
        assert_abs_diff_eq!(annulus_escape_prob(Site::new(5, 0), 5.0, 40.0).unwrap(), 0.0);
        // sqrt(4 * 64) = 16
        assert_abs_diff_eq!(
            annulus_escape_prob(Site::new(16, 0), 4.0, 64.0).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(annulus_escape_prob(Site::new(2, 0), 4.0, 64.0).is_err());
    }

    #[test]
    fn annulus_exact_is_monotone_probability() {
        let vals = annulus_escape_exact(3.0, 15.0).unwrap();
        assert!(vals.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
        let near = vals.iter().find(|(s, _)| *s == Site::new(4, 0)).unwrap().1;
        let far = vals.iter().find(|(s, _)| *s == Site::new(14, 0)).unwrap().1;
        assert!(near < far);
    }

    #[test]
    fn hitting_probability_rejects_overlap() {
        let g = LatticeGraph::build_box(4, Boundary::Free).unwrap();
        assert!(hitting_probability(&g, &[VertexId(0)], &[VertexId(0)]).is_err());
    }
}
