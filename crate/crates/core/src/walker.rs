//! Continuous-time simple random walk with local-time accounting.
//!
//! The walk holds an Exp(1) time at each vertex and then jumps to a uniform
//! neighbor, counting parallel edges with their multiplicity. Local time is
//! occupation divided by degree, `L^v = (time at v) / d_v`, so that
//! `sum_v d_v L^v` is the elapsed time.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::lattice::{LatticeGraph, VertexId};
use crate::rng::{rng_from_seed, ReplicaRng};

pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug)]
pub struct WalkOptions {
    /// Maximum number of jumps.
    pub budget: u64,
    /// Keep the visited vertices and holding times.
    pub record_path: bool,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions {
            budget: DEFAULT_BUDGET,
            record_path: false,
        }
    }
}

impl WalkOptions {
    pub fn recording() -> Self {
        WalkOptions {
            record_path: true,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Covered,
    InverseLocalReached,
    StepBudget,
}

/// Embedded-chain positions with the (possibly truncated) holding time spent
/// at each.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub vertices: Vec<VertexId>,
    pub holding: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WalkRecord {
    pub start: VertexId,
    /// The vertex whose local time defines the stopping rule, if any.
    pub anchor: Option<VertexId>,
    pub level: Option<f64>,
    pub local_time: Vec<f64>,
    pub visit_count: Vec<u64>,
    pub elapsed: f64,
    pub stop_reason: StopReason,
    pub tau_cov: Option<f64>,
    pub tau_cov_return: Option<f64>,
    pub steps: u64,
    pub trajectory: Option<Trajectory>,
    pub rng_seed: u64,
}

impl WalkRecord {
    /// `sum_v d_v L^v`.
    pub fn total_occupation(&self, g: &LatticeGraph) -> f64 {
        g.vertices()
            .map(|v| g.degree(v) as f64 * self.local_time[v.index()])
            .sum()
    }

    pub fn local_time_at(&self, v: VertexId) -> f64 {
        self.local_time[v.index()]
    }

    fn trajectory(&self) -> Result<&Trajectory> {
        self.trajectory.as_ref().ok_or(Error::TrajectoryNotRecorded)
    }
}

struct Engine<'g> {
    g: &'g LatticeGraph,
    offsets: &'g [usize],
    targets: &'g [VertexId],
    rng: ReplicaRng,
    occupation: Vec<f64>,
    visits: Vec<u64>,
    seen: usize,
    tau_cov: Option<f64>,
    clock: f64,
    steps: u64,
    path: Option<Trajectory>,
}

impl<'g> Engine<'g> {
    fn new(g: &'g LatticeGraph, seed: u64, record: bool) -> Self {
        let (offsets, targets) = g.csr();
        Engine {
            g,
            offsets,
            targets,
            rng: rng_from_seed(seed),
            occupation: vec![0.0; g.num_vertices()],
            visits: vec![0; g.num_vertices()],
            seen: 0,
            tau_cov: None,
            clock: 0.0,
            steps: 0,
            path: record.then(Trajectory::default),
        }
    }

    #[inline]
    fn arrive(&mut self, v: VertexId) {
        let c = &mut self.visits[v.index()];
        if *c == 0 {
            self.seen += 1;
            if self.seen == self.occupation.len() && self.tau_cov.is_none() {
                self.tau_cov = Some(self.clock);
            }
        }
        *c += 1;
    }

    #[inline]
    fn hold(&mut self, v: VertexId, h: f64) {
        self.occupation[v.index()] += h;
        self.clock += h;
        if let Some(p) = self.path.as_mut() {
            p.vertices.push(v);
            p.holding.push(h);
        }
    }

    #[inline]
    fn draw_hold(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }

    #[inline]
    fn jump(&mut self, v: VertexId) -> VertexId {
        let lo = self.offsets[v.index()];
        let hi = self.offsets[v.index() + 1];
        self.steps += 1;
        self.targets[lo + self.rng.random_range(0..hi - lo)]
    }

    fn finish(
        self,
        start: VertexId,
        anchor: Option<VertexId>,
        level: Option<f64>,
        stop_reason: StopReason,
        tau_cov_return: Option<f64>,
        seed: u64,
    ) -> WalkRecord {
        let local_time = self
            .occupation
            .iter()
            .enumerate()
            .map(|(v, &o)| o / self.g.degree(VertexId(v as u32)).max(1) as f64)
            .collect();
        WalkRecord {
            start,
            anchor,
            level,
            local_time,
            visit_count: self.visits,
            elapsed: self.clock,
            stop_reason,
            tau_cov: self.tau_cov,
            tau_cov_return,
            steps: self.steps,
            trajectory: self.path,
            rng_seed: seed,
        }
    }
}

fn check_vertex(g: &LatticeGraph, v: VertexId) -> Result<()> {
    if g.contains(v) {
        Ok(())
    } else {
        Err(Error::NotFound(format!("vertex {}", v.0)))
    }
}

/// Runs until every vertex has been visited, then on to the first return to
/// `start`. `elapsed` is the cover-and-return time when the budget suffices.
pub fn run_until_cover(
    g: &LatticeGraph,
    start: VertexId,
    seed: u64,
    opts: WalkOptions,
) -> Result<WalkRecord> {
    check_vertex(g, start)?;
    if opts.budget == 0 {
        return Err(Error::InvalidParameters("step budget must be positive".into()));
    }
    let mut e = Engine::new(g, seed, opts.record_path);
    e.arrive(start);
    if g.num_vertices() == 1 {
        return Ok(e.finish(start, None, None, StopReason::Covered, Some(0.0), seed));
    }
    let mut v = start;
    loop {
        if e.steps >= opts.budget {
            return Ok(e.finish(start, None, None, StopReason::StepBudget, None, seed));
        }
        let h = e.draw_hold();
        e.hold(v, h);
        v = e.jump(v);
        e.arrive(v);
        if v == start && e.tau_cov.is_some() {
            let ret = e.clock;
            if let Some(p) = e.path.as_mut() {
                p.vertices.push(v);
                p.holding.push(0.0);
            }
            return Ok(e.finish(start, None, None, StopReason::Covered, Some(ret), seed));
        }
    }
}

/// Runs from `v0` until its local time reaches `t`. The last holding period
/// at `v0` is cut so that `L^{v0} = t` exactly.
pub fn run_until_inverse_local(
    g: &LatticeGraph,
    v0: VertexId,
    t: f64,
    seed: u64,
    opts: WalkOptions,
) -> Result<WalkRecord> {
    check_vertex(g, v0)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameters(format!("local-time level {t} must be positive")));
    }
    if g.degree(v0) == 0 {
        return Err(Error::InvalidParameters("v0 is isolated".into()));
    }
    let mut e = Engine::new(g, seed, opts.record_path);
    let quota = t * g.degree(v0) as f64;
    e.arrive(v0);
    let mut v = v0;
    loop {
        let h = e.draw_hold();
        if v == v0 {
            let left = quota - e.occupation[v0.index()];
            if h >= left {
                e.hold(v, left);
                e.occupation[v0.index()] = quota;
                let mut rec = e.finish(v0, Some(v0), Some(t), StopReason::InverseLocalReached, None, seed);
                rec.local_time[v0.index()] = t;
                return Ok(rec);
            }
        }
        if e.steps >= opts.budget {
            return Ok(e.finish(v0, Some(v0), Some(t), StopReason::StepBudget, None, seed));
        }
        e.hold(v, h);
        v = e.jump(v);
        e.arrive(v);
    }
}

/// Trajectory indices `[start, end]` of a minimal segment from the anchor
/// back to the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Excursion {
    pub start: usize,
    pub end: usize,
}

pub fn excursion_decompose(rec: &WalkRecord, v0: VertexId) -> Result<Vec<Excursion>> {
    let path = rec.trajectory()?;
    let mut out = Vec::new();
    let mut last = None;
    for (i, &v) in path.vertices.iter().enumerate() {
        if v == v0 {
            if let Some(s) = last {
                out.push(Excursion { start: s, end: i });
            }
            last = Some(i);
        }
    }
    Ok(out)
}

/// Distinct vertices touched strictly inside an excursion.
pub fn excursion_hits(rec: &WalkRecord, ex: Excursion) -> Result<Vec<VertexId>> {
    let path = rec.trajectory()?;
    let mut hits: Vec<VertexId> = path.vertices[ex.start + 1..ex.end].to_vec();
    hits.sort();
    hits.dedup();
    Ok(hits)
}

/// Local time at the anchor when each listed excursion began.
pub fn occurrence_times(rec: &WalkRecord, excursions: &[Excursion], indices: &[usize]) -> Result<Vec<f64>> {
    let path = rec.trajectory()?;
    let v0 = rec
        .anchor
        .ok_or_else(|| Error::InvalidParameters("record has no anchor vertex".into()))?;
    let mut clock = Vec::with_capacity(path.vertices.len());
    let mut acc = 0.0;
    for (&v, &h) in path.vertices.iter().zip(&path.holding) {
        if v == v0 {
            acc += h;
        }
        clock.push(acc);
    }
    let d = rec.local_time[v0.index()] / acc.max(f64::MIN_POSITIVE);
    indices
        .iter()
        .map(|&k| {
            let ex = excursions
                .get(k)
                .ok_or_else(|| Error::NotFound(format!("excursion {k}")))?;
            Ok(clock[ex.start] * d)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossingTrace {
    pub inner: Vec<VertexId>,
    pub outer: Vec<VertexId>,
    pub endpoints: Vec<VertexId>,
}

impl CrossingTrace {
    pub fn count(&self) -> usize {
        self.endpoints.len()
    }
}

/// Endpoints of successive minimal inner-to-outer segments.
pub fn crossing_trace(
    g: &LatticeGraph,
    rec: &WalkRecord,
    inner: &[VertexId],
    outer: &[VertexId],
) -> Result<CrossingTrace> {
    let path = rec.trajectory()?;
    if inner.is_empty() || outer.is_empty() {
        return Err(Error::InvalidRegions("inner and outer sets must be nonempty".into()));
    }
    let mut role = vec![0u8; g.num_vertices()];
    for &v in inner {
        check_vertex(g, v)?;
        role[v.index()] = 1;
    }
    for &v in outer {
        check_vertex(g, v)?;
        if role[v.index()] == 1 {
            return Err(Error::InvalidRegions("inner and outer sets overlap".into()));
        }
        role[v.index()] = 2;
    }
    let mut armed = false;
    let mut endpoints = Vec::new();
    for &v in &path.vertices {
        match role[v.index()] {
            1 => armed = true,
            2 if armed => {
                endpoints.push(v);
                armed = false;
            }
            _ => {}
        }
    }
    Ok(CrossingTrace {
        inner: inner.to_vec(),
        outer: outer.to_vec(),
        endpoints,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThinPoint {
    pub occurred: bool,
    pub witness: Option<VertexId>,
}

/// Whether some vertex of `region` was visited at most `threshold` times.
pub fn thin_point_event(rec: &WalkRecord, region: &[VertexId], threshold: i64) -> ThinPoint {
    let witness = region
        .iter()
        .copied()
        .find(|v| (rec.visit_count[v.index()] as i64) <= threshold);
    ThinPoint {
        occurred: witness.is_some(),
        witness,
    }
}

/// Monte Carlo estimate of `P_start(tau_hit < tau_avoid)` with its standard
/// error, using the embedded chain.
pub fn estimate_hit_before(
    g: &LatticeGraph,
    start: VertexId,
    hit: &[VertexId],
    avoid: &[VertexId],
    reps: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    check_vertex(g, start)?;
    if hit.is_empty() || avoid.is_empty() || reps == 0 {
        return Err(Error::InvalidParameters("need hit, avoid and reps > 0".into()));
    }
    let mut role = vec![0u8; g.num_vertices()];
    for &v in avoid {
        role[v.index()] = 2;
    }
    for &v in hit {
        if role[v.index()] == 2 {
            return Err(Error::InvalidRegions("hit and avoid sets overlap".into()));
        }
        role[v.index()] = 1;
    }
    let (offsets, targets) = g.csr();
    let mut rng = rng_from_seed(seed);
    let mut wins = 0u64;
    for _ in 0..reps {
        let mut v = start;
        loop {
            match role[v.index()] {
                1 => {
                    wins += 1;
                    break;
                }
                2 => break,
                _ => {
                    let lo = offsets[v.index()];
                    let hi = offsets[v.index() + 1];
                    v = targets[lo + rng.random_range(0..hi - lo)];
                }
            }
        }
    }
    let p = wins as f64 / reps as f64;
    Ok((p, (p * (1.0 - p) / reps as f64).sqrt()))
}
