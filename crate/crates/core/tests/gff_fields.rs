use covertime_core::exactsolve::solve_green;
use covertime_core::gff::*;
use covertime_core::rng::split_seed;
use covertime_core::stats::{mean, proportion_se, variance};
use covertime_core::{Boundary, LatticeGraph, Site, VertexId};

fn wired(n: usize) -> (LatticeGraph, VertexId) {
    let g = LatticeGraph::build_box(n, Boundary::Wired).unwrap();
    let v0 = g.special().unwrap();
    (g, v0)
}

#[test]
fn covariance_matches_green_on_nine_box() {
    let (g, v0) = wired(9);
    let sol = solve_green(&g, &[v0]).unwrap();
    let sampler = GffSampler::new(&g, &[v0]).unwrap();
    let reps = 100_000;
    let samples: Vec<Vec<f64>> = (0..reps).map(|r| sampler.sample(split_seed(40, r)).values).collect();
    let interior: Vec<VertexId> = g.vertices().filter(|&v| v != v0).collect();
    let c = g.vertex_at(Site::new(4, 4)).unwrap();
    let corner = g.vertex_at(Site::new(1, 1)).unwrap();
    for x in [c, corner] {
        let k = sol.normalized_row(x);
        for &y in &interior {
            let prods: Vec<f64> = samples.iter().map(|s| s[x.index()] * s[y.index()]).collect();
            let se = (variance(&prods) / reps as f64).sqrt();
            let est = mean(&prods);
            assert!((est - k[y.index()]).abs() < 4.0 * se, "({x:?}, {y:?}): {est} vs {}", k[y.index()]);
        }
    }
}

#[test]
fn expected_maximum_grows_like_leading_term() {
    let m64 = max_statistics(64, 400, 41).unwrap().mean;
    let m128 = max_statistics(128, 400, 42).unwrap().mean;
    let unit = (2.0 / std::f64::consts::PI).sqrt() * 2f64.ln();
    let d = m128 - m64;
    assert!(d >= 0.5 * unit && d <= 1.5 * unit, "m64 = {m64}, m128 = {m128}");
}

#[test]
fn detection_probability_dominates_scaled_tail() {
    let (g, v0) = wired(32);
    let interior: Vec<VertexId> = g.vertices().filter(|&v| v != v0).collect();
    let level = max_statistics(32, 2_000, 43).unwrap().mean;
    let sampler = GffSampler::new(&g, &[v0]).unwrap();
    let reps = 20_000;
    let (mut detected, mut above) = (0usize, 0usize);
    for r in 0..reps {
        let s = sampler.sample(split_seed(44, r));
        detected += detection_event(&g, &s, &interior, level).occurred as usize;
        above += (s.sup() >= level) as usize;
    }
    let pd = detected as f64 / reps as f64;
    let bound = above as f64 / reps as f64 / 4e4;
    assert!(pd >= bound - 3.0 * proportion_se(pd, reps as usize), "{pd} vs {bound}");
    assert!(detected > 0);
}

#[test]
fn domination_with_middle_row_zeroed() {
    let (g, v0) = wired(17);
    let mut u2 = vec![v0];
    u2.extend((1..16).map(|x| g.vertex_at(Site::new(x, 8)).unwrap()));
    let region: Vec<VertexId> = g
        .vertices()
        .filter(|&v| g.site(v).is_some_and(|s| s.y >= 12 && s.y < 16 && s.x > 0 && s.x < 16))
        .collect();
    let r = quantile_domination_check(&g, &[v0], &u2, &region, 1.0, 20_000, 45).unwrap();
    assert!(!r.violated, "{r:?}");
    assert!(r.p_smaller > 0.0 && r.p_larger > 0.0);
    assert!(r.ratio >= 0.5 - 3.0 * r.ratio_se);
}

#[test]
fn nesting_is_checked() {
    let (g, v0) = wired(5);
    let x = g.vertex_at(Site::new(2, 2)).unwrap();
    let region = vec![x];
    assert!(quantile_domination_check(&g, &[v0, x], &[v0], &region, 0.0, 10, 0).is_err());
}
