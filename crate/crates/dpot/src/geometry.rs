//! Graphs with boundary, hop-metric balls, volume growth and exhaustions.

use crate::error::{Error, Result};
use crate::fit::{log_sum_exp, ls_slope, tail_decay_exponent};
use crate::num::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Default cap on generated vertex counts.
pub const DEFAULT_MAX_VERTICES: usize = 2_000_000;

/// Sentinel for unreachable vertices in distance tables.
pub const UNREACHABLE: usize = usize::MAX;

/// Which discrete geometry to build.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    /// ℤⁿ truncated to the sup-norm box of radius R, one Dirichlet shell.
    Lattice { dimension: usize, radius: usize },
    /// Model space with spheres of size ⌈r^{α−1}⌉.
    Radial { alpha: f64, radius: usize },
    /// Cartesian product of a base geometry with a cycle of length m.
    Product { base: Box<GeometrySpec>, cycle: usize },
}

impl GeometrySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GeometrySpec::Lattice { dimension, radius } => {
                if *dimension < 1 {
                    return Err(Error::InvalidSpec("lattice dimension must be ≥ 1".into()));
                }
                if *radius < 1 {
                    return Err(Error::InvalidSpec("radius must be ≥ 1".into()));
                }
            }
            GeometrySpec::Radial { alpha, radius } => {
                if !(alpha.is_finite() && *alpha > 1.0) {
                    return Err(Error::InvalidSpec("radial alpha must be > 1".into()));
                }
                if *radius < 1 {
                    return Err(Error::InvalidSpec("radius must be ≥ 1".into()));
                }
            }
            GeometrySpec::Product { base, cycle } => {
                if *cycle < 3 {
                    return Err(Error::InvalidSpec("cycle length must be ≥ 3".into()));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Truncation radius R.
    pub fn radius(&self) -> usize {
        match self {
            GeometrySpec::Lattice { radius, .. } | GeometrySpec::Radial { radius, .. } => *radius,
            GeometrySpec::Product { base, .. } => base.radius(),
        }
    }

    /// Same family with a different truncation radius.
    pub fn with_radius(&self, r: usize) -> GeometrySpec {
        match self {
            GeometrySpec::Lattice { dimension, .. } => GeometrySpec::Lattice { dimension: *dimension, radius: r },
            GeometrySpec::Radial { alpha, .. } => GeometrySpec::Radial { alpha: *alpha, radius: r },
            GeometrySpec::Product { base, cycle } => {
                GeometrySpec::Product { base: Box::new(base.with_radius(r)), cycle: *cycle }
            }
        }
    }

    /// Number of vertices the generator will produce.
    pub fn vertex_count(&self) -> Option<usize> {
        match self {
            GeometrySpec::Lattice { dimension, radius } => {
                let side = 2usize.checked_mul(*radius)?.checked_add(3)?;
                side.checked_pow(*dimension as u32)
            }
            GeometrySpec::Radial { alpha, radius } => {
                let mut total = 1usize;
                for r in 1..=radius + 1 {
                    total = total.checked_add(sphere_size(*alpha, r))?;
                }
                Some(total)
            }
            GeometrySpec::Product { base, cycle } => base.vertex_count()?.checked_mul(*cycle),
        }
    }
}

fn sphere_size(alpha: f64, r: usize) -> usize {
    let s = (r as f64).powf(alpha - 1.0);
    (s - 1e-9).ceil().max(1.0) as usize
}

/// Weighted graph with a Dirichlet boundary layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphWithBoundary<T> {
    edges: Vec<(usize, usize, T)>,
    adjacency: Vec<Vec<(usize, T)>>,
    measure: Vec<T>,
    is_interior: Vec<bool>,
    interior: Vec<usize>,
    interior_pos: Vec<usize>,
    origin: usize,
}

impl<T: Real> GraphWithBoundary<T> {
    /// Build a graph from an undirected edge list, checking every invariant.
    pub fn new(
        num_vertices: usize,
        edges: Vec<(usize, usize, T)>,
        measure: Vec<T>,
        is_interior: Vec<bool>,
        origin: usize,
    ) -> Result<Self> {
        if measure.len() != num_vertices || is_interior.len() != num_vertices {
            return Err(Error::InvalidGraph("vertex data length mismatch".into()));
        }
        if let Some(x) = measure.iter().position(|&m| !(m > T::zero())) {
            return Err(Error::InvalidGraph(format!("measure not positive at vertex {x}")));
        }
        if origin >= num_vertices || !is_interior[origin] {
            return Err(Error::InvalidGraph("origin must be an interior vertex".into()));
        }
        let mut adjacency = vec![Vec::new(); num_vertices];
        let mut canon = Vec::with_capacity(edges.len());
        for &(a, b, w) in &edges {
            if a >= num_vertices || b >= num_vertices || a == b {
                return Err(Error::InvalidGraph(format!("bad edge ({a}, {b})")));
            }
            if !(w > T::zero()) {
                return Err(Error::InvalidGraph(format!("conductance not positive on ({a}, {b})")));
            }
            canon.push((a.min(b), a.max(b), w));
        }
        canon.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        if canon.windows(2).any(|p| p[0].0 == p[1].0 && p[0].1 == p[1].1) {
            return Err(Error::InvalidGraph("duplicate edge".into()));
        }
        for &(a, b, w) in &canon {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        let interior: Vec<usize> = (0..num_vertices).filter(|&x| is_interior[x]).collect();
        let mut interior_pos = vec![usize::MAX; num_vertices];
        for (k, &x) in interior.iter().enumerate() {
            interior_pos[x] = k;
        }
        let g = Self { edges: canon, adjacency, measure, is_interior, interior, interior_pos, origin };
        // Interior connectivity.
        let mut seen = vec![false; num_vertices];
        let mut queue = VecDeque::from([origin]);
        seen[origin] = true;
        let mut count = 1;
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &g.adjacency[x] {
                if g.is_interior[y] && !seen[y] {
                    seen[y] = true;
                    count += 1;
                    queue.push_back(y);
                }
            }
        }
        if count != g.interior.len() {
            return Err(Error::InvalidGraph("interior subgraph is not connected".into()));
        }
        // Boundary vertices may sit behind other boundary vertices (lattice corners)
        // but must be reachable.
        if let Some(x) = g.hop_distances(origin).iter().position(|&d| d == UNREACHABLE) {
            return Err(Error::InvalidGraph(format!("boundary vertex {x} is disconnected from the interior")));
        }
        Ok(g)
    }

    pub fn num_vertices(&self) -> usize {
        self.measure.len()
    }

    /// Undirected edges (a < b) with conductances.
    pub fn edges(&self) -> &[(usize, usize, T)] {
        &self.edges
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, T)] {
        &self.adjacency[x]
    }

    pub fn measure(&self) -> &[T] {
        &self.measure
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn is_interior(&self, x: usize) -> bool {
        self.is_interior[x]
    }

    /// Interior vertices in increasing order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&x| !self.is_interior[x]).collect()
    }

    /// Position of an interior vertex in [`Self::interior`].
    pub fn interior_index(&self, x: usize) -> Option<usize> {
        let k = self.interior_pos[x];
        (k != usize::MAX).then_some(k)
    }

    /// Interior measure, in interior order.
    pub fn interior_measure(&self) -> Vec<T> {
        self.interior.iter().map(|&x| self.measure[x]).collect()
    }

    /// Extend an interior vector by zero to all vertices.
    pub fn extend_by_zero(&self, u_int: &[T]) -> Vec<T> {
        let mut u = vec![T::zero(); self.num_vertices()];
        for (k, &x) in self.interior.iter().enumerate() {
            u[x] = u_int[k];
        }
        u
    }

    /// Restrict a vertex function to the interior.
    pub fn restrict(&self, u: &[T]) -> Vec<T> {
        self.interior.iter().map(|&x| u[x]).collect()
    }

    /// Hop distances from `x` over the full graph.
    pub fn hop_distances(&self, x: usize) -> Vec<usize> {
        self.multi_source_distances(&[x])
    }

    pub fn multi_source_distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut d = vec![UNREACHABLE; self.num_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            d[s] = 0;
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            for &(y, _) in &self.adjacency[v] {
                if d[y] == UNREACHABLE {
                    d[y] = d[v] + 1;
                    queue.push_back(y);
                }
            }
        }
        d
    }

    /// Hop distance from each vertex to the nearest boundary vertex.
    pub fn boundary_distances(&self) -> Vec<usize> {
        self.multi_source_distances(&self.boundary())
    }

    /// V(x, r) for integer radii 0..=max, cumulative.
    pub fn volume_profile(&self, x: usize) -> Vec<T> {
        let d = self.hop_distances(x);
        let max = d.iter().filter(|&&v| v != UNREACHABLE).max().copied().unwrap_or(0);
        let mut shell = vec![T::zero(); max + 1];
        for (y, &dy) in d.iter().enumerate() {
            if dy != UNREACHABLE {
                shell[dy] += self.measure[y];
            }
        }
        let mut acc = T::zero();
        shell
            .into_iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect()
    }

    /// Largest r with B(o, r) inside the interior.
    pub fn inner_radius(&self) -> usize {
        let d = self.hop_distances(self.origin);
        self.boundary().iter().map(|&b| d[b]).min().unwrap_or(usize::MAX).saturating_sub(1)
    }

    /// max_{x ∈ interior} d(o, x).
    pub fn max_interior_radius(&self) -> usize {
        let d = self.hop_distances(self.origin);
        self.interior.iter().map(|&x| d[x]).max().unwrap_or(0)
    }

    /// Same vertex set and split with new conductances and measure.
    pub fn reweighted(&self, edge_weights: Vec<T>, measure: Vec<T>) -> Result<Self> {
        let edges = self.edges.iter().zip(edge_weights).map(|(&(a, b, _), w)| (a, b, w)).collect();
        Self::new(self.num_vertices(), edges, measure, self.is_interior.clone(), self.origin)
    }

    /// Convert the scalar type.
    pub fn cast<S: Real>(&self) -> GraphWithBoundary<S> {
        let c = |v: T| S::lit(v.as_f64());
        GraphWithBoundary {
            edges: self.edges.iter().map(|&(a, b, w)| (a, b, c(w))).collect(),
            adjacency: self.adjacency.iter().map(|nb| nb.iter().map(|&(y, w)| (y, c(w))).collect()).collect(),
            measure: self.measure.iter().map(|&m| c(m)).collect(),
            is_interior: self.is_interior.clone(),
            interior: self.interior.clone(),
            interior_pos: self.interior_pos.clone(),
            origin: self.origin,
        }
    }
}

/// V(x, r): μ-volume of the closed hop ball.
pub fn ball_volume<T: Real>(g: &GraphWithBoundary<T>, x: usize, r: f64) -> T {
    let d = g.hop_distances(x);
    d.iter()
        .zip(g.measure())
        .filter(|(&dy, _)| dy != UNREACHABLE && (dy as f64) <= r)
        .fold(T::zero(), |s, (_, &m)| s + m)
}

/// Instantiate a geometry.
pub fn generate_graph<T: Real>(spec: &GeometrySpec, max_vertices: usize) -> Result<GraphWithBoundary<T>> {
    spec.validate()?;
    let count = spec.vertex_count().unwrap_or(usize::MAX);
    if count > max_vertices {
        return Err(Error::ResourceLimit { count, limit: max_vertices });
    }
    match spec {
        GeometrySpec::Lattice { dimension, radius } => lattice(*dimension, *radius),
        GeometrySpec::Radial { alpha, radius } => radial(*alpha, *radius),
        GeometrySpec::Product { base, cycle } => {
            let b = generate_graph::<T>(base, max_vertices)?;
            product(&b, *cycle)
        }
    }
}

fn lattice<T: Real>(n: usize, r: usize) -> Result<GraphWithBoundary<T>> {
    let side = 2 * r + 3;
    let box_size = side.pow(n as u32);
    let lim = (r + 1) as i64;
    let decode = |mut k: usize| -> Vec<i64> {
        let mut c = vec![0i64; n];
        for ci in c.iter_mut() {
            *ci = (k % side) as i64 - lim;
            k /= side;
        }
        c
    };
    let interior: Vec<bool> = (0..box_size).map(|k| decode(k).iter().all(|v| v.abs() < lim)).collect();
    let mut edges = Vec::new();
    let mut stride = 1usize;
    for axis in 0..n {
        for k in 0..box_size {
            if decode(k)[axis] < lim {
                edges.push((k, k + stride, T::one()));
            }
        }
        stride *= side;
    }
    let origin = (0..n).fold(0, |acc, a| acc + lim as usize * side.pow(a as u32));
    let nv = box_size;
    GraphWithBoundary::new(nv, edges, vec![T::one(); nv], interior, origin)
}

fn radial<T: Real>(alpha: f64, r: usize) -> Result<GraphWithBoundary<T>> {
    let mut spheres: Vec<Vec<usize>> = vec![vec![0]];
    let mut nv = 1;
    for k in 1..=r + 1 {
        let s = sphere_size(alpha, k);
        spheres.push((nv..nv + s).collect());
        nv += s;
    }
    let mut edges = Vec::new();
    for k in 0..=r {
        let (a, b) = (spheres[k].len(), spheres[k + 1].len());
        for (j, &child) in spheres[k + 1].iter().enumerate() {
            let parent = spheres[k][j * a / b];
            edges.push((parent, child, T::one()));
        }
    }
    for s in spheres.iter().skip(1) {
        match s.len() {
            0 | 1 => {}
            2 => edges.push((s[0], s[1], T::one())),
            m => {
                for i in 0..m {
                    edges.push((s[i], s[(i + 1) % m], T::one()));
                }
            }
        }
    }
    let boundary_start = spheres[r + 1][0];
    let interior = (0..nv).map(|x| x < boundary_start).collect();
    GraphWithBoundary::new(nv, edges, vec![T::one(); nv], interior, 0)
}

fn product<T: Real>(base: &GraphWithBoundary<T>, m: usize) -> Result<GraphWithBoundary<T>> {
    let nb = base.num_vertices();
    let id = |b: usize, c: usize| b * m + c;
    let mut edges = Vec::new();
    for &(a, b, w) in base.edges() {
        for c in 0..m {
            edges.push((id(a, c), id(b, c), w));
        }
    }
    for b in 0..nb {
        for c in 0..m {
            edges.push((id(b, c), id(b, (c + 1) % m), T::one()));
        }
    }
    let mut measure = Vec::with_capacity(nb * m);
    let mut interior = Vec::with_capacity(nb * m);
    for b in 0..nb {
        for _ in 0..m {
            measure.push(base.measure()[b]);
            interior.push(base.is_interior(b));
        }
    }
    GraphWithBoundary::new(nb * m, edges, measure, interior, id(base.origin(), 0))
}

/// Volume-growth exponents of (D_{ν,ν′}) type.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthExponents {
    pub nu: f64,
    pub nu_prime: f64,
    /// C in C⁻¹(r/s)^ν′ ≤ V(x,r)/V(x,s) ≤ C(r/s)^ν on the sampled pairs.
    pub constant: f64,
    /// ln C: largest log-violation of the envelope bounds.
    pub residual: f64,
    /// Pooled least-squares slope over all sampled pairs.
    pub slope: f64,
    pub samples: usize,
}

/// Sampling controls for [`fit_growth_exponents_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFitOptions {
    pub sample_pairs: usize,
    pub seed: u64,
    /// Number of distinct centres the pairs are spread over.
    pub centers: usize,
    /// Smallest inner radius s.
    pub min_radius: usize,
    /// Largest outer radius r; `None` lets balls reach the boundary.
    pub max_radius: Option<usize>,
    /// Centres are drawn from B(o, center_radius); `None` uses inner_radius/4.
    pub center_radius: Option<usize>,
}

impl GrowthFitOptions {
    pub fn new(sample_pairs: usize, seed: u64) -> Self {
        Self { sample_pairs, seed, centers: 4, min_radius: 3, max_radius: None, center_radius: None }
    }
}

/// Envelope exponents: per-centre least-squares slopes of log V(x,r) − log V(x,s)
/// against log(r/s), then their max and min.
pub fn fit_growth_exponents<T: Real>(g: &GraphWithBoundary<T>, sample_pairs: usize, seed: u64) -> Result<GrowthExponents> {
    fit_growth_exponents_with(g, &GrowthFitOptions::new(sample_pairs, seed))
}

pub fn fit_growth_exponents_with<T: Real>(g: &GraphWithBoundary<T>, opts: &GrowthFitOptions) -> Result<GrowthExponents> {
    if opts.sample_pairs == 0 {
        return Err(Error::Precondition("sample_pairs must be ≥ 1".into()));
    }
    let d_o = g.hop_distances(g.origin());
    let d_b = g.boundary_distances();
    let center_r = opts.center_radius.unwrap_or(g.inner_radius() / 4);
    let s_min = opts.min_radius.max(1);
    let r_cap = |x: usize| opts.max_radius.map_or(d_b[x], |m| m.min(d_b[x]));
    let mut pool: Vec<usize> =
        g.interior().iter().copied().filter(|&x| d_o[x] <= center_r && r_cap(x) > s_min).collect();
    if pool.is_empty() {
        pool.push(g.origin());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut centers = vec![g.origin()];
    pool.retain(|&x| x != g.origin());
    while centers.len() < opts.centers.max(1) && !pool.is_empty() {
        centers.push(pool.swap_remove(rng.gen_range(0..pool.len())));
    }
    let profiles: Vec<Vec<T>> = centers.iter().map(|&x| g.volume_profile(x)).collect();
    let mut pairs: Vec<Vec<(f64, f64)>> = vec![Vec::new(); centers.len()];
    for i in 0..opts.sample_pairs {
        let c = i % centers.len();
        let x = centers[c];
        let r_max = r_cap(x);
        if r_max <= s_min {
            continue;
        }
        let s = rng.gen_range(s_min..r_max);
        let r = rng.gen_range(s + 1..=r_max);
        let prof = &profiles[c];
        let vr = prof[r.min(prof.len() - 1)].as_f64();
        let vs = prof[s.min(prof.len() - 1)].as_f64();
        pairs[c].push(((r as f64 / s as f64).ln(), (vr / vs).ln()));
    }
    let all: Vec<(f64, f64)> = pairs.iter().flatten().copied().collect();
    if all.is_empty() || all.iter().all(|&(_, y)| y == 0.0) {
        return Err(Error::Degenerate("all sampled volumes are equal".into()));
    }
    let ls = |ps: &[(f64, f64)]| {
        let zz: f64 = ps.iter().map(|(z, _)| z * z).sum();
        ps.iter().map(|(z, y)| z * y).sum::<f64>() / zz
    };
    let slopes: Vec<f64> = pairs.iter().filter(|p| !p.is_empty()).map(|p| ls(p)).collect();
    let nu = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let nu_prime = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(nu_prime > 0.0) {
        return Err(Error::Degenerate("non-positive lower growth exponent".into()));
    }
    let residual = all.iter().map(|&(z, y)| (y - nu * z).max(nu_prime * z - y)).fold(0.0, f64::max);
    Ok(GrowthExponents { nu, nu_prime, constant: residual.exp(), residual, slope: ls(&all), samples: all.len() })
}

/// Nested interior hop balls around the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Exhaustion {
    radii: Vec<usize>,
    sets: Vec<Vec<usize>>,
    interior: Vec<usize>,
    dist: Vec<usize>,
    num_vertices: usize,
}

impl Exhaustion {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    /// Ω_k, sorted vertex ids.
    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn contains(&self, k: usize, x: usize) -> bool {
        self.sets[k].binary_search(&x).is_ok()
    }

    /// Ω_k* = interior ∖ Ω_k.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        self.interior.iter().copied().filter(|&x| !self.contains(k, x)).collect()
    }

    /// Indicator of Ω_k on all vertices.
    pub fn indicator<T: Real>(&self, k: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.num_vertices];
        for &x in &self.sets[k] {
            v[x] = T::one();
        }
        v
    }

    /// χ_k: 1 on Ω_k, 0 outside Ω_{k+1} (the interior after the last level),
    /// linear in hop distance in between.
    pub fn cutoff<T: Real>(&self, k: usize) -> Vec<T> {
        let r0 = self.radii[k] as f64;
        let r1 = match self.radii.get(k + 1) {
            Some(&r) => r as f64,
            None => (self.interior.iter().map(|&x| self.dist[x]).max().unwrap_or(0) + 1) as f64,
        };
        let mut chi = vec![T::zero(); self.num_vertices];
        for &x in &self.interior {
            let d = self.dist[x] as f64;
            let v = ((r1 - d) / (r1 - r0)).clamp(0.0, 1.0);
            chi[x] = T::lit(v);
        }
        chi
    }
}

/// Ω_k = interior ∩ B(o, radii[k]).
pub fn build_exhaustion<T: Real>(g: &GraphWithBoundary<T>, radii: &[usize]) -> Result<Exhaustion> {
    if radii.is_empty() {
        return Err(Error::InvalidRadii("empty radius list".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidRadii("radii must be strictly increasing".into()));
    }
    let max_r = g.max_interior_radius();
    if *radii.last().unwrap() > max_r {
        return Err(Error::InvalidRadii(format!("radii exceed interior radius {max_r}")));
    }
    let dist = g.hop_distances(g.origin());
    let sets =
        radii.iter().map(|&r| g.interior().iter().copied().filter(|&x| dist[x] <= r).collect()).collect();
    Ok(Exhaustion {
        radii: radii.to_vec(),
        sets,
        interior: g.interior().to_vec(),
        dist,
        num_vertices: g.num_vertices(),
    })
}

/// Finite-horizon verdict on an infinite series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesVerdict {
    pub converges: bool,
    /// s in summand ≈ t^{−s}, fitted on the last half of the horizon.
    pub decay_exponent: f64,
    /// log of the truncated sum.
    pub log_partial_sum: f64,
}

/// Margin above 1 required of a fitted summand decay exponent.
pub const SERIES_MARGIN: f64 = 0.1;

fn series_verdict(t: &[f64], log_a: &[f64]) -> SeriesVerdict {
    let s = tail_decay_exponent(t, log_a);
    SeriesVerdict { converges: s > 1.0 + SERIES_MARGIN, decay_exponent: s, log_partial_sum: log_sum_exp(log_a) }
}

/// (V_p), (Ṽ_p) and the lower growth constant.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeCriteria {
    pub p: f64,
    pub horizon: usize,
    /// Σ (t / V(o,t))^{1/(p−1)}
    pub vp: SeriesVerdict,
    /// Σ V(o,t)^{−1/p}
    pub tilde_vp: SeriesVerdict,
    /// Best C with V(o,t) ≥ C t^p on [1, horizon].
    pub lower_growth_constant: f64,
}

pub fn volume_criteria<T: Real>(g: &GraphWithBoundary<T>, p: f64, horizon: usize) -> Result<VolumeCriteria> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(format!("p = {p} must exceed 1")));
    }
    let radius = g.inner_radius();
    if horizon > radius || horizon < 2 {
        return Err(Error::HorizonTooLarge { horizon, radius });
    }
    let prof = g.volume_profile(g.origin());
    let t: Vec<f64> = (1..=horizon).map(|k| k as f64).collect();
    let logv: Vec<f64> = (1..=horizon).map(|k| prof[k].as_f64().ln()).collect();
    let log_vp: Vec<f64> = t.iter().zip(&logv).map(|(ti, lv)| (ti.ln() - lv) / (p - 1.0)).collect();
    let log_tvp: Vec<f64> = logv.iter().map(|lv| -lv / p).collect();
    let c = t.iter().zip(&logv).map(|(ti, lv)| (lv - p * ti.ln()).exp()).fold(f64::INFINITY, f64::min);
    Ok(VolumeCriteria {
        p,
        horizon,
        vp: series_verdict(&t, &log_vp),
        tilde_vp: series_verdict(&t, &log_tvp),
        lower_growth_constant: c,
    })
}

/// Least-squares growth exponent of V(o, t) over t ∈ [lo, hi].
pub fn origin_growth_slope<T: Real>(g: &GraphWithBoundary<T>, lo: usize, hi: usize) -> f64 {
    let prof = g.volume_profile(g.origin());
    let hi = hi.min(prof.len() - 1);
    let x: Vec<f64> = (lo..=hi).map(|t| (t as f64).ln()).collect();
    let y: Vec<f64> = (lo..=hi).map(|t| prof[t].as_f64().ln()).collect();
    ls_slope(&x, &y)
}
