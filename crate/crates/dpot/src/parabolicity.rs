//! p-capacity, p-parabolicity, parabolic dimension and Hardy weights.

use crate::error::{Error, Result};
use crate::fit::{ls_slope, tail_decay_exponent};
use crate::geometry::{GraphWithBoundary, GrowthExponents};
use crate::green::{generalized_top_eigenvalue, GreenSolver};
use crate::linalg::{conjugate_gradient, CsrMatrix};
use crate::num::{max_abs, Real};
use crate::operators::{assemble_schrodinger, Potential};
use nalgebra::{Cholesky, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Regularization of the reweighting, relative to the initial jump scale.
pub const IRLS_DELTA: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 500;
/// Step factor applied while the energy increases.
pub const IRLS_DAMPING: f64 = 0.5;
/// Free-vertex count up to which IRLS systems are factorized densely.
const IRLS_DENSE: usize = 1500;
/// Capacity is hyperbolic when the resistance increments decay faster than R^{-1-margin}.
pub const RESISTANCE_DECAY_THRESHOLD: f64 = 1.0;
/// Slack factor for the capacity/volume constants.
pub const EQUIVALENCE_SLACK: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult<T> {
    pub value: f64,
    /// On all vertices; 1 on the target, 0 on the boundary.
    pub minimizer: Vec<T>,
    pub p: f64,
    pub iterations: usize,
    pub final_decrement: f64,
    pub converged: bool,
}

/// Σ_e w_e |du(e)|^p
pub fn p_energy<T: Real>(g: &GraphWithBoundary<T>, u: &[T], p: f64) -> f64 {
    g.edges()
        .iter()
        .map(|&(a, b, w)| w.as_f64() * (u[a] - u[b]).abs().as_f64().powf(p))
        .sum()
}

/// Weighted Dirichlet solve: minimize Σ c_e (du)² with u fixed off `free`.
struct FreeSystem {
    free: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl FreeSystem {
    fn solve<T: Real>(&self, g: &GraphWithBoundary<T>, c: &[T], u: &[T]) -> Result<Vec<T>> {
        let n = self.free.len();
        let mut trip = Vec::with_capacity(4 * g.edges().len());
        let mut rhs = vec![T::zero(); n];
        for (e, &(a, b, _)) in g.edges().iter().enumerate() {
            let w = c[e];
            match (self.position[a], self.position[b]) {
                (Some(i), Some(j)) => {
                    trip.push((i, i, w));
                    trip.push((j, j, w));
                    trip.push((i, j, -w));
                    trip.push((j, i, -w));
                }
                (Some(i), None) => {
                    trip.push((i, i, w));
                    rhs[i] += w * u[b];
                }
                (None, Some(j)) => {
                    trip.push((j, j, w));
                    rhs[j] += w * u[a];
                }
                (None, None) => {}
            }
        }
        let m = CsrMatrix::from_triplets(n, n, trip);
        let x = if n <= IRLS_DENSE {
            let chol = Cholesky::new(m.to_dense()).ok_or_else(|| Error::Solver("capacity system is singular".into()))?;
            chol.solve(&DVector::from_column_slice(&rhs)).as_slice().to_vec()
        } else {
            let x0: Vec<T> = self.free.iter().map(|&x| u[x]).collect();
            conjugate_gradient(&m, &rhs, Some(&x0), T::lit(T::SOLVE_TOL).max(T::lit(1e-12)), 20 * n + 1000)?
        };
        let mut out = u.to_vec();
        for (i, &v) in self.free.iter().enumerate() {
            out[v] = x[i].max(T::zero()).min(T::one());
        }
        Ok(out)
    }
}

/// Cap_p(target) = min Σ w|du|^p over u = 1 on target, 0 on the boundary.
pub fn p_capacity<T: Real>(g: &GraphWithBoundary<T>, target: &[usize], p: f64, tol: f64) -> Result<CapacityResult<T>> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(format!("p = {p} must exceed 1")));
    }
    if target.is_empty() {
        return Err(Error::Precondition("capacity target is empty".into()));
    }
    if let Some(&x) = target.iter().find(|&&x| x >= g.num_vertices() || !g.is_interior(x)) {
        return Err(Error::Precondition(format!("target vertex {x} is not interior")));
    }
    let mut u = vec![T::zero(); g.num_vertices()];
    for &x in target {
        u[x] = T::one();
    }
    let free: Vec<usize> = g.interior().iter().copied().filter(|&x| u[x] == T::zero()).collect();
    let mut position = vec![None; g.num_vertices()];
    for (i, &x) in free.iter().enumerate() {
        position[x] = Some(i);
    }
    let sys = FreeSystem { free, position };
    if sys.free.is_empty() {
        return Ok(CapacityResult { value: p_energy(g, &u, p), minimizer: u, p, iterations: 0, final_decrement: 0.0, converged: true });
    }
    let ones: Vec<T> = g.edges().iter().map(|e| e.2).collect();
    u = sys.solve(g, &ones, &u)?;
    let mut energy = p_energy(g, &u, p);
    if (p - 2.0).abs() < 1e-15 {
        return Ok(CapacityResult { value: energy, minimizer: u, p, iterations: 1, final_decrement: 0.0, converged: true });
    }
    let jump = g.edges().iter().map(|&(a, b, _)| (u[a] - u[b]).abs().as_f64()).fold(0.0, f64::max);
    let delta2 = (IRLS_DELTA * jump).powi(2);
    let mut iterations = 1;
    let mut decrement = f64::INFINITY;
    let mut converged = false;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let c: Vec<T> = g
            .edges()
            .iter()
            .map(|&(a, b, w)| {
                let d = (u[a] - u[b]).as_f64();
                w * T::lit((d * d + delta2).powf((p - 2.0) / 2.0))
            })
            .collect();
        let v = sys.solve(g, &c, &u)?;
        let mut step = 1.0 / (p - 1.0);
        let (mut cand, mut e_new);
        loop {
            cand = u.iter().zip(&v).map(|(&a, &b)| (a + T::lit(step) * (b - a)).max(T::zero()).min(T::one())).collect::<Vec<T>>();
            e_new = p_energy(g, &cand, p);
            if e_new <= energy || step < 1e-8 {
                break;
            }
            step *= IRLS_DAMPING;
        }
        if e_new > energy {
            decrement = 0.0;
            converged = true;
            break;
        }
        decrement = (energy - e_new) / energy;
        u = cand;
        energy = e_new;
        if decrement < tol {
            converged = true;
            break;
        }
    }
    Ok(CapacityResult { value: energy, minimizer: u, p, iterations, final_decrement: decrement, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parabolicity {
    Parabolic,
    Hyperbolic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicityTrace {
    pub p: f64,
    pub radii: Vec<f64>,
    pub capacities: Vec<f64>,
    /// Cap^{−1/(p−1)}
    pub resistances: Vec<f64>,
    /// Decay exponent of the resistance increments over the last half.
    pub increment_decay: f64,
    /// None when inconclusive.
    pub classification: Option<Parabolicity>,
}

/// Unit ball at the origin intersected with the interior.
pub fn unit_ball<T: Real>(g: &GraphWithBoundary<T>) -> Vec<usize> {
    let d = g.hop_distances(g.origin());
    g.interior().iter().copied().filter(|&x| d[x] <= 1).collect()
}

/// Classify from Cap_p(B(o,1)) along truncations of increasing radius.
pub fn classify_p_parabolic<T: Real>(family: &[(f64, GraphWithBoundary<T>)], p: f64) -> Result<ParabolicityTrace> {
    if family.len() < 3 {
        return Err(Error::Precondition("need at least three truncations".into()));
    }
    if family.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidRadii("family radii must increase".into()));
    }
    let results: Vec<CapacityResult<T>> =
        family.par_iter().map(|(_, g)| p_capacity(g, &unit_ball(g), p, 1e-10)).collect::<Result<_>>()?;
    let radii: Vec<f64> = family.iter().map(|f| f.0).collect();
    let capacities: Vec<f64> = results.iter().map(|r| r.value).collect();
    let resistances: Vec<f64> = capacities.iter().map(|c| c.powf(-1.0 / (p - 1.0))).collect();
    let mut mids = Vec::new();
    let mut logs = Vec::new();
    let mut monotone = true;
    for i in 1..radii.len() {
        let d = (resistances[i] - resistances[i - 1]) / (radii[i] - radii[i - 1]);
        if !(d > 0.0) {
            monotone = false;
            continue;
        }
        mids.push((radii[i] * radii[i - 1]).sqrt());
        logs.push(d.ln());
    }
    let decay = if mids.len() >= 2 { tail_decay_exponent(&mids, &logs) } else { f64::NAN };
    let conclusive = monotone && decay.is_finite() && results.iter().all(|r| r.converged);
    let classification = conclusive.then(|| {
        if decay > RESISTANCE_DECAY_THRESHOLD {
            Parabolicity::Hyperbolic
        } else {
            Parabolicity::Parabolic
        }
    });
    Ok(ParabolicityTrace { p, radii, capacities, resistances, increment_decay: decay, classification })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicDimension {
    pub kappa: f64,
    /// (largest hyperbolic p, smallest parabolic p)
    pub bracket: (f64, f64),
    pub evidence: Vec<ParabolicityTrace>,
    /// [ν′ − 0.5, ν + 0.5] when exponents were supplied.
    pub growth_window: Option<(f64, f64)>,
    pub within_growth_window: Option<bool>,
    /// Set when a probe was inconclusive and bisection stopped early.
    pub stopped_early: bool,
    /// False when both endpoints share a class; the bracket is then
    /// (1, p_min) or (p_max, ∞).
    pub bracketed: bool,
}

/// Bisection on p between a hyperbolic and a parabolic endpoint.
pub fn parabolic_dimension<T: Real>(
    family: &[(f64, GraphWithBoundary<T>)],
    p_range: (f64, f64),
    steps: usize,
    exponents: Option<&GrowthExponents>,
) -> Result<ParabolicDimension> {
    let lo = classify_p_parabolic(family, p_range.0)?;
    let hi = classify_p_parabolic(family, p_range.1)?;
    let growth_window = exponents.map(|e| (e.nu_prime - 0.5, e.nu + 0.5));
    let open = match (lo.classification, hi.classification) {
        (Some(Parabolicity::Hyperbolic), Some(Parabolicity::Parabolic)) => None,
        (Some(Parabolicity::Parabolic), Some(Parabolicity::Parabolic)) => Some((1.0, p_range.0)),
        (Some(Parabolicity::Hyperbolic), Some(Parabolicity::Hyperbolic)) => Some((p_range.1, f64::INFINITY)),
        (a, b) => {
            return Err(Error::Precondition(format!("endpoint classifications {a:?} / {b:?} do not bracket")));
        }
    };
    if let Some(bracket) = open {
        let kappa = if bracket.1.is_finite() { bracket.1 } else { bracket.0 };
        return Ok(ParabolicDimension {
            kappa,
            bracket,
            evidence: vec![lo, hi],
            growth_window,
            within_growth_window: growth_window.map(|(a, b)| kappa >= a && kappa <= b),
            stopped_early: false,
            bracketed: false,
        });
    }
    let mut bracket = p_range;
    let mut evidence = vec![lo, hi];
    let mut stopped_early = false;
    for _ in 0..steps {
        let mid = 0.5 * (bracket.0 + bracket.1);
        let tr = classify_p_parabolic(family, mid)?;
        let class = tr.classification;
        evidence.push(tr);
        match class {
            Some(Parabolicity::Hyperbolic) => bracket.0 = mid,
            Some(Parabolicity::Parabolic) => bracket.1 = mid,
            None => {
                stopped_early = true;
                break;
            }
        }
    }
    let kappa = 0.5 * (bracket.0 + bracket.1);
    let within_growth_window = growth_window.map(|(a, b)| kappa >= a && kappa <= b);
    Ok(ParabolicDimension { kappa, bracket, evidence, growth_window, within_growth_window, stopped_early, bracketed: true })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityVolumeReport {
    pub p: f64,
    /// (r, Cap_p(B(o,r))·r^p / V(o,r))
    pub capacity_constants: Vec<(usize, f64)>,
    /// max/min of the capacity constants
    pub capacity_spread: f64,
    /// min over r in the grid and r < t ≤ inner radius of (V(o,t)/V(o,r)) / (t/r)^p
    pub volume_constant: f64,
    pub capacity_holds: bool,
    pub volume_holds: bool,
    pub consistent: bool,
}

/// Best constants of the capacity lower bound and of the relative volume
/// growth bound at the origin over `radii`.
pub fn capacity_volume_equivalence<T: Real>(
    g: &GraphWithBoundary<T>,
    p_list: &[f64],
    radii: &[usize],
) -> Result<Vec<CapacityVolumeReport>> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] == 0 {
        return Err(Error::InvalidRadii("need at least two increasing positive radii".into()));
    }
    let limit = g.inner_radius();
    if *radii.last().unwrap() > limit {
        return Err(Error::InvalidRadii(format!("radius {} exceeds the inner radius {limit}", radii.last().unwrap())));
    }
    let o = g.origin();
    let d = g.hop_distances(o);
    let profile: Vec<f64> = g.volume_profile(o).iter().map(|v| v.as_f64()).collect();
    let vols: Vec<f64> = radii.iter().map(|&r| profile[r]).collect();
    p_list
        .iter()
        .map(|&p| {
            let caps: Vec<(usize, f64)> = radii
                .par_iter()
                .zip(&vols)
                .map(|(&r, &v)| {
                    let ball: Vec<usize> = g.interior().iter().copied().filter(|&x| d[x] <= r).collect();
                    let c = p_capacity(g, &ball, p, 1e-10)?.value;
                    Ok((r, c * (r as f64).powf(p) / v))
                })
                .collect::<Result<_>>()?;
            let (mn, mx) = caps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(c.1), b.max(c.1)));
            let mut vc = f64::INFINITY;
            for (&r, &vr) in radii.iter().zip(&vols) {
                for t in r + 1..=limit {
                    vc = vc.min((profile[t] / vr) / (t as f64 / r as f64).powf(p));
                }
            }
            let capacity_holds = mx / mn <= EQUIVALENCE_SLACK;
            let volume_holds = vc >= 1.0 / EQUIVALENCE_SLACK;
            Ok(CapacityVolumeReport {
                p,
                capacity_constants: caps,
                capacity_spread: mx / mn,
                volume_constant: vc,
                capacity_holds,
                volume_holds,
                consistent: capacity_holds == volume_holds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardyReport<T> {
    pub p: f64,
    /// ρ(x) = max_y∼x |log h(x) − log h(y)|^p on the interior, 0 elsewhere.
    pub rho: Vec<T>,
    /// Exact maximal ratio for p = 2, best found ratio otherwise.
    pub lambda: f64,
    pub exact: bool,
    /// Largest ratio over trials after scaling ρ by 1/λ.
    pub max_scaled_trial_ratio: f64,
    pub trials: usize,
}

fn vertex_gradient_energy<T: Real>(g: &GraphWithBoundary<T>, u: &[T], p: f64) -> f64 {
    (0..g.num_vertices())
        .map(|x| {
            let m = g.measure()[x].as_f64();
            let s: f64 = g.neighbors(x).iter().map(|&(y, w)| w.as_f64() * (u[x] - u[y]).as_f64().powi(2)).sum();
            m * (0.5 * s / m).sqrt().powf(p)
        })
        .sum()
}

fn hardy_ratio<T: Real>(g: &GraphWithBoundary<T>, rho: &[T], u: &[T], p: f64) -> f64 {
    let num: f64 = g
        .interior()
        .iter()
        .map(|&x| rho[x].as_f64() * u[x].abs().as_f64().powf(p) * g.measure()[x].as_f64())
        .sum();
    let den = vertex_gradient_energy(g, u, p);
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Hardy weight ρ = |d log h|^p and its optimal constant.
pub fn hardy_from_h<T: Real>(
    g: &GraphWithBoundary<T>,
    h: &[T],
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<HardyReport<T>> {
    if let Some(x) = h.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::NotPositiveFunction { vertex: x });
    }
    let mut rho = vec![T::zero(); g.num_vertices()];
    for &x in g.interior() {
        let lx = h[x].ln();
        rho[x] = g.neighbors(x).iter().fold(T::zero(), |m, &(y, _)| m.max((lx - h[y].ln()).abs()));
        rho[x] = T::lit(rho[x].as_f64().powf(p));
    }
    if max_abs(&rho) == T::zero() {
        return Err(Error::Degenerate("h is constant on every interior edge".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trial_fns: Vec<Vec<T>> = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut u = vec![T::zero(); g.num_vertices()];
        for &x in g.interior() {
            u[x] = T::lit(rng.gen::<f64>());
        }
        trial_fns.push(u);
    }
    let exact = (p - 2.0).abs() < 1e-15;
    let lambda = if exact {
        let solver = GreenSolver::new(&assemble_schrodinger(g, &Potential::zero(g.num_vertices())))?;
        generalized_top_eigenvalue(&solver, &Potential::new(rho.clone()))?.as_f64()
    } else {
        let mut best = 0.0f64;
        for u in &trial_fns {
            best = best.max(ascend(g, &rho, u.clone(), p));
        }
        best
    };
    let scaled: Vec<T> = rho.iter().map(|&r| r / T::lit(lambda)).collect();
    let max_scaled_trial_ratio = trial_fns.iter().map(|u| hardy_ratio(g, &scaled, u, p)).fold(0.0, f64::max);
    Ok(HardyReport { p, rho, lambda, exact, max_scaled_trial_ratio, trials })
}

/// Coordinate-wise multiplicative ascent on the Hardy ratio.
fn ascend<T: Real>(g: &GraphWithBoundary<T>, rho: &[T], mut u: Vec<T>, p: f64) -> f64 {
    let mut best = hardy_ratio(g, rho, &u, p);
    for _ in 0..10 {
        let mut improved = false;
        for &x in g.interior() {
            for f in [1.25, 0.8] {
                let old = u[x];
                u[x] = old * T::lit(f);
                let r = hardy_ratio(g, rho, &u, p);
                if r > best {
                    best = r;
                    improved = true;
                    break;
                }
                u[x] = old;
            }
        }
        if !improved {
            break;
        }
    }
    best
}

/// Resistance exponent fit used by the classifier, exposed for reports.
pub fn resistance_slope(radii: &[f64], resistances: &[f64]) -> f64 {
    let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = resistances.iter().map(|r| r.ln()).collect();
    ls_slope(&x, &y)
}

/// Dense p = 2 capacity of a single vertex from the Green function, for cross-checks.
pub fn capacity_from_green<T: Real>(g: &GraphWithBoundary<T>, x: usize) -> Result<f64> {
    let op = assemble_schrodinger(g, &Potential::zero(g.num_vertices()));
    let solver = GreenSolver::new(&op)?;
    let i = g.interior_index(x).ok_or_else(|| Error::Precondition(format!("vertex {x} is not interior")))?;
    let mut e = vec![T::zero(); op.dim()];
    e[i] = T::one();
    let col = solver.solve_stiffness(&e)?;
    Ok(1.0 / col[i].as_f64())
}
