//! Discrete Riesz transforms, induced L^p norm estimates, weighted semigroup
//! norms and the boundedness-range experiment.

use crate::error::{Error, Result};
use crate::fit::{classify_trend, growth_ratios, tail_decay_exponent, Trend};
use crate::geometry::{ball_volume, GraphWithBoundary, GrowthExponents};
use crate::green::{generalized_top_eigenvalue, GreenAction, GreenSolver};
use crate::heat::HeatEngine;
use crate::linalg::{lanczos_extreme, lanczos_function, ChebyshevSeries, CsrMatrix, SpdSolver, DENSE_EIGEN_LIMIT};
use crate::num::{dot, max_abs, Real};
use crate::operators::{Potential, SchrodingerOperator};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Values on oriented edges a→b; reversing an edge flips the sign.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFunction<T> {
    edges: Vec<(usize, usize, T)>,
    values: Vec<T>,
}

impl<T: Real> EdgeFunction<T> {
    pub fn new(edges: Vec<(usize, usize, T)>, values: Vec<T>) -> Self {
        assert_eq!(edges.len(), values.len());
        Self { edges, values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Value on x→y, if xy is an edge.
    pub fn value(&self, x: usize, y: usize) -> Option<T> {
        self.edges.iter().zip(&self.values).find_map(|(&(a, b, _), &v)| {
            if (a, b) == (x, y) {
                Some(v)
            } else if (a, b) == (y, x) {
                Some(-v)
            } else {
                None
            }
        })
    }

    /// (Σ_e w_e |f(e)|^p)^{1/p}; p = ∞ gives the max.
    pub fn norm_p(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return max_abs(&self.values).as_f64();
        }
        self.edges
            .iter()
            .zip(&self.values)
            .map(|(e, v)| e.2.as_f64() * v.abs().as_f64().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// d: vertices → edges, (du)(a→b) = u(b) − u(a), over all vertices.
pub fn gradient_matrix<T: Real>(g: &GraphWithBoundary<T>) -> CsrMatrix<T> {
    let mut trip = Vec::with_capacity(2 * g.edges().len());
    for (e, &(a, b, _)) in g.edges().iter().enumerate() {
        trip.push((e, a, -T::one()));
        trip.push((e, b, T::one()));
    }
    CsrMatrix::from_triplets(g.edges().len(), g.num_vertices(), trip)
}

pub fn gradient<T: Real>(g: &GraphWithBoundary<T>, u: &[T]) -> EdgeFunction<T> {
    EdgeFunction::new(g.edges().to_vec(), gradient_matrix(g).mul_vec(u))
}

/// A linear map with its Euclidean transpose.
pub trait LinearMap<T: Real>: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn apply(&self, x: &[T]) -> Result<Vec<T>>;
    fn apply_transpose(&self, y: &[T]) -> Result<Vec<T>>;
    /// Dense matrix when cheaply available.
    fn dense(&self) -> Option<DMatrix<T>> {
        None
    }
}

impl<T: Real> LinearMap<T> for DMatrix<T> {
    fn n_rows(&self) -> usize {
        self.nrows()
    }
    fn n_cols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        Ok((self * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec())
    }
    fn apply_transpose(&self, y: &[T]) -> Result<Vec<T>> {
        Ok(self.tr_mul(&nalgebra::DVector::from_column_slice(y)).as_slice().to_vec())
    }
    fn dense(&self) -> Option<DMatrix<T>> {
        Some(self.clone())
    }
}

/// Coordinate weights of a (weighted) L^p space. For p = ∞ weights are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLpSpace {
    pub weights: Vec<f64>,
}

impl WeightedLpSpace {
    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0; n] }
    }

    /// L^p(μ) on the interior.
    pub fn interior<T: Real>(g: &GraphWithBoundary<T>) -> Self {
        Self { weights: g.interior().iter().map(|&x| g.measure()[x].as_f64()).collect() }
    }

    /// L^p_V: interior with dμ/V(x,1).
    pub fn volume_weighted<T: Real>(g: &GraphWithBoundary<T>) -> Self {
        Self {
            weights: g.interior().iter().map(|&x| g.measure()[x].as_f64() / ball_volume(g, x, 1.0).as_f64()).collect(),
        }
    }

    /// Edge space with weights w_e.
    pub fn edges<T: Real>(g: &GraphWithBoundary<T>) -> Self {
        Self { weights: g.edges().iter().map(|e| e.2.as_f64()).collect() }
    }

    pub fn norm(&self, v: &[f64], p: f64) -> f64 {
        if p.is_infinite() {
            return v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        }
        v.iter().zip(&self.weights).map(|(x, w)| w * x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    pub p: f64,
    pub q: f64,
    pub lower: f64,
    pub upper: f64,
    /// Source vector attaining `lower`.
    pub witness: Vec<f64>,
    pub lower_method: String,
    pub upper_method: String,
}

impl NormEstimate {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerOptions {
    pub random_starts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Problem-specific starts, tried in addition to the random ones.
    pub extra_starts: Vec<Vec<f64>>,
    /// Largest dimension for exact p ∈ {1, ∞} by columns or rows.
    pub exact_limit: usize,
    /// Steps every start gets before only the best `survivors` continue.
    pub screen_iterations: usize,
    pub survivors: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            random_starts: 8,
            iterations: 100,
            seed: 0,
            extra_starts: Vec::new(),
            exact_limit: DENSE_EIGEN_LIMIT,
            screen_iterations: 10,
            survivors: 3,
        }
    }
}

fn to_t<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn to_f<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn ratio<T: Real>(map: &dyn LinearMap<T>, x: &[f64], p: f64, q: f64, src: &WeightedLpSpace, dst: &WeightedLpSpace) -> Result<f64> {
    let nx = src.norm(x, p);
    if nx == 0.0 {
        return Ok(0.0);
    }
    let y = to_f(&map.apply(&to_t(x))?);
    Ok(dst.norm(&y, q) / nx)
}

/// Exact ‖T‖_{L¹(src)→L^q(dst)} = max_j ‖T e_j‖_q / src_j.
fn exact_from_columns<T: Real>(map: &dyn LinearMap<T>, q: f64, src: &WeightedLpSpace, dst: &WeightedLpSpace) -> Result<(f64, Vec<f64>)> {
    let n = map.n_cols();
    let cols: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let c = to_f(&map.apply(&e)?);
            Ok((dst.norm(&c, q) / src.weights[j], j))
        })
        .collect::<Result<_>>()?;
    let (best, j) = cols.into_iter().fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
    let mut w = vec![0.0; n];
    w[j] = 1.0;
    Ok((best, w))
}

/// Exact ‖T‖_{∞→∞} = max_i Σ_j |T_ij|.
fn exact_from_rows<T: Real>(map: &dyn LinearMap<T>) -> Result<(f64, Vec<f64>)> {
    let m = map.n_rows();
    let rows: Vec<(f64, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![T::zero(); m];
            e[i] = T::one();
            let r = to_f(&map.apply_transpose(&e)?);
            let s: f64 = r.iter().map(|v| v.abs()).sum();
            Ok((s, r.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect()))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().fold((f64::NEG_INFINITY, Vec::new()), |a, b| if b.0 > a.0 { b } else { a }))
}

/// Exact ‖T‖_{2→2} between weighted spaces: top singular value of W^{1/2} T M^{-1/2}.
fn exact_l2<T: Real>(map: &dyn LinearMap<T>, src: &WeightedLpSpace, dst: &WeightedLpSpace) -> Result<(f64, Vec<f64>)> {
    let sm: Vec<f64> = src.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
    let sw: Vec<f64> = dst.weights.iter().map(|w| w.sqrt()).collect();
    let top = if let Some(d) = map.dense() {
        let mut a = d;
        for (i, &s) in sw.iter().enumerate() {
            a.row_mut(i).scale_mut(T::lit(s));
        }
        for (j, &s) in sm.iter().enumerate() {
            a.column_mut(j).scale_mut(T::lit(s));
        }
        let ata = a.tr_mul(&a);
        let (lam, v) = crate::linalg::dense_min_eigen(&(-ata));
        (-lam, v)
    } else {
        let apply = |x: &[T]| -> Vec<T> {
            let xs: Vec<T> = x.iter().zip(&sm).map(|(&a, &s)| a * T::lit(s)).collect();
            let y = map.apply(&xs).expect("operator applies");
            let yw: Vec<T> = y.iter().zip(&dst.weights).map(|(&a, &w)| a * T::lit(w)).collect();
            let z = map.apply_transpose(&yw).expect("operator applies");
            z.iter().zip(&sm).map(|(&a, &s)| a * T::lit(s)).collect()
        };
        let start = vec![T::one(); map.n_cols()];
        lanczos_extreme(apply, &start, false, T::lit(1e-12), 400)?
    };
    let witness: Vec<f64> = top.1.iter().zip(&sm).map(|(v, s)| v.as_f64() * s).collect();
    Ok((top.0.as_f64().max(0.0).sqrt(), witness))
}

/// Relative change at which the power iteration counts as converged.
const POWER_STALL: f64 = 1e-9;

fn duality_map(v: &[f64], r: f64) -> Vec<f64> {
    v.iter().map(|&x| x.signum() * x.abs().powf(r - 1.0)).collect()
}

/// Nonlinear power iteration for ‖T‖_{p→q}, max over starts; returns (value, witness).
#[derive(Clone)]
struct PowerRun {
    best: f64,
    best_x: Vec<f64>,
    current: Vec<f64>,
    last: f64,
    done: bool,
}

fn boyd<T: Real>(
    map: &dyn LinearMap<T>,
    p: f64,
    q: f64,
    src: &WeightedLpSpace,
    dst: &WeightedLpSpace,
    opts: &PowerOptions,
) -> Result<(f64, Vec<f64>)> {
    let n = map.n_cols();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<f64>> = opts.extra_starts.iter().filter(|s| s.len() == n).cloned().collect();
    let n_extra = starts.len();
    for _ in 0..opts.random_starts {
        starts.push((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    if starts.is_empty() {
        starts.push(vec![1.0; n]);
    }
    let pp = p / (p - 1.0);
    // Work in coordinates where both spaces are unweighted.
    let sm: Vec<f64> = src.weights.iter().map(|w| w.powf(-1.0 / p)).collect();
    let sw: Vec<f64> = dst.weights.iter().map(|w| w.powf(1.0 / q)).collect();
    let unit = |v: Vec<f64>| {
        let nrm = v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        v.into_iter().map(|x| x / nrm).collect::<Vec<f64>>()
    };
    // Up to `iters` power steps; `done` marks a stalled or degenerate run.
    let advance = |run: &mut PowerRun, iters: usize| -> Result<()> {
        for _ in 0..iters {
            if run.done {
                break;
            }
            let x: Vec<f64> = run.current.iter().zip(&sm).map(|(a, m)| a * m).collect();
            let y: Vec<f64> = to_f(&map.apply(&to_t(&x))?).iter().zip(&sw).map(|(a, w)| a * w).collect();
            let val = y.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q);
            if val > run.best {
                run.best = val;
                run.best_x = run.current.clone();
            }
            if (val - run.last).abs() <= POWER_STALL * val {
                run.done = true;
                break;
            }
            run.last = val;
            let jy: Vec<f64> = duality_map(&y, q).iter().zip(&sw).map(|(a, w)| a * w).collect();
            let z: Vec<f64> = to_f(&map.apply_transpose(&to_t(&jy))?).iter().zip(&sm).map(|(a, m)| a * m).collect();
            if z.iter().all(|v| *v == 0.0) {
                run.done = true;
                break;
            }
            run.current = unit(duality_map(&z, pp));
        }
        Ok(())
    };
    // Screen every start briefly, then continue the best few to convergence.
    let mut runs: Vec<PowerRun> = starts
        .into_iter()
        .map(|s| {
            let x = unit(s.iter().zip(&sm).map(|(a, m)| a / m).collect());
            PowerRun { best: 0.0, best_x: x.clone(), current: x, last: 0.0, done: false }
        })
        .collect();
    let screen = opts.screen_iterations.min(opts.iterations);
    runs.par_iter_mut().try_for_each(|r| advance(r, screen))?;
    // Structured starts lead early but often plateau lower, so they get one
    // survivor slot and random starts fill the rest.
    let rank = |ids: std::ops::Range<usize>| {
        let mut v: Vec<usize> = ids.collect();
        v.sort_by(|&a, &b| runs[b].best.total_cmp(&runs[a].best).then(a.cmp(&b)));
        v
    };
    let keep = opts.survivors.max(1);
    let structured = rank(0..n_extra);
    let random = rank(n_extra..runs.len());
    let reserved = usize::from(!structured.is_empty() && !random.is_empty() && keep > 1);
    let mut chosen: Vec<usize> = structured.iter().take(reserved).copied().collect();
    chosen.extend(random.iter().take(keep - reserved));
    if chosen.len() < keep {
        let rest: Vec<usize> = structured.iter().skip(reserved).take(keep - chosen.len()).copied().collect();
        chosen.extend(rest);
    }
    let mut finalists: Vec<PowerRun> = chosen.iter().map(|&i| runs[i].clone()).collect();
    finalists.par_iter_mut().try_for_each(|r| advance(r, opts.iterations - screen))?;
    let results: Vec<(f64, Vec<f64>)> = finalists.into_iter().map(|r| (r.best, r.best_x)).collect();
    let (_, xt) = results.into_iter().fold((f64::NEG_INFINITY, Vec::new()), |a, b| if b.0 > a.0 { b } else { a });
    let witness: Vec<f64> = xt.iter().zip(&sm).map(|(a, m)| a * m).collect();
    let value = ratio(map, &witness, p, q, src, dst)?;
    Ok((value, witness))
}

/// ‖T‖_{L^p(src)→L^p(dst)} as a certified interval.
pub fn lp_operator_norm<T: Real>(
    map: &dyn LinearMap<T>,
    p: f64,
    src: &WeightedLpSpace,
    dst: &WeightedLpSpace,
    opts: &PowerOptions,
) -> Result<NormEstimate> {
    lpq_operator_norm(map, p, p, src, dst, opts)
}

/// ‖T‖_{L^p(src)→L^q(dst)}; exact for p = 1, for p = q ∈ {2, ∞}.
pub fn lpq_operator_norm<T: Real>(
    map: &dyn LinearMap<T>,
    p: f64,
    q: f64,
    src: &WeightedLpSpace,
    dst: &WeightedLpSpace,
    opts: &PowerOptions,
) -> Result<NormEstimate> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(Error::InvalidExponent(format!("exponents must be ≥ 1, got ({p}, {q})")));
    }
    if src.weights.len() != map.n_cols() || dst.weights.len() != map.n_rows() {
        return Err(Error::Precondition("space dimensions do not match the operator".into()));
    }
    let small_cols = map.dense().is_some() || map.n_cols() <= opts.exact_limit;
    let small_rows = map.dense().is_some() || map.n_rows() <= opts.exact_limit;
    let est = |lower: f64, upper: f64, witness: Vec<f64>, lm: &str, um: &str| NormEstimate {
        p,
        q,
        lower,
        upper,
        witness,
        lower_method: lm.into(),
        upper_method: um.into(),
    };
    if p == 1.0 && small_cols {
        let (v, w) = exact_from_columns(map, q, src, dst)?;
        return Ok(est(v, v, w, "columns", "columns"));
    }
    if p.is_infinite() && q.is_infinite() && small_rows {
        let (v, w) = exact_from_rows(map)?;
        return Ok(est(v, v, w, "rows", "rows"));
    }
    if p == 2.0 && q == 2.0 {
        let (v, w) = exact_l2(map, src, dst)?;
        let lower = ratio(map, &w, 2.0, 2.0, src, dst)?.min(v);
        return Ok(est(lower, v, w, "singular-vector", "singular-value"));
    }
    if p.is_infinite() || q.is_infinite() {
        return Err(Error::InvalidExponent(format!("({p}, {q}) norm is only supported exactly")));
    }
    let (lower, witness) = boyd(map, p, q, src, dst, opts)?;
    let mut upper = f64::INFINITY;
    let mut um = "none";
    if p == q && small_cols && small_rows {
        let n2 = exact_l2(map, src, dst)?.0;
        if p < 2.0 {
            let n1 = exact_from_columns(map, 1.0, src, dst)?.0;
            let theta = 2.0 - 2.0 / p;
            upper = n1.powf(1.0 - theta) * n2.powf(theta);
        } else {
            let ninf = exact_from_rows(map)?.0;
            let theta = 1.0 - 2.0 / p;
            upper = n2.powf(1.0 - theta) * ninf.powf(theta);
        }
        um = "interpolation";
    }
    Ok(est(lower, upper.max(lower), witness, "power-iteration", um))
}

/// Evaluates P^{s} for s ∈ {−1/2, 1/2} on interior vectors.
#[derive(Debug, Clone)]
struct SpectralPower<T: Real> {
    sym: CsrMatrix<T>,
    sqrt_mu: Vec<T>,
    /// Dense M^{-1/2} S^{-1/2} M^{1/2}.
    dense_inv_sqrt: Option<DMatrix<T>>,
    /// λ^{-1/2} on a spectral enclosure of S, for the matrix-free path.
    series: Option<ChebyshevSeries<T>>,
    tol: T,
}

/// Relative margin below the smallest Ritz value for the Chebyshev interval.
const SPECTRAL_MARGIN: f64 = 0.05;

impl<T: Real> SpectralPower<T> {
    fn new(op: &SchrodingerOperator<T>, dense_limit: usize, tol: f64) -> Result<Self> {
        let sqrt_mu: Vec<T> = op.interior_measure().iter().map(|m| m.sqrt()).collect();
        let inv: Vec<T> = sqrt_mu.iter().map(|&s| T::one() / s).collect();
        let sym = op.stiffness().scale_rows(&inv).scale_cols(&inv);
        let dense_inv_sqrt = if op.dim() <= dense_limit {
            let d = sym.to_dense();
            let d = (&d + d.transpose()) * T::lit(0.5);
            let eig = d.symmetric_eigen();
            if let Some(&l) = eig.eigenvalues.iter().find(|&&l| !(l > T::zero())) {
                return Err(Error::NotPositive { lambda_min: l.as_f64() });
            }
            let mut q = eig.eigenvectors.clone();
            for (j, &l) in eig.eigenvalues.iter().enumerate() {
                q.column_mut(j).scale_mut(T::one() / l.sqrt().sqrt());
            }
            let mut m = &q * q.transpose();
            for i in 0..m.nrows() {
                m.row_mut(i).scale_mut(inv[i]);
                m.column_mut(i).scale_mut(sqrt_mu[i]);
            }
            Some(m)
        } else {
            None
        };
        let series = if dense_inv_sqrt.is_none() {
            let start = vec![T::one(); sym.n_rows()];
            let (theta, _) = lanczos_extreme(|z| sym.mul_vec(z), &start, true, T::lit(1e-9), 2000)?;
            let lo = theta.as_f64() * (1.0 - SPECTRAL_MARGIN);
            if !(lo > 0.0) {
                return Err(Error::NotPositive { lambda_min: theta.as_f64() });
            }
            let hi = sym.norm_inf().as_f64();
            Some(ChebyshevSeries::fit(|l| l.powf(-0.5), lo, hi, tol, 1 << 16)?)
        } else {
            None
        };
        Ok(Self { sym, sqrt_mu, dense_inv_sqrt, series, tol: T::lit(tol) })
    }

    fn krylov(&self, x: &[T], s: f64, scale_in: &dyn Fn(T, T) -> T, scale_out: &dyn Fn(T, T) -> T) -> Result<Vec<T>> {
        let v: Vec<T> = x.iter().zip(&self.sqrt_mu).map(|(&a, &m)| scale_in(a, m)).collect();
        let w = lanczos_function(|z| self.sym.mul_vec(z), &v, |l| l.powf(T::lit(s)), self.tol, v.len())?;
        Ok(w.iter().zip(&self.sqrt_mu).map(|(&a, &m)| scale_out(a, m)).collect())
    }

    /// P^{-1/2} x
    fn inv_sqrt(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.dense_inv_sqrt {
            Some(m) => Ok((m * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()),
            None => Ok(self.chebyshev(x, &|a, m| a * m, &|a, m| a / m)),
        }
    }

    fn chebyshev(&self, x: &[T], scale_in: &dyn Fn(T, T) -> T, scale_out: &dyn Fn(T, T) -> T) -> Vec<T> {
        let series = self.series.as_ref().expect("matrix-free path has a series");
        let v: Vec<T> = x.iter().zip(&self.sqrt_mu).map(|(&a, &m)| scale_in(a, m)).collect();
        let w = series.apply(|z| self.sym.mul_vec(z), &v);
        w.iter().zip(&self.sqrt_mu).map(|(&a, &m)| scale_out(a, m)).collect()
    }

    /// (P^{-1/2})ᵀ y
    fn inv_sqrt_transpose(&self, y: &[T]) -> Result<Vec<T>> {
        match &self.dense_inv_sqrt {
            Some(m) => Ok(m.tr_mul(&nalgebra::DVector::from_column_slice(y)).as_slice().to_vec()),
            None => Ok(self.chebyshev(y, &|a, m| a / m, &|a, m| a * m)),
        }
    }

    /// P^{1/2} x
    fn sqrt(&self, x: &[T]) -> Result<Vec<T>> {
        self.krylov(x, 0.5, &|a, m| a * m, &|a, m| a / m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RieszVariant<T> {
    /// dΔ^{-1/2}
    Plain,
    /// d(Δ+V)^{-1/2}
    WithPotential,
    /// d(Δ+V)^{-1/2} − (d log h)·avg∘(Δ+V)^{-1/2}
    Modified(Vec<T>),
    /// d∘h^{-1}∘(Δ+V)^{-1/2}
    D(Vec<T>),
}

/// Matrix-free Riesz operator from interior vertex functions to edge functions.
#[derive(Debug, Clone)]
pub struct RieszOperator<T: Real> {
    power: SpectralPower<T>,
    /// d restricted to interior columns.
    grad: CsrMatrix<T>,
    /// |d|/2 restricted to interior columns.
    avg: CsrMatrix<T>,
    /// Edge field subtracted against the averaged input.
    correction: Option<Vec<T>>,
    /// 1/h on the interior for the D variant.
    inv_h: Option<Vec<T>>,
    n_rows: usize,
    n_cols: usize,
}

/// Discrete log-gradient dh/h̄ on each edge.
pub fn log_gradient<T: Real>(g: &GraphWithBoundary<T>, h: &[T]) -> Vec<T> {
    g.edges().iter().map(|&(a, b, _)| (h[b] - h[a]) * T::lit(2.0) / (h[a] + h[b])).collect()
}

fn interior_columns<T: Real>(g: &GraphWithBoundary<T>, m: &CsrMatrix<T>, f: impl Fn(T) -> T) -> CsrMatrix<T> {
    let mut trip = Vec::new();
    for r in 0..m.n_rows() {
        for (c, v) in m.row(r) {
            if let Some(j) = g.interior_index(c) {
                trip.push((r, j, f(v)));
            }
        }
    }
    CsrMatrix::from_triplets(m.n_rows(), g.interior().len(), trip)
}

impl<T: Real> RieszOperator<T> {
    /// `op` is Δ+V; the plain variant uses Δ on the same graph.
    pub fn new(op: &SchrodingerOperator<T>, variant: RieszVariant<T>) -> Result<Self> {
        Self::with_options(op, variant, DENSE_EIGEN_LIMIT, T::KRYLOV_TOL)
    }

    pub fn with_options(op: &SchrodingerOperator<T>, variant: RieszVariant<T>, dense_limit: usize, tol: f64) -> Result<Self> {
        let g = op.graph();
        let base = match variant {
            RieszVariant::Plain => op.with_potential(Potential::zero(g.num_vertices())),
            _ => op.clone(),
        };
        let power = SpectralPower::new(&base, dense_limit, tol)?;
        let d = gradient_matrix(g);
        let grad = interior_columns(g, &d, |v| v);
        let avg = interior_columns(g, &d, |v| v.abs() * T::lit(0.5));
        let check_h = |h: &[T]| -> Result<()> {
            if h.len() != g.num_vertices() {
                return Err(Error::Precondition("h must cover every vertex".into()));
            }
            match h.iter().position(|&v| !(v > T::zero())) {
                Some(x) => Err(Error::NotPositiveFunction { vertex: x }),
                None => Ok(()),
            }
        };
        let (correction, inv_h) = match &variant {
            RieszVariant::Modified(h) => {
                check_h(h)?;
                (Some(log_gradient(g, h)), None)
            }
            RieszVariant::D(h) => {
                check_h(h)?;
                (None, Some(g.interior().iter().map(|&x| T::one() / h[x]).collect()))
            }
            _ => (None, None),
        };
        Ok(Self { power, grad, avg, correction, inv_h, n_rows: g.edges().len(), n_cols: g.interior().len() })
    }

    /// P^{1/2} on interior vectors (for structured starts).
    pub fn sqrt_apply(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.power.dense_inv_sqrt {
            Some(m) => {
                let lu = m.clone().lu();
                lu.solve(&nalgebra::DVector::from_column_slice(x))
                    .map(|v| v.as_slice().to_vec())
                    .ok_or_else(|| Error::Solver("singular P^{-1/2}".into()))
            }
            None => self.power.sqrt(x),
        }
    }

    fn edge_map(&self, u: &[T]) -> Vec<T> {
        let mut y = match &self.inv_h {
            Some(ih) => self.grad.mul_vec(&u.iter().zip(ih).map(|(&a, &b)| a * b).collect::<Vec<T>>()),
            None => self.grad.mul_vec(u),
        };
        if let Some(c) = &self.correction {
            let a = self.avg.mul_vec(u);
            for e in 0..y.len() {
                y[e] -= c[e] * a[e];
            }
        }
        y
    }

    fn edge_map_transpose(&self, y: &[T]) -> Vec<T> {
        let mut x = self.grad.mul_vec_transpose(y);
        if let Some(ih) = &self.inv_h {
            for (xi, &h) in x.iter_mut().zip(ih) {
                *xi *= h;
            }
        }
        if let Some(c) = &self.correction {
            let cy: Vec<T> = y.iter().zip(c).map(|(&a, &b)| a * b).collect();
            let a = self.avg.mul_vec_transpose(&cy);
            for (xi, ai) in x.iter_mut().zip(a) {
                *xi -= ai;
            }
        }
        x
    }

    /// Dense matrix (edges × interior) when P^{-1/2} is dense.
    pub fn to_dense(&self) -> Option<DMatrix<T>> {
        let m = self.power.dense_inv_sqrt.as_ref()?;
        let mut out = DMatrix::zeros(self.n_rows, self.n_cols);
        for j in 0..self.n_cols {
            let col: Vec<T> = m.column(j).iter().copied().collect();
            let e = self.edge_map(&col);
            for i in 0..self.n_rows {
                out[(i, j)] = e[i];
            }
        }
        Some(out)
    }
}

impl<T: Real> LinearMap<T> for RieszOperator<T> {
    fn n_rows(&self) -> usize {
        self.n_rows
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.edge_map(&self.power.inv_sqrt(x)?))
    }
    fn apply_transpose(&self, y: &[T]) -> Result<Vec<T>> {
        self.power.inv_sqrt_transpose(&self.edge_map_transpose(y))
    }
    fn dense(&self) -> Option<DMatrix<T>> {
        self.to_dense()
    }
}

/// Exact ‖d(Δ+V)^{-1/2}‖_{2→2} = (1 + λ)^{1/2}, λ the top of ΣV₋u²μ / ⟨(Δ+V)u,u⟩
/// (nonpositive V); for V with a positive part this is an upper bound.
pub fn riesz_l2_norm<T: Real>(op: &SchrodingerOperator<T>) -> Result<(f64, bool)> {
    let solver = GreenSolver::new(op)?;
    let lam = generalized_top_eigenvalue(&solver, &op.potential().negative_part())?.as_f64();
    let exact = op.potential().values().iter().all(|&v| v <= T::zero());
    Ok(((1.0 + lam.max(0.0)).sqrt(), exact))
}

/// e^{−tP} on interior vectors as a linear map.
pub struct HeatMap<'a, T: Real> {
    pub engine: &'a HeatEngine<T>,
    pub t: f64,
}

impl<T: Real> LinearMap<T> for HeatMap<'_, T> {
    fn n_rows(&self) -> usize {
        self.engine.operator().dim()
    }
    fn n_cols(&self) -> usize {
        self.engine.operator().dim()
    }
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.engine.apply_interior(self.t, x)
    }
    fn apply_transpose(&self, y: &[T]) -> Result<Vec<T>> {
        // (e^{−tP})ᵀ = M e^{−tP} M^{-1}
        let mu = self.engine.operator().interior_measure();
        let z: Vec<T> = y.iter().zip(mu).map(|(&a, &m)| a / m).collect();
        Ok(self.engine.apply_interior(self.t, &z)?.iter().zip(mu).map(|(&a, &m)| a * m).collect())
    }
}

/// φ_{p,q}(t) for the weighted semigroup bound.
pub fn phi_pq(nu: f64, nu_prime: f64, p: f64, q: f64, t: f64) -> f64 {
    let iq = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let e = if t >= 1.0 { -nu_prime / (2.0 * p) + nu * iq / 2.0 } else { -nu / (2.0 * p) + nu_prime * iq / 2.0 };
    t.powf(e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupNormReport {
    pub p: f64,
    pub q: f64,
    pub ts: Vec<f64>,
    pub measured: Vec<f64>,
    pub phi: Vec<f64>,
    /// Smallest C with measured ≤ C·φ on the grid.
    pub constant: f64,
    pub worst_t: f64,
    /// False when columns were sampled or (p,q) needs power iteration.
    pub exact: bool,
}

/// Measured ‖e^{−tP}‖_{L^p_V → L^q_V} against φ_{p,q}(t).
///
/// For p = 1 the norm is max_y V(y,1)/μ(y)·‖p_t(·,y)μ(y)‖, over all columns
/// when the engine is dense and over `sample_cols` otherwise.
pub fn weighted_semigroup_norm_check<T: Real>(
    engine: &HeatEngine<T>,
    exponents: &GrowthExponents,
    pairs: &[(f64, f64)],
    ts: &[f64],
    sample_cols: &[usize],
    opts: &PowerOptions,
) -> Result<Vec<SemigroupNormReport>> {
    let g = engine.operator().graph();
    let space = WeightedLpSpace::volume_weighted(g);
    let full = engine.is_dense();
    pairs
        .iter()
        .map(|&(p, q)| {
            if p > q {
                return Err(Error::InvalidExponent(format!("need p ≤ q, got ({p}, {q})")));
            }
            let mut measured = Vec::with_capacity(ts.len());
            let mut exact = true;
            for &t in ts {
                let m = if p == 1.0 {
                    let table = if full { engine.kernel(t)? } else { engine.columns(t, sample_cols)? };
                    exact &= full;
                    let mut best = 0.0f64;
                    for (j, &y) in table.cols().iter().enumerate() {
                        let col: Vec<f64> = table.entries().column(j).iter().map(|v| v.as_f64()).collect();
                        let jy = g.interior_index(y).expect("interior column");
                        // δ_y scaled to unit L¹_V norm: f = δ_y / w_y; e^{−tP}f = p_t(·,y)μ(y)/w_y.
                        let scale = g.measure()[y].as_f64() / space.weights[jy];
                        let v: Vec<f64> = col.iter().map(|c| c * scale).collect();
                        best = best.max(space.norm(&v, q));
                    }
                    best
                } else {
                    exact = false;
                    let map = HeatMap { engine, t };
                    lpq_operator_norm(&map, p, q, &space, &space, opts)?.lower
                };
                measured.push(m);
            }
            let phi: Vec<f64> = ts.iter().map(|&t| phi_pq(exponents.nu, exponents.nu_prime, p, q, t)).collect();
            let (constant, worst) = measured
                .iter()
                .zip(&phi)
                .enumerate()
                .map(|(i, (m, f))| (m / f, i))
                .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
            Ok(SemigroupNormReport { p, q, ts: ts.to_vec(), measured, phi, constant, worst_t: ts[worst], exact })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RieszPReport {
    pub p: f64,
    pub plain: Vec<NormEstimate>,
    pub modified: Vec<NormEstimate>,
    pub plain_ratios: Vec<f64>,
    pub modified_ratios: Vec<f64>,
    pub plain_trend: Trend,
    pub modified_trend: Trend,
    /// Heuristic: norm with output restricted to edges inside B(o, 2).
    pub local_target: Vec<f64>,
    /// Truncated Σ_t ‖|V|^{1/2}/V(·,t)^{1/p}‖_p and its summand decay exponent.
    pub ao_sum: f64,
    pub ao_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RieszRangeReport {
    pub radii: Vec<f64>,
    pub per_p: Vec<RieszPReport>,
    /// Exact p = 2 norms of d(Δ+V)^{-1/2} per truncation.
    pub l2_norms: Vec<f64>,
    /// |last − previous| / last
    pub l2_relative_change: f64,
    /// Lower bounds for the p = 2 constant of ‖(Δ+V)^{1/2}u‖ ≤ C‖Du‖.
    pub reverse_constants: Vec<f64>,
    pub kappa_bracket: Option<(f64, f64)>,
    pub local_target_heuristic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RieszExperimentOptions {
    pub power: PowerOptions,
    pub krylov_tol: f64,
    pub local_radius: usize,
}

impl Default for RieszExperimentOptions {
    fn default() -> Self {
        Self { power: PowerOptions::default(), krylov_tol: 1e-10, local_radius: 2 }
    }
}

/// Positive solution of (Δ+V)g = 0 with g = 1 on the boundary: g = 1 − G(V).
pub fn boundary_normalized_solution<T: Real>(op: &SchrodingerOperator<T>) -> Result<Vec<T>> {
    let solver = GreenSolver::new(op)?;
    let u = solver.green_apply(op.potential().values())?;
    let g: Vec<T> = u.iter().enumerate().map(|(x, &v)| if op.graph().is_interior(x) { T::one() - v } else { T::one() }).collect();
    if let Some(x) = g.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::Positivity { vertex: x });
    }
    Ok(g)
}

fn structured_starts<T: Real>(op: &SchrodingerOperator<T>, riesz: &RieszOperator<T>, h: &[T]) -> Result<Vec<Vec<f64>>> {
    let g = op.graph();
    let d = g.hop_distances(g.origin());
    let r = g.max_interior_radius() as f64 + 1.0;
    let di: Vec<f64> = g.interior().iter().map(|&x| d[x] as f64).collect();
    let chi: Vec<T> = g.interior().iter().zip(&di).map(|(&x, &dx)| h[x] * T::lit(1.0 - dx / r)).collect();
    Ok(vec![
        vec![1.0; di.len()],
        di.iter().map(|&x| (-2.0 * x / r).exp()).collect(),
        di.iter().map(|&x| if x <= 2.0 { 1.0 } else { 0.0 }).collect(),
        to_f(&riesz.sqrt_apply(&chi)?),
    ])
}

/// Restriction of a map's output to selected rows.
struct RowRestriction<'a, T: Real> {
    inner: &'a dyn LinearMap<T>,
    rows: Vec<usize>,
}

impl<T: Real> LinearMap<T> for RowRestriction<'_, T> {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let y = self.inner.apply(x)?;
        Ok(self.rows.iter().map(|&r| y[r]).collect())
    }
    fn apply_transpose(&self, y: &[T]) -> Result<Vec<T>> {
        let mut full = vec![T::zero(); self.inner.n_rows()];
        for (k, &r) in self.rows.iter().enumerate() {
            full[r] = y[k];
        }
        self.inner.apply_transpose(&full)
    }
}

fn ao_series<T: Real>(g: &GraphWithBoundary<T>, v: &Potential<T>, p: f64) -> (f64, f64) {
    let support: Vec<usize> = (0..g.num_vertices()).filter(|&x| v.values()[x] != T::zero()).collect();
    let horizon = g.inner_radius().max(2);
    let mut ts = Vec::new();
    let mut terms = Vec::new();
    let profiles: Vec<Vec<T>> = support.iter().map(|&x| g.volume_profile(x)).collect();
    for t in 1..=horizon {
        let s: f64 = support
            .iter()
            .zip(&profiles)
            .map(|(&x, prof)| {
                let vol = prof[t.min(prof.len() - 1)].as_f64();
                v.values()[x].abs().as_f64().powf(p / 2.0) * g.measure()[x].as_f64() / vol
            })
            .sum();
        ts.push(t as f64);
        terms.push(s.powf(1.0 / p));
    }
    let logs: Vec<f64> = terms.iter().map(|x| x.max(f64::MIN_POSITIVE).ln()).collect();
    (terms.iter().sum(), tail_decay_exponent(&ts, &logs))
}

/// Riesz norms across truncations for each p, with trends.
pub fn riesz_range_experiment<T: Real>(
    family: &[(f64, SchrodingerOperator<T>)],
    ps: &[f64],
    kappa_bracket: Option<(f64, f64)>,
    opts: &RieszExperimentOptions,
) -> Result<RieszRangeReport> {
    if family.len() < 2 {
        return Err(Error::Precondition("need at least two truncations".into()));
    }
    struct Level<T: Real> {
        l2: f64,
        reverse: f64,
        plain: Vec<NormEstimate>,
        modified: Vec<NormEstimate>,
        local: Vec<f64>,
        ao: Vec<(f64, f64)>,
        _marker: std::marker::PhantomData<T>,
    }
    let levels: Vec<Level<T>> = family
        .iter()
        .map(|(_, op)| {
            let g = op.graph();
            let h = boundary_normalized_solution(op)?;
            let plain = RieszOperator::with_options(op, RieszVariant::WithPotential, DENSE_EIGEN_LIMIT, opts.krylov_tol)?;
            let modified = RieszOperator::with_options(op, RieszVariant::Modified(h.clone()), DENSE_EIGEN_LIMIT, opts.krylov_tol)?;
            let (l2, _) = riesz_l2_norm(op)?;
            let reverse = reverse_constant(op, &h)?;
            let mut power = opts.power.clone();
            power.extra_starts.extend(structured_starts(op, &plain, &h)?);
            let src = WeightedLpSpace::interior(g);
            let dst = WeightedLpSpace::edges(g);
            let d = g.hop_distances(g.origin());
            let local_rows: Vec<usize> = g
                .edges()
                .iter()
                .enumerate()
                .filter(|(_, e)| d[e.0] <= opts.local_radius && d[e.1] <= opts.local_radius)
                .map(|(i, _)| i)
                .collect();
            let local_dst = WeightedLpSpace { weights: local_rows.iter().map(|&i| dst.weights[i]).collect() };
            let local_opts = PowerOptions { random_starts: 0, iterations: 20, survivors: 1, ..power.clone() };
            let mut pl = Vec::new();
            let mut md = Vec::new();
            let mut lc = Vec::new();
            let mut ao = Vec::new();
            for &p in ps {
                if p == 2.0 {
                    let w = vec![0.0; g.interior().len()];
                    let mk = |lm: &str| NormEstimate {
                        p,
                        q: p,
                        lower: l2,
                        upper: l2,
                        witness: w.clone(),
                        lower_method: lm.into(),
                        upper_method: "generalized-eigenvalue".into(),
                    };
                    pl.push(mk("generalized-eigenvalue"));
                    md.push(lp_operator_norm(&modified, p, &src, &dst, &power)?);
                } else {
                    pl.push(lp_operator_norm(&plain, p, &src, &dst, &power)?);
                    md.push(lp_operator_norm(&modified, p, &src, &dst, &power)?);
                }
                let restricted = RowRestriction { inner: &plain, rows: local_rows.clone() };
                lc.push(lpq_operator_norm(&restricted, p, p, &src, &local_dst, &local_opts)?.lower);
                ao.push(ao_series(g, op.potential(), p));
            }
            Ok(Level { l2, reverse, plain: pl, modified: md, local: lc, ao, _marker: std::marker::PhantomData })
        })
        .collect::<Result<_>>()?;
    let per_p = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let plain: Vec<NormEstimate> = levels.iter().map(|l| l.plain[i].clone()).collect();
            let modified: Vec<NormEstimate> = levels.iter().map(|l| l.modified[i].clone()).collect();
            let pv: Vec<f64> = plain.iter().map(|e| e.lower).collect();
            let mv: Vec<f64> = modified.iter().map(|e| e.lower).collect();
            let (ao_sum, ao_decay) = levels.last().unwrap().ao[i];
            RieszPReport {
                p,
                plain_ratios: growth_ratios(&pv),
                modified_ratios: growth_ratios(&mv),
                plain_trend: classify_trend(&pv),
                modified_trend: classify_trend(&mv),
                plain,
                modified,
                local_target: levels.iter().map(|l| l.local[i]).collect(),
                ao_sum,
                ao_decay,
            }
        })
        .collect();
    let l2: Vec<f64> = levels.iter().map(|l| l.l2).collect();
    let n = l2.len();
    Ok(RieszRangeReport {
        radii: family.iter().map(|f| f.0).collect(),
        per_p,
        l2_relative_change: (l2[n - 1] - l2[n - 2]).abs() / l2[n - 1],
        l2_norms: l2,
        reverse_constants: levels.iter().map(|l| l.reverse).collect(),
        kappa_bracket,
        local_target_heuristic: true,
    })
}

/// Rayleigh-quotient lower bound for sup ⟨Pu,u⟩ / ‖d(h⁻¹u)‖², square-rooted.
pub fn reverse_constant<T: Real>(op: &SchrodingerOperator<T>, h: &[T]) -> Result<f64> {
    // u = h·w on the interior: ⟨Pu,u⟩ = wᵀ(HKH)w, ‖dw‖² = wᵀK₀w.
    let kh: Vec<T> = op.graph().interior().iter().map(|&x| h[x]).collect();
    let k = op.stiffness().scale_rows(&kh).scale_cols(&kh);
    let k0 = op.with_potential(Potential::zero(op.graph().num_vertices()));
    let s0 = SpdSolver::new(k0.stiffness())?;
    let mut w = vec![T::one(); op.dim()];
    let mut rq = 0.0f64;
    for _ in 0..300 {
        let kw = k.mul_vec(&w);
        let k0w = k0.stiffness().mul_vec(&w);
        let new = (dot(&kw, &w) / dot(&k0w, &w)).as_f64();
        let next = s0.solve(&kw)?;
        let nrm = max_abs(&next);
        w = next.iter().map(|&v| v / nrm).collect();
        if (new - rq).abs() <= 1e-10 * new {
            rq = new;
            break;
        }
        rq = new;
    }
    Ok(rq.sqrt())
}
