//! Heat kernels of P = Δ + V, semigroup checks and Gaussian envelopes.

use crate::error::{Error, Result};
use crate::geometry::{ball_volume, GraphWithBoundary};
use crate::green::dirichlet_green;
use crate::linalg::{lanczos_function, CsrMatrix, DENSE_EIGEN_LIMIT};
use crate::num::{max_abs, Real};
use crate::operators::{h_transform, Potential, SchrodingerOperator};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Grid step and length for the Gaussian exponent search.
pub const C_GRID_STEP: f64 = 0.05;
pub const C_GRID_LEN: usize = 40;
/// Allowed inflation of C over its c → 0 value when selecting c.
pub const ENVELOPE_SLACK: f64 = 3.0;

/// p_t(x, y) with respect to μ, rows over the interior, columns over `cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelTable<T: Real> {
    t: f64,
    rows: Vec<usize>,
    cols: Vec<usize>,
    entries: DMatrix<T>,
    measure: Vec<T>,
}

impl<T: Real> HeatKernelTable<T> {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    /// Every interior column present.
    pub fn is_full(&self) -> bool {
        self.rows == self.cols
    }

    /// p_t(x, y); zero when x is a boundary vertex, None when y is not tabulated.
    pub fn get(&self, x: usize, y: usize) -> Option<T> {
        let j = self.cols.binary_search(&y).ok()?;
        Some(match self.rows.binary_search(&x) {
            Ok(i) => self.entries[(i, j)],
            Err(_) => T::zero(),
        })
    }

    pub fn column(&self, y: usize) -> Option<Vec<T>> {
        let j = self.cols.binary_search(&y).ok()?;
        Some(self.entries.column(j).iter().copied().collect())
    }

    /// max |p(x,y) − p(y,x)| over tabulated pairs.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for (j, &y) in self.cols.iter().enumerate() {
            for (i, &x) in self.rows.iter().enumerate() {
                if let Some(v) = self.get(y, x) {
                    worst = worst.max((self.entries[(i, j)] - v).abs());
                }
            }
        }
        worst
    }

    /// Σ_y p_t(x,y)μ(y) for every row (full tables only).
    pub fn row_masses(&self) -> Option<Vec<T>> {
        if !self.is_full() {
            return None;
        }
        let mu: Vec<T> = self.cols.iter().map(|&y| self.measure[y]).collect();
        Some(
            (0..self.rows.len())
                .map(|i| (0..self.cols.len()).fold(T::zero(), |s, j| s + self.entries[(i, j)] * mu[j]))
                .collect(),
        )
    }
}

/// Dense spectral decomposition of S = M^{-1/2} K M^{-1/2}.
#[derive(Debug, Clone)]
struct Spectrum<T: Real> {
    values: DVector<T>,
    /// M^{-1/2} Q
    scaled_vectors: DMatrix<T>,
}

/// Evaluates e^{−tP} densely below the eigen limit, by Krylov otherwise.
#[derive(Debug, Clone)]
pub struct HeatEngine<T: Real> {
    op: SchrodingerOperator<T>,
    sym: CsrMatrix<T>,
    sqrt_mu: Vec<T>,
    spectrum: Option<Spectrum<T>>,
}

impl<T: Real> HeatEngine<T> {
    pub fn new(op: &SchrodingerOperator<T>) -> Result<Self> {
        Self::with_limit(op, DENSE_EIGEN_LIMIT)
    }

    /// `dense_limit = 0` forces the Krylov path.
    pub fn with_limit(op: &SchrodingerOperator<T>, dense_limit: usize) -> Result<Self> {
        let sqrt_mu: Vec<T> = op.interior_measure().iter().map(|m| m.sqrt()).collect();
        let inv: Vec<T> = sqrt_mu.iter().map(|&s| T::one() / s).collect();
        let sym = op.stiffness().scale_rows(&inv).scale_cols(&inv);
        let spectrum = if op.dim() <= dense_limit && op.dim() > 0 {
            let dense = sym.to_dense();
            let dense = (&dense + dense.transpose()) * T::lit(0.5);
            let eig = dense.try_symmetric_eigen(T::default_epsilon(), 0).ok_or_else(|| {
                Error::Solver("symmetric eigensolver did not converge".into())
            })?;
            let mut q = eig.eigenvectors;
            for (i, &s) in inv.iter().enumerate() {
                q.row_mut(i).scale_mut(s);
            }
            Some(Spectrum { values: eig.eigenvalues, scaled_vectors: q })
        } else {
            None
        };
        Ok(Self { op: op.clone(), sym, sqrt_mu, spectrum })
    }

    pub fn operator(&self) -> &SchrodingerOperator<T> {
        &self.op
    }

    pub fn is_dense(&self) -> bool {
        self.spectrum.is_some()
    }

    /// e^{−tP} f for f on the interior.
    pub fn apply_interior(&self, t: f64, f: &[T]) -> Result<Vec<T>> {
        check_time(t)?;
        match &self.spectrum {
            Some(s) => {
                // e^{−tP} = (M^{-1/2}Q) e^{−tΛ} (M^{-1/2}Q)ᵀ M
                let mf = DVector::from_iterator(
                    f.len(),
                    f.iter().zip(self.op.interior_measure()).map(|(&a, &m)| a * m),
                );
                let mut c = s.scaled_vectors.tr_mul(&mf);
                for (ci, &l) in c.iter_mut().zip(s.values.iter()) {
                    *ci *= (-T::lit(t) * l).exp();
                }
                Ok((&s.scaled_vectors * c).iter().copied().collect())
            }
            None => {
                let v: Vec<T> = f.iter().zip(&self.sqrt_mu).map(|(&a, &s)| a * s).collect();
                let tt = T::lit(t);
                let w = lanczos_function(
                    |x| self.sym.mul_vec(x),
                    &v,
                    |l| (-tt * l).exp(),
                    T::lit(T::KRYLOV_TOL),
                    v.len(),
                )?;
                Ok(w.iter().zip(&self.sqrt_mu).map(|(&a, &s)| a / s).collect())
            }
        }
    }

    /// e^{−tP} f for f on all vertices (boundary values ignored), extended by zero.
    pub fn apply(&self, t: f64, f: &[T]) -> Result<Vec<T>> {
        let g = self.op.graph();
        Ok(g.extend_by_zero(&self.apply_interior(t, &g.restrict(f))?))
    }

    /// Full table over the interior (dense path only).
    pub fn kernel(&self, t: f64) -> Result<HeatKernelTable<T>> {
        check_time(t)?;
        let s = self
            .spectrum
            .as_ref()
            .ok_or(Error::TooLarge { size: self.op.dim(), limit: DENSE_EIGEN_LIMIT })?;
        let mut a = s.scaled_vectors.clone();
        for (j, &l) in s.values.iter().enumerate() {
            a.column_mut(j).scale_mut((-T::lit(t * 0.5) * l).exp());
        }
        let entries = &a * a.transpose();
        let rows = self.op.graph().interior().to_vec();
        Ok(HeatKernelTable { t, cols: rows.clone(), rows, entries, measure: self.op.graph().measure().to_vec() })
    }

    /// Selected columns p_t(·, y), y interior.
    pub fn columns(&self, t: f64, cols: &[usize]) -> Result<HeatKernelTable<T>> {
        check_time(t)?;
        let g = self.op.graph();
        let mut cols = cols.to_vec();
        cols.sort_unstable();
        cols.dedup();
        let idx: Vec<usize> = cols
            .iter()
            .map(|&y| g.interior_index(y).ok_or_else(|| Error::Precondition(format!("vertex {y} is not interior"))))
            .collect::<Result<_>>()?;
        let n = self.op.dim();
        let computed: Vec<Vec<T>> = idx
            .par_iter()
            .map(|&j| {
                let mut f = vec![T::zero(); n];
                f[j] = T::one() / self.op.interior_measure()[j];
                self.apply_interior(t, &f)
            })
            .collect::<Result<_>>()?;
        let entries = DMatrix::from_fn(n, cols.len(), |i, j| computed[j][i]);
        Ok(HeatKernelTable { t, rows: g.interior().to_vec(), cols, entries, measure: g.measure().to_vec() })
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Precondition(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Dense heat kernel p_t of `op`.
pub fn heat_kernel<T: Real>(op: &SchrodingerOperator<T>, t: f64) -> Result<HeatKernelTable<T>> {
    HeatEngine::new(op)?.kernel(t)
}

/// ‖p_{t+s} − p_t ⋆_μ p_s‖_max, over all columns when dense, else over `cols`.
pub fn chapman_kolmogorov<T: Real>(engine: &HeatEngine<T>, t: f64, s: f64, cols: &[usize]) -> Result<f64> {
    if engine.is_dense() {
        let pt = engine.kernel(t)?;
        let ps = engine.kernel(s)?;
        let pts = engine.kernel(t + s)?;
        let mut scaled = ps.entries.clone();
        for (i, &m) in engine.op.interior_measure().iter().enumerate() {
            scaled.row_mut(i).scale_mut(m);
        }
        let conv = &pt.entries * scaled;
        return Ok(max_abs((pts.entries - conv).as_slice()).as_f64());
    }
    let ps = engine.columns(s, cols)?;
    let pts = engine.columns(t + s, cols)?;
    let mut worst = 0.0f64;
    for j in 0..ps.cols.len() {
        let col: Vec<T> = ps.entries.column(j).iter().copied().collect();
        let conv = engine.apply_interior(t, &col)?;
        for (i, &c) in conv.iter().enumerate() {
            worst = worst.max((pts.entries[(i, j)] - c).abs().as_f64());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSample {
    pub x: usize,
    pub y: usize,
    pub t: f64,
    pub distance: f64,
    /// V(x, √t)
    pub volume: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub c_upper: f64,
    pub big_c_upper: f64,
    pub c_lower: Option<f64>,
    pub big_c_lower: Option<f64>,
    pub samples: Vec<GaussianSample>,
    /// Largest relative excess of any sample over the fitted envelopes.
    pub max_violation: f64,
}

/// Sample triples (x, y, t) from kernel tables: columns y and rows x at
/// boundary distance ≥ d(o, ∂)/2, d(x, y) ≤ d_max, t ∈ t_range.
pub fn gaussian_samples<T: Real>(
    kernels: &[HeatKernelTable<T>],
    graph: &GraphWithBoundary<T>,
    d_max: usize,
    t_range: (f64, f64),
) -> Vec<GaussianSample> {
    let bd = graph.boundary_distances();
    let depth = (bd[graph.origin()] / 2).max(1);
    let deep = |x: usize| bd[x] >= depth;
    let rows: Vec<usize> = graph.interior().iter().copied().filter(|&x| deep(x)).collect();
    let mut out = Vec::new();
    let mut ys: Vec<usize> = kernels.iter().flat_map(|k| k.cols.iter().copied()).filter(|&y| deep(y)).collect();
    ys.sort_unstable();
    ys.dedup();
    for &y in &ys {
        let dist = graph.hop_distances(y);
        for k in kernels.iter().filter(|k| k.t >= t_range.0 && k.t <= t_range.1) {
            for &x in &rows {
                if dist[x] > d_max {
                    continue;
                }
                if let Some(v) = k.get(x, y) {
                    out.push(GaussianSample {
                        x,
                        y,
                        t: k.t,
                        distance: dist[x] as f64,
                        volume: ball_volume(graph, x, k.t.sqrt()).as_f64(),
                        value: v.as_f64(),
                    });
                }
            }
        }
    }
    out
}

/// max over samples of p·V·e^{c d²/t}.
pub fn upper_constant(samples: &[GaussianSample], c: f64) -> f64 {
    samples
        .iter()
        .map(|s| s.value * s.volume * (c * s.distance * s.distance / s.t).exp())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// min over samples of p·V·e^{c d²/t}.
pub fn lower_constant(samples: &[GaussianSample], c: f64) -> f64 {
    samples
        .iter()
        .map(|s| s.value * s.volume * (c * s.distance * s.distance / s.t).exp())
        .fold(f64::INFINITY, f64::min)
}

fn c_grid() -> impl Iterator<Item = f64> {
    (1..=C_GRID_LEN).map(|j| C_GRID_STEP * j as f64)
}

/// Gaussian envelopes over a fixed sample set.
///
/// Upper: the largest grid c with C(c) ≤ 3·C(0). Lower (when requested):
/// the smallest grid c with C_low(c) ≥ C_low(c_max)/3.
pub fn gaussian_envelope_fit(samples: Vec<GaussianSample>, lower: bool) -> Result<GaussianFit> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let base = upper_constant(&samples, 0.0);
    let c_upper = c_grid().filter(|&c| upper_constant(&samples, c) <= ENVELOPE_SLACK * base).last().unwrap_or(0.0);
    let big_c_upper = upper_constant(&samples, c_upper);
    let (c_lower, big_c_lower) = if lower {
        if let Some(s) = samples.iter().find(|s| !(s.value > 0.0)) {
            return Err(Error::NegativeKernel { value: s.value });
        }
        let c_max = C_GRID_STEP * C_GRID_LEN as f64;
        let target = lower_constant(&samples, c_max) / ENVELOPE_SLACK;
        let c = c_grid().find(|&c| lower_constant(&samples, c) >= target).unwrap_or(c_max);
        (Some(c), Some(lower_constant(&samples, c)))
    } else {
        (None, None)
    };
    let mut fit = GaussianFit { c_upper, big_c_upper, c_lower, big_c_lower, samples, max_violation: 0.0 };
    fit.max_violation = envelope_violation(&fit);
    Ok(fit)
}

/// Largest relative violation of the fitted envelopes on the fit's samples.
pub fn envelope_violation(fit: &GaussianFit) -> f64 {
    let mut worst = 0.0f64;
    for s in &fit.samples {
        let g = |c: f64| (-c * s.distance * s.distance / s.t).exp() / s.volume;
        let up = fit.big_c_upper * g(fit.c_upper);
        worst = worst.max((s.value - up) / up.abs().max(f64::MIN_POSITIVE));
        if let (Some(c), Some(cc)) = (fit.c_lower, fit.big_c_lower) {
            let lo = cc * g(c);
            worst = worst.max((lo - s.value) / lo.abs().max(f64::MIN_POSITIVE));
        }
    }
    worst.max(0.0)
}

/// max |p_t^g(x,y)·g(x)g(y) − p_t^V(x,y)| / max |p_t^V| over `ts`, where p^g
/// is the kernel of the Doob transform by g. Uses `cols` when not dense.
pub fn h_transform_kernel_check<T: Real>(
    op_v: &SchrodingerOperator<T>,
    g: &[T],
    ts: &[f64],
    cols: &[usize],
) -> Result<f64> {
    let (_, op_h) = h_transform(op_v, g)?;
    let ev = HeatEngine::new(op_v)?;
    let eh = HeatEngine::new(&op_h)?;
    let mut worst = 0.0f64;
    for &t in ts {
        let (pv, ph) = if ev.is_dense() && eh.is_dense() {
            (ev.kernel(t)?, eh.kernel(t)?)
        } else {
            (ev.columns(t, cols)?, eh.columns(t, cols)?)
        };
        let scale = max_abs(pv.entries.as_slice());
        let mut err = T::zero();
        for (j, &y) in pv.cols.iter().enumerate() {
            for (i, &x) in pv.rows.iter().enumerate() {
                err = err.max((ph.entries[(i, j)] * g[x] * g[y] - pv.entries[(i, j)]).abs());
            }
        }
        worst = worst.max((err / scale).as_f64());
    }
    Ok(worst)
}

/// ‖P_h𝟙‖_∞ and max |G_{P_h}(x,y)h(x)h(y) − G_P(x,y)| / max G_P.
pub fn h_transform_green_check<T: Real>(op: &SchrodingerOperator<T>, h: &[T]) -> Result<(f64, f64)> {
    let (gh, op_h) = h_transform(op, h)?;
    let ones = vec![T::one(); gh.num_vertices()];
    let harmonic = max_abs(&op_h.apply_full(&ones)).as_f64();
    let dom = op.graph().interior().to_vec();
    let g0 = dirichlet_green(op, &dom)?;
    let g1 = dirichlet_green(&op_h, &dom)?;
    let scale = max_abs(g0.entries().as_slice());
    let mut err = T::zero();
    for (j, &y) in dom.iter().enumerate() {
        for (i, &x) in dom.iter().enumerate() {
            err = err.max((g1.entries()[(i, j)] * h[x] * h[y] - g0.entries()[(i, j)]).abs());
        }
    }
    Ok((harmonic, (err / scale).as_f64()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    /// min p_t^V
    pub positivity_margin: f64,
    /// min (p_t^{−V₋} − p_t^V)
    pub negative_part_margin: f64,
    /// min (p_t − p_t^V) when V ≥ 0, min (p_t^V − p_t) when V ≤ 0.
    pub free_margin: Option<f64>,
    pub holds: bool,
}

/// Entrywise chain 0 ≤ p^V ≤ p^{−V₋}, plus comparison with p when V has a sign.
pub fn domination_check<T: Real>(
    free: &HeatKernelTable<T>,
    with_v: &HeatKernelTable<T>,
    minus_part: &HeatKernelTable<T>,
    v: &Potential<T>,
) -> Result<DominationReport> {
    if free.cols != with_v.cols || free.cols != minus_part.cols || free.t != with_v.t || free.t != minus_part.t {
        return Err(Error::Precondition("kernel tables must share time and columns".into()));
    }
    let min_of = |m: DMatrix<T>| m.iter().fold(f64::INFINITY, |a, &b| a.min(b.as_f64()));
    let positivity_margin = min_of(with_v.entries.clone());
    let negative_part_margin = min_of(&minus_part.entries - &with_v.entries);
    let free_margin = if v.is_nonnegative() {
        Some(min_of(&free.entries - &with_v.entries))
    } else if v.values().iter().all(|&x| x <= T::zero()) {
        Some(min_of(&with_v.entries - &free.entries))
    } else {
        None
    };
    let tol = -1e-12 * max_abs(minus_part.entries.as_slice()).as_f64();
    let holds = positivity_margin >= tol && negative_part_margin >= tol && free_margin.map_or(true, |m| m >= tol);
    Ok(DominationReport { positivity_margin, negative_part_margin, free_margin, holds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTransfer {
    pub c: f64,
    pub big_c_free: f64,
    pub big_c_perturbed: f64,
    /// (sup g / inf g)²
    pub factor: f64,
    pub holds: bool,
}

/// Compare C(Δ+V) with (sup g/inf g)²·C(Δ) at the free fit's c on the
/// same (x, y, t) grid.
pub fn gaussian_transfer(free: &GaussianFit, perturbed: &[GaussianSample], g: &[f64]) -> Result<GaussianTransfer> {
    if perturbed.len() != free.samples.len()
        || perturbed.iter().zip(&free.samples).any(|(a, b)| (a.x, a.y, a.t) != (b.x, b.y, b.t))
    {
        return Err(Error::Precondition("sample grids differ".into()));
    }
    let (lo, hi) = g.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let factor = (hi / lo).powi(2);
    let big_c_perturbed = upper_constant(perturbed, free.c_upper);
    Ok(GaussianTransfer {
        c: free.c_upper,
        big_c_free: free.big_c_upper,
        big_c_perturbed,
        factor,
        holds: big_c_perturbed <= factor * free.big_c_upper * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_graph, GeometrySpec};
    use crate::operators::assemble_schrodinger;

    fn p3(v: Potential<f64>) -> SchrodingerOperator<f64> {
        let g = generate_graph(&GeometrySpec::Lattice { dimension: 1, radius: 1 }, 100).unwrap();
        assemble_schrodinger(&g, &v)
    }

    #[test]
    fn p3_closed_form() {
        let op = p3(Potential::zero(5));
        let t = 0.7;
        let k = heat_kernel(&op, t).unwrap();
        let s2 = std::f64::consts::SQRT_2;
        let lam = [2.0 - s2, 2.0, 2.0 + s2];
        let phi0 = [0.5, 1.0 / s2, 0.5];
        let want: f64 = lam.iter().zip(&phi0).map(|(l, p)| (-t * l).exp() * p * p).sum();
        assert!((k.get(1, 1).unwrap() - want).abs() < 1e-14);
        assert!(k.asymmetry() < 1e-14);
        assert!(k.row_masses().unwrap().iter().all(|&m| m <= 1.0));
    }

    #[test]
    fn small_time_identity() {
        let op = p3(Potential::zero(5));
        let k = heat_kernel(&op, 1e-6).unwrap();
        let dev = (k.entries() - DMatrix::identity(3, 3)).abs().max();
        assert!(dev < 1e-4);
    }

    #[test]
    fn krylov_matches_dense() {
        let op = p3(Potential::point_mass(5, 2, 0.3));
        let dense = HeatEngine::new(&op).unwrap();
        let kry = HeatEngine::with_limit(&op, 0).unwrap();
        for t in [0.5, 2.0] {
            let a = dense.kernel(t).unwrap();
            let b = kry.columns(t, &[1, 2, 3]).unwrap();
            assert!((a.entries() - b.entries()).abs().max() < 1e-12);
        }
        assert!(chapman_kolmogorov(&kry, 1.0, 0.5, &[2]).unwrap() < 1e-12);
        assert!(chapman_kolmogorov(&dense, 1.0, 0.5, &[]).unwrap() < 1e-12);
    }

    #[test]
    fn transform_identity_p3() {
        let op = p3(Potential::point_mass(5, 2, -0.4));
        let g = [1.0, 4.0 / 3.0, 5.0 / 3.0, 4.0 / 3.0, 1.0];
        assert!(h_transform_kernel_check(&op, &g, &[0.5, 1.0, 2.0], &[]).unwrap() < 1e-10);
        let (harm, green) = h_transform_green_check(&op, &g).unwrap();
        assert!(harm < 1e-12 && green < 1e-12);
    }

    #[test]
    fn domination_p3() {
        let free = HeatEngine::new(&p3(Potential::zero(5))).unwrap().kernel(1.0).unwrap();
        let v = Potential::point_mass(5, 2, -0.4);
        let pv = HeatEngine::new(&p3(v.clone())).unwrap().kernel(1.0).unwrap();
        let r = domination_check(&free, &pv, &pv, &v).unwrap();
        assert!(r.holds && r.free_margin.unwrap() >= 0.0);
    }

    #[test]
    fn single_sample_fit() {
        let s = GaussianSample { x: 0, y: 0, t: 1.0, distance: 0.0, volume: 3.0, value: 0.25 };
        let fit = gaussian_envelope_fit(vec![s], true).unwrap();
        assert_eq!(fit.c_upper, 2.0);
        assert!((fit.big_c_upper - 0.75).abs() < 1e-15);
        assert_eq!(fit.max_violation, 0.0);
        assert!(matches!(gaussian_envelope_fit(vec![], false), Err(Error::EmptySample)));
    }
}
