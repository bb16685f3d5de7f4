//! Dirichlet Green functions, exhaustion limits and criticality.

use crate::error::{Error, Result};
use crate::fit::ls_slope;
use crate::geometry::Exhaustion;
use crate::linalg::{dense_min_eigen, lanczos_extreme, SpdSolver, DENSE_EIGEN_LIMIT, DENSE_LIMIT};
use crate::num::{max_abs, Real};
use crate::operators::{Potential, SchrodingerOperator};
use nalgebra::DMatrix;

/// Anything that can evaluate (G f)(x) = Σ_y G(x,y) f(y) μ(y).
pub trait GreenAction<T: Real> {
    /// Input and output are functions on all vertices; the output vanishes
    /// outside the kernel's domain.
    fn green_apply(&self, f: &[T]) -> Result<Vec<T>>;
}

/// Kernel matrix on a domain of interior vertices, with respect to μ.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable<T: Real> {
    domain: Vec<usize>,
    entries: DMatrix<T>,
    measure: Vec<T>,
    full_measure: Vec<T>,
    position: Vec<usize>,
}

impl<T: Real> KernelTable<T> {
    /// `full_measure` is μ on every vertex of the graph.
    pub fn new(domain: Vec<usize>, entries: DMatrix<T>, full_measure: &[T]) -> Self {
        let mut position = vec![usize::MAX; full_measure.len()];
        for (k, &x) in domain.iter().enumerate() {
            position[x] = k;
        }
        let measure = domain.iter().map(|&x| full_measure[x]).collect();
        Self { domain, entries, measure, full_measure: full_measure.to_vec(), position }
    }

    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    /// Measure restricted to the domain.
    pub fn domain_measure(&self) -> &[T] {
        &self.measure
    }

    /// K(x, y), zero outside the domain.
    pub fn get(&self, x: usize, y: usize) -> T {
        let (i, j) = (self.position[x], self.position[y]);
        if i == usize::MAX || j == usize::MAX {
            T::zero()
        } else {
            self.entries[(i, j)]
        }
    }

    pub fn index_of(&self, x: usize) -> Option<usize> {
        let k = self.position[x];
        (k != usize::MAX).then_some(k)
    }

    /// Same kernel re-indexed over a larger domain, zero-padded.
    pub fn padded(&self, domain: &[usize]) -> Self {
        let n = domain.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &x) in domain.iter().enumerate() {
            for (j, &y) in domain.iter().enumerate() {
                m[(i, j)] = self.get(x, y);
            }
        }
        Self::new(domain.to_vec(), m, &self.full_measure)
    }

    /// Max relative asymmetry.
    pub fn asymmetry(&self) -> T {
        let scale = self.entries.iter().fold(T::zero(), |m, &v| m.max(v.abs())).max(T::lit(1e-300));
        let mut worst = T::zero();
        let n = self.domain.len();
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst / scale
    }
}

impl<T: Real> GreenAction<T> for KernelTable<T> {
    fn green_apply(&self, f: &[T]) -> Result<Vec<T>> {
        let w: Vec<T> = self.domain.iter().zip(&self.measure).map(|(&y, &m)| f[y] * m).collect();
        let mut out = vec![T::zero(); self.position.len()];
        let n = self.domain.len();
        for j in 0..n {
            if w[j] == T::zero() {
                continue;
            }
            let col = self.entries.column(j);
            for i in 0..n {
                out[self.domain[i]] += col[i] * w[j];
            }
        }
        Ok(out)
    }
}

/// Factorized P on the whole interior; applies G_P = P⁻¹ without forming it.
#[derive(Debug, Clone)]
pub struct GreenSolver<T: Real> {
    op: SchrodingerOperator<T>,
    solver: SpdSolver<T>,
}

impl<T: Real> GreenSolver<T> {
    pub fn new(op: &SchrodingerOperator<T>) -> Result<Self> {
        match SpdSolver::new(op.stiffness()) {
            Ok(solver) => Ok(Self { op: op.clone(), solver }),
            Err(_) => Err(Error::NotPositive { lambda_min: lowest_eigenpair(op)?.0.as_f64() }),
        }
    }

    pub fn operator(&self) -> &SchrodingerOperator<T> {
        &self.op
    }

    /// u = P⁻¹ f on the interior (zero boundary data).
    pub fn solve_interior(&self, f_int: &[T]) -> Result<Vec<T>> {
        let b: Vec<T> = f_int.iter().zip(self.op.interior_measure()).map(|(&f, &m)| f * m).collect();
        self.solver.solve(&b)
    }

    /// K⁻¹ b for the symmetric stiffness K = diag(μ)P.
    pub fn solve_stiffness(&self, b: &[T]) -> Result<Vec<T>> {
        self.solver.solve(b)
    }

    /// Dirichlet problem Pu = f in the interior, u = data on the boundary.
    pub fn solve_dirichlet(&self, f_int: &[T], boundary: &[T]) -> Result<Vec<T>> {
        let g = self.op.graph();
        let mut bdata = vec![T::zero(); g.num_vertices()];
        for x in g.boundary() {
            bdata[x] = boundary[x];
        }
        // P(u₀ + b) = f with u₀ interior-supported ⇒ Pu₀ = f − P b.
        let pb = self.op.apply_full(&bdata);
        let rhs: Vec<T> = f_int.iter().zip(&pb).map(|(&f, &p)| f - p).collect();
        let u0 = self.solve_interior(&rhs)?;
        let mut u = bdata;
        for (k, &x) in g.interior().iter().enumerate() {
            u[x] = u0[k];
        }
        Ok(u)
    }
}

impl<T: Real> GreenAction<T> for GreenSolver<T> {
    fn green_apply(&self, f: &[T]) -> Result<Vec<T>> {
        let g = self.op.graph();
        let u = self.solve_interior(&g.restrict(f))?;
        Ok(g.extend_by_zero(&u))
    }
}

/// Smallest eigenvalue of P on the interior and a positive eigenfunction
/// (max-normalized, on all vertices).
pub fn lowest_eigenpair<T: Real>(op: &SchrodingerOperator<T>) -> Result<(T, Vec<T>)> {
    let idx: Vec<usize> = (0..op.dim()).collect();
    let (lam, psi) = restricted_lowest_eigenpair(op, &idx)?;
    let g = op.graph();
    Ok((lam, g.extend_by_zero(&psi)))
}

/// Lowest eigenpair of P restricted to interior positions `idx`.
fn restricted_lowest_eigenpair<T: Real>(op: &SchrodingerOperator<T>, idx: &[usize]) -> Result<(T, Vec<T>)> {
    let k = op.stiffness().principal(idx);
    let mu: Vec<T> = idx.iter().map(|&i| op.interior_measure()[i]).collect();
    let s: Vec<T> = mu.iter().map(|&m| T::one() / m.sqrt()).collect();
    let sym = k.scale_rows(&s).scale_cols(&s);
    let (lam, psi) = if idx.len() <= DENSE_EIGEN_LIMIT {
        dense_min_eigen(&sym.to_dense())
    } else {
        let start: Vec<T> = mu.iter().map(|&m| m.sqrt()).collect();
        lanczos_extreme(|x| sym.mul_vec(x), &start, true, T::lit(1e-9), 600)?
    };
    let mut phi: Vec<T> = psi.iter().zip(&s).map(|(&p, &si)| p * si).collect();
    let m = phi.iter().fold(T::zero(), |a, &b| if b.abs() > a.abs() { b } else { a });
    if m != T::zero() {
        for v in phi.iter_mut() {
            *v /= m;
        }
    }
    Ok((lam, phi))
}

fn interior_positions<T: Real>(op: &SchrodingerOperator<T>, domain: &[usize]) -> Result<Vec<usize>> {
    domain
        .iter()
        .map(|&x| {
            op.graph()
                .interior_index(x)
                .ok_or_else(|| Error::Precondition(format!("vertex {x} is not interior")))
        })
        .collect()
}

/// G^Ω = (K_Ω)⁻¹ where K = diag(μ)P.
pub fn dirichlet_green<T: Real>(op: &SchrodingerOperator<T>, domain: &[usize]) -> Result<KernelTable<T>> {
    if domain.len() > DENSE_LIMIT {
        return Err(Error::TooLarge { size: domain.len(), limit: DENSE_LIMIT });
    }
    let mut domain = domain.to_vec();
    domain.sort_unstable();
    let idx = interior_positions(op, &domain)?;
    let k = op.stiffness().principal(&idx).to_dense();
    let chol = match nalgebra::Cholesky::new(k) {
        Some(c) => c,
        None => {
            let (lam, _) = restricted_lowest_eigenpair(op, &idx)?;
            return Err(Error::NotPositive { lambda_min: lam.as_f64() });
        }
    };
    let inv = chol.inverse();
    let sym = (&inv + inv.transpose()) * T::lit(0.5);
    Ok(KernelTable::new(domain, sym, op.graph().measure()))
}

/// Green functions along an exhaustion.
#[derive(Debug, Clone)]
pub struct ExhaustionGreen<T: Real> {
    /// G^{Ω_n}, each padded to the last domain.
    pub levels: Vec<KernelTable<T>>,
    pub extrapolated: KernelTable<T>,
    /// ‖G^{Ω_N} − G^{Ω_{N−1}}‖_max
    pub tail_estimate: T,
    /// Largest decrease seen between consecutive levels (≤ 0 when monotone).
    pub monotonicity_excess: T,
}

pub fn exhaustion_green<T: Real>(op: &SchrodingerOperator<T>, ex: &Exhaustion) -> Result<ExhaustionGreen<T>> {
    let last = ex.set(ex.len() - 1).to_vec();
    let mut levels = Vec::with_capacity(ex.len());
    for k in 0..ex.len() {
        levels.push(dirichlet_green(op, ex.set(k))?.padded(&last));
    }
    let mut excess = T::lit(f64::NEG_INFINITY);
    for n in 1..levels.len() {
        let d = levels[n - 1].entries() - levels[n].entries();
        let worst = d.iter().fold(T::lit(f64::NEG_INFINITY), |m, &v| m.max(v));
        let scale = levels[n].entries().iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        if worst > T::lit(1e-12) * scale.max(T::one()) {
            return Err(Error::Monotonicity { level: n, excess: worst.as_f64() });
        }
        excess = excess.max(worst);
    }
    let tail_estimate = if levels.len() > 1 {
        let n = levels.len();
        let d = levels[n - 1].entries() - levels[n - 2].entries();
        d.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    } else {
        T::zero()
    };
    let extrapolated = levels.last().unwrap().clone();
    Ok(ExhaustionGreen {
        levels,
        extrapolated,
        tail_estimate,
        monotonicity_excess: if excess.is_finite() { excess } else { T::zero() },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// How the trace sequence was judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceRule {
    /// Increment decay fit over at least three levels.
    IncrementDecay,
    /// Too few levels for a trend: the finite Dirichlet problem decides.
    FiniteDomain,
}

#[derive(Debug, Clone)]
pub struct CriticalityReport<T: Real> {
    pub classification: Criticality,
    pub lambda_min: T,
    pub ground_state: Vec<T>,
    /// G^{Ω_n}(o, o); +∞ where the restriction is not positive definite.
    pub green_diagonal_trace: Vec<f64>,
    /// Fitted exponent of per-unit-radius increments ΔG/Δr against r.
    pub trace_exponent: Option<f64>,
    pub rule: TraceRule,
    /// Distance of the deciding statistic from its threshold.
    pub confidence: f64,
}

/// Increments must decay faster than r^{−(1+margin)} to be summable.
pub const TRACE_DECAY_THRESHOLD: f64 = -1.1;

pub fn classify_criticality<T: Real>(op: &SchrodingerOperator<T>, ex: &Exhaustion) -> Result<CriticalityReport<T>> {
    let (lambda_min, ground_state) = lowest_eigenpair(op)?;
    let tol = T::lit(1e-10) * op.norm();
    let origin = op.graph().origin();
    let mut trace = Vec::with_capacity(ex.len());
    for k in 0..ex.len() {
        let idx = interior_positions(op, ex.set(k))?;
        let o = match ex.set(k).iter().position(|&x| x == origin) {
            Some(o) => o,
            None => return Err(Error::Precondition("exhaustion must contain the origin".into())),
        };
        let sub = op.stiffness().principal(&idx);
        let value = match SpdSolver::new(&sub) {
            Ok(s) => {
                let mut e = vec![T::zero(); idx.len()];
                e[o] = T::one();
                match s.solve(&e) {
                    Ok(u) if u[o] > T::zero() => u[o].as_f64(),
                    _ => f64::INFINITY,
                }
            }
            Err(_) => f64::INFINITY,
        };
        trace.push(value);
    }
    if lambda_min < -tol {
        return Ok(CriticalityReport {
            classification: Criticality::Supercritical,
            lambda_min,
            ground_state,
            green_diagonal_trace: trace,
            trace_exponent: None,
            rule: TraceRule::FiniteDomain,
            confidence: (-lambda_min - tol).as_f64(),
        });
    }
    let finite_positive = lambda_min > tol;
    let (classification, exponent, rule, confidence) = if trace.len() >= 3 && trace.iter().all(|v| v.is_finite()) {
        let radii = ex.radii();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let scale = trace.last().unwrap().abs().max(1e-300);
        for n in 0..trace.len() - 1 {
            let dr = (radii[n + 1] - radii[n]) as f64;
            let inc = (trace[n + 1] - trace[n]) / dr;
            let mid = 0.5 * (radii[n + 1] + radii[n]) as f64;
            xs.push(mid.max(0.5).ln());
            ys.push(inc.max(1e-15 * scale).ln());
        }
        let e = ls_slope(&xs, &ys);
        let bounded = e < TRACE_DECAY_THRESHOLD;
        let c = if bounded && finite_positive { Criticality::Subcritical } else { Criticality::Critical };
        (c, Some(e), TraceRule::IncrementDecay, (e - TRACE_DECAY_THRESHOLD).abs())
    } else {
        let c = if finite_positive { Criticality::Subcritical } else { Criticality::Critical };
        (c, None, TraceRule::FiniteDomain, (lambda_min - tol).abs().as_f64())
    };
    Ok(CriticalityReport {
        classification,
        lambda_min,
        ground_state,
        green_diagonal_trace: trace,
        trace_exponent: exponent,
        rule,
        confidence,
    })
}

/// ε = 1 − λ_max with λ_max the top eigenvalue of ΣV₋u²μ against the form of
/// `op_base` (= P + V₊).
pub fn strong_subcriticality_epsilon<T: Real>(op_base: &SchrodingerOperator<T>, vminus: &Potential<T>) -> Result<T> {
    let solver = GreenSolver::new(op_base)?;
    let lam = generalized_top_eigenvalue(&solver, vminus)?;
    Ok(T::one() - lam)
}

/// Largest λ with Σ W u² ≥ λ·⟨Ku,u⟩ attainable, W = diag(w·μ) ≥ 0.
pub(crate) fn generalized_top_eigenvalue<T: Real>(solver: &GreenSolver<T>, w: &Potential<T>) -> Result<T> {
    let op = solver.operator();
    let g = op.graph();
    let weights: Vec<T> = g
        .interior()
        .iter()
        .zip(op.interior_measure())
        .map(|(&x, &m)| w.values()[x] * m)
        .collect();
    if weights.iter().any(|&v| v < T::zero()) {
        return Err(Error::Precondition("weight must be nonnegative".into()));
    }
    let support: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > T::zero()).collect();
    if support.is_empty() {
        return Ok(T::zero());
    }
    let sq: Vec<T> = support.iter().map(|&i| weights[i].sqrt()).collect();
    let n = op.dim();
    if support.len() <= 400 {
        let m = support.len();
        let mut a = DMatrix::zeros(m, m);
        for (c, &j) in support.iter().enumerate() {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let col = solver.solve_stiffness(&e)?;
            for (r, &i) in support.iter().enumerate() {
                a[(r, c)] = sq[r] * col[i] * sq[c];
            }
        }
        let a = (&a + a.transpose()) * T::lit(0.5);
        Ok(crate::linalg::dense_max_eigenvalue(&a))
    } else {
        let apply = |x: &[T]| -> Vec<T> {
            let mut b = vec![T::zero(); n];
            for (k, &i) in support.iter().enumerate() {
                b[i] = sq[k] * x[k];
            }
            let u = solver.solve_stiffness(&b).expect("solver succeeded on earlier calls");
            support.iter().enumerate().map(|(k, &i)| sq[k] * u[i]).collect()
        };
        let start: Vec<T> = sq.clone();
        let (lam, _) = lanczos_extreme(apply, &start, false, T::lit(1e-10), 300)?;
        Ok(lam)
    }
}

/// Residual max_x |Σ_z K(x,z)(Pf)(z)μ(z) − f(x)| for f supported in the domain.
pub fn reproducing_residual<T: Real>(op: &SchrodingerOperator<T>, table: &KernelTable<T>, f: &[T]) -> Result<T> {
    let g = op.graph();
    let mut full = vec![T::zero(); g.num_vertices()];
    for &x in table.domain() {
        full[x] = f[x];
    }
    let mut pf = vec![T::zero(); g.num_vertices()];
    let pfi = op.apply_full(&full);
    for (k, &x) in g.interior().iter().enumerate() {
        pf[x] = pfi[k];
    }
    let kf = table.green_apply(&pf)?;
    let diff: Vec<T> = table.domain().iter().map(|&x| kf[x] - full[x]).collect();
    Ok(max_abs(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_exhaustion, generate_graph, GeometrySpec, GraphWithBoundary};
    use crate::operators::assemble_schrodinger;

    fn p3() -> GraphWithBoundary<f64> {
        generate_graph(&GeometrySpec::Lattice { dimension: 1, radius: 1 }, 100).unwrap()
    }

    #[test]
    fn p3_green() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::zero(5));
        let t = dirichlet_green(&op, g.interior()).unwrap();
        let want = [[3.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.entries()[(i, j)] - want[i][j] / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn supercritical_p3_reports_lambda() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::point_mass(5, 2, -1.5));
        match dirichlet_green(&op, g.interior()) {
            Err(Error::NotPositive { lambda_min }) => assert!(lambda_min < 0.0),
            other => panic!("unexpected {other:?}"),
        }
        let ex = build_exhaustion(&g, &[0, 1]).unwrap();
        assert_eq!(classify_criticality(&op, &ex).unwrap().classification, Criticality::Supercritical);
    }

    #[test]
    fn epsilon_on_p3() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::zero(5));
        for c in [0.2, 0.4, 0.5, 0.9, 1.0] {
            let e = strong_subcriticality_epsilon(&op, &Potential::point_mass(5, 2, c)).unwrap();
            assert!((e - (1.0 - c)).abs() < 1e-12);
        }
        assert_eq!(strong_subcriticality_epsilon(&op, &Potential::zero(5)).unwrap(), 1.0);
    }

    #[test]
    fn green_solver_matches_table() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::point_mass(5, 2, 0.3));
        let t = dirichlet_green(&op, g.interior()).unwrap();
        let s = GreenSolver::new(&op).unwrap();
        let f = [0.0, 0.5, -1.0, 2.0, 0.0];
        let a = t.green_apply(&f).unwrap();
        let b = s.green_apply(&f).unwrap();
        for i in 0..5 {
            assert!((a[i] - b[i]).abs() < 1e-13);
        }
    }
}
