//! Schrödinger operators P = Δ_μ + V with Dirichlet boundary.

use crate::error::{Error, Result};
use crate::geometry::{Exhaustion, GraphWithBoundary, UNREACHABLE};
use crate::linalg::CsrMatrix;
use crate::num::{max_abs, Real};
use std::sync::Arc;

/// A real vertex function used as a zero-order term.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential<T> {
    values: Vec<T>,
}

impl<T: Real> Potential<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zero(n: usize) -> Self {
        Self { values: vec![T::zero(); n] }
    }

    /// c·δ_x on a graph with n vertices.
    pub fn point_mass(n: usize, x: usize, c: T) -> Self {
        let mut values = vec![T::zero(); n];
        values[x] = c;
        Self { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// V₊ = max(V, 0)
    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(T::zero()))
    }

    /// V₋ = max(−V, 0)
    pub fn negative_part(&self) -> Self {
        self.map(|v| (-v).max(T::zero()))
    }

    pub fn abs(&self) -> Self {
        self.map(|v| v.abs())
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect() }
    }

    /// Pointwise product with a vertex function.
    pub fn times(&self, f: &[T]) -> Self {
        Self { values: self.values.iter().zip(f).map(|(&a, &b)| a * b).collect() }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= T::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == T::zero())
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.values)
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Closed-form potential families.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// amplitude·𝟙_{B(center, radius)}; the centre defaults to the origin.
    Bump { center: Option<usize>, radius: usize, amplitude: f64 },
    /// amplitude·d(x, o)^{−β}, with value `amplitude` at o.
    PowerDecay { amplitude: f64, beta: f64 },
    PointMass { vertex: Option<usize>, amplitude: f64 },
    Table(Vec<(usize, f64)>),
    Sum(Vec<PotentialSpec>),
}

impl PotentialSpec {
    pub fn build<T: Real>(&self, g: &GraphWithBoundary<T>) -> Result<Potential<T>> {
        let n = g.num_vertices();
        let check = |x: usize| -> Result<usize> {
            if x < n {
                Ok(x)
            } else {
                Err(Error::Precondition(format!("vertex {x} out of range")))
            }
        };
        Ok(match self {
            PotentialSpec::Zero => Potential::zero(n),
            PotentialSpec::Bump { center, radius, amplitude } => {
                let c = check(center.unwrap_or(g.origin()))?;
                let d = g.hop_distances(c);
                Potential::new(
                    d.iter().map(|&dy| if dy <= *radius { T::lit(*amplitude) } else { T::zero() }).collect(),
                )
            }
            PotentialSpec::PowerDecay { amplitude, beta } => {
                let d = g.hop_distances(g.origin());
                Potential::new(
                    d.iter()
                        .map(|&dy| match dy {
                            0 => T::lit(*amplitude),
                            UNREACHABLE => T::zero(),
                            k => T::lit(amplitude * (k as f64).powf(-beta)),
                        })
                        .collect(),
                )
            }
            PotentialSpec::PointMass { vertex, amplitude } => {
                Potential::point_mass(n, check(vertex.unwrap_or(g.origin()))?, T::lit(*amplitude))
            }
            PotentialSpec::Table(entries) => {
                let mut v = vec![T::zero(); n];
                for &(x, a) in entries {
                    v[check(x)?] += T::lit(a);
                }
                Potential::new(v)
            }
            PotentialSpec::Sum(terms) => {
                let mut acc = Potential::zero(n);
                for t in terms {
                    acc = acc.add(&t.build(g)?);
                }
                acc
            }
        })
    }
}

/// P = Δ_μ + V restricted to the interior with zero boundary values.
///
/// `stiffness` holds K = diag(μ)·P, which is symmetric; solves and spectra
/// go through K and the measure.
#[derive(Debug, Clone)]
pub struct SchrodingerOperator<T: Real> {
    graph: Arc<GraphWithBoundary<T>>,
    potential: Potential<T>,
    stiffness: CsrMatrix<T>,
    interior_matrix: CsrMatrix<T>,
    mu: Vec<T>,
}

pub fn assemble_schrodinger<T: Real>(g: &GraphWithBoundary<T>, v: &Potential<T>) -> SchrodingerOperator<T> {
    SchrodingerOperator::new(Arc::new(g.clone()), v.clone())
}

impl<T: Real> SchrodingerOperator<T> {
    pub fn new(graph: Arc<GraphWithBoundary<T>>, potential: Potential<T>) -> Self {
        assert_eq!(potential.len(), graph.num_vertices(), "potential must cover every vertex");
        let mut trip = Vec::new();
        for (i, &x) in graph.interior().iter().enumerate() {
            let mut diag = potential.values()[x] * graph.measure()[x];
            for &(y, w) in graph.neighbors(x) {
                diag += w;
                if let Some(j) = graph.interior_index(y) {
                    trip.push((i, j, -w));
                }
            }
            trip.push((i, i, diag));
        }
        let n = graph.interior().len();
        let stiffness = CsrMatrix::from_triplets(n, n, trip);
        let mu = graph.interior_measure();
        let inv_mu: Vec<T> = mu.iter().map(|&m| T::one() / m).collect();
        let interior_matrix = stiffness.scale_rows(&inv_mu);
        Self { graph, potential, stiffness, interior_matrix, mu }
    }

    pub fn graph(&self) -> &GraphWithBoundary<T> {
        &self.graph
    }

    pub fn graph_arc(&self) -> Arc<GraphWithBoundary<T>> {
        self.graph.clone()
    }

    pub fn potential(&self) -> &Potential<T> {
        &self.potential
    }

    /// Interior dimension.
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn interior_matrix(&self) -> &CsrMatrix<T> {
        &self.interior_matrix
    }

    pub fn stiffness(&self) -> &CsrMatrix<T> {
        &self.stiffness
    }

    /// μ on the interior.
    pub fn interior_measure(&self) -> &[T] {
        &self.mu
    }

    /// ‖P‖_∞ (max absolute row sum).
    pub fn norm(&self) -> T {
        self.interior_matrix.norm_inf()
    }

    /// Same graph with another potential.
    pub fn with_potential(&self, v: Potential<T>) -> Self {
        Self::new(self.graph.clone(), v)
    }

    /// P + dv
    pub fn plus_potential(&self, dv: &Potential<T>) -> Self {
        self.with_potential(self.potential.add(dv))
    }

    /// (Pu)(x) for interior x, using the boundary values carried by u.
    pub fn apply_full(&self, u: &[T]) -> Vec<T> {
        let g = &*self.graph;
        g.interior()
            .iter()
            .map(|&x| {
                let s = g.neighbors(x).iter().fold(T::zero(), |s, &(y, w)| s + w * (u[x] - u[y]));
                s / g.measure()[x] + self.potential.values()[x] * u[x]
            })
            .collect()
    }

    /// P applied to an interior vector with zero boundary values.
    pub fn apply_interior(&self, u_int: &[T]) -> Vec<T> {
        self.interior_matrix.mul_vec(u_int)
    }

    pub fn cast<S: Real>(&self) -> SchrodingerOperator<S> {
        let g = self.graph.cast::<S>();
        let v = Potential::new(self.potential.values().iter().map(|&x| S::lit(x.as_f64())).collect());
        SchrodingerOperator::new(Arc::new(g), v)
    }
}

/// q(u) split into its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFormValue<T> {
    pub value: T,
    pub gradient_energy: T,
    pub potential_term: T,
}

pub fn quadratic_form<T: Real>(op: &SchrodingerOperator<T>, u: &[T]) -> Result<QuadraticFormValue<T>> {
    let g = op.graph();
    if let Some(x) = (0..g.num_vertices()).find(|&x| !g.is_interior(x) && u[x] != T::zero()) {
        return Err(Error::NonzeroBoundary { vertex: x });
    }
    let gradient_energy = g.edges().iter().fold(T::zero(), |s, &(a, b, w)| {
        let d = u[a] - u[b];
        s + w * d * d
    });
    let potential_term = g
        .interior()
        .iter()
        .fold(T::zero(), |s, &x| s + op.potential().values()[x] * u[x] * u[x] * g.measure()[x]);
    Ok(QuadraticFormValue { value: gradient_energy + potential_term, gradient_energy, potential_term })
}

/// (V₋₀, V₋∞, V₊) with V₋₀ = V₋·𝟙_{Ω_k}.
pub fn split_potential<T: Real>(
    v: &Potential<T>,
    ex: &Exhaustion,
    k: usize,
) -> Result<(Potential<T>, Potential<T>, Potential<T>)> {
    if k >= ex.len() {
        return Err(Error::Precondition(format!("exhaustion index {k} out of range")));
    }
    let vm = v.negative_part();
    let near = vm.times(&ex.indicator::<T>(k));
    let far = vm.sub(&near);
    Ok((near, far, v.positive_part()))
}

/// Doob transform by a positive P-harmonic h.
///
/// Returns the graph with w̃ = w·h⊗h and μ̃ = h²μ, and the weighted
/// Laplacian on it, which equals h⁻¹∘P∘h on the interior.
pub fn h_transform<T: Real>(
    op: &SchrodingerOperator<T>,
    h: &[T],
) -> Result<(GraphWithBoundary<T>, SchrodingerOperator<T>)> {
    let g = op.graph();
    if let Some(x) = h.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::NotPositiveFunction { vertex: x });
    }
    let residual = max_abs(&op.apply_full(h));
    let tolerance = T::lit(1e-8) * (T::one() + op.norm() * max_abs(h));
    if residual > tolerance {
        return Err(Error::NotHarmonic { residual: residual.as_f64(), tolerance: tolerance.as_f64() });
    }
    let w: Vec<T> = g.edges().iter().map(|&(a, b, w)| w * h[a] * h[b]).collect();
    let mu: Vec<T> = g.measure().iter().zip(h).map(|(&m, &hx)| m * hx * hx).collect();
    let gh = g.reweighted(w, mu)?;
    let oph = SchrodingerOperator::new(Arc::new(gh.clone()), Potential::zero(gh.num_vertices()));
    Ok((gh, oph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_exhaustion, generate_graph, GeometrySpec};

    fn p3() -> GraphWithBoundary<f64> {
        generate_graph(&GeometrySpec::Lattice { dimension: 1, radius: 1 }, 100).unwrap()
    }

    #[test]
    fn p3_matrix() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::zero(5));
        let m = op.interior_matrix().to_dense();
        let want = [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[(i, j)], want[i][j]);
            }
        }
        let op = assemble_schrodinger(&g, &Potential::point_mass(5, 2, 0.7));
        let m2 = op.interior_matrix().to_dense();
        assert_eq!(m2[(1, 1)], 2.7);
        assert_eq!(m2[(0, 0)], 2.0);
    }

    #[test]
    fn quadratic_form_on_delta() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::point_mass(5, 2, -0.4));
        let q = quadratic_form(&op, &[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(q.gradient_energy, 2.0);
        assert_eq!(q.potential_term, -0.4);
        assert!(quadratic_form(&op, &[1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        let z = quadratic_form(&op, &[0.0; 5]).unwrap();
        assert_eq!((z.gradient_energy, z.potential_term), (0.0, 0.0));
    }

    #[test]
    fn split_on_p3() {
        let g = p3();
        let ex = build_exhaustion(&g, &[0, 1]).unwrap();
        let v = Potential::point_mass(5, 2, -0.4);
        let (near, far, plus) = split_potential(&v, &ex, 0).unwrap();
        assert_eq!(near.values()[2], 0.4);
        assert!(far.is_zero() && plus.is_zero());
        let (n2, f2, _) = split_potential(&Potential::point_mass(5, 2, 1.0), &ex, 0).unwrap();
        assert!(n2.is_zero() && f2.is_zero());
    }

    #[test]
    fn identity_transform() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::zero(5));
        let (gh, oph) = h_transform(&op, &[1.0; 5]).unwrap();
        assert_eq!(gh, g);
        assert_eq!(oph.interior_matrix(), op.interior_matrix());
    }

    #[test]
    fn transform_rejects_bad_h() {
        let g = p3();
        let op = assemble_schrodinger(&g, &Potential::zero(5));
        assert!(matches!(h_transform(&op, &[1.0, 1.0, -1.0, 1.0, 1.0]), Err(Error::NotPositiveFunction { vertex: 2 })));
        assert!(matches!(h_transform(&op, &[1.0, 2.0, 3.0, 2.0, 1.0]), Err(Error::NotHarmonic { .. })));
    }
}
