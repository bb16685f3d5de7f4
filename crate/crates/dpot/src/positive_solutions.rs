//! Positive solutions g ∼ h of (P+V)u = 0.

use crate::error::{Error, Result};
use crate::geometry::Exhaustion;
use crate::green::{
    classify_criticality, dirichlet_green, strong_subcriticality_epsilon, Criticality, GreenAction, GreenSolver,
};
use crate::num::{max_abs, Real};
use crate::operators::{split_potential, Potential, SchrodingerOperator};
use crate::perturbation::{h_bounded_norm, kato_tail_profile, small_perturbation_profile, TailClass};

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveSolution<T> {
    /// On all vertices; equals h on the boundary.
    pub g: Vec<T>,
    /// (inf g/h, sup g/h)
    pub equivalence: (f64, f64),
    /// ‖(P+V)g‖_∞ over the interior.
    pub residual: f64,
    /// Analytic bounds c₀·h ≤ g ≤ c₁·h from the construction.
    pub certified_bounds: Option<(f64, Option<f64>)>,
    /// ‖g − h + G_P(Vg)‖_∞ when computed.
    pub integral_identity_residual: Option<f64>,
    pub iterations: usize,
    /// Exhaustion level used by the split construction.
    pub split_level: Option<usize>,
}

fn equivalence<T: Real>(g: &[T], h: &[T]) -> (f64, f64) {
    g.iter().zip(h).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&a, &b)| {
        let r = (a / b).as_f64();
        (lo.min(r), hi.max(r))
    })
}

fn residual_of<T: Real>(op: &SchrodingerOperator<T>, v: &Potential<T>, g: &[T]) -> f64 {
    max_abs(&op.plus_potential(v).apply_full(g)).as_f64()
}

/// Tracks ‖h_k‖/‖h_{k−1}‖ and fails after two consecutive ratios ≥ 1.
struct RatioMonitor {
    strikes: usize,
}

impl RatioMonitor {
    fn observe(&mut self, term: usize, ratio: f64) -> Result<()> {
        if ratio >= 1.0 {
            self.strikes += 1;
            if self.strikes >= 2 {
                return Err(Error::Divergence { term, ratio });
            }
        } else {
            self.strikes = 0;
        }
        Ok(())
    }
}

const MAX_TERMS: usize = 10_000;

/// g = Σ (−1)^k (P⁻¹V)^k h.
pub fn neumann_series_solution<T: Real, G: GreenAction<T> + ?Sized>(
    op: &SchrodingerOperator<T>,
    green: &G,
    v: &Potential<T>,
    h: &[T],
    tol: f64,
) -> Result<PositiveSolution<T>> {
    let eps = h_bounded_norm(green, v, h)?.as_f64();
    let nonpositive = v.values().iter().all(|&x| x <= T::zero());
    if !(eps < 0.5 || (nonpositive && eps < 1.0)) {
        return Err(Error::Precondition(format!("‖V‖_(H,h) = {eps} is too large for the Neumann series")));
    }
    let hnorm = max_abs(h);
    let mut g = h.to_vec();
    let mut term = h.to_vec();
    let mut monitor = RatioMonitor { strikes: 0 };
    let mut k = 0;
    let mut sign = T::one();
    while !v.is_zero() && max_abs(&term) >= T::lit(tol) * hnorm {
        if k >= MAX_TERMS {
            return Err(Error::Divergence { term: k, ratio: f64::NAN });
        }
        k += 1;
        let f: Vec<T> = v.values().iter().zip(&term).map(|(&a, &b)| a * b).collect();
        let next = green.green_apply(&f)?;
        let bound = T::lit(eps.powi(k as i32) * (1.0 + 1e-10));
        let slack = T::lit(1e-14) * hnorm;
        if let Some(x) = (0..h.len()).find(|&x| next[x].abs() > bound * h[x] + slack) {
            return Err(Error::Divergence { term: k, ratio: (next[x].abs() / h[x]).as_f64() });
        }
        let ratio = (max_abs(&next) / max_abs(&term)).as_f64();
        monitor.observe(k, ratio)?;
        sign = -sign;
        for x in 0..g.len() {
            g[x] += sign * next[x];
        }
        term = next;
    }
    if let Some(x) = g.iter().position(|&a| !(a > T::zero())) {
        return Err(Error::Positivity { vertex: x });
    }
    let bounds = if nonpositive { (1.0, 1.0 / (1.0 - eps)) } else { ((1.0 - 2.0 * eps) / (1.0 - eps), 1.0 / (1.0 - eps)) };
    Ok(PositiveSolution {
        equivalence: equivalence(&g, h),
        residual: residual_of(op, v, &g),
        certified_bounds: Some((bounds.0, Some(bounds.1))),
        integral_identity_residual: None,
        iterations: k,
        split_level: None,
        g,
    })
}

fn require_subcritical<T: Real>(op: &SchrodingerOperator<T>, ex: &Exhaustion, what: &str) -> Result<()> {
    let rep = classify_criticality(op, ex)?;
    if rep.classification != Criticality::Subcritical {
        return Err(Error::Precondition(format!("{what} is not subcritical ({:?})", rep.classification)));
    }
    Ok(())
}

/// Split construction: compact negative part handled by a direct solve,
/// the small tail by a Neumann series, the positive part by a Green solve.
pub fn construct_positive_solution<T: Real>(
    op: &SchrodingerOperator<T>,
    v: &Potential<T>,
    h: &[T],
    ex: &Exhaustion,
    tol: f64,
) -> Result<PositiveSolution<T>> {
    let full = op.plus_potential(v);
    require_subcritical(op, ex, "P")?;
    require_subcritical(&full, ex, "P + V")?;
    let g_p = GreenSolver::new(op)?;
    let vminus = v.negative_part();
    let tails = kato_tail_profile(&g_p, &vminus, h, ex, None)?;
    let k = tails
        .values
        .iter()
        .position(|&t| t < 1.0)
        .ok_or_else(|| Error::Precondition("the negative part has no Kato tail below 1".into()))?;
    let (near, far, vplus) = split_potential(v, ex, k)?;
    let plus_norm = h_bounded_norm(&g_p, &vplus, h)?.as_f64();
    if !plus_norm.is_finite() {
        return Err(Error::Precondition("V₊ is not (H,h)-bounded".into()));
    }

    // (b) g₁ = h − (P+V₊)⁻¹(V₊h)
    let g_plus = GreenSolver::new(&op.plus_potential(&vplus))?;
    let vh: Vec<T> = vplus.values().iter().zip(h).map(|(&a, &b)| a * b).collect();
    let corr = g_plus.green_apply(&vh)?;
    let g1: Vec<T> = h.iter().zip(&corr).map(|(&a, &b)| a - b).collect();

    // (c) g₂ = Σ_j ((P+V₊)⁻¹V₋∞)^j g₁
    let hnorm = max_abs(h);
    let mut g2 = g1.clone();
    let mut term = g1;
    let mut monitor = RatioMonitor { strikes: 0 };
    let mut iterations = 0;
    if !far.is_zero() {
        loop {
            iterations += 1;
            if iterations > MAX_TERMS {
                return Err(Error::Divergence { term: iterations, ratio: f64::NAN });
            }
            let f: Vec<T> = far.values().iter().zip(&term).map(|(&a, &b)| a * b).collect();
            let next = g_plus.green_apply(&f)?;
            monitor.observe(iterations, (max_abs(&next) / max_abs(&term)).as_f64())?;
            for x in 0..g2.len() {
                g2[x] += next[x];
            }
            term = next;
            if max_abs(&term) < T::lit(tol) * hnorm {
                break;
            }
        }
    }

    // (d) g = g₂ + (P+V)⁻¹(V₋₀g₂)
    let mut g = g2.clone();
    if !near.is_zero() {
        let g_full = GreenSolver::new(&full)?;
        let f: Vec<T> = near.values().iter().zip(&g2).map(|(&a, &b)| a * b).collect();
        let add = g_full.green_apply(&f)?;
        for x in 0..g.len() {
            g[x] += add[x];
        }
    }

    if let Some(x) = g.iter().position(|&a| !(a > T::zero())) {
        return Err(Error::Positivity { vertex: x });
    }
    let residual = residual_of(op, v, &g);
    let vg: Vec<T> = v.values().iter().zip(&g).map(|(&a, &b)| a * b).collect();
    let gvg = g_p.green_apply(&vg)?;
    let ident: Vec<T> = op.graph().interior().iter().map(|&x| g[x] - h[x] + gvg[x]).collect();
    let identity = max_abs(&ident).as_f64();
    let lower = (-plus_norm).exp();
    let (lo, hi) = equivalence(&g, h);
    if residual > tol {
        return Err(Error::Verification(format!("residual {residual:e} exceeds {tol:e}")));
    }
    if identity > 10.0 * tol {
        return Err(Error::Verification(format!("integral identity residual {identity:e}")));
    }
    if lo < lower - 1e-12 {
        return Err(Error::Verification(format!("g/h = {lo} below e^(-‖V₊‖) = {lower}")));
    }
    Ok(PositiveSolution {
        g,
        equivalence: (lo, hi),
        residual,
        certified_bounds: Some((lower, None)),
        integral_identity_residual: Some(identity),
        iterations,
        split_level: Some(k),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtFamily<T> {
    pub ts: Vec<f64>,
    pub functions: Vec<Vec<T>>,
    /// max over consecutive triples of (g_{t₁} − g_{t₀}^{1−α} g_{t₂}^α)⁺.
    pub max_violation: f64,
    /// min over t, x of g_t / (e^{−t‖V‖_{H,h}} h); ≥ 1 when the chain holds.
    pub bound_chain_ratio: f64,
    /// max over t, x of (g_{t_{i+1}} − g_{t_i})⁺.
    pub monotonicity_violation: f64,
}

/// g_t = h − t·G_{P+tV}(Vh) for V ≥ 0.
pub fn g_t_family<T: Real>(
    op: &SchrodingerOperator<T>,
    v: &Potential<T>,
    h: &[T],
    ts: &[f64],
) -> Result<GtFamily<T>> {
    if !v.is_nonnegative() {
        return Err(Error::Precondition("g_t family needs V ≥ 0".into()));
    }
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("t values must increase".into()));
    }
    let vh: Vec<T> = v.values().iter().zip(h).map(|(&a, &b)| a * b).collect();
    let mut functions = Vec::with_capacity(ts.len());
    for &t in ts {
        if t == 0.0 {
            functions.push(h.to_vec());
            continue;
        }
        let solver = GreenSolver::new(&op.plus_potential(&v.scaled(T::lit(t))))?;
        let u = solver.green_apply(&vh)?;
        functions.push(h.iter().zip(&u).map(|(&a, &b)| a - T::lit(t) * b).collect());
    }
    let interior = op.graph().interior();
    let mut max_violation = 0.0f64;
    for i in 0..ts.len().saturating_sub(2) {
        let alpha = (ts[i + 1] - ts[i]) / (ts[i + 2] - ts[i]);
        for &x in interior {
            let a = functions[i][x].as_f64();
            let b = functions[i + 1][x].as_f64();
            let c = functions[i + 2][x].as_f64();
            max_violation = max_violation.max(b - a.powf(1.0 - alpha) * c.powf(alpha));
        }
    }
    let g_p = GreenSolver::new(op)?;
    let s = h_bounded_norm(&g_p, v, h)?.as_f64();
    let mut chain = f64::INFINITY;
    for (t, f) in ts.iter().zip(&functions) {
        for &x in interior {
            chain = chain.min(f[x].as_f64() / ((-t * s).exp() * h[x].as_f64()));
        }
    }
    let mut mono = 0.0f64;
    for w in functions.windows(2) {
        for &x in interior {
            mono = mono.max((w[1][x] - w[0][x]).as_f64());
        }
    }
    Ok(GtFamily { ts: ts.to_vec(), functions, max_violation, bound_chain_ratio: chain, monotonicity_violation: mono })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongSubReport {
    pub applicable: bool,
    pub reason: Option<String>,
    pub subcritical: Option<bool>,
    pub epsilon: Option<f64>,
    pub agree: Option<bool>,
}

impl StrongSubReport {
    fn not_applicable(reason: String) -> Self {
        Self { applicable: false, reason: Some(reason), subcritical: None, epsilon: None, agree: None }
    }
}

/// Subcriticality of P+V against strong subcriticality of V₋.
pub fn check_strong_sub_theorem<T: Real>(
    op: &SchrodingerOperator<T>,
    v: &Potential<T>,
    ex: &Exhaustion,
) -> Result<StrongSubReport> {
    let table = match dirichlet_green(op, op.graph().interior()) {
        Ok(t) => t,
        Err(e) => return Ok(StrongSubReport::not_applicable(format!("Green function of P unavailable: {e}"))),
    };
    let vminus = v.negative_part();
    let vplus = v.positive_part();
    let small = match small_perturbation_profile(&table, &vminus, ex) {
        Ok(s) => s,
        Err(e) => return Ok(StrongSubReport::not_applicable(format!("small-perturbation profile: {e}"))),
    };
    if small.profile.classification != TailClass::TendsToZero {
        return Ok(StrongSubReport::not_applicable("V₋ profile does not tend to zero".into()));
    }
    let gb = match small_perturbation_profile(&table, &vplus, ex) {
        Ok(s) => s.global,
        Err(e) => return Ok(StrongSubReport::not_applicable(format!("G-bounded norm: {e}"))),
    };
    if !gb.is_finite() {
        return Ok(StrongSubReport::not_applicable("V₊ is not G-bounded".into()));
    }
    let sub = classify_criticality(&op.plus_potential(v), ex)?.classification == Criticality::Subcritical;
    let eps = strong_subcriticality_epsilon(&op.plus_potential(&vplus), &vminus)?.as_f64();
    Ok(StrongSubReport {
        applicable: true,
        reason: None,
        subcritical: Some(sub),
        epsilon: Some(eps),
        agree: Some(sub == (eps > 0.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_exhaustion, generate_graph, GeometrySpec, GraphWithBoundary};
    use crate::operators::assemble_schrodinger;

    fn setup() -> (GraphWithBoundary<f64>, SchrodingerOperator<f64>) {
        let g = generate_graph(&GeometrySpec::Lattice { dimension: 1, radius: 1 }, 100).unwrap();
        let op = assemble_schrodinger(&g, &Potential::zero(5));
        (g, op)
    }

    #[test]
    fn neumann_negative() {
        let (g, op) = setup();
        let t = dirichlet_green(&op, g.interior()).unwrap();
        let s = neumann_series_solution(&op, &t, &Potential::point_mass(5, 2, -0.4), &[1.0; 5], 1e-13).unwrap();
        let want = [1.0, 4.0 / 3.0, 5.0 / 3.0, 4.0 / 3.0, 1.0];
        for x in 0..5 {
            assert!((s.g[x] - want[x]).abs() < 1e-10);
        }
        let (lo, hi) = (s.certified_bounds.unwrap().0, s.certified_bounds.unwrap().1.unwrap());
        assert_eq!(lo, 1.0);
        assert!((hi - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_potential_is_identity() {
        let (g, op) = setup();
        let t = dirichlet_green(&op, g.interior()).unwrap();
        let s = neumann_series_solution(&op, &t, &Potential::zero(5), &[1.0; 5], 1e-12).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.g, vec![1.0; 5]);
    }

    #[test]
    fn split_matches_neumann() {
        let (g, op) = setup();
        let ex = build_exhaustion(&g, &[0, 1]).unwrap();
        let v = Potential::point_mass(5, 2, -0.4);
        let s = construct_positive_solution(&op, &v, &[1.0; 5], &ex, 1e-10).unwrap();
        assert!((s.g[2] - 5.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn gt_closed_form() {
        let (_, op) = setup();
        let fam = g_t_family(&op, &Potential::point_mass(5, 2, 1.0), &[1.0; 5], &[0.0, 0.5, 1.0, 2.0]).unwrap();
        for (t, f) in fam.ts.iter().zip(&fam.functions) {
            assert!((f[2] - 1.0 / (1.0 + t)).abs() < 1e-12);
        }
        assert!(fam.max_violation <= 1e-10);
        assert!(fam.bound_chain_ratio >= 1.0 - 1e-12);
    }

    #[test]
    fn strong_sub_agreement() {
        let (g, op) = setup();
        let ex = build_exhaustion(&g, &[0, 1]).unwrap();
        for (c, sub) in [(-0.4, true), (-1.2, false), (0.5, true)] {
            let r = check_strong_sub_theorem(&op, &Potential::point_mass(5, 2, c), &ex).unwrap();
            assert!(r.applicable);
            assert_eq!(r.subcritical, Some(sub));
            assert_eq!(r.agree, Some(true));
        }
    }
}
