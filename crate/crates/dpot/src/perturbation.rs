//! Perturbation classes: (H,h)-bounded, Kato at infinity, small and
//! G-bounded perturbations, and the weighted-integrability predictor.

use crate::error::{Error, Result};
use crate::fit::{classify_trend, ls_slope, Trend};
use crate::geometry::{Exhaustion, GraphWithBoundary, GrowthExponents};
use crate::green::{GreenAction, GreenSolver, KernelTable};
use crate::num::Real;
use crate::operators::{assemble_schrodinger, h_transform, Potential, SchrodingerOperator};
use nalgebra::DMatrix;

/// Relative level below which a tail profile counts as vanishing.
pub const TENDS_TO_ZERO_RATIO: f64 = 0.05;

/// Largest interior for the triple Green sum.
pub const SMALL_PERTURBATION_LIMIT: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailClass {
    TendsToZero,
    BelowEpsilon(f64),
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailProfile {
    /// sup over the whole interior, per exhaustion level.
    pub values: Vec<f64>,
    /// Same integrals with the sup restricted to Ω_k*.
    pub tail_sup_values: Vec<f64>,
    pub limit_estimate: f64,
    pub classification: TailClass,
}

fn classify_tail(values: &[f64], eps: Option<f64>) -> TailClass {
    if values.iter().any(|v| !v.is_finite()) {
        return TailClass::Unbounded;
    }
    let first = values[0];
    let last = *values.last().unwrap();
    let decay = if values.len() >= 2 && values.iter().all(|&v| v > 0.0) {
        let k: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
        let lv: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        ls_slope(&k, &lv) < 0.0
    } else {
        true
    };
    if last <= TENDS_TO_ZERO_RATIO * first && decay {
        return TailClass::TendsToZero;
    }
    match eps {
        Some(e) if last < e => TailClass::BelowEpsilon(e),
        _ => TailClass::Bounded,
    }
}

fn ratio_sup<T: Real>(u: &[T], h: &[T], over: impl Iterator<Item = usize>) -> T {
    over.fold(T::zero(), |m, x| m.max(u[x] / h[x]))
}

/// ‖V‖_{H,h} = max_x G(|V|h)(x)/h(x).
pub fn h_bounded_norm<T: Real, G: GreenAction<T> + ?Sized>(green: &G, v: &Potential<T>, h: &[T]) -> Result<T> {
    let f: Vec<T> = v.abs().values().iter().zip(h).map(|(&a, &b)| a * b).collect();
    let u = green.green_apply(&f)?;
    Ok(ratio_sup(&u, h, 0..h.len()))
}

/// The same norm as ‖P_h⁻¹|V|‖_∞ through the Doob transform.
pub fn h_bounded_norm_via_transform<T: Real>(op: &SchrodingerOperator<T>, v: &Potential<T>, h: &[T]) -> Result<T> {
    let (_, oph) = h_transform(op, h)?;
    let solver = GreenSolver::new(&oph)?;
    let u = solver.green_apply(v.abs().values())?;
    Ok(u.iter().fold(T::zero(), |m, &x| m.max(x)))
}

/// values[k] = sup_x Σ_{y∈Ω_k*} G(x,y)|V(y)|h(y)μ(y) / h(x).
pub fn kato_tail_profile<T: Real, G: GreenAction<T> + ?Sized>(
    green: &G,
    v: &Potential<T>,
    h: &[T],
    ex: &Exhaustion,
    eps: Option<f64>,
) -> Result<TailProfile> {
    let base: Vec<T> = v.abs().values().iter().zip(h).map(|(&a, &b)| a * b).collect();
    let mut values = Vec::with_capacity(ex.len());
    let mut tail_sup = Vec::with_capacity(ex.len());
    for k in 0..ex.len() {
        let outside = ex.complement(k);
        let mut f = vec![T::zero(); base.len()];
        for &y in &outside {
            f[y] = base[y];
        }
        if f.iter().all(|&x| x == T::zero()) {
            values.push(0.0);
            tail_sup.push(0.0);
            continue;
        }
        let u = green.green_apply(&f)?;
        values.push(ratio_sup(&u, h, 0..h.len()).as_f64());
        tail_sup.push(ratio_sup(&u, h, outside.iter().copied()).as_f64());
    }
    let limit_estimate = *values.last().unwrap();
    let classification = classify_tail(&values, eps);
    Ok(TailProfile { values, tail_sup_values: tail_sup, limit_estimate, classification })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallPerturbationProfile {
    pub profile: TailProfile,
    /// sup over all x, y of Σ_z G(x,z)|V(z)|G(z,y)μ(z)/G(x,y).
    pub global: f64,
}

fn double_green_ratio<T: Real>(table: &KernelTable<T>, v: &Potential<T>, pts: &[usize]) -> Result<f64> {
    let idx: Vec<usize> = pts.iter().filter_map(|&x| table.index_of(x)).collect();
    let mu = table.domain_measure();
    let support: Vec<usize> = idx.iter().copied().filter(|&i| v.values()[table.domain()[i]] != T::zero()).collect();
    if support.is_empty() || idx.is_empty() {
        return Ok(0.0);
    }
    let g = table.entries();
    let a = DMatrix::from_fn(idx.len(), support.len(), |r, c| {
        let z = support[c];
        g[(idx[r], z)] * v.values()[table.domain()[z]].abs() * mu[z]
    });
    let b = DMatrix::from_fn(support.len(), idx.len(), |r, c| g[(support[r], idx[c])]);
    let m = a * b;
    let mut worst = T::zero();
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            let gij = g[(i, j)];
            if !(gij > T::zero()) {
                return Err(Error::Underflow { x: table.domain()[i], y: table.domain()[j] });
            }
            worst = worst.max(m[(r, c)] / gij);
        }
    }
    Ok(worst.as_f64())
}

pub fn small_perturbation_profile<T: Real>(
    green: &KernelTable<T>,
    v: &Potential<T>,
    ex: &Exhaustion,
) -> Result<SmallPerturbationProfile> {
    if green.domain().len() > SMALL_PERTURBATION_LIMIT {
        return Err(Error::TooLarge { size: green.domain().len(), limit: SMALL_PERTURBATION_LIMIT });
    }
    let mut values = Vec::with_capacity(ex.len());
    for k in 0..ex.len() {
        values.push(double_green_ratio(green, v, &ex.complement(k))?);
    }
    let global = double_green_ratio(green, v, green.domain())?;
    let limit_estimate = *values.last().unwrap();
    let classification = classify_tail(&values, None);
    Ok(SmallPerturbationProfile {
        profile: TailProfile { tail_sup_values: values.clone(), values, limit_estimate, classification },
        global,
    })
}

/// Weighted L^q_V norms and the bounds built on them.
#[derive(Debug, Clone, PartialEq)]
pub struct KatoPredictor {
    /// (ν′/2 − ε, ν/2 + ε)
    pub exponents: (f64, f64),
    pub norm_low: f64,
    pub norm_high: f64,
    /// C-free form of the sup bound on Δ⁻¹|V|.
    pub sup_bound: f64,
    /// Measured ‖Δ⁻¹|V|‖_∞.
    pub measured_sup: f64,
    pub lp_exponent: f64,
    pub lp_condition: f64,
}

/// (Σ_x |V(x)|^q μ(x)/V(x,1))^{1/q} over the interior.
pub fn weighted_norm<T: Real>(g: &GraphWithBoundary<T>, v: &Potential<T>, q: f64) -> f64 {
    let unit = unit_ball_volumes(g);
    let s: f64 = g
        .interior()
        .iter()
        .map(|&x| v.values()[x].abs().as_f64().powf(q) * g.measure()[x].as_f64() / unit[x])
        .sum();
    s.powf(1.0 / q)
}

/// V(x, 1) for every vertex.
pub fn unit_ball_volumes<T: Real>(g: &GraphWithBoundary<T>) -> Vec<f64> {
    (0..g.num_vertices())
        .map(|x| {
            g.measure()[x].as_f64() + g.neighbors(x).iter().map(|&(y, _)| g.measure()[y].as_f64()).sum::<f64>()
        })
        .collect()
}

pub fn weighted_kato_predictor<T: Real>(
    g: &GraphWithBoundary<T>,
    v: &Potential<T>,
    exponents: &GrowthExponents,
    eps: f64,
    lp_exponent: f64,
) -> Result<KatoPredictor> {
    let (nu, nup) = (exponents.nu, exponents.nu_prime);
    let q_low = nup / 2.0 - eps;
    let q_high = nu / 2.0 + eps;
    if !(eps > 0.0 && q_low > 0.0) || !(lp_exponent > 1.0) {
        return Err(Error::InvalidExponent(format!("ν′/2 − ε = {q_low}, ε = {eps}, p = {lp_exponent}")));
    }
    let norm_low = weighted_norm(g, v, q_low);
    let norm_high = weighted_norm(g, v, q_high);
    // ∫₀¹ t^{−ν/(ν+2ε)} dt and ∫₁^∞ t^{−ν′/(ν′−2ε)} dt where finite.
    let c_small = (nu + 2.0 * eps) / (2.0 * eps);
    let c_large = if nup > 2.0 * eps { (nup - 2.0 * eps) / (2.0 * eps) } else { f64::INFINITY };
    let sup_bound = c_small * norm_high + c_large * norm_low;
    let lap = assemble_schrodinger(g, &Potential::zero(g.num_vertices()));
    let solver = GreenSolver::new(&lap)?;
    let u = solver.green_apply(v.abs().values())?;
    let measured_sup = u.iter().fold(0.0f64, |m, x| m.max(x.as_f64()));
    let unit = unit_ball_volumes(g);
    let pp = lp_exponent / (lp_exponent - 1.0);
    let lp_condition = g
        .interior()
        .iter()
        .map(|&x| {
            let mut s = v.values()[x].abs().as_f64().powf(lp_exponent) * g.measure()[x].as_f64();
            for &(y, _) in g.neighbors(x) {
                s += v.values()[y].abs().as_f64().powf(lp_exponent) * g.measure()[y].as_f64();
            }
            s.powf(1.0 / lp_exponent) / unit[x].powf(1.0 / pp)
        })
        .fold(0.0, f64::max);
    Ok(KatoPredictor {
        exponents: (q_low, q_high),
        norm_low,
        norm_high,
        sup_bound,
        measured_sup,
        lp_exponent,
        lp_condition,
    })
}

/// Kato membership predicted from predictors at increasing truncations:
/// both weighted norms must stay bounded.
pub fn predicted_kato(reports: &[KatoPredictor]) -> bool {
    let low: Vec<f64> = reports.iter().map(|r| r.norm_low).collect();
    let high: Vec<f64> = reports.iter().map(|r| r.norm_high).collect();
    let ok = |v: &[f64]| v.iter().all(|&x| x == 0.0) || classify_trend(v) == Trend::Bounded;
    ok(&low) && ok(&high)
}
