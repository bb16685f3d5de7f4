//! Pipeline execution: config in, report out.

use crate::config::{Assertion, Comparison, Expected, ExperimentConfig, Pipeline};
use crate::report::{as_f64, num, nums, AssertionOutcome, Provenance, Report, StageError, Table, Timing};
use dpot::fit::Trend;
use dpot::geometry::{build_exhaustion, fit_growth_exponents, generate_graph, volume_criteria, Exhaustion, GrowthExponents};
use dpot::green::{classify_criticality, dirichlet_green, reproducing_residual, GreenSolver};
use dpot::heat::{chapman_kolmogorov, gaussian_envelope_fit, gaussian_samples, HeatEngine};
use dpot::linalg::{DENSE_EIGEN_LIMIT, DENSE_LIMIT};
use dpot::operators::{assemble_schrodinger, Potential};
use dpot::parabolicity::{capacity_volume_equivalence, classify_p_parabolic, p_capacity, parabolic_dimension, Parabolicity};
use dpot::perturbation::{h_bounded_norm, kato_tail_profile, predicted_kato, weighted_kato_predictor, TailClass};
use dpot::positive_solutions::{construct_positive_solution, g_t_family, neumann_series_solution};
use dpot::riesz::{riesz_range_experiment, weighted_semigroup_norm_check, PowerOptions, RieszExperimentOptions};
use dpot::{Error, Graph, Operator};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use std::time::Instant;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum RunError {
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Resource(_) => 4,
            RunError::Invalid(_) => 3,
        }
    }
}

/// Largest matrix dimension written out in full.
const EXPORT_LIMIT: usize = 400;
const GROWTH_SAMPLE_PAIRS: usize = 64;

fn is_resource(e: &Error) -> bool {
    matches!(e, Error::ResourceLimit { .. } | Error::TooLarge { .. })
}

fn trend_name(t: Trend) -> &'static str {
    match t {
        Trend::Bounded => "bounded",
        Trend::Growing => "growing",
        Trend::Indeterminate => "indeterminate",
    }
}

fn tail_name(t: &TailClass) -> String {
    match t {
        TailClass::TendsToZero => "tends_to_zero".into(),
        TailClass::BelowEpsilon(e) => format!("below_epsilon({e})"),
        TailClass::Bounded => "bounded".into(),
        TailClass::Unbounded => "unbounded".into(),
    }
}

fn key(p: f64) -> String {
    format!("p{p}")
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    graph: &'a Graph,
    op: &'a Operator,
    base: Operator,
    ex: Option<Exhaustion>,
    report: Report,
    rng: ChaCha8Rng,
}

impl Ctx<'_> {
    fn metric(&mut self, name: &str, v: Value) {
        self.report.metrics.insert(name.into(), v);
    }

    fn result(&mut self, stage: &str, v: Map<String, Value>) {
        self.report.results.insert(stage.into(), Value::Object(v));
    }

    fn exponents(&mut self) -> dpot::Result<GrowthExponents> {
        fit_growth_exponents(self.graph, GROWTH_SAMPLE_PAIRS, self.cfg.seed)
    }

    fn sample_interior(&mut self, k: usize) -> Vec<usize> {
        let mut v = self.graph.interior().to_vec();
        if v.len() > k {
            v.shuffle(&mut self.rng);
            v.truncate(k);
            v.sort_unstable();
        }
        v
    }
}

fn green_stage(c: &mut Ctx) -> dpot::Result<()> {
    let g = c.graph;
    let o = g.origin();
    let mut out = Map::new();
    out.insert("dim".into(), json!(c.op.dim()));
    c.metric("green.dim", json!(c.op.dim()));
    let solver = GreenSolver::new(c.op)?;
    let mut delta = vec![0.0; g.num_vertices()];
    delta[o] = 1.0 / g.measure()[o];
    let col = dpot::green::GreenAction::green_apply(&solver, &delta)?;
    out.insert("diagonal_at_origin".into(), num(col[o]));
    c.metric("green.diagonal_at_origin", num(col[o]));
    if c.op.dim() <= DENSE_LIMIT {
        let table = dirichlet_green(c.op, g.interior())?;
        let f: Vec<f64> = (0..g.num_vertices()).map(|x| if g.is_interior(x) { ((x * 7 + 3) % 11) as f64 / 11.0 } else { 0.0 }).collect();
        let res = reproducing_residual(c.op, &table, &f)?;
        c.metric("green.reproducing_residual", num(res));
        c.metric("green.asymmetry", num(table.asymmetry()));
        out.insert("reproducing_residual".into(), num(res));
        if table.domain().len() <= EXPORT_LIMIT {
            let mut t = Table::new("green", &["x", "y", "value"]);
            let d = table.domain().to_vec();
            let rows: Vec<Value> = d
                .iter()
                .map(|&x| {
                    nums(&d.iter().map(|&y| table.get(x, y)).collect::<Vec<_>>())
                })
                .collect();
            for &x in &d {
                for &y in &d {
                    t.push(vec![json!(x), json!(y), num(table.get(x, y))]);
                }
            }
            out.insert("domain".into(), json!(d));
            out.insert("matrix".into(), Value::Array(rows));
            c.report.tables.push(t);
        }
    }
    let cap = p_capacity(g, &[o], 2.0, c.cfg.tol)?;
    c.metric("green.capacity_times_diagonal", num(cap.value * col[o]));
    if let Some(ex) = &c.ex {
        let rep = classify_criticality(c.op, ex)?;
        let class = format!("{:?}", rep.classification).to_lowercase();
        c.metric("green.criticality", json!(class));
        c.metric("green.lambda_min", num(rep.lambda_min));
        out.insert(
            "criticality".into(),
            json!({
                "classification": class,
                "lambda_min": num(rep.lambda_min),
                "trace": nums(&rep.green_diagonal_trace),
                "trace_exponent": rep.trace_exponent.map(num),
                "rule": format!("{:?}", rep.rule),
                "confidence": num(rep.confidence),
            }),
        );
    }
    c.result("green", out);
    Ok(())
}

fn kato_stage(c: &mut Ctx) -> dpot::Result<()> {
    let ex = c.ex.clone().ok_or_else(|| Error::Precondition("kato needs exhaustion.radii".into()))?;
    let v = c.op.potential().clone();
    let ones = vec![1.0; c.graph.num_vertices()];
    let solver = GreenSolver::new(&c.base)?;
    let profile = kato_tail_profile(&solver, &v, &ones, &ex, Some(c.cfg.kato_eps))?;
    let hnorm = h_bounded_norm(&solver, &v, &ones)?;
    let exps = c.exponents()?;
    let pred = weighted_kato_predictor(c.graph, &v, &exps, c.cfg.kato_eps, c.cfg.kato_lp)?;
    // Scale trend over smaller truncations followed by the configured graph.
    let mut scale = Vec::new();
    let mut scale_radii = Vec::new();
    for (r, g) in truncations(c, &c.cfg.kato_radii)? {
        if r as usize >= c.cfg.geometry.radius() {
            continue;
        }
        let vg = c.cfg.potential.build(&g)?;
        scale.push(weighted_kato_predictor(&g, &vg, &exps, c.cfg.kato_eps, c.cfg.kato_lp)?);
        scale_radii.push(r);
    }
    scale.push(pred.clone());
    scale_radii.push(c.cfg.geometry.radius() as f64);
    let predicted = predicted_kato(&scale);
    let measured = profile.classification == TailClass::TendsToZero;
    let class = tail_name(&profile.classification);
    c.metric("kato.classification", json!(class));
    c.metric("kato.tail_ratio", num(profile.values.last().unwrap() / profile.values[0]));
    c.metric("kato.predicted", json!(predicted));
    c.metric("kato.agree", json!(predicted == measured));
    c.metric("kato.h_bounded_norm", num(hnorm));
    let mut t = Table::new("kato_tails", &["radius", "value", "tail_sup"]);
    for (i, &r) in ex.radii().iter().enumerate() {
        t.push(vec![json!(r), num(profile.values[i]), num(profile.tail_sup_values[i])]);
    }
    c.report.tables.push(t);
    let mut out = Map::new();
    out.insert("radii".into(), json!(ex.radii()));
    out.insert("values".into(), nums(&profile.values));
    out.insert("tail_sup_values".into(), nums(&profile.tail_sup_values));
    out.insert("limit_estimate".into(), num(profile.limit_estimate));
    out.insert("classification".into(), json!(class));
    out.insert("h_bounded_norm".into(), num(hnorm));
    out.insert("exponents".into(), json!({"nu": num(exps.nu), "nu_prime": num(exps.nu_prime)}));
    out.insert(
        "predictor".into(),
        json!({
            "exponents": nums(&[pred.exponents.0, pred.exponents.1]),
            "norm_low": num(pred.norm_low),
            "norm_high": num(pred.norm_high),
            "sup_bound": num(pred.sup_bound),
            "measured_sup": num(pred.measured_sup),
            "lp_exponent": num(pred.lp_exponent),
            "lp_condition": num(pred.lp_condition),
            "predicted": predicted,
            "scale_radii": nums(&scale_radii),
            "scale_norm_low": nums(&scale.iter().map(|p| p.norm_low).collect::<Vec<_>>()),
            "scale_norm_high": nums(&scale.iter().map(|p| p.norm_high).collect::<Vec<_>>()),
        }),
    );
    c.result("kato", out);
    Ok(())
}

fn possol_stage(c: &mut Ctx) -> dpot::Result<()> {
    let v = c.op.potential().clone();
    let ones = vec![1.0; c.graph.num_vertices()];
    let mut out = Map::new();
    if !c.cfg.possol_t.is_empty() {
        let fam = g_t_family(&c.base, &v, &ones, &c.cfg.possol_t)?;
        c.metric("possol.log_convexity_violation", num(fam.max_violation));
        out.insert(
            "g_t".into(),
            json!({
                "t": nums(&fam.ts),
                "at_origin": nums(&fam.functions.iter().map(|f| f[c.graph.origin()]).collect::<Vec<_>>()),
                "max_violation": num(fam.max_violation),
                "bound_chain_ratio": num(fam.bound_chain_ratio),
                "monotonicity_violation": num(fam.monotonicity_violation),
            }),
        );
    }
    let sol = match &c.ex {
        Some(ex) => construct_positive_solution(&c.base, &v, &ones, ex, c.cfg.tol),
        None => GreenSolver::new(&c.base).and_then(|s| neumann_series_solution(&c.base, &s, &v, &ones, c.cfg.tol)),
    };
    let sol = match sol {
        Ok(s) => s,
        Err(e) => {
            c.result("possol", out);
            return Err(e);
        }
    };
    let ratio: Vec<f64> = sol.g.iter().zip(&ones).map(|(a, b)| a / b).collect();
    let (lo, hi) = ratio.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    c.metric("possol.residual", num(sol.residual));
    c.metric("possol.min_ratio", num(lo));
    c.metric("possol.max_ratio", num(hi));
    if let Some(r) = sol.integral_identity_residual {
        c.metric("possol.integral_identity_residual", num(r));
    }
    out.insert("g".into(), nums(&sol.g));
    out.insert("equivalence".into(), nums(&[sol.equivalence.0, sol.equivalence.1]));
    out.insert("residual".into(), num(sol.residual));
    out.insert(
        "certified_bounds".into(),
        sol.certified_bounds.map_or(Value::Null, |(a, b)| json!([num(a), b.map(num)])),
    );
    out.insert("integral_identity_residual".into(), sol.integral_identity_residual.map_or(Value::Null, num));
    out.insert("iterations".into(), json!(sol.iterations));
    out.insert("split_level".into(), json!(sol.split_level));
    c.result("possol", out);
    Ok(())
}

fn heat_stage(c: &mut Ctx) -> dpot::Result<()> {
    let engine = HeatEngine::new(c.op)?;
    let cols = c.sample_interior(c.cfg.heat.sample_columns);
    let mut out = Map::new();
    let mut ck = Vec::new();
    for &t in &c.cfg.heat.times {
        ck.push(chapman_kolmogorov(&engine, t, t, &cols)?);
    }
    let worst = ck.iter().fold(0.0f64, |m, &x| m.max(x));
    c.metric("heat.chapman_kolmogorov", num(worst));
    out.insert("t".into(), nums(&c.cfg.heat.times));
    out.insert("chapman_kolmogorov".into(), nums(&ck));
    out.insert("dense".into(), json!(engine.is_dense()));
    let tables = c
        .cfg
        .heat
        .times
        .iter()
        .map(|&t| if engine.is_dense() { engine.kernel(t) } else { engine.columns(t, &cols) })
        .collect::<dpot::Result<Vec<_>>>()?;
    if c.op.dim() <= EXPORT_LIMIT {
        let mut tab = Table::new("kernels", &["x", "y", "t", "value"]);
        for k in &tables {
            for (i, &x) in k.rows().iter().enumerate() {
                for (j, &y) in k.cols().iter().enumerate() {
                    tab.push(vec![json!(x), json!(y), num(k.t()), num(k.entries()[(i, j)])]);
                }
            }
        }
        c.report.tables.push(tab);
    }
    let t_lo = c.cfg.heat.times.iter().copied().fold(f64::INFINITY, f64::min);
    let t_hi = c.cfg.heat.times.iter().copied().fold(0.0, f64::max);
    let samples = gaussian_samples(&tables, c.graph, c.cfg.heat.d_max, (t_lo, t_hi));
    if !samples.is_empty() {
        let fit = gaussian_envelope_fit(samples, false)?;
        c.metric("heat.gaussian_c_upper", num(fit.c_upper));
        c.metric("heat.gaussian_big_c_upper", num(fit.big_c_upper));
        out.insert(
            "gaussian_fit".into(),
            json!({
                "c_upper": num(fit.c_upper),
                "big_c_upper": num(fit.big_c_upper),
                "samples": fit.samples.len(),
                "max_violation": num(fit.max_violation),
            }),
        );
    }
    if c.op.potential().is_zero() {
        let exps = c.exponents()?;
        let (lo, hi, n) = c.cfg.heat.norm_grid;
        let ts: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
        let opts = PowerOptions { seed: c.cfg.seed, ..PowerOptions::default() };
        let reps = weighted_semigroup_norm_check(&engine, &exps, &c.cfg.heat.pairs, &ts, &cols, &opts)?;
        let mut t = Table::new("semigroup_norms", &["p", "q", "t", "measured", "phi"]);
        let mut list = Vec::new();
        for r in &reps {
            let name = format!("heat.semigroup.{}_{}", r.p, if r.q.is_infinite() { "inf".into() } else { r.q.to_string() });
            c.metric(&format!("{name}.constant"), num(r.constant));
            for i in 0..r.ts.len() {
                t.push(vec![num(r.p), num(r.q), num(r.ts[i]), num(r.measured[i]), num(r.phi[i])]);
            }
            list.push(json!({
                "p": num(r.p), "q": num(r.q), "constant": num(r.constant),
                "worst_t": num(r.worst_t), "exact": r.exact,
            }));
        }
        c.report.tables.push(t);
        out.insert("semigroup".into(), Value::Array(list));
        out.insert("exponents".into(), json!({"nu": num(exps.nu), "nu_prime": num(exps.nu_prime)}));
    }
    c.result("heat", out);
    Ok(())
}

fn truncations(c: &Ctx, radii: &[usize]) -> dpot::Result<Vec<(f64, Graph)>> {
    radii
        .iter()
        .map(|&r| Ok((r as f64, generate_graph(&c.cfg.geometry.with_radius(r), c.cfg.max_vertices)?)))
        .collect()
}

fn parabolic_stage(c: &mut Ctx) -> dpot::Result<()> {
    let mut out = Map::new();
    let prm = c.cfg.parabolic.clone();
    let mut caps = Map::new();
    for &p in &prm.p {
        let cap = p_capacity(c.graph, &[c.graph.origin()], p, c.cfg.tol)?;
        c.metric(&format!("parabolic.capacity_origin.{}", key(p)), num(cap.value));
        caps.insert(key(p), json!({"value": num(cap.value), "iterations": cap.iterations, "converged": cap.converged}));
    }
    out.insert("capacity_origin".into(), Value::Object(caps));
    if !c.cfg.exhaustion_radii.is_empty() {
        let eq = capacity_volume_equivalence(c.graph, &prm.p, &c.cfg.exhaustion_radii)?;
        let list: Vec<Value> = eq
            .iter()
            .map(|r| {
                json!({
                    "p": num(r.p),
                    "capacity_constants": r.capacity_constants.iter().map(|&(k, v)| json!([k, num(v)])).collect::<Vec<_>>(),
                    "capacity_spread": num(r.capacity_spread),
                    "volume_constant": num(r.volume_constant),
                    "consistent": r.consistent,
                })
            })
            .collect();
        for r in &eq {
            c.metric(&format!("parabolic.capacity_spread.{}", key(r.p)), num(r.capacity_spread));
        }
        out.insert("capacity_volume".into(), Value::Array(list));
    }
    if prm.radii.len() >= 2 {
        let fam = truncations(c, &prm.radii)?;
        let last = &fam.last().unwrap().1;
        let horizon = prm.horizon.unwrap_or_else(|| last.inner_radius());
        let mut t = Table::new("capacity_traces", &["p", "radius", "capacity", "resistance"]);
        let mut all_agree = true;
        let mut classes = Map::new();
        for &p in &prm.p {
            let tr = classify_p_parabolic(&fam, p)?;
            for i in 0..tr.radii.len() {
                t.push(vec![num(p), num(tr.radii[i]), num(tr.capacities[i]), num(tr.resistances[i])]);
            }
            let vc = volume_criteria(last, p, horizon)?;
            let cap_class = tr.classification.map(|k| k == Parabolicity::Parabolic);
            let agree = cap_class == Some(!vc.vp.converges);
            all_agree &= agree;
            let name = tr.classification.map_or("undetermined".to_string(), |k| format!("{k:?}").to_lowercase());
            c.metric(&format!("parabolic.class.{}", key(p)), json!(name));
            classes.insert(
                key(p),
                json!({
                    "classification": name,
                    "increment_decay": num(tr.increment_decay),
                    "volume_series_converges": vc.vp.converges,
                    "volume_decay_exponent": num(vc.vp.decay_exponent),
                    "agree": agree,
                }),
            );
        }
        c.metric("parabolic.volume_agreement", json!(all_agree));
        let exps = fit_growth_exponents(last, GROWTH_SAMPLE_PAIRS, c.cfg.seed).ok();
        let dim = parabolic_dimension(&fam, prm.p_range, prm.steps, exps.as_ref())?;
        c.metric("parabolic.kappa", num(dim.kappa));
        out.insert("classes".into(), Value::Object(classes));
        out.insert(
            "dimension".into(),
            json!({
                "kappa": num(dim.kappa),
                "bracket": nums(&[dim.bracket.0, dim.bracket.1]),
                "growth_window": dim.growth_window.map(|(a, b)| nums(&[a, b])),
                "within_growth_window": dim.within_growth_window,
                "stopped_early": dim.stopped_early,
                "bracketed": dim.bracketed,
                "probes": dim.evidence.iter().map(|e| json!({"p": num(e.p), "increment_decay": num(e.increment_decay)})).collect::<Vec<_>>(),
            }),
        );
        out.insert("horizon".into(), json!(horizon));
        c.report.tables.push(t);
    }
    c.result("parabolic", out);
    Ok(())
}

fn riesz_stage(c: &mut Ctx) -> dpot::Result<()> {
    let prm = c.cfg.riesz.clone();
    if prm.radii.len() < 2 {
        return Err(Error::Precondition("riesz needs at least two riesz.radii".into()));
    }
    let family = truncations(c, &prm.radii)?
        .into_iter()
        .map(|(r, g)| Ok((r, assemble_schrodinger(&g, &c.cfg.potential.build(&g)?))))
        .collect::<dpot::Result<Vec<_>>>()?;
    let opts = RieszExperimentOptions {
        power: PowerOptions { random_starts: prm.starts, iterations: prm.iterations, seed: c.cfg.seed, ..PowerOptions::default() },
        ..RieszExperimentOptions::default()
    };
    let rep = riesz_range_experiment(&family, &prm.p, None, &opts)?;
    let mut t = Table::new("riesz_norms", &["operator", "p", "radius", "lower", "upper", "method"]);
    let mut per_p = Map::new();
    for pr in &rep.per_p {
        for (name, list) in [("plain", &pr.plain), ("modified", &pr.modified)] {
            for (i, e) in list.iter().enumerate() {
                t.push(vec![json!(name), num(pr.p), num(rep.radii[i]), num(e.lower), num(e.upper), json!(e.lower_method)]);
            }
        }
        c.metric(&format!("riesz.{}.plain_trend", key(pr.p)), json!(trend_name(pr.plain_trend)));
        c.metric(&format!("riesz.{}.modified_trend", key(pr.p)), json!(trend_name(pr.modified_trend)));
        per_p.insert(
            key(pr.p),
            json!({
                "plain": nums(&pr.plain.iter().map(|e| e.lower).collect::<Vec<_>>()),
                "plain_upper": nums(&pr.plain.iter().map(|e| e.upper).collect::<Vec<_>>()),
                "modified": nums(&pr.modified.iter().map(|e| e.lower).collect::<Vec<_>>()),
                "plain_ratios": nums(&pr.plain_ratios),
                "modified_ratios": nums(&pr.modified_ratios),
                "plain_trend": trend_name(pr.plain_trend),
                "modified_trend": trend_name(pr.modified_trend),
                "local_target": nums(&pr.local_target),
                "ao_sum": num(pr.ao_sum),
                "ao_decay": num(pr.ao_decay),
            }),
        );
    }
    c.metric("riesz.l2_relative_change", num(rep.l2_relative_change));
    let mut out = Map::new();
    out.insert("radii".into(), nums(&rep.radii));
    out.insert("l2_norms".into(), nums(&rep.l2_norms));
    out.insert("l2_relative_change".into(), num(rep.l2_relative_change));
    out.insert("reverse_constants".into(), nums(&rep.reverse_constants));
    out.insert("local_target_heuristic".into(), json!(rep.local_target_heuristic));
    out.insert("per_p".into(), Value::Object(per_p));
    c.report.tables.push(t);
    c.result("riesz", out);
    Ok(())
}

fn evaluate(a: &Assertion, metrics: &std::collections::BTreeMap<String, Value>) -> AssertionOutcome {
    let actual = metrics.get(&a.metric).cloned();
    let expected = match &a.expected {
        Expected::Number(x) => num(*x),
        Expected::Text(s) => json!(s),
    };
    let passed = match (&a.expected, actual.as_ref()) {
        (Expected::Number(x), Some(v)) => match (as_f64(v), v.as_bool()) {
            (Some(y), _) => match a.op {
                Comparison::Lt => y < *x,
                Comparison::Le => y <= *x,
                Comparison::Gt => y > *x,
                Comparison::Ge => y >= *x,
                Comparison::Eq => (y - x).abs() <= a.tolerance || y == *x,
            },
            (None, Some(b)) => a.op == Comparison::Eq && (b as u8 as f64) == *x,
            _ => false,
        },
        (Expected::Text(s), Some(v)) => match v {
            Value::String(t) => t == s,
            Value::Bool(b) => b.to_string() == *s,
            _ => false,
        },
        (_, None) => false,
    };
    AssertionOutcome {
        operation: a.metric.split('.').next().unwrap_or("").to_string(),
        metric: a.metric.clone(),
        comparison: a.op.symbol().into(),
        expected,
        actual,
        tolerance: a.tolerance,
        passed,
    }
}

/// Runs every stage the pipeline covers; module errors are recorded per stage.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let graph: Graph = generate_graph(&cfg.geometry, cfg.max_vertices).map_err(|e| match e {
        Error::ResourceLimit { .. } | Error::TooLarge { .. } => RunError::Resource(e.to_string()),
        other => RunError::Invalid(other.to_string()),
    })?;
    let v = cfg.potential.build(&graph).map_err(|e| RunError::Invalid(e.to_string()))?;
    let op = assemble_schrodinger(&graph, &v);
    let ex = if cfg.exhaustion_radii.is_empty() {
        None
    } else {
        Some(build_exhaustion(&graph, &cfg.exhaustion_radii).map_err(|e| RunError::Invalid(e.to_string()))?)
    };
    let mut ctx = Ctx {
        cfg,
        graph: &graph,
        op: &op,
        base: op.with_potential(Potential::zero(graph.num_vertices())),
        ex,
        report: Report::default(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    ctx.report.config = cfg.echo.clone();
    ctx.report.results.insert(
        "graph".into(),
        json!({
            "vertices": graph.num_vertices(),
            "interior": graph.interior().len(),
            "edges": graph.edges().len(),
            "inner_radius": graph.inner_radius(),
            "heat_dense": op.dim() <= DENSE_EIGEN_LIMIT,
        }),
    );
    type Stage = fn(&mut Ctx) -> dpot::Result<()>;
    let stages: [(Pipeline, Stage); 6] = [
        (Pipeline::Green, green_stage),
        (Pipeline::Kato, kato_stage),
        (Pipeline::Possol, possol_stage),
        (Pipeline::Heat, heat_stage),
        (Pipeline::Parabolic, parabolic_stage),
        (Pipeline::Riesz, riesz_stage),
    ];
    let mut runtimes = std::collections::BTreeMap::new();
    for (stage, run) in stages {
        if !cfg.pipeline.includes(stage) {
            continue;
        }
        // A full run skips stages whose inputs are absent from the config.
        let optional = cfg.pipeline == Pipeline::Full
            && match stage {
                Pipeline::Kato => cfg.exhaustion_radii.is_empty(),
                Pipeline::Riesz => cfg.riesz.radii.len() < 2,
                _ => false,
            };
        if optional {
            continue;
        }
        let t0 = Instant::now();
        if let Err(e) = run(&mut ctx) {
            ctx.report.errors.push(StageError { stage: stage.name().into(), message: e.to_string(), resource_limit: is_resource(&e) });
        }
        runtimes.insert(stage.name().to_string(), t0.elapsed().as_millis() as u64);
    }
    let mut report = ctx.report;
    report.assertions = cfg.assertions.iter().map(|a| evaluate(a, &report.metrics)).collect();
    report.provenance = Provenance {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: Some(cfg.seed),
        timestamp: Timing {
            unix_seconds: std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            runtimes_ms: runtimes,
        },
    };
    Ok(report)
}
