mod common;

use common::*;
use dpot::heat::*;
use dpot::operators::{assemble_schrodinger, Potential, PotentialSpec};
use dpot::Graph;

/// Upper Gaussian constant on lattice(3,12), t ∈ [1,20], d ≤ 10, locked from a reference run.
const LATTICE3_C_UPPER_BASELINE: f64 = 0.2056;

fn p3_solution(g: &Graph) -> Vec<f64> {
    let idx = p3_interior(g);
    let mut h = ones(g);
    h[idx[0]] = 4.0 / 3.0;
    h[idx[1]] = 5.0 / 3.0;
    h[idx[2]] = 4.0 / 3.0;
    h
}

#[test]
fn small_time_is_the_identity() {
    let g = lattice(3, 3);
    let v = potential(&g, PotentialSpec::PowerDecay { amplitude: 0.4, beta: 3.0 });
    let k = heat_kernel(&assemble_schrodinger(&g, &v), 1e-6).unwrap();
    for &x in g.interior() {
        for &y in g.interior() {
            let want = if x == y { 1.0 } else { 0.0 };
            assert!((k.get(x, y).unwrap() * g.measure()[y] - want).abs() < 1e-4);
        }
    }
}

#[test]
fn p3_closed_form() {
    let op = p3_op(0.0);
    let o = op.graph().origin();
    let r2 = 2f64.sqrt();
    for t in [0.1, 1.0, 3.0] {
        let k = heat_kernel(&op, t).unwrap();
        let want = 0.5 * (-(2.0 - r2) * t).exp() + 0.5 * (-(2.0 + r2) * t).exp();
        assert!(close(k.get(o, o).unwrap(), want, 1e-13), "t = {t}");
    }
}

#[test]
fn chapman_kolmogorov_dense_and_krylov() {
    let g = lattice(3, 4);
    let v = potential(&g, PotentialSpec::Bump { center: None, radius: 1, amplitude: 0.3 });
    let op = assemble_schrodinger(&g, &v);
    let cols: Vec<usize> = g.interior().iter().copied().step_by(37).collect();
    let dense = HeatEngine::new(&op).unwrap();
    assert!(chapman_kolmogorov(&dense, 1.0, 1.0, &cols).unwrap() < 1e-9);
    let krylov = HeatEngine::with_limit(&op, 10).unwrap();
    assert!(!krylov.is_dense());
    assert!(chapman_kolmogorov(&krylov, 1.0, 1.0, &cols).unwrap() < 1e-9);
}

#[test]
fn single_sample_envelope() {
    let s = GaussianSample { x: 0, y: 0, t: 2.0, distance: 0.0, volume: 7.0, value: 0.3 };
    let fit = gaussian_envelope_fit(vec![s], false).unwrap();
    assert!(close(fit.big_c_upper, 2.1, 1e-15));
}

#[test]
fn lattice_upper_constant_is_regression_locked() {
    let g = lattice(3, 12);
    let engine = HeatEngine::new(&assemble_schrodinger(&g, &zero(&g))).unwrap();
    let o = g.origin();
    let d = g.hop_distances(o);
    let cols: Vec<usize> = g.interior().iter().copied().filter(|&x| d[x] <= 1).collect();
    let kernels: Vec<_> = [1.0, 2.0, 5.0, 10.0, 20.0].iter().map(|&t| engine.columns(t, &cols).unwrap()).collect();
    let fit = gaussian_envelope_fit(gaussian_samples(&kernels, &g, 10, (1.0, 20.0)), false).unwrap();
    assert!(fit.big_c_upper <= LATTICE3_C_UPPER_BASELINE);
}

#[test]
fn h_transform_kernels() {
    let g = lattice(3, 3);
    let op = assemble_schrodinger(&g, &zero(&g));
    let cols = g.interior().to_vec();
    assert!(h_transform_kernel_check(&op, &ones(&g), &[1.0], &cols).unwrap() < 1e-14);

    let op = p3_op(-0.4);
    let g = op.graph().clone();
    let err = h_transform_kernel_check(&op, &p3_solution(&g), &[0.5, 1.0, 2.0], g.interior()).unwrap();
    assert!(err < 1e-10, "{err}");
    for t in [0.5, 1.0, 2.0] {
        let k = heat_kernel(&op, t).unwrap();
        assert!(k.entries().iter().all(|&x| x > 0.0));
    }
}

fn kernels(g: &Graph, v: &Potential<f64>, t: f64) -> [HeatKernelTable<f64>; 3] {
    let minus = v.negative_part().scaled(-1.0);
    [zero(g), v.clone(), minus].map(|w| heat_kernel(&assemble_schrodinger(g, &w), t).unwrap())
}

#[test]
fn domination() {
    let g = lattice(3, 3);
    let pos = potential(&g, PotentialSpec::PowerDecay { amplitude: 0.5, beta: 3.0 });
    let mixed = potential(
        &g,
        PotentialSpec::Sum(vec![
            PotentialSpec::Bump { center: None, radius: 1, amplitude: 0.5 },
            PotentialSpec::PowerDecay { amplitude: -0.3, beta: 3.0 },
        ]),
    );
    for v in [pos, mixed] {
        let [free, with_v, minus] = kernels(&g, &v, 1.5);
        let rep = domination_check(&free, &with_v, &minus, &v).unwrap();
        assert!(rep.holds && rep.negative_part_margin >= 0.0, "{rep:?}");
        if v.is_nonnegative() {
            assert!(rep.free_margin.unwrap() >= 0.0);
        }
    }

    let op = p3_op(0.0);
    let g = op.graph().clone();
    let v = Potential::point_mass(g.num_vertices(), g.origin(), -0.4);
    let [free, with_v, minus] = kernels(&g, &v, 1.0);
    let rep = domination_check(&free, &with_v, &minus, &v).unwrap();
    assert!(rep.holds && rep.free_margin.unwrap() >= 0.0, "{rep:?}");
}
