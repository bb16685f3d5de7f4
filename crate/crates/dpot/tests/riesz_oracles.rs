mod common;

use common::*;
use dpot::operators::{assemble_schrodinger, quadratic_form, Potential};
use dpot::riesz::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gradient_of_constants_and_deltas() {
    let g = lattice(3, 2);
    assert!(gradient(&g, &ones(&g)).values().iter().all(|&x| x == 0.0));

    let g = p3();
    let idx = p3_interior(&g);
    let mut u = vec![0.0; g.num_vertices()];
    u[g.origin()] = 1.0;
    let du = gradient(&g, &u);
    assert_eq!(du.value(idx[0], idx[1]), Some(1.0));
    assert_eq!(du.value(idx[1], idx[2]), Some(-1.0));
    let nonzero = du.values().iter().filter(|&&x| x != 0.0).count();
    assert_eq!(nonzero, 2);
}

#[test]
fn gradient_energy_convention() {
    let g = lattice(3, 3);
    let op = assemble_schrodinger(&g, &zero(&g));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u: Vec<f64> = (0..g.num_vertices()).map(|x| if g.is_interior(x) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
    let du = gradient(&g, &u);
    let edge_sum = du.norm_p(2.0).powi(2);
    let q = quadratic_form(&op, &u).unwrap();
    assert!(close(edge_sum, q.gradient_energy, 1e-12 * edge_sum));
}

#[test]
fn plain_riesz_is_an_l2_isometry() {
    let g = radial(2.5, 6);
    let op = assemble_schrodinger(&g, &zero(&g));
    let r = RieszOperator::new(&op, RieszVariant::Plain).unwrap();
    let mu = g.interior_measure();
    let edges = WeightedLpSpace::edges(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let u: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = r.apply(&u).unwrap();
        let lhs = edges.norm(&y, 2.0);
        let rhs = u.iter().zip(&mu).map(|(a, m)| a * a * m).sum::<f64>().sqrt();
        assert!(close(lhs, rhs, 1e-10 * rhs));
    }
}

#[test]
fn constant_h_variants_coincide() {
    let g = lattice(3, 2);
    let op = assemble_schrodinger(&g, &zero(&g));
    let plain = RieszOperator::new(&op, RieszVariant::Plain).unwrap().to_dense().unwrap();
    for v in [RieszVariant::Modified(ones(&g)), RieszVariant::D(ones(&g))] {
        let m = RieszOperator::new(&op, v).unwrap().to_dense().unwrap();
        assert!((m - &plain).amax() < 1e-14);
    }
}

#[test]
fn modified_operator_product_rule() {
    let op = p3_op(-0.4);
    let g = op.graph().clone();
    let h = boundary_normalized_solution(&op).unwrap();
    let idx = p3_interior(&g);
    for (x, want) in idx.iter().zip([4.0 / 3.0, 5.0 / 3.0, 4.0 / 3.0]) {
        assert!(close(h[*x], want, 1e-12));
    }
    let d = RieszOperator::new(&op, RieszVariant::D(h.clone())).unwrap().to_dense().unwrap();
    let m = RieszOperator::new(&op, RieszVariant::Modified(h.clone())).unwrap().to_dense().unwrap();
    for (e, &(a, b, _)) in g.edges().iter().enumerate() {
        let avg_inv = 0.5 * (1.0 / h[a] + 1.0 / h[b]);
        for j in 0..d.ncols() {
            assert!(close(d[(e, j)], avg_inv * m[(e, j)], 1e-10));
        }
    }
}

#[test]
fn elementary_lp_norms() {
    let opts = PowerOptions::default();
    for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
        let id = DMatrix::<f64>::identity(4, 4);
        let s = WeightedLpSpace::uniform(4);
        let est = lp_operator_norm(&id, p, &s, &s, &opts).unwrap();
        assert!(close(est.lower, 1.0, 1e-12) && close(est.upper, 1.0, 1e-12), "p = {p}: {est:?}");
    }
    let s2 = WeightedLpSpace::uniform(2);
    let diag = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
    let est = lp_operator_norm(&diag, 1.5, &s2, &s2, &opts).unwrap();
    assert!(close(est.lower, 3.0, 1e-9) && close(est.upper, 3.0, 1e-9), "{est:?}");
    let shear = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let est = lp_operator_norm(&shear, 2.0, &s2, &s2, &opts).unwrap();
    let golden = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
    assert!(est.is_exact() && close(est.upper, golden, 1e-12));
}

#[test]
fn free_riesz_transform_is_bounded_at_two() {
    let family: Vec<(f64, _)> = [3usize, 4, 5, 6]
        .iter()
        .map(|&r| {
            let g = lattice(3, r);
            (r as f64, assemble_schrodinger(&g, &Potential::zero(g.num_vertices())))
        })
        .collect();
    let rep = riesz_range_experiment(&family, &[2.0], None, &RieszExperimentOptions::default()).unwrap();
    assert!(rep.l2_norms.iter().all(|&n| close(n, 1.0, 1e-12)));
    let p2 = &rep.per_p[0];
    assert_eq!(p2.plain_trend, dpot::fit::Trend::Bounded);
    assert!(p2.plain.iter().all(|e| close(e.upper, 1.0, 1e-9)));
}
