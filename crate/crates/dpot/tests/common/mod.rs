#![allow(dead_code)]

use dpot::geometry::{build_exhaustion, generate_graph, Exhaustion, GeometrySpec, DEFAULT_MAX_VERTICES};
use dpot::operators::{assemble_schrodinger, Potential, PotentialSpec};
use dpot::{Graph, Operator, Pot};

pub fn lattice(n: usize, r: usize) -> Graph {
    generate_graph(&GeometrySpec::Lattice { dimension: n, radius: r }, DEFAULT_MAX_VERTICES).unwrap()
}

pub fn radial(alpha: f64, r: usize) -> Graph {
    generate_graph(&GeometrySpec::Radial { alpha, radius: r }, DEFAULT_MAX_VERTICES).unwrap()
}

/// The path on {−2, …, 2} with interior {−1, 0, 1}.
pub fn p3() -> Graph {
    lattice(1, 1)
}

pub fn p3_op(c: f64) -> Operator {
    let g = p3();
    let v = Potential::point_mass(g.num_vertices(), g.origin(), c);
    assemble_schrodinger(&g, &v)
}

pub fn zero(g: &Graph) -> Pot {
    Potential::zero(g.num_vertices())
}

pub fn potential(g: &Graph, spec: PotentialSpec) -> Pot {
    spec.build(g).unwrap()
}

pub fn exhaustion(g: &Graph, radii: &[usize]) -> Exhaustion {
    build_exhaustion(g, radii).unwrap()
}

pub fn ones(g: &Graph) -> Vec<f64> {
    vec![1.0; g.num_vertices()]
}

/// Interior vertices of P3 ordered −1, 0, 1.
pub fn p3_interior(g: &Graph) -> [usize; 3] {
    let o = g.origin();
    let d = g.hop_distances(g.boundary()[0]);
    let mut side: Vec<usize> = g.interior().iter().copied().filter(|&x| x != o).collect();
    side.sort_by_key(|&x| d[x]);
    [side[0], o, side[1]]
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
