use approx::assert_relative_eq;
use proptest::prelude::*;
use trendfield::mesh::{build_mesh, Mesh, MeshParams, Point};
use trendfield::Error;

fn params(ext: f64, inner: f64) -> MeshParams {
    MeshParams {
        extension: ext,
        max_edge_inner: inner,
        max_edge_outer: 2.0 * inner,
        cutoff: 0.0,
    }
}

fn grid(nx: usize, ny: usize, step: f64) -> Vec<Point> {
    let mut v = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            v.push([i as f64 * step, j as f64 * step]);
        }
    }
    v
}

fn two_triangle_square() -> Mesh {
    Mesh::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

#[test]
fn unit_square_is_covered() {
    let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mesh = build_mesh(&corners, &params(0.5, 2.0)).unwrap();
    assert!(mesh.n_triangles() >= 2);
    for x in 0..=10 {
        for y in 0..=10 {
            assert!(mesh.locate([x as f64 / 10.0, y as f64 / 10.0]).is_some());
        }
    }
    assert!(mesh.area() > 1.0);
}

#[test]
fn collinear_and_invalid_inputs_rejected() {
    let line = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
    assert!(matches!(build_mesh(&line, &params(1.0, 1.0)), Err(Error::CollinearInput)));
    let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    assert!(matches!(build_mesh(&tri, &params(0.0, 1.0)), Err(Error::InvalidParameters(_))));
    assert!(matches!(build_mesh(&tri, &params(1.0, -1.0)), Err(Error::InvalidParameters(_))));
}

#[test]
fn five_degree_grid_has_comparable_vertex_count() {
    // 70 cells of a 5° grid; a mesh of a few hundred vertices is the
    // expected order of magnitude.
    let locs: Vec<Point> = grid(10, 7, 5.0)
        .into_iter()
        .map(|p| [p[0] - 10.0, p[1] + 35.0])
        .collect();
    let mesh = build_mesh(&locs, &params(10.0, 5.0)).unwrap();
    let g = mesh.n_vertices();
    assert!((70..=700).contains(&g), "vertex count {g}");
    for p in &locs {
        assert!(mesh.locate(*p).is_some());
    }
}

#[test]
fn interior_edges_respect_bound_and_locations_are_interior() {
    let locs = grid(6, 6, 1.0);
    let mesh = build_mesh(&locs, &params(2.0, 0.6)).unwrap();
    for t in 0..mesh.n_triangles() {
        let c = mesh.centroid(t);
        if (0.0..=5.0).contains(&c[0]) && (0.0..=5.0).contains(&c[1]) {
            assert!(mesh.longest_edge(t) <= 0.6 + 1e-12, "edge {}", mesh.longest_edge(t));
        }
    }
    // Every location is strictly inside: a small disk around it is covered.
    for p in &locs {
        for d in [[0.5, 0.0], [-0.5, 0.0], [0.0, 0.5], [0.0, -0.5]] {
            assert!(mesh.locate([p[0] + d[0], p[1] + d[1]]).is_some());
        }
    }
}

#[test]
fn halving_edge_length_never_reduces_vertices() {
    let locs = grid(5, 5, 1.0);
    let mut prev = 0;
    for h in [2.0, 1.0, 0.5, 0.25] {
        let g = build_mesh(&locs, &params(1.5, h)).unwrap().n_vertices();
        assert!(g >= prev, "h={h}: {g} < {prev}");
        prev = g;
    }
}

#[test]
fn build_is_deterministic() {
    let locs = grid(7, 5, 0.8);
    let a = build_mesh(&locs, &params(1.5, 0.7)).unwrap();
    let b = build_mesh(&locs, &params(1.5, 0.7)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn cutoff_merges_close_locations() {
    let mut locs = grid(4, 4, 1.0);
    locs.push([0.01, 0.0]);
    let mut p = params(1.0, 5.0);
    let without = build_mesh(&locs, &p).unwrap();
    p.cutoff = 0.1;
    let with = build_mesh(&locs, &p).unwrap();
    assert_eq!(without.n_vertices(), with.n_vertices() + 1);
    assert!(with.locate([0.01, 0.0]).is_some());
}

#[test]
fn projector_basis_examples() {
    let mesh = two_triangle_square();
    let a = mesh
        .projector(&[[1.0, 1.0], [2.0 / 3.0, 1.0 / 3.0], [0.5, 0.0], [0.5, 0.5]])
        .unwrap();
    let d = a.matrix.to_dense();
    assert_eq!(d.row(0).iter().cloned().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 0.0]);
    for v in [0, 1, 2] {
        assert_relative_eq!(d[(1, v)], 1.0 / 3.0, epsilon = 1e-15);
    }
    assert_relative_eq!(d[(2, 0)], 0.5, epsilon = 1e-15);
    assert_relative_eq!(d[(2, 1)], 0.5, epsilon = 1e-15);
    assert_eq!(a.matrix.row(2).0.len(), 2);
    assert_relative_eq!(d[(3, 0)], 0.5, epsilon = 1e-15);
    assert_relative_eq!(d[(3, 2)], 0.5, epsilon = 1e-15);
    assert!(matches!(
        mesh.projector(&[[1.5, 0.5]]),
        Err(Error::PointOutsideMesh { .. })
    ));
}

#[test]
fn single_right_triangle_fem() {
    let mesh = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
    let fem = mesh.fem_matrices().unwrap();
    for c in &fem.mass_diag {
        assert_relative_eq!(*c, 1.0 / 6.0, epsilon = 1e-15);
    }
    let k = fem.stiffness.to_dense();
    // Closed-form element stiffness of the reference triangle.
    let expected = nalgebra::DMatrix::from_row_slice(3, 3, &[1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5]);
    assert!((k - expected).abs().max() < 1e-15);
}

#[test]
fn two_triangle_square_fem_matches_hand_assembly() {
    let fem = two_triangle_square().fem_matrices().unwrap();
    // Vertex 0 and 2 touch both triangles.
    let c = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0];
    for (a, b) in fem.mass_diag.iter().zip(c) {
        assert_relative_eq!(*a, b, epsilon = 1e-15);
    }
    // Hand assembly: triangle (0,1,2) has its right angle at 1, triangle
    // (0,2,3) at 3; the shared diagonal 0-2 gets no coupling.
    let expected = nalgebra::DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, -0.5, 0.0, -0.5, //
            -0.5, 1.0, -0.5, 0.0, //
            0.0, -0.5, 1.0, -0.5, //
            -0.5, 0.0, -0.5, 1.0,
        ],
    );
    assert!((fem.stiffness.to_dense() - expected).abs().max() < 1e-12);
}

#[test]
fn fem_invariants_on_refined_mesh() {
    let locs = grid(4, 3, 1.0);
    let mesh = build_mesh(&locs, &params(1.0, 0.9)).unwrap();
    assert!(mesh.n_vertices() <= 60, "{}", mesh.n_vertices());
    let fem = mesh.fem_matrices().unwrap();
    let total: f64 = fem.mass_diag.iter().sum();
    assert_relative_eq!(total, mesh.area(), max_relative = 1e-12);
    let ones = vec![1.0; mesh.n_vertices()];
    for v in fem.stiffness.matvec(&ones).unwrap() {
        assert!(v.abs() < 1e-10);
    }
    let eig = fem.stiffness.to_dense().symmetric_eigen().eigenvalues;
    let zeros = eig.iter().filter(|e| e.abs() < 1e-10).count();
    assert_eq!(zeros, 1);
    assert!(eig.iter().all(|&e| e > -1e-10));
}

#[test]
fn text_round_trip() {
    let mesh = build_mesh(&grid(3, 3, 1.0), &params(1.0, 1.0)).unwrap();
    let text = mesh.to_text();
    let back = Mesh::from_text(&text).unwrap();
    assert_eq!(back, mesh);
    assert!(text.starts_with(&format!("{} {}\n", mesh.n_vertices(), mesh.n_triangles())));
    assert!(Mesh::from_text("2 1\n0 0\n1 1\n0 1 2\n").is_err());
}

#[test]
fn triangles_are_counter_clockwise() {
    let mesh = Mesh::from_parts(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    assert_eq!(mesh.triangles()[0], [0, 2, 1]);
    assert!(mesh.triangle_area(0) > 0.0);
    assert!(matches!(
        Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]),
        Err(Error::DegenerateTriangle(0))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_locations_are_covered_and_rows_sum_to_one(
        pts in prop::collection::vec((0.0f64..10.0, 0.0f64..6.0), 3..40)
    ) {
        let locs: Vec<Point> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let mut p = params(2.0, 1.5);
        p.cutoff = 1e-3;
        match build_mesh(&locs, &p) {
            Err(Error::CollinearInput) => {}
            Err(e) => prop_assert!(false, "{e}"),
            Ok(mesh) => {
                for t in 0..mesh.n_triangles() {
                    prop_assert!(mesh.triangle_area(t) > 0.0);
                }
                let a = mesh.projector(&locs).unwrap();
                for i in 0..locs.len() {
                    let (cols, w) = a.matrix.row(i);
                    prop_assert!(cols.len() <= 3);
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
                let total: f64 = mesh.fem_matrices().unwrap().mass_diag.iter().sum();
                prop_assert!((total - mesh.area()).abs() < 1e-10 * mesh.area());
            }
        }
    }
}
