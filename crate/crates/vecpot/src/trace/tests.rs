use super::*;
use crate::oracle::PolyScalar;
use approx::assert_relative_eq;
use num::BigRational;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// phi(x, y) = x^2 y.
fn poly_x2y() -> PolyScalar {
    PolyScalar::monomial(2, vec![2, 1], ratio(1, 1)).unwrap()
}

/// Top edge (y = 1) of the unit square: domain below the graph.
fn top_edge_chart(n: usize) -> BoundaryChart {
    let grid = GridSpec::new_param(vec![n], vec![1.0 / (n - 1) as f64], vec![0.0]).unwrap();
    BoundaryChart::flat(grid, 1.0, -1).unwrap()
}

#[test]
fn flat_chart_frame_in_three_dimensions() {
    let grid = GridSpec::new_param(vec![5, 5], vec![0.25, 0.25], vec![0.0, 0.0]).unwrap();
    // domain above the graph: outward normal points down
    let chart = BoundaryChart::flat(grid, 0.0, 1).unwrap();
    let f = build_frame(&chart, 12).unwrap();
    assert_eq!(f.normal, vec![0.0, 0.0, -1.0]);
    assert_eq!(f.tangents[0], vec![1.0, 0.0, 0.0]);
    // second tangent flipped to make the basis positively oriented
    assert_eq!(f.tangents[1], vec![0.0, -1.0, 0.0]);
    assert!((f.determinant() - 1.0).abs() <= 1e-12);
    assert!(f.orthonormality_defect() <= 1e-12);
}

#[test]
fn tilted_chart_frame_in_two_dimensions() {
    // graph phi(y) = y, domain above
    let grid = GridSpec::new_param(vec![5], vec![0.25], vec![0.0]).unwrap();
    let graph = crate::grid_fields::sample(&grid, |y| y[0]).unwrap();
    let chart = BoundaryChart::new(grid, graph, 1).unwrap();
    let f = build_frame(&chart, 2).unwrap();
    let s = 1.0 / 2.0f64.sqrt();
    // outward normal (1, -1)/sqrt(2); tangent (1, 1)/sqrt(2) up to the
    // orientation flip
    assert_relative_eq!(f.normal[0], s, epsilon = 1e-12);
    assert_relative_eq!(f.normal[1], -s, epsilon = 1e-12);
    assert_relative_eq!(f.tangents[0][0].abs(), s, epsilon = 1e-12);
    assert_relative_eq!(f.tangents[0][1].abs(), s, epsilon = 1e-12);
    assert!((f.determinant() - 1.0).abs() <= 1e-12);
}

#[test]
fn random_chart_frames_satisfy_invariants() {
    let grid = GridSpec::new_param(vec![9, 9], vec![0.125, 0.125], vec![0.0, 0.0]).unwrap();
    let graph = crate::grid_fields::sample(&grid, |y| {
        0.3 * (2.1 * y[0]).sin() - 0.2 * y[1] * y[1] + 0.15 * y[0] * y[1]
    })
    .unwrap();
    for orientation in [1, -1] {
        let chart = BoundaryChart::new(grid.clone(), graph.clone(), orientation).unwrap();
        for nd in 0..chart.node_count() {
            let f = build_frame(&chart, nd).unwrap();
            assert!(f.orthonormality_defect() <= 1e-12, "node {nd}");
            assert!((f.determinant() - 1.0).abs() <= 1e-12, "node {nd}");
            // outward side: normal's last component sign is opposite the
            // orientation
            assert!(f.normal[2] * orientation as f64 <= 0.0);
        }
    }
}

#[test]
fn traces_of_x2y_on_the_top_edge() {
    let chart = top_edge_chart(9);
    let phi = poly_x2y();
    let g0 = gamma0(&phi, &chart).unwrap();
    let g1 = gamma1(&phi, &chart).unwrap();
    let g2 = gamma2(&phi, &chart).unwrap();
    for nd in 0..chart.node_count() {
        let x = chart_position(&chart, nd)[0];
        assert_relative_eq!(g0.values[nd], x * x, epsilon = 1e-13);
        // n = e_2, so gamma_1 = d(phi)/dy = x^2 and gamma_2 = d2/dy2 = 0
        assert_relative_eq!(g1.values[nd], x * x, epsilon = 1e-13);
        assert!(g2.values[nd].abs() <= 1e-13);
    }
}

#[test]
fn traces_of_constants_and_linears() {
    let chart = top_edge_chart(7);
    let c = PolyScalar::constant(2, ratio(7, 2));
    assert!(gamma0(&c, &chart)
        .unwrap()
        .values
        .iter()
        .all(|&v| v == 3.5));
    assert_eq!(gamma1(&c, &chart).unwrap().max_abs(), 0.0);
    assert_eq!(gamma2(&c, &chart).unwrap().max_abs(), 0.0);
    // linear a . x has zero second traces
    let lin = PolyScalar::monomial(2, vec![1, 0], ratio(3, 1))
        .unwrap()
        .add(&PolyScalar::monomial(2, vec![0, 1], ratio(-2, 1)).unwrap());
    assert_eq!(gamma2(&lin, &chart).unwrap().max_abs(), 0.0);
}

#[test]
fn volume_traces_match_analytic_traces() {
    // phi = x^2 y sampled as a volume field on the unit square
    let vol_grid = GridSpec::cube(2, 33, 1.0).unwrap();
    let field = crate::grid_fields::sample(&vol_grid, |x| x[0] * x[0] * x[1]).unwrap();
    let chart = top_edge_chart(17);
    let g0 = gamma_volume(&field, &chart, 0).unwrap();
    let g1 = gamma_volume(&field, &chart, 1).unwrap();
    let g2 = gamma_volume(&field, &chart, 2).unwrap();
    for nd in 0..chart.node_count() {
        let x = chart_position(&chart, nd)[0];
        // linear in the normal coordinate: the quadratic probe is exact up
        // to interpolation error in x (x nodes coincide, so exact here)
        assert_relative_eq!(g0.values[nd], x * x, epsilon = 1e-10);
        assert_relative_eq!(g1.values[nd], x * x, epsilon = 1e-9);
        assert!(g2.values[nd].abs() <= 1e-8);
    }
}

#[test]
fn volume_trace_needs_stencil_room() {
    let vol_grid = GridSpec::cube(2, 9, 1.0).unwrap();
    let field = crate::grid_fields::sample(&vol_grid, |x| x[0] + x[1]).unwrap();
    // chart hanging outside the field's grid
    let grid = GridSpec::new_param(vec![5], vec![0.25], vec![0.0]).unwrap();
    let chart = BoundaryChart::flat(grid, 2.0, -1).unwrap();
    assert!(matches!(
        gamma_volume(&field, &chart, 0),
        Err(VecpotError::InsufficientStencil(_))
    ));
}

#[test]
fn surface_gradient_edge_cases() {
    let chart = top_edge_chart(9);
    let grid = chart.param_grid.clone();
    // constant -> zero
    let c = BoundaryField::scalar(2, grid.clone(), vec![4.0; grid.len()]).unwrap();
    assert_eq!(surface_gradient(&c, &chart).unwrap().max_abs(), 0.0);
    // u = y_1 (the chart parameter): ambient surface gradient e_1
    let u = BoundaryField::scalar(
        2,
        grid.clone(),
        (0..grid.len())
            .map(|nd| chart_position(&chart, nd)[0])
            .collect(),
    )
    .unwrap();
    let g = surface_gradient(&u, &chart).unwrap();
    for nd in 0..grid.len() {
        assert_relative_eq!(g.node(nd)[0], 1.0, epsilon = 1e-12);
        assert!(g.node(nd)[1].abs() <= 1e-12);
    }
    // u = gamma_0(x^2 y) on the edge: surface gradient (2x, 0)
    let phi = poly_x2y();
    let g0 = gamma0(&phi, &chart).unwrap();
    let sg = surface_gradient(&g0, &chart).unwrap();
    for nd in 0..grid.len() {
        let x = chart_position(&chart, nd)[0];
        assert_relative_eq!(sg.node(nd)[0], 2.0 * x, epsilon = 1e-12);
        assert!(sg.node(nd)[1].abs() <= 1e-12);
    }
}

#[test]
fn s_tensor_of_x2y_matches_hand_value() {
    let chart = top_edge_chart(9);
    let phi = poly_x2y();
    let phi0 = gamma0(&phi, &chart).unwrap();
    let phi1 = gamma1(&phi, &chart).unwrap();
    let s = build_s(&phi0, &phi1, &chart).unwrap();
    for nd in 0..chart.node_count() {
        let x = chart_position(&chart, nd)[0];
        assert_relative_eq!(s.node(nd)[0], 2.0 * x, epsilon = 1e-12);
        assert_relative_eq!(s.node(nd)[1], x * x, epsilon = 1e-12);
    }
}

#[test]
fn s_tensor_trivial_cases() {
    let chart = top_edge_chart(7);
    let grid = chart.param_grid.clone();
    let zero = BoundaryField::scalar(2, grid.clone(), vec![0.0; grid.len()]).unwrap();
    assert_eq!(build_s(&zero, &zero, &chart).unwrap().max_abs(), 0.0);
    // phi0 constant, phi1 = c: s = c n
    let c0 = BoundaryField::scalar(2, grid.clone(), vec![5.0; grid.len()]).unwrap();
    let c1 = BoundaryField::scalar(2, grid.clone(), vec![-1.5; grid.len()]).unwrap();
    let s = build_s(&c0, &c1, &chart).unwrap();
    for nd in 0..grid.len() {
        assert!(s.node(nd)[0].abs() <= 1e-12);
        assert_relative_eq!(s.node(nd)[1], -1.5, epsilon = 1e-12);
    }
}

#[test]
fn big_s_of_x2y_is_the_hessian_on_the_edge() {
    let chart = top_edge_chart(9);
    let phi = poly_x2y();
    let phi0 = gamma0(&phi, &chart).unwrap();
    let phi1 = gamma1(&phi, &chart).unwrap();
    let phi2 = gamma2(&phi, &chart).unwrap();
    let s = build_s(&phi0, &phi1, &chart).unwrap();
    let big = build_big_s(&s, &phi2, &chart).unwrap();
    for nd in 0..chart.node_count() {
        let x = chart_position(&chart, nd)[0];
        let t = big.node(nd);
        // S = [[2, 2x], [2x, 0]], the ambient Hessian of x^2 y at y = 1
        assert_relative_eq!(t[0], 2.0, epsilon = 1e-11);
        assert_relative_eq!(t[1], 2.0 * x, epsilon = 1e-11);
        assert_relative_eq!(t[2], 2.0 * x, epsilon = 1e-11);
        assert!(t[3].abs() <= 1e-11);
    }
    assert!(symmetry_defect(&big) <= 1e-12);
}

#[test]
fn big_s_normal_normal_component_recovers_phi2_bitwise() {
    let chart = top_edge_chart(11);
    // synthetic rough data: the identity is structural, not analytic
    let grid = chart.param_grid.clone();
    let vals = |seed: u64| -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..grid.len()).map(|_| rng.gen_range(-2.0..2.0)).collect()
    };
    let phi0 = BoundaryField::scalar(2, grid.clone(), vals(1)).unwrap();
    let phi1 = BoundaryField::scalar(2, grid.clone(), vals(2)).unwrap();
    let phi2 = BoundaryField::scalar(2, grid.clone(), vals(3)).unwrap();
    let s = build_s(&phi0, &phi1, &chart).unwrap();
    let big = build_big_s(&s, &phi2, &chart).unwrap();
    let frames = build_frames(&chart).unwrap();
    for nd in 0..chart.node_count() {
        let n = &frames[nd].normal;
        let t = big.node(nd);
        let snn = t[0] * n[0] * n[0] + t[1] * n[0] * n[1] + t[2] * n[1] * n[0]
            + t[3] * n[1] * n[1];
        // flat chart: exact bit-for-bit recovery
        assert_eq!(snn.to_bits(), phi2.values[nd].to_bits());
        // tangential-tangential block equals the tangential block of
        // grad_G s
        let tau = &frames[nd].tangents[0];
        let stt = t[0] * tau[0] * tau[0]
            + t[1] * tau[0] * tau[1]
            + t[2] * tau[1] * tau[0]
            + t[3] * tau[1] * tau[1];
        let sg = surface_gradient(&s, &chart).unwrap();
        let gt = sg.node(nd);
        let gtt = gt[0] * tau[0] * tau[0]
            + gt[1] * tau[0] * tau[1]
            + gt[2] * tau[1] * tau[0]
            + gt[3] * tau[1] * tau[1];
        assert_relative_eq!(stt, gtt, epsilon = 1e-12);
    }
}

#[test]
fn chain_reproduces_build_s_and_big_s_bitwise() {
    let chart = top_edge_chart(9);
    let phi = poly_x2y();
    let traces: Vec<BoundaryField> = (0..3)
        .map(|q| gamma_analytic(&phi, &chart, q, None).unwrap())
        .collect();
    let chain2 = build_s_chain(&traces, &chart, 2).unwrap();
    let s = build_s(&traces[0], &traces[1], &chart).unwrap();
    assert_eq!(chain2[1].values.len(), s.values.len());
    for (a, b) in chain2[1].values.iter().zip(&s.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let chain3 = build_s_chain(&traces, &chart, 3).unwrap();
    let big = build_big_s(&s, &traces[2], &chart).unwrap();
    for (a, b) in chain3[2].values.iter().zip(&big.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn chain_rejects_unsupported_order() {
    let chart = top_edge_chart(7);
    let grid = chart.param_grid.clone();
    let zero = BoundaryField::scalar(2, grid.clone(), vec![0.0; grid.len()]).unwrap();
    let traces = vec![zero.clone(); 7];
    assert!(matches!(
        build_s_chain(&traces, &chart, 7),
        Err(VecpotError::UnsupportedOrder(7))
    ));
}

#[test]
fn row_extraction_of_x2y() {
    let chart = top_edge_chart(9);
    let phi = poly_x2y();
    let phi0 = gamma0(&phi, &chart).unwrap();
    let phi1 = gamma1(&phi, &chart).unwrap();
    let phi2 = gamma2(&phi, &chart).unwrap();
    let s = build_s(&phi0, &phi1, &chart).unwrap();
    // first direction: traces of d(phi)/dx = 2xy on the edge y = 1
    let (r0, r1) = lemma_rows(&s, &phi2, &chart, 0).unwrap();
    for nd in 0..chart.node_count() {
        let x = chart_position(&chart, nd)[0];
        assert_relative_eq!(r0.values[nd], 2.0 * x, epsilon = 1e-12);
        assert_relative_eq!(r1.values[nd], 2.0 * x, epsilon = 1e-11);
    }
    // normal direction on a flat chart: phi0 = s . n (the gamma_1 input),
    // phi1 = phi_2
    let (n0, n1) = lemma_rows(&s, &phi2, &chart, 1).unwrap();
    for nd in 0..chart.node_count() {
        assert_relative_eq!(n0.values[nd], phi1.values[nd], epsilon = 1e-12);
        assert_relative_eq!(n1.values[nd], phi2.values[nd], epsilon = 1e-11);
    }
    // degenerate inputs
    let zero_s = BoundaryField::zeros(2, 1, chart.param_grid.clone());
    let zero_p = BoundaryField::zeros(2, 0, chart.param_grid.clone());
    let (z0, z1) = lemma_rows(&zero_s, &zero_p, &chart, 0).unwrap();
    assert_eq!(z0.max_abs(), 0.0);
    assert_eq!(z1.max_abs(), 0.0);
    assert!(lemma_rows(&s, &phi2, &chart, 5).is_err());
}

#[test]
fn row_identity_recovers_tensor_rows() {
    // grad_G(phi0_i) + phi1_i n = S . e_i
    let chart = top_edge_chart(13);
    let phi = poly_x2y();
    let traces: Vec<BoundaryField> = (0..3)
        .map(|q| gamma_analytic(&phi, &chart, q, None).unwrap())
        .collect();
    let chain = build_s_chain(&traces, &chart, 3).unwrap();
    let s = &chain[1];
    let big = &chain[2];
    for i in 0..2 {
        let (r0, r1) = lemma_rows(s, &traces[2], &chart, i).unwrap();
        let lhs = build_s(&r0, &r1, &chart).unwrap();
        for nd in 0..chart.node_count() {
            for a in 0..2 {
                let rhs = big.node(nd)[a * 2 + i];
                assert!(
                    (lhs.node(nd)[a] - rhs).abs() <= 1e-10,
                    "direction {i}, node {nd}, component {a}: {} vs {rhs}",
                    lhs.node(nd)[a]
                );
            }
        }
    }
}

#[test]
fn analytic_checker_accepts_polynomials_on_flat_and_curved_charts() {
    // N = 2: four polynomials on the top edge of the unit square
    let flat_graph_2d = PolyScalar::constant(1, ratio(1, 1));
    let polys = [
        poly_x2y(),
        PolyScalar::monomial(2, vec![3, 1], ratio(1, 1)).unwrap(),
        PolyScalar::monomial(2, vec![1, 1], ratio(1, 1))
            .unwrap()
            .add(&PolyScalar::monomial(2, vec![0, 3], ratio(1, 1)).unwrap()),
        crate::oracle::random_poly(2, 3, 99),
    ];
    let chart = top_edge_chart(17);
    for phi in &polys {
        let report = check_compatibility(
            std::slice::from_ref(&chart),
            &TraceInput::Analytic {
                phi,
                graphs: vec![&flat_graph_2d],
            },
            3,
            1e-8,
            2.0,
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::Accept);
        assert!(report.max_defect() <= 1e-8, "defect {}", report.max_defect());
    }

    // N = 3: cube face plus a curved graph chart
    let grid2 = GridSpec::new_param(vec![9, 9], vec![0.125, 0.125], vec![0.0, 0.0]).unwrap();
    let face = BoundaryChart::flat(grid2.clone(), 1.0, -1).unwrap();
    let flat_graph_3d = PolyScalar::constant(2, ratio(1, 1));
    let curved_graph = PolyScalar::monomial(2, vec![2, 0], ratio(3, 20))
        .unwrap()
        .add(&PolyScalar::monomial(2, vec![1, 1], ratio(-1, 10)).unwrap())
        .add(&PolyScalar::monomial(2, vec![0, 3], ratio(1, 12)).unwrap());
    let curved = BoundaryChart::from_graph_fn(grid2.clone(), &curved_graph, 1).unwrap();
    let phi3 = crate::oracle::random_poly(3, 3, 7);
    let report = check_compatibility(
        &[face, curved],
        &TraceInput::Analytic {
            phi: &phi3,
            graphs: vec![&flat_graph_3d, &curved_graph],
        },
        3,
        1e-8,
        2.0,
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::Accept);
    assert!(report.max_defect() <= 1e-8, "defect {}", report.max_defect());
}

#[test]
fn analytic_chain_is_totally_symmetric_at_order_four() {
    // m = 4 on x^3 y over the square edge
    let phi = PolyScalar::monomial(2, vec![3, 1], ratio(1, 1)).unwrap();
    let flat = PolyScalar::constant(1, ratio(1, 1));
    let chart = top_edge_chart(13);
    let fields = chain::build_chain_analytic(&chart, &flat, &phi, 4).unwrap();
    assert!(symmetry_defect(&fields[3]) <= 1e-8, "{}", symmetry_defect(&fields[3]));
    // and through the checker on a curved chart in three dimensions
    let grid2 = GridSpec::new_param(vec![7, 7], vec![0.125, 0.125], vec![0.2, -0.1]).unwrap();
    let curved_graph = PolyScalar::monomial(2, vec![2, 0], ratio(1, 8))
        .unwrap()
        .add(&PolyScalar::monomial(2, vec![0, 2], ratio(-1, 10)).unwrap());
    let curved = BoundaryChart::from_graph_fn(grid2, &curved_graph, 1).unwrap();
    let phi3 = crate::oracle::random_poly(3, 3, 31);
    let report = check_compatibility(
        &[curved],
        &TraceInput::Analytic {
            phi: &phi3,
            graphs: vec![&curved_graph],
        },
        4,
        1e-8,
        2.0,
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::Accept, "defect {}", report.max_defect());
}

#[test]
fn fd_chain_symmetry_defect_decays_at_second_order() {
    // sampled traces, curved chart: the defect is discretization-limited
    let curved_graph = PolyScalar::monomial(2, vec![2, 0], ratio(3, 20))
        .unwrap()
        .add(&PolyScalar::monomial(2, vec![1, 1], ratio(-1, 10)).unwrap());
    let phi3 = crate::oracle::random_poly(3, 3, 55);
    let mut errs = Vec::new();
    for n in [9usize, 17, 33] {
        let h = 1.0 / (n - 1) as f64;
        let grid = GridSpec::new_param(vec![n, n], vec![h, h], vec![0.0, 0.0]).unwrap();
        let chart = BoundaryChart::from_graph_fn(grid, &curved_graph, 1).unwrap();
        let traces: Vec<BoundaryField> = (0..3)
            .map(|q| gamma_analytic(&phi3, &chart, q, Some(&curved_graph)).unwrap())
            .collect();
        let chain = build_s_chain(&traces, &chart, 3).unwrap();
        errs.push((h, symmetry_defect(&chain[2]).max(1e-300)));
    }
    let order = crate::oracle::observed_order(&errs).unwrap();
    assert!(order >= 1.8, "order {order}, defects {errs:?}");
}

#[test]
fn zero_traces_are_accepted_with_zero_defects() {
    let chart = top_edge_chart(9);
    let grid = chart.param_grid.clone();
    let zero = BoundaryField::scalar(2, grid.clone(), vec![0.0; grid.len()]).unwrap();
    let report = check_compatibility(
        std::slice::from_ref(&chart),
        &TraceInput::Sampled(vec![vec![zero.clone(), zero.clone(), zero]]),
        3,
        1e-8,
        2.0,
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::Accept);
    assert_eq!(report.max_defect(), 0.0);
}

#[test]
fn patch_perturbation_is_rejected_through_overlap_consistency() {
    // two charts over the same flat edge, shifted by half their width; the
    // second chart carries a +1 patch on phi_2 inside the shared region
    let h = 1.0 / 16.0;
    let grid_a = GridSpec::new_param(vec![13], vec![h], vec![0.0]).unwrap();
    let grid_b = GridSpec::new_param(vec![13], vec![h], vec![0.25]).unwrap();
    let chart_a = BoundaryChart::flat(grid_a.clone(), 1.0, -1).unwrap();
    let chart_b = BoundaryChart::flat(grid_b.clone(), 1.0, -1).unwrap();
    let phi = poly_x2y();
    let mut traces: Vec<Vec<BoundaryField>> = [&chart_a, &chart_b]
        .iter()
        .map(|c| {
            (0..3)
                .map(|q| gamma_analytic(&phi, c, q, None).unwrap())
                .collect()
        })
        .collect();
    // perturb phi_2 on interior nodes of chart B that chart A also covers
    for nd in 2..6 {
        traces[1][2].values[nd] += 1.0;
    }
    let report = check_compatibility(
        &[chart_a, chart_b],
        &TraceInput::Sampled(traces),
        3,
        1e-8,
        2.0,
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::Reject);
    assert!(
        report.max_defect() >= 0.1,
        "defect {} too small",
        report.max_defect()
    );
}

#[test]
fn consistent_overlapping_charts_agree() {
    let h = 1.0 / 16.0;
    let grid_a = GridSpec::new_param(vec![13], vec![h], vec![0.0]).unwrap();
    let grid_b = GridSpec::new_param(vec![13], vec![h], vec![0.25]).unwrap();
    let chart_a = BoundaryChart::flat(grid_a, 1.0, -1).unwrap();
    let chart_b = BoundaryChart::flat(grid_b, 1.0, -1).unwrap();
    let phi = poly_x2y();
    let traces: Vec<Vec<BoundaryField>> = [&chart_a, &chart_b]
        .iter()
        .map(|c| {
            (0..3)
                .map(|q| gamma_analytic(&phi, c, q, None).unwrap())
                .collect()
        })
        .collect();
    let report = check_compatibility(
        &[chart_a, chart_b],
        &TraceInput::Sampled(traces),
        3,
        1e-8,
        2.0,
    )
    .unwrap();
    assert_eq!(report.verdict, Verdict::Accept);
    assert!(report.overlap_defect.iter().all(|&d| d <= 1e-10));
}

#[test]
fn analytic_and_fd_chains_agree_on_a_curved_chart() {
    let curved_graph = PolyScalar::monomial(2, vec![2, 0], ratio(1, 10))
        .unwrap()
        .add(&PolyScalar::monomial(2, vec![0, 2], ratio(1, 14)).unwrap());
    let grid = GridSpec::new_param(vec![17, 17], vec![1.0 / 16.0; 2], vec![0.0, 0.0]).unwrap();
    let chart = BoundaryChart::from_graph_fn(grid, &curved_graph, 1).unwrap();
    let phi = crate::oracle::random_poly(3, 3, 3);
    let analytic = chain::build_chain_analytic(&chart, &curved_graph, &phi, 3).unwrap();
    let traces: Vec<BoundaryField> = (0..3)
        .map(|q| gamma_analytic(&phi, &chart, q, Some(&curved_graph)).unwrap())
        .collect();
    let fd = build_s_chain(&traces, &chart, 3).unwrap();
    let scale = analytic[2].max_abs();
    let mut worst: f64 = 0.0;
    for (a, b) in analytic[2].values.iter().zip(&fd[2].values) {
        worst = worst.max((a - b).abs());
    }
    // finite differences on a 17^2 chart: percent-level agreement
    assert!(worst <= 0.05 * scale, "gap {} vs scale {}", worst, scale);
}

#[test]
fn mesh_and_trace_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec::new_param(vec![7, 7], vec![0.125, 0.125], vec![0.0, 0.0]).unwrap();
    let graph = crate::grid_fields::sample(&grid, |y| 0.1 * y[0] * y[0] - 0.2 * y[1]).unwrap();
    let chart = BoundaryChart::new(grid.clone(), graph, 1).unwrap();
    let flat = BoundaryChart::flat(grid.clone(), 0.5, -1).unwrap();
    let mesh_path = dir.path().join("mesh.json");
    save_boundary_mesh(&[chart.clone(), flat.clone()], &mesh_path).unwrap();
    let loaded = load_boundary_mesh(&mesh_path).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded[0].graph.values(), chart.graph.values());
    assert_eq!(loaded[1].orientation, -1);

    let phi = crate::oracle::random_poly(3, 2, 12);
    let traces: Vec<Vec<BoundaryField>> = loaded
        .iter()
        .map(|c| {
            (0..3)
                .map(|q| gamma_analytic(&phi, c, q, None).unwrap())
                .collect()
        })
        .collect();
    let index = dir.path().join("traces.json");
    save_trace_data(&traces, dir.path(), &index).unwrap();
    let back = load_trace_data(&index, &loaded).unwrap();
    for (a, b) in back.iter().flatten().zip(traces.iter().flatten()) {
        assert_eq!(a.values, b.values);
    }
}
