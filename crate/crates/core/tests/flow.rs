mod common;

use common::{diamond_medium, homogeneous_medium};
use nlk_core::coarse::effective_advection;
use nlk_core::flow::{build_conductivity, read_flow_field, solve_darcy, solve_unit_cell, write_flow_field, MediumSpec};
use proptest::prelude::*;

fn solve(spec: &MediumSpec, nx: usize, ny: usize) -> nlk_core::flow::FlowField {
    let k = build_conductivity(spec, nx, ny).unwrap();
    solve_darcy(&k, spec).unwrap()
}

#[test]
fn homogeneous_layer_matches_linear_head() {
    let spec = homogeneous_medium(5, 7.0);
    let flow = solve(&spec, 50, 12);
    let l = spec.length();
    let vx = 7.0 / l;
    for i in 0..50 {
        for j in 0..12 {
            let (x, _) = flow.grid.center(i, j);
            assert!((flow.head[[i, j]] - 7.0 * (1.0 - x / l)).abs() < 1e-10);
        }
    }
    assert!(flow.face_velocity_x.iter().all(|v| (v - vx).abs() < 1e-10 * vx));
    assert!(flow.face_velocity_y.iter().all(|v| v.abs() < 1e-10 * vx));
}

#[test]
fn unit_cell_equals_one_cell_layer() {
    let spec = MediumSpec {
        num_cells: 1,
        head_left: 1.0,
        ..diamond_medium(1, 1.0)
    };
    let direct = solve(&spec, 24, 30);
    let cell = solve_unit_cell(&diamond_medium(40, 25.0), 24, 30).unwrap();
    for (a, b) in direct.face_velocity_x.iter().zip(cell.face_velocity_x.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in direct.head.iter().zip(cell.head.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn inclusion_flow_is_slower_than_matrix_flow() {
    let spec = diamond_medium(220, 60.0);
    let flow = solve_unit_cell(&spec, 40, 70).unwrap();
    let (mut inside, mut outside) = ((0.0, 0), (0.0, 0));
    for i in 0..40 {
        for j in 0..70 {
            let (x, y) = flow.grid.center(i, j);
            let (u, v) = flow.cell_velocity(i, j);
            let acc = if spec.in_inclusion(x, y) { &mut inside } else { &mut outside };
            acc.0 += u.hypot(v);
            acc.1 += 1;
        }
    }
    let (vin, vout) = (inside.0 / inside.1 as f64, outside.0 / outside.1 as f64);
    assert!(vin < 0.1 * vout, "inclusion {vin} vs matrix {vout}");
}

#[test]
fn heterogeneous_layer_balances_mass() {
    let spec = diamond_medium(30, 60.0);
    let flow = solve(&spec, 600, 40);
    let (qin, qout) = (flow.inflow(), flow.outflow());
    assert!((qin - qout).abs() <= 1e-10 * qin.abs(), "{qin} vs {qout}");
    assert!(flow.max_relative_divergence() <= 1e-10);
}

fn throughflows(fraction: f64, levels: &[(usize, usize)]) -> Vec<f64> {
    let spec = MediumSpec {
        inclusion_fraction: fraction,
        ..diamond_medium(2, 1.0)
    };
    levels.iter().map(|&(per, ny)| solve(&spec, 2 * per, ny).inflow()).collect()
}

// Disjoint inclusions: errors against a fine-grid reference shrink at least
// by 0.6 per doubling.
#[test]
fn throughflow_converges_under_refinement() {
    let q = throughflows(0.6, &[(6, 10), (12, 20), (24, 40), (96, 160)]);
    let reference = q[3];
    let e: Vec<f64> = q[..3].iter().map(|v| (v - reference).abs()).collect();
    for w in e.windows(2) {
        assert!(w[1] <= 0.6 * w[0], "throughflow {q:?}, errors {e:?}");
    }
}

// Touching diamonds leave the matrix connected only through pinch points at
// the walls, where the continuum solution is singular: convergence is
// monotone but slower than first order.
#[test]
fn touching_diamonds_converge_monotonically() {
    let q = throughflows(1.0, &[(6, 10), (12, 20), (24, 40), (48, 80)]);
    let d: Vec<f64> = q.windows(2).map(|w| w[0] - w[1]).collect();
    assert!(d.iter().all(|v| *v > 0.0), "{q:?}");
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{q:?}");
}

#[test]
fn effective_conductivity_lies_between_bounds() {
    let spec = diamond_medium(220, 60.0);
    let flow = solve_unit_cell(&spec, 40, 70).unwrap();
    let adv = effective_advection(&spec, &flow).unwrap();
    // area fraction of the staircase inclusion
    let k = build_conductivity(&spec.unit_cell(), 40, 70).unwrap();
    let f = k.iter().filter(|v| **v == spec.kappa_inclusion).count() as f64 / k.len() as f64;
    let arithmetic = f * spec.kappa_inclusion + (1.0 - f) * spec.kappa_matrix;
    let harmonic = 1.0 / (f / spec.kappa_inclusion + (1.0 - f) / spec.kappa_matrix);
    assert!(adv.kappa_bar_x >= harmonic && adv.kappa_bar_x <= arithmetic, "{harmonic} <= {} <= {arithmetic}", adv.kappa_bar_x);

    let doubled = MediumSpec {
        kappa_matrix: 2.0,
        kappa_inclusion: 0.02,
        ..spec.clone()
    };
    let a2 = effective_advection(&doubled, &solve_unit_cell(&doubled, 40, 70).unwrap()).unwrap();
    assert!((a2.kappa_bar_x / adv.kappa_bar_x - 2.0).abs() < 1e-10);
}

#[test]
fn flow_field_file_round_trip() {
    let flow = solve(&diamond_medium(3, 2.0), 30, 10);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.txt");
    write_flow_field(&flow, &path).unwrap();
    assert_eq!(read_flow_field(&path).unwrap(), flow);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solved_fields_are_physical(
        num_cells in 1usize..4,
        per in 2usize..9,
        ny in 3usize..16,
        ratio in 1e-3f64..1.0,
        fraction in 0.2f64..1.0,
        head in 0.5f64..60.0,
    ) {
        let spec = MediumSpec {
            kappa_inclusion: ratio,
            inclusion_fraction: fraction,
            ..diamond_medium(num_cells, head)
        };
        let flow = solve(&spec, num_cells * per, ny);
        prop_assert!(flow.max_relative_divergence() <= 1e-10);
        let (qin, qout) = (flow.inflow(), flow.outflow());
        prop_assert!((qin - qout).abs() <= 1e-10 * qin.abs());
        for i in 0..flow.grid_nx() {
            prop_assert_eq!(flow.face_velocity_y[[i, 0]], 0.0);
            prop_assert_eq!(flow.face_velocity_y[[i, ny]], 0.0);
            for j in 0..ny {
                let h = flow.head[[i, j]];
                prop_assert!(h >= -1e-12 * head && h <= head * (1.0 + 1e-12));
                prop_assert!((h - flow.head[[i, ny - 1 - j]]).abs() <= 1e-9 * head);
            }
        }
    }

    #[test]
    fn conductivity_is_periodic(num_cells in 1usize..5, per in 1usize..12, ny in 2usize..20) {
        let spec = diamond_medium(num_cells, 1.0);
        let k = build_conductivity(&spec, num_cells * per, ny).unwrap();
        for i in 0..num_cells * per {
            for j in 0..ny {
                prop_assert_eq!(k[[i, j]], k[[i % per, j]]);
            }
        }
    }
}
