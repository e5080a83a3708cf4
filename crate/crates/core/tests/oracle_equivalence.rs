mod common;

use common::checks::{block_operator_error, cbs_max, estimator_error, prolongation_identity_error};
use common::*;
use mlsgfem::fem::{assemble_stiffness, make_space, AssemblyOptions, SpaceKind};

#[test]
fn block_operator_matches_dense_assembly() {
    let err = block_operator_error();
    assert!(err < 1e-12, "{err:e}");
}

#[test]
fn inter_level_block_with_boundary_retained() {
    let d = mlsgfem::fem::Domain::unit_square();
    let coarse = make_space(1, SpaceKind::Q1, d, 10).unwrap();
    let fine = make_space(2, SpaceKind::Q1, d, 10).unwrap();
    let (bf, bc) = (OracleBasis::q1_with_boundary(&fine), OracleBasis::q1_with_boundary(&coarse));
    let one = |_: f64, _: f64| 1.0;
    let full = dense_stiffness_with(&fine, &bf, &coarse, &bc, &one, 4);
    assert_eq!((full.nrows(), full.ncols()), (25, 9));
    // the coarse hats sum to one, so every row annihilates the constant
    for r in 0..25 {
        assert!(full.row(r).sum().abs() < 1e-13);
    }
    // interior rows and columns give the eliminated system
    let k = assemble_stiffness(&fine, &coarse, &one, &AssemblyOptions::default()).unwrap();
    let interior_fine: Vec<usize> = (0..25).filter(|i| (1..4).contains(&(i % 5)) && (1..4).contains(&(i / 5))).collect();
    for (r, &fr) in interior_fine.iter().enumerate() {
        assert!((k.get(r, 0) - full[(fr, 4)]).abs() < 1e-13);
    }
}

#[test]
fn inter_level_blocks_satisfy_prolongation_identity() {
    let err = prolongation_identity_error();
    assert!(err < 1e-12, "{err:e}");
}

#[test]
fn estimator_matches_monolithic_detail_solve() {
    let err = estimator_error();
    assert!(err <= 1e-10, "{err:e}");
}

#[test]
fn cbs_constant_is_below_the_element_bound() {
    let gamma = cbs_max();
    assert!(gamma <= (5.0f64 / 11.0).sqrt() + 1e-10, "{gamma}");
    assert!(gamma > 0.0);
}
