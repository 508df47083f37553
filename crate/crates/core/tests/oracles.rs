//! Fast implementations checked against slow, loop-based references:
//! multi-head cross-attention, the full spiral fusion block, and connected
//! components against a breadth-first flood fill.

mod common;

#[test]
fn mha_cross_matches_loop_reference() {
    let (instances, worst) = common::mha_oracle_sweep();
    assert!(instances >= 20);
    assert!(worst < 1e-9, "worst diff {worst}");
}

#[test]
fn sfs_fuse_matches_loop_reference() {
    let (instances, worst) = common::sfs_oracle_sweep();
    assert!(instances >= 20);
    assert!(worst < 1e-9, "worst diff {worst}");
}

#[test]
fn connected_components_matches_flood_fill() {
    let (masks, ok) = common::cc_oracle_sweep();
    assert!(masks >= 1000);
    assert!(ok);
}
