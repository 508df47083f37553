//! Roundtrip and energy-conservation property checks for the Haar transform
//! over a large sweep of random shapes.

mod common;

use std::time::Instant;

#[test]
fn haar_roundtrip_and_energy_over_many_shapes() {
    let start = Instant::now();
    let (shapes, worst_rt, worst_energy) = common::wavelet_sweep();
    assert!(shapes >= 100);
    assert!(worst_rt < 1e-10, "worst roundtrip error {worst_rt}");
    assert!(worst_energy < 1e-10, "worst energy mismatch {worst_energy}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}
