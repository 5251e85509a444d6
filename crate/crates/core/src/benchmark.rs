//! The third-order benchmark problem used throughout the tests, the book and
//! the example configuration.

use num_complex::Complex64;

use crate::lti::RationalTf;
use crate::validation::DesignSpec;

pub const SAMPLE_RATE_HZ: f64 = 10_000.0;

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// `-0.1 (z - 0.995)(z - 0.99) / ((z - 0.4)(z^2 - 1.998 z + 0.998))`.
///
/// Minimum phase, relative order 1. The quadratic factors as
/// `(z - 1)(z - 0.998)`: an integrator plus a slow real pole.
pub fn plant() -> RationalTf {
    let num = crate::poly::scale(&crate::poly::from_roots(&[real(0.995), real(0.99)]), -0.1);
    let den = crate::poly::mul(&[1.0, -0.4], &[1.0, -1.998, 0.998]);
    RationalTf::new(num, den, SAMPLE_RATE_HZ).expect("benchmark plant is well formed")
}

/// `0.3 (z - 0.9) / ((z - 0.999)(z - 0.7))`: a slow pole for a position
/// constant of 40 dB plus a lead pair for phase margin.
pub fn desired_loop_gain() -> RationalTf {
    RationalTf::from_zpk(&[real(0.9)], &[real(0.999), real(0.7)], 0.3, SAMPLE_RATE_HZ)
        .expect("benchmark loop gain is well formed")
}

/// Closed-loop requirements of the benchmark.
pub fn design_spec() -> DesignSpec {
    DesignSpec {
        rise_time_max_s: 5e-3,
        settling_time_max_s: 10e-3,
        overshoot_max_fraction: 0.01,
        phase_margin_min_deg: 80.0,
        steady_state_error_max_fraction: 0.02,
        settling_band_fraction: 0.02,
    }
}
