//! Model-free loop shaping with iterative learning control.
//!
//! A feedback controller is designed so that the loop gain `P C` matches a
//! target `L_d`, without a plant model. The plant is only ever run as a
//! black box ([`oracle::PlantOracle`]):
//!
//! 1. probe the plant's relative order with an impulse,
//! 2. learn an FIR approximation of the plant inverse by ILC ([`ilcff`]),
//! 3. learn the controller impulse response by tracking the impulse
//!    response of `L_d`, with the learned inverse as learning filter
//!    ([`pipeline`]),
//! 4. reduce the long FIR controller to a low-order IIR one by balanced
//!    truncation ([`reduction`]),
//!
//! and the result is checked in closed loop ([`validation`]).
//!
//! ```
//! use loopshape::{benchmark, validation};
//!
//! let g = validation::closed_loop(&benchmark::desired_loop_gain()).unwrap();
//! let m = validation::step_metrics(&g, 0.1, 0.02).unwrap();
//! assert!(m.rise_time_s < 5e-3);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod error;
pub mod ilc;
pub mod ilcff;
pub mod lti;
pub mod oracle;
pub mod pipeline;
pub mod poly;
pub mod reduction;
pub mod signal;
pub mod validation;

pub use error::{Error, Result};
pub use ilc::{ilc_run, IlcConfig, IlcResult};
pub use ilcff::{learn_inverse, InverseLearnConfig};
pub use lti::RationalTf;
pub use oracle::{PlantOracle, ProcessPlant, SimulatedPlant};
pub use pipeline::{run_loopshaping, LoopShapeConfig, LoopShapeResult};
pub use reduction::{balanced_reduce, OrderSelection, ReductionResult};
pub use signal::{Sequence, TwoSidedFir};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/signals.md")]
    mod signals {}
    #[doc = include_str!("../../../book/src/plants.md")]
    mod plants {}
    #[doc = include_str!("../../../book/src/ilc.md")]
    mod ilc {}
    #[doc = include_str!("../../../book/src/inverse.md")]
    mod inverse {}
    #[doc = include_str!("../../../book/src/loopshaping.md")]
    mod loopshaping {}
    #[doc = include_str!("../../../book/src/reduction.md")]
    mod reduction {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
