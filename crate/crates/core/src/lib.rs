//! Posterior samplers for Dirichlet-process mixtures of univariate Normals.
//!
//! The centerpiece is the slice sampler with exchangeable allocated weights
//! ([`samplers::slice_sweep`]), whose per-iteration cost is driven by the
//! number of instantiated components `K`. Around it the crate provides the
//! competing samplers (blocked Gibbs, CRP with and without atoms), an exact
//! enumeration oracle for small `n` ([`oracle`]), posterior summaries
//! ([`diagnostics`]), synthetic data ([`datagen`]) and Monte Carlo checks of
//! the high-probability bounds on the slice overhead `K − H` ([`bounds`]).
//! [`harness`] runs whole chains and summarizes them.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod randkit;
pub mod samplers;
pub mod state;

pub use error::{Error, Result};
pub use randkit::RngStream;
pub use samplers::{sweep, SamplerKind};
pub use state::{MixtureState, ModelConfig, Partition, TraceRecord};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/partitions.md")]
    mod partitions {}
    #[doc = include_str!("../../../book/src/slice-sampler.md")]
    mod slice_sampler {}
    #[doc = include_str!("../../../book/src/other-samplers.md")]
    mod other_samplers {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
