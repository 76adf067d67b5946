//! Conformal exchangeability martingales for streams of labelled observations.
//!
//! The pipeline has three stages:
//!
//! 1. a nearest-neighbour conformity measure scores every observation in the
//!    current prefix ([`conformity`]);
//! 2. a transducer turns the scores into randomized p-values ([`transducer`]),
//!    either label-conditionally (evidence of concept shift) or over
//!    class-averaged scores (evidence of label shift);
//! 3. a betting martingale gambles against the p-values ([`betting`]).
//!
//! The two legs use independent randomization, so the product of their
//! martingales is again an exchangeability martingale and decomposes exactly
//! into a concept-shift factor and a label-shift factor.

pub mod betting;
pub mod conformity;
pub mod error;
pub mod experiment;
pub mod quadrature;
pub mod random;
pub mod synth;
pub mod transducer;
pub mod types;
pub mod usps;

pub use error::{Error, Result};
pub use random::{RandomSource, StreamId};
pub use types::{Label, Object, Observation};
