//! Adaptive fast stochastic gradient methods with mini-batch oracles.
//!
//! The crate is layered bottom-up:
//!
//! * [`vecspace`] holds dense vectors, prox setups and mirror steps.
//! * [`oracle`] defines stochastic first-order oracles with counter-based sampling.
//! * [`problems`] provides quadratic, softmax-regression and MLP oracles plus data loaders.
//! * [`solvers`] implements both AFSGM variants and Adam, AdaGrad and SGD baselines.
//! * [`bias_probe`] measures how line-search acceptance biases batch gradients.
//! * [`harness`] drives configured runs and writes metrics files.
//!
//! Every random draw is keyed by a [`oracle::SampleToken`], so runs are
//! bitwise reproducible regardless of thread count.

pub mod bias_probe;
pub mod harness;
pub mod oracle;
pub mod problems;
pub mod solvers;
pub mod vecspace;
