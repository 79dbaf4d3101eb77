//! Top Lyapunov exponent of products of random 2x2 Ising transfer matrices
//! `M(epsilon, Z) = [[1, epsilon], [epsilon Z, Z]]` near `epsilon = 0`.
//!
//! Three routes to the exponent are provided and can be cross-checked:
//!
//! - [`matprod`]: direct Monte Carlo on the renormalized matrix product;
//! - [`projective`]: ergodic averages along the projective chain
//!   `X_{n+1} = z_{n+1} + h_k(X_n)`, `k = log(1/epsilon)`;
//! - [`operator`]: the discretized transfer operator acting on tail functions and
//!   its invariant probability.
//!
//! For balanced disorder (`E[log Z] = 0`) the exponent behaves like
//! `kappa1 / (k + kappa2)`. The constants come from the invariant measures of the
//! two edge chains ([`edge`]), glued into an explicit approximate invariant
//! probability in [`dh`].
//!
//! With the `parallel` feature (on by default) the independent batches, replicas
//! and grid rows run on rayon; [`exec::Exec::Sequential`] gives the same numbers
//! on one thread.

pub mod dh;
pub mod disorder;
pub mod edge;
pub mod error;
pub mod exec;
pub mod kernel;
pub mod matprod;
pub mod numeric;
pub mod operator;
pub mod projective;
pub mod rng;

pub use dh::{asymptotic_lyap, build_dh, one_step_residual, weak_disorder_formula, DhApprox, DhConstants, EdgePair};
pub use disorder::{DisorderModel, Family};
pub use edge::{solve_edge, EdgeMeasure, EdgeOptions, Side};
pub use error::{LyapError, Result};
pub use exec::Exec;
pub use matprod::{lyapunov_mc, LyapEstimate, McParams};
pub use operator::{GridTail, TransferOperator};
pub use projective::{hk, ChainConfig};
