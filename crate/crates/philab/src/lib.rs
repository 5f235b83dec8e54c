//! Numerical laboratory for N-function calculus and the gradient-boundedness
//! machinery of degenerate/singular phi-Laplacian systems.
//!
//! The crate is organised around the objects it computes with:
//!
//! - [`nfunction`]: N-functions phi given by their derivative, conjugates,
//!   shifts, the companion psi and the Delta-2 diagnostics.
//! - [`tensor_maps`]: the flux map A(Q), the natural quantity V(Q), the
//!   Jacobian of A and randomized scanners for their comparison bands.
//! - [`fields`]: uniform-grid vector fields, discrete gradients, averaged
//!   region integrals and smooth cutoff sequences.
//! - [`solvers`]: variational elliptic solves and implicit parabolic stepping
//!   for the phi-Laplacian, with certified weak residuals.
//! - [`bochner`]: weighted mixed space-time norms with Hoelder and
//!   interpolation checks.
//! - [`degiorgi`]: level-set truncation sequences, recursion diagnostics and
//!   the headline sup-bound certificates.

pub mod bochner;
pub mod degiorgi;
pub mod fields;
pub mod nfunction;
pub mod solvers;
pub mod tensor_maps;

mod quad;
