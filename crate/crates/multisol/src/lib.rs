//! Multiple positive radial solutions of nonlinear field equations.
//!
//! The library computes, for each maximal interval ("well") on which the
//! nonlinear density is negative, one localized constrained minimizer of the
//! associated energy (semilinear elliptic, nonlinear Schrödinger,
//! Klein-Gordon, or Klein-Gordon-Maxwell) and certifies every solution with
//! the analytic identities the theory provides: Euler-Lagrange residual,
//! Derrick-Pohozaev identity, maximum-principle bound, multiplier sign, and
//! the hylomorphy inequality.

pub mod certify;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod kgm;
pub mod minimizer;
pub mod nonlinearity;
pub mod synth;
pub mod tridiag;

pub use error::{Error, Result};
pub use functionals::{EnergyBreakdown, ProblemKind, ProblemSpec};
pub use grid::{bump, RadialGrid, RadialProfile};
pub use minimizer::{SolveOptions, SolveStatus, WellSolveResult};
pub use nonlinearity::{
    detect_wells, max_principle_bound, translate, truncate, verify_growth, Nonlinearity,
    ScalarTerm, TruncatedNonlinearity, WellDecomposition,
};

#[cfg(doctest)]
mod book {
    //! Keeps the guide's code blocks compiling; `cargo test --doc` runs
    //! every snippet in book/src.
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(wells, "../../../book/src/wells-and-truncation.md");
    chapter!(radial, "../../../book/src/radial-discretization.md");
    chapter!(energies, "../../../book/src/energies-and-constraints.md");
    chapter!(minimization, "../../../book/src/localized-minimization.md");
    chapter!(certificates, "../../../book/src/certificates.md");
    chapter!(applications, "../../../book/src/applications.md");
    chapter!(cli, "../../../book/src/command-line.md");
}
