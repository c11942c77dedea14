//! Generalized Legendre transform for singular Lagrangians.
//!
//! The pipeline takes a Lagrangian `L(q, v)` whose velocity Hessian may be
//! degenerate, splits the coordinates into regular and degenerate sets,
//! performs the mixed (envelope over regular, general over degenerate)
//! Clairaut-Legendre transform, and builds the physical Hamiltonian `H0`, the
//! degenerate-direction Hamiltonians `h_alpha`, the curvature `F` and the
//! non-Lie F-bracket. Trajectories are integrated on the restricted phase
//! space `(q, p_regular)` and checked against the Euler-Lagrange equations.
//!
//! ```
//! use clairaut::{Model, ClairautSystem, PhasePoint, Tolerances};
//!
//! let model = Model::new(&["q1", "q2"], &[], "0.5*(d(q1) - q2)^2").unwrap();
//! let sys = ClairautSystem::build(model, Tolerances::default()).unwrap();
//! assert_eq!(sys.split().rank, 1);
//! let at = PhasePoint::new(vec![0.0, 0.3], vec![0.5]);
//! let h0 = sys.h_physical(&at.q, &at.p).unwrap();
//! assert!((h0 - (0.5 * 0.25 + 0.5 * 0.3)).abs() < 1e-12);
//! ```

pub mod analysis;
pub mod bracket;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod timeseries;
pub mod transform;
pub mod verification;

pub use analysis::{HessianField, IndexSplit};
pub use bracket::{Convention, Observable};
pub use config::Tolerances;
pub use error::{Error, Result};
pub use evolution::{GaugeChoice, GaugeReport, Trajectory};
pub use expr::{Expr, Symbol, SymbolTable};
pub use model::{Model, ModelSpec};
pub use transform::{ClairautSystem, Frame, Gradient, PhasePoint};
