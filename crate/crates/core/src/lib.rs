//! θ-expansions of numbers in [0, θ] for θ² = 1/m.
//!
//! Exact arithmetic lives in [`quadfield`] and [`expansion`]; closed-form
//! measures in [`measure`]; Monte Carlo trajectories in [`simulate`]; and
//! extreme-value statistics in [`evt`].

pub mod error;
pub mod evt;
pub mod expansion;
pub mod hiprec;
pub mod identities;
pub mod measure;
pub mod parallel;
pub mod quadfield;
pub mod simulate;

pub use error::{Error, Result};
pub use expansion::{ConvergentPair, Cylinder, DigitSeq, ExpansionStatus, ThetaParams};
pub use measure::{MeasureValue, MixRate};
pub use parallel::Execution;
pub use quadfield::{Field, QuadRat, Rational};
