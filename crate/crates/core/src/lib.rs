//! Nonlinear regulation by the state-dependent Riccati equation (SDRE).
//!
//! The plant `ẋ = A(x)x + B(x)u` is frozen at every grid point and the
//! resulting linear-quadratic problem is solved either by a model-based
//! Newton-Kleinman ARE iteration ([`riccati`]) or by integral reinforcement
//! learning ([`irl`]), which never reads the drift matrix. [`controllers`]
//! wires both into closed-loop runs on top of [`dynamics`].

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod irl;
pub mod linalg;
pub mod riccati;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymmetricMatrix};
