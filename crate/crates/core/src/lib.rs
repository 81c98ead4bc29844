//! Mean first passage times for Brownian particles escaping a dendritic-spine
//! shaped domain: a head joined to a thin cylindrical neck whose far end
//! absorbs.
//!
//! Three routes to the same quantity live here:
//!
//! * [`asymptotics`]: the closed-form expansion of the Robin–Neumann
//!   reduction, `|Ω_h|L/(πε²) + |Ω_h|M/(π²ε) + L²/2 − |Ω_h|/(2π|x − x*|)`;
//! * [`quadrature`]: the singular disk integrals behind the constant `M`;
//! * [`montecarlo`]: reflected Brownian motion in the full [`geometry`],
//!   the numerical reference.
//!
//! [`fit`] and [`cli`] turn sweeps over `ε` or `L` into tables and fits.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod montecarlo;
pub mod quadrature;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/constant_m.md")]
    mod constant_m {}
    #[doc = include_str!("../../../book/src/expansion.md")]
    mod expansion {}
    #[doc = include_str!("../../../book/src/monte_carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/tables.md")]
    mod tables {}
}
