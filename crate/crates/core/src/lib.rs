#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod banded;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod io;
pub mod lyapunov;
pub mod model;
pub mod pde;
pub mod steady;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/steady.md")]
    mod steady {}
    #[doc = include_str!("../../../book/src/lyapunov.md")]
    mod lyapunov {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
