#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod condensation;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod manybody;
pub mod nls;
pub mod scaling;
pub mod transverse;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/transverse.md")]
    mod transverse {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    mod scaling {}
    #[doc = include_str!("../../../book/src/nls.md")]
    mod nls {}
    #[doc = include_str!("../../../book/src/manybody.md")]
    mod manybody {}
    #[doc = include_str!("../../../book/src/condensation.md")]
    mod condensation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
