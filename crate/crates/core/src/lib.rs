//! Pauli-blocked spontaneous emission of two fermionic atoms in a single
//! trap site.

pub mod cli;
pub mod error;
pub mod master_eq;
pub mod photon;
pub mod quadrature;
pub mod rates;
pub mod recoil;
pub mod zeeman;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/recoil.md")]
    mod recoil {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
    #[doc = include_str!("../../../book/src/zeeman.md")]
    mod zeeman {}
    #[doc = include_str!("../../../book/src/master_equation.md")]
    mod master_equation {}
    #[doc = include_str!("../../../book/src/photon.md")]
    mod photon {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
