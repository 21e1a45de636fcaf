//! Schrieffer–Wolff perturbation theory for Lindblad generators.

pub mod ancilla;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod models;
pub mod operator;
pub mod spectral;
pub mod superop;
pub mod sw;

pub use error::{Error, Result};
pub use operator::{parse_expr, parse_operator_expr, spin_operators, tensor, OperatorExpr, OperatorMatrix, SymbolTable};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/schrieffer-wolff.md")]
    mod schrieffer_wolff {}
    #[doc = include_str!("../../../book/src/ancilla.md")]
    mod ancilla {}
    #[doc = include_str!("../../../book/src/superradiance.md")]
    mod superradiance {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
