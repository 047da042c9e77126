pub mod series;
pub mod deformation;
pub mod witt;
pub mod conformal;
pub mod cocycles;
pub mod moduli;
pub mod suite;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/loops.md")]
    pub struct Loops;
    #[doc = include_str!("../../../book/src/deformations.md")]
    pub struct Deformations;
    #[doc = include_str!("../../../book/src/flows.md")]
    pub struct Flows;
    #[doc = include_str!("../../../book/src/conformal.md")]
    pub struct Conformal;
    #[doc = include_str!("../../../book/src/cocycles.md")]
    pub struct Cocycles;
    #[doc = include_str!("../../../book/src/moduli.md")]
    pub struct Moduli;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
