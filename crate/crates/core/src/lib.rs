pub mod dataset;
pub mod eval;
pub mod gridworld;
pub mod policy;
pub mod render;
pub mod tensorkit;
pub mod training;
pub mod rng;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/gridworld.md")]
    pub struct Gridworld;
    #[doc = include_str!("../../../book/src/dataset.md")]
    pub struct Datasets;
    #[doc = include_str!("../../../book/src/tensorkit.md")]
    pub struct Tensorkit;
    #[doc = include_str!("../../../book/src/policy.md")]
    pub struct Navigators;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct CommandLine;
}
