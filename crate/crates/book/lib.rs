#![doc = include_str!("../../book/src/introduction.md")]

#[doc = include_str!("../../book/src/arena.md")]
pub mod arena {}

#[doc = include_str!("../../book/src/policy.md")]
pub mod policy {}

#[doc = include_str!("../../book/src/league.md")]
pub mod league {}

#[doc = include_str!("../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../book/src/cli.md")]
pub mod cli {}
