pub mod numkit;
pub mod arena;
pub mod policy;
pub mod league;
pub mod trainer;
pub mod analysis;
pub mod cli;
