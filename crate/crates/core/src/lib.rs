//! Sequential content selection for multi-page linear flows.
//!
//! Each page is modeled by a Bayesian linear probit bandit whose success
//! probability may depend on the content shown on the previous page. A
//! Thompson draw from every page's posterior is turned into a full layout by
//! backward induction over the pages ([`planner`]). The crate also carries
//! the comparison agents, the simulated environment and the single-run
//! regret loop used to benchmark them.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;

pub mod agents;
pub mod blip;
mod error;
pub mod features;
pub mod harness;
pub mod planner;
pub mod probit;
pub mod sim;

pub use error::{Error, Result};
