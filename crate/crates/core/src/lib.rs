//! Core model for detecting imitative DeFi attacks: trace model, address
//! labels, signature semantics, attacker-logic extraction, similarity
//! matching, hyperparameter tuning and synthetic corpora.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod extract;
pub mod labels;
pub mod matcher;
pub mod metrics;
pub mod primitives;
pub mod semantics;
pub mod synth;
pub mod trace;
pub mod tuner;
