#![no_std]

extern crate alloc;

pub mod analyze;
pub mod chaos;
pub mod classes;
pub mod engine;
pub mod execute;
pub mod experiment;
pub mod metrics;
pub mod monitor;
pub mod plan;
pub mod sim;
pub mod webapp;
