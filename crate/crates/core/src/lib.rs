//! Routing autonomous emergency vehicles as mixed-criticality task scheduling.
//!
//! Requests become tasks with criticality-dependent deadlines, (vehicle,
//! route) pairs act as processors, route ETAs are execution budgets, and
//! traffic pre-emption is the escalation mechanism used when monitoring
//! predicts a deadline miss.

pub mod network;
pub mod router;
pub mod preemption;
pub mod analogy;
pub mod scheduler;
pub mod kernel;
pub mod metrics;
pub mod harness;
