//! Deployment harness for the zero-trust edge stack: system variants,
//! scripted benchmark scenarios, an HTTP gateway surface, and result
//! reporting.

pub mod bench;
pub mod deploy;
pub mod http;
pub mod report;
pub mod testcase;
pub mod variant;
