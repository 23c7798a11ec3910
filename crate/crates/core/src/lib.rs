pub mod agents;
pub mod llm;
pub mod memory;
pub mod metrics;
pub mod netlist;
pub mod optimizer;
pub mod retrieval;
pub mod simulation;
pub mod spec;
#[doc(hidden)]
pub mod testkit;
