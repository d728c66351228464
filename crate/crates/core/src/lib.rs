pub mod agents;
pub mod baselines;
pub mod dsl;
pub mod engine;
pub mod optim;
pub mod orchestrator;
pub mod systems;
