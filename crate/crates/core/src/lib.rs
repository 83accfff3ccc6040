pub mod rng;
pub mod tensor;
pub mod model;
pub mod dataset;
pub mod store;
pub mod eval;
pub mod train;
pub mod baselines;
