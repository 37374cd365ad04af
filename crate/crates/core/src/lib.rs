pub mod belief;
pub mod engine;
pub mod models;
pub mod optimizer;
pub mod posterior;
pub mod ratio;
pub mod rng;
pub mod serde_float;
pub mod utilities;
