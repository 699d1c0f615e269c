pub mod coder;
pub mod event;
pub mod model;
pub mod generator;
pub mod codec;
pub mod metrics;
pub mod fidelity;
pub mod compare;
