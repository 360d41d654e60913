pub mod bias;
pub mod experiments;
pub mod fbm;
pub mod models;
pub mod pricing;
pub mod pvariation;
pub mod regression;
pub mod stream;
pub mod timeseries;
