pub mod catchment;
pub mod dataset;
pub mod equity;
pub mod geo;
pub mod indicators;
pub mod pipeline;
