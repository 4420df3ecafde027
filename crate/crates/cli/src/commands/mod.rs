pub mod explain;
pub mod generate;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod train;
