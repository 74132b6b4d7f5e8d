pub mod edma_sim;
pub mod gen;
pub mod plot;
pub mod spectrum;
pub mod train;
pub mod transfer;
