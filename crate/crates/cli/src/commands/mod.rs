pub mod ablate;
pub mod evaluate;
pub mod gen_data;
pub mod nav_eval;
pub mod reconstruct;
pub mod report;
pub mod segment;
pub mod train;
