pub mod dataset;
pub mod evaluate;
pub mod mesh;
pub mod reconstruct;
pub mod render;
pub mod simulate;
pub mod train;
