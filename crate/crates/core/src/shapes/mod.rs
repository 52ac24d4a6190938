//! Procedural training corpus of overlapping 2D shapes.

mod corpus;
mod generate;
mod raster;

pub use corpus::{
    generate_dataset, load_corpus, load_shape_image, parse_shape_image, save_shape_image, write_shape_image,
    MANIFEST_NAME,
};
pub use generate::{generate_images, generate_sample, sample_for_index, DatasetConfig};
pub use raster::{bezier_outline, rasterize, Figure, ShapeKind};

/// Square single-channel image, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeImage {
    pub side: usize,
    pub data: Vec<f32>,
}

impl ShapeImage {
    pub fn filled(side: usize, value: f32) -> Self {
        Self { side, data: vec![value; side * side] }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.side + col]
    }
}
