pub mod coco;
pub mod evaluator;
pub mod maskgeom;
pub mod pseudo;
pub mod stats;
pub mod stitcher;
pub mod tiler;
