//! Image-to-graph conversion with granular rectangles.
//!
//! An image is covered by axis-aligned rectangles grown from low-gradient
//! seeds under purity and variance gates ([`granular`]). Each rectangle is a
//! node; rectangles sharing a pixel are joined by an edge and every node gets
//! a ten-entry descriptor ([`graph`]). Graphs can be rotated, flipped,
//! resampled and cropped without going back to pixels ([`ops`]), stored as
//! JSON or packed into checksummed GRIG datasets ([`serialize`]), and checked
//! against brute-force references ([`oracle`]).

pub mod bench;
pub mod cli;
pub mod granular;
pub mod graph;
pub mod imaging;
pub mod oracle;
pub mod ops;
pub mod pipeline;
pub mod serialize;
pub mod viz;

pub use granular::{partition, GranularRect, SearchParams};
pub use graph::{build_graph, ImageGraph};
pub use imaging::GrayImage;
