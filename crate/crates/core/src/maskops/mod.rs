//! Binary mask algebra, exact Euclidean distance transforms, connected
//! components, and the IoU / Boundary IoU kernels.

mod components;
mod distance;
mod quality;
mod raster;
mod regions;

pub use components::{connected_components, Components, Connectivity};
pub use distance::{inner_distance_transform, outer_distance_transform, DistanceMap};
pub(crate) use distance::inner_squared_distance;
pub use quality::{boundary_band, boundary_iou, default_boundary_width, iou};
pub use raster::{BinaryMask, ProbMap};
pub use regions::{error_regions, ErrorComponent, ErrorKind, ErrorRegions};

/// Binarization threshold applied to probability maps.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
