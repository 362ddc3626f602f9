//! Datasets, IDX ingestion, photometric metrics, threshold-based domain
//! splits, background recoloring, composed-shift test sets and seeded
//! synthetic data.

pub mod dataset;
pub mod idx;
pub mod manifest;
pub mod metrics;
pub mod split;
pub mod synth;
pub mod transform;

pub use dataset::Dataset;
pub use idx::{decode_images, decode_labels, encode_images, encode_labels, load_idx, save_idx};
pub use manifest::{format_manifest, load_dataset, save_dataset, MANIFEST_COLUMNS};
pub use metrics::{brightness_metric, contrast_metric, Metric};
pub use split::{threshold_split, Band, Bands, DomainSplit};
pub use synth::{dim_digits, seven_segment_digits, shape_domain, ShapeDomain, DIGIT_SHAPE, SHAPE_CLASSES, SHAPE_SHAPE};
pub use transform::{build_composed_testset, colorize_background, colorize_background_with, BackgroundFill, DeltaPolicy};
