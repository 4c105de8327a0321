//! Synthetic bar and pie charts with exhaustive ground truth.

pub mod annotation;
pub mod config;
pub mod dataset;
pub mod font;
pub mod raster;
pub mod render;
pub mod spec;
pub mod words;

pub use annotation::{AnnotatedObject, AnnotationSet, ChartKind, ObjectClass, Relation, RelationKind, BAR_CLASSES, PIE_CLASSES};
pub use config::GenConfig;
pub use dataset::{build_dataset, generate_chart, read_annotations, Dataset, DatasetManifest, KindSelection};
pub use raster::RgbImage;
pub use render::render_chart;
pub use spec::{chart_seed, sample_chart_spec, ChartSpec};
