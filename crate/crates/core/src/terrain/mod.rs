//! Synthetic problem instances: terrain geometry, terrain-class maps,
//! ground-truth slip models, and the Std / ES / AA dataset generators.

mod classmap;
mod dataset;
mod heightmap;
mod perlin;
mod slip;
mod store;

pub use classmap::{generate_classmap, ClassMap, DEFAULT_FEATURE_SCALE};
pub use dataset::{
    class_table, make_dataset, num_classes, paper_instances_per_group, DatasetKind,
    DatasetParams, EnvironmentGroup, ProblemInstance, Split,
};
pub use heightmap::{generate_heightmap, HeightMap, MAX_PITCH_DEG};
pub use perlin::Perlin;
pub use slip::{sample_slip, SlipGroundTruth, SlipParams};
pub use store::{load_dataset_index, load_instance, save_dataset, save_instance, DatasetIndex};
