//! On-disk instance containers and dataset indexes.
//!
//! An instance directory holds `height.f32` and `class.u16` rasters
//! (row-major, little-endian) plus `manifest.json`. The manifest is written
//! last and acts as the completion marker. A dataset directory holds one
//! subdirectory per instance plus `dataset.json` listing instance dirs per
//! split.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classmap::ClassMap;
use super::dataset::{DatasetKind, EnvironmentGroup, ProblemInstance, Split};
use super::heightmap::HeightMap;
use super::slip::SlipGroundTruth;
use crate::grid::{read_f32_raster, read_u16_raster, write_f32_raster, write_u16_raster};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HEIGHT_FILE: &str = "height.f32";
pub const CLASS_FILE: &str = "class.u16";
pub const INDEX_FILE: &str = "dataset.json";

#[derive(Debug, Serialize, Deserialize)]
struct InstanceManifest {
    id: String,
    kind: DatasetKind,
    split: Split,
    seed: u64,
    width: usize,
    height: usize,
    resolution: f64,
    group: EnvironmentGroup,
    slip_models: Vec<SlipGroundTruth>,
    appearance_key: Vec<u16>,
}

/// Write one instance container. The manifest goes last so a directory with
/// a manifest is always complete.
pub fn save_instance(dir: &Path, instance: &ProblemInstance) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_f32_raster(&dir.join(HEIGHT_FILE), instance.heightmap.elevations())?;
    write_u16_raster(&dir.join(CLASS_FILE), instance.classmap.ids())?;
    let manifest = InstanceManifest {
        id: instance.id.clone(),
        kind: instance.kind,
        split: instance.split,
        seed: instance.seed,
        width: instance.heightmap.width(),
        height: instance.heightmap.height(),
        resolution: instance.heightmap.resolution(),
        group: instance.group.clone(),
        slip_models: instance.slip_models.clone(),
        appearance_key: instance.appearance_key.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_instance(dir: &Path) -> Result<ProblemInstance> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        Error::data(format!("{}: {e} (incomplete instance?)", manifest_path.display()))
    })?;
    let m: InstanceManifest = serde_json::from_str(&text)?;
    let n = m.width * m.height;
    let elevation = read_f32_raster(&dir.join(HEIGHT_FILE), n)?;
    let class_id = read_u16_raster(&dir.join(CLASS_FILE), n)?;
    let instance = ProblemInstance {
        id: m.id,
        kind: m.kind,
        split: m.split,
        seed: m.seed,
        heightmap: HeightMap::from_parts(m.width, m.height, m.resolution, elevation)?,
        classmap: ClassMap::from_parts(m.width, m.height, class_id)?,
        group: m.group,
        slip_models: m.slip_models,
        appearance_key: m.appearance_key,
    };
    instance.validate()?;
    Ok(instance)
}

/// Index of the instance directories of one dataset kind, per split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub kind: DatasetKind,
    pub seed: u64,
    /// Split name -> instance directories relative to the kind directory.
    pub splits: BTreeMap<String, Vec<String>>,
}

impl DatasetIndex {
    /// Load all instances of a split, in index order.
    pub fn load_split(&self, kind_dir: &Path, split: Split) -> Result<Vec<ProblemInstance>> {
        let dirs = self
            .splits
            .get(split.name())
            .ok_or_else(|| Error::data(format!("split '{}' not in dataset index", split.name())))?;
        dirs.iter().map(|d| load_instance(&kind_dir.join(d))).collect()
    }
}

/// Write a dataset kind directory: instance containers plus `dataset.json`.
/// The index is written last, after every instance completed.
pub fn save_dataset(
    kind_dir: &Path,
    kind: DatasetKind,
    seed: u64,
    splits: &[(Split, &[ProblemInstance])],
) -> Result<DatasetIndex> {
    let mut index = DatasetIndex { kind, seed, splits: BTreeMap::new() };
    for (split, instances) in splits {
        let mut dirs = Vec::with_capacity(instances.len());
        for inst in instances.iter() {
            let rel = format!("{}/{}", split.name(), inst.id);
            save_instance(&kind_dir.join(&rel), inst)?;
            dirs.push(rel);
        }
        index.splits.insert(split.name().to_string(), dirs);
    }
    fs::write(kind_dir.join(INDEX_FILE), serde_json::to_vec_pretty(&index)?)?;
    Ok(index)
}

pub fn load_dataset_index(kind_dir: &Path) -> Result<DatasetIndex> {
    let text = fs::read_to_string(kind_dir.join(INDEX_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
