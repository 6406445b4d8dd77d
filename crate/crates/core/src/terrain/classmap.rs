//! Terrain-class maps: Perlin noise clustered at occupancy quantiles.

use serde::{Deserialize, Serialize};

use super::dataset::EnvironmentGroup;
use super::perlin::noise_field;
use crate::grid::Cell;
use crate::rng::{derive_stream, domain};
use crate::{Error, Result};

/// Default Perlin feature wavelength in cells; gives a handful of contiguous
/// class patches on a 96-cell map.
pub const DEFAULT_FEATURE_SCALE: f64 = 20.0;

/// Per-cell terrain-class assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    width: usize,
    height: usize,
    /// Row-major class ids.
    class_id: Vec<u16>,
}

impl ClassMap {
    pub fn from_parts(width: usize, height: usize, class_id: Vec<u16>) -> Result<Self> {
        if class_id.len() != width * height {
            return Err(Error::data(format!(
                "class map length {} does not match {}x{}",
                class_id.len(),
                width,
                height
            )));
        }
        Ok(ClassMap { width, height, class_id })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u16] {
        &self.class_id
    }

    pub fn class_at(&self, cell: Cell) -> u16 {
        self.class_id[cell.y * self.width + cell.x]
    }

    /// Fraction of cells assigned to `class`.
    pub fn fraction_of(&self, class: u16) -> f64 {
        let n = self.class_id.iter().filter(|&&c| c == class).count();
        n as f64 / self.class_id.len() as f64
    }
}

/// Cluster a random Perlin field into the group's classes by thresholding at
/// occupancy quantiles: the lowest `occupancy[0]` fraction of noise values
/// becomes `members[0]`, and so on. Deterministic in `seed`.
pub fn generate_classmap(
    seed: u64,
    group: &EnvironmentGroup,
    width: usize,
    height: usize,
    feature_scale: f64,
) -> Result<ClassMap> {
    group.validate()?;
    if !(feature_scale > 0.0) || !feature_scale.is_finite() {
        return Err(Error::param(format!(
            "feature_scale must be positive, got {feature_scale}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::param("class map dimensions must be non-zero"));
    }

    let n = width * height;
    let mut rng = derive_stream(seed, &[domain::CLASSMAP]);
    let values = noise_field(&mut rng, width, height, feature_scale);

    // Rank cells by noise value; ties broken by cell index for determinism.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut class_id = vec![0u16; n];
    let mut cum = 0.0;
    let mut start = 0usize;
    for (k, (&member, &occ)) in group.members.iter().zip(&group.occupancy).enumerate() {
        cum += occ;
        let end = if k + 1 == group.members.len() {
            n
        } else {
            ((cum * n as f64).round() as usize).min(n)
        };
        for &cell in &order[start..end] {
            class_id[cell] = member;
        }
        start = end;
    }

    ClassMap::from_parts(width, height, class_id)
}
