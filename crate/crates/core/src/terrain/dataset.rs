//! Dataset families (Std / ES / AA), environment groups, and problem
//! instance generation.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classmap::{generate_classmap, ClassMap, DEFAULT_FEATURE_SCALE};
use super::heightmap::{generate_heightmap, HeightMap};
use super::slip::{SlipGroundTruth, SlipParams};
use crate::grid::Cell;
use crate::rng::{derive_seed, derive_stream, domain};
use crate::{Error, Result};

/// The three synthetic dataset families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Distinct appearance per class, low fixed measurement noise.
    Std,
    /// Same classes as Std with gradient-scaled ("erroneous slip") noise.
    Es,
    /// Ambiguous appearance: class pairs share a color cue, ES-level noise.
    Aa,
}

impl DatasetKind {
    pub fn tag(self) -> u64 {
        match self {
            DatasetKind::Std => 1,
            DatasetKind::Es => 2,
            DatasetKind::Aa => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Std => "std",
            DatasetKind::Es => "es",
            DatasetKind::Aa => "aa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "std" => Ok(DatasetKind::Std),
            "es" => Ok(DatasetKind::Es),
            "aa" => Ok(DatasetKind::Aa),
            other => Err(Error::param(format!("unknown dataset kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Valid => 2,
            Split::Test => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::param(format!("unknown split '{other}'"))),
        }
    }
}

/// Instances per environment group used in the reference evaluation
/// protocol: 100 / 50 / 10 for train / valid / test.
pub fn paper_instances_per_group(split: Split) -> usize {
    match split {
        Split::Train => 100,
        Split::Valid => 50,
        Split::Test => 10,
    }
}

// ── class tables ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize)]
struct ClassEntry {
    s0: f64,
    amp: f64,
    steep: f64,
    /// Per-class base noise override.
    sigma: Option<f64>,
    /// Per-class gradient-gain override.
    gain: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct KindSection {
    noise_sigma: f64,
    #[serde(default)]
    noise_gain: f64,
    #[serde(default)]
    classes: Option<Vec<ClassEntry>>,
}

#[derive(Debug, Deserialize)]
struct TableFile {
    std: KindSection,
    es: KindSection,
    aa: KindSection,
}

struct Tables {
    std: Vec<SlipGroundTruth>,
    es: Vec<SlipGroundTruth>,
    aa: Vec<SlipGroundTruth>,
}

fn build(entries: &[ClassEntry], section: &KindSection, scaled: bool) -> Vec<SlipGroundTruth> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| SlipGroundTruth {
            class_id: i as u16,
            params: SlipParams { s0: e.s0, amp: e.amp, steep: e.steep },
            noise_sigma: e.sigma.unwrap_or(section.noise_sigma),
            noise_scales_with_gradient: scaled,
            noise_gain: if scaled { e.gain.unwrap_or(section.noise_gain) } else { 0.0 },
        })
        .collect()
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let file: TableFile = toml::from_str(include_str!("../../assets/slip_classes.toml"))
            .expect("embedded slip class table parses");
        let std_entries = file.std.classes.clone().expect("std table lists classes");
        let aa_entries = file.aa.classes.clone().expect("aa table lists classes");
        let es_entries = file.es.classes.clone().unwrap_or_else(|| std_entries.clone());
        let t = Tables {
            std: build(&std_entries, &file.std, false),
            es: build(&es_entries, &file.es, true),
            aa: build(&aa_entries, &file.aa, true),
        };
        for model in t.std.iter().chain(&t.es).chain(&t.aa) {
            model.validate().expect("slip class table is valid");
        }
        t
    })
}

/// The full ground-truth slip table for a dataset family.
pub fn class_table(kind: DatasetKind) -> &'static [SlipGroundTruth] {
    match kind {
        DatasetKind::Std => &tables().std,
        DatasetKind::Es => &tables().es,
        DatasetKind::Aa => &tables().aa,
    }
}

/// Number of candidate terrain classes in a dataset family.
pub fn num_classes(kind: DatasetKind) -> usize {
    class_table(kind).len()
}

/// Appearance (color) index of each class: identity for Std/ES, shared per
/// pair for AA.
pub fn appearance_keys(kind: DatasetKind) -> Vec<u16> {
    let n = num_classes(kind) as u16;
    match kind {
        DatasetKind::Std | DatasetKind::Es => (0..n).collect(),
        DatasetKind::Aa => (0..n).map(|c| c / 2).collect(),
    }
}

// ── environment groups ───────────────────────────────────────────────────────

/// A random subset of terrain classes with occupancy ratios controlling how
/// often each class occurs in a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentGroup {
    pub members: Vec<u16>,
    pub occupancy: Vec<f64>,
}

impl EnvironmentGroup {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() || self.members.len() != self.occupancy.len() {
            return Err(Error::param("group members/occupancy must be non-empty and aligned"));
        }
        let mut seen = self.members.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.members.len() {
            return Err(Error::param("group members must be distinct"));
        }
        if self.members.len() > 1 && self.occupancy.iter().any(|&o| o >= 1.0) {
            return Err(Error::param("occupancy entry >= 1 with multiple members"));
        }
        if self.occupancy.iter().any(|&o| !(o > 0.0) || !o.is_finite()) {
            return Err(Error::param("occupancy entries must be positive"));
        }
        let sum: f64 = self.occupancy.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("occupancy sums to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Normalized occupancy fractions bounded away from zero.
fn random_occupancy(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / sum).collect()
}

fn random_group(kind: DatasetKind, rng: &mut ChaCha8Rng) -> EnvironmentGroup {
    let members: Vec<u16> = match kind {
        DatasetKind::Std | DatasetKind::Es => {
            let mut ids: Vec<u16> = (0..num_classes(kind) as u16).collect();
            ids.shuffle(rng);
            ids.truncate(4);
            ids
        }
        // One class per appearance pair, so all four colors appear while
        // the true member of each pair stays hidden.
        DatasetKind::Aa => {
            let mut ids: Vec<u16> =
                (0..4u16).map(|pair| 2 * pair + rng.gen_range(0..2u16)).collect();
            ids.shuffle(rng);
            ids
        }
    };
    let occupancy = random_occupancy(rng, members.len());
    EnvironmentGroup { members, occupancy }
}

// ── problem instances ────────────────────────────────────────────────────────

/// One fully specified planning world. Reproducible from `seed` given the
/// dataset kind's class table and the stored group.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub id: String,
    pub kind: DatasetKind,
    pub split: Split,
    pub seed: u64,
    pub heightmap: HeightMap,
    pub classmap: ClassMap,
    pub group: EnvironmentGroup,
    /// Ground-truth slip models of the group members, in member order.
    pub slip_models: Vec<SlipGroundTruth>,
    /// Color index per candidate class of the kind (AA pairs share one).
    pub appearance_key: Vec<u16>,
}

impl ProblemInstance {
    pub fn num_classes(&self) -> usize {
        self.appearance_key.len()
    }

    /// Ground-truth slip model for a class present in this instance.
    pub fn slip_model(&self, class: u16) -> Result<&SlipGroundTruth> {
        self.slip_models
            .iter()
            .find(|m| m.class_id == class)
            .ok_or_else(|| Error::data(format!("class {class} is not a member of the instance")))
    }

    /// Order-independent noise stream for the directed edge starting at
    /// `from` in direction `dir`.
    pub fn edge_noise_stream(&self, from: Cell, dir: usize) -> ChaCha8Rng {
        let idx = (from.y * self.heightmap.width() + from.x) as u64;
        derive_stream(self.seed, &[domain::SLIP_EDGE, idx, dir as u64])
    }

    pub fn validate(&self) -> Result<()> {
        self.group.validate()?;
        if self.classmap.width() != self.heightmap.width()
            || self.classmap.height() != self.heightmap.height()
        {
            return Err(Error::data("class map and heightmap dimensions differ"));
        }
        for m in &self.slip_models {
            m.validate()?;
        }
        for &c in self.classmap.ids() {
            if !self.group.members.contains(&c) {
                return Err(Error::data(format!("class {c} not in environment group")));
            }
        }
        if self.appearance_key.len() < self.group.members.iter().map(|&m| m as usize + 1).max().unwrap_or(0) {
            return Err(Error::data("appearance key table shorter than member ids"));
        }
        Ok(())
    }
}

/// Geometry and layout parameters shared by all generated instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetParams {
    pub width: usize,
    pub height: usize,
    pub roughness: f64,
    pub feature_scale: f64,
    pub groups: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            width: 96,
            height: 96,
            roughness: 0.55,
            feature_scale: DEFAULT_FEATURE_SCALE,
            groups: 10,
        }
    }
}

/// Generate the instances of one dataset split: `params.groups` environment
/// groups, each with `instances_per_group` worlds. Pure in `(seed, params)`.
pub fn make_dataset(
    kind: DatasetKind,
    split: Split,
    seed: u64,
    instances_per_group: usize,
    params: &DatasetParams,
) -> Result<Vec<ProblemInstance>> {
    if instances_per_group == 0 || params.groups == 0 {
        return Err(Error::param("dataset needs at least one group and one instance"));
    }
    let table = class_table(kind);
    let keys = appearance_keys(kind);

    let mut specs = Vec::new();
    for g in 0..params.groups {
        let mut grng = derive_stream(seed, &[domain::GROUP, kind.tag(), split.tag(), g as u64]);
        let group = random_group(kind, &mut grng);
        for i in 0..instances_per_group {
            specs.push((g, i, group.clone()));
        }
    }

    let mut instances = specs
        .into_par_iter()
        .map(|(g, i, group)| -> Result<ProblemInstance> {
            let inst_seed = derive_seed(
                seed,
                &[domain::INSTANCE, kind.tag(), split.tag(), g as u64, i as u64],
            );
            let heightmap =
                generate_heightmap(inst_seed, params.width, params.height, params.roughness)?;
            let classmap = generate_classmap(
                inst_seed,
                &group,
                params.width,
                params.height,
                params.feature_scale,
            )?;
            let slip_models = group
                .members
                .iter()
                .map(|&c| table[c as usize].clone())
                .collect();
            Ok(ProblemInstance {
                id: format!("g{g:02}_i{i:03}"),
                kind,
                split,
                seed: inst_seed,
                heightmap,
                classmap,
                group,
                slip_models,
                appearance_key: keys.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    instances.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_tables_are_valid() {
        assert_eq!(num_classes(DatasetKind::Std), 10);
        assert_eq!(num_classes(DatasetKind::Es), 10);
        assert_eq!(num_classes(DatasetKind::Aa), 8);
        for kind in [DatasetKind::Std, DatasetKind::Es, DatasetKind::Aa] {
            for model in class_table(kind) {
                model.validate().unwrap();
            }
        }
    }

    #[test]
    fn es_noise_grows_with_pitch_for_every_class() {
        for model in class_table(DatasetKind::Es) {
            assert!(model.noise_sigma_at(30f64.to_radians()) >= model.noise_sigma_at(0.0));
        }
    }

    #[test]
    fn aa_pairs_share_color_but_not_params() {
        let table = class_table(DatasetKind::Aa);
        let keys = appearance_keys(DatasetKind::Aa);
        for pair in 0..4u16 {
            let a = &table[(2 * pair) as usize];
            let b = &table[(2 * pair + 1) as usize];
            assert_eq!(keys[(2 * pair) as usize], keys[(2 * pair + 1) as usize]);
            assert_ne!(a.params, b.params, "pair {pair} params must differ");
        }
    }

    #[test]
    fn paper_scale_test_split_has_100_instances() {
        let n = paper_instances_per_group(Split::Test);
        let d = make_dataset(DatasetKind::Std, Split::Test, 0, n, &DatasetParams::default())
            .unwrap();
        assert_eq!(d.len(), 100);
        for inst in &d {
            inst.validate().unwrap();
            assert_eq!(inst.group.members.len(), 4);
        }
    }

    #[test]
    fn aa_instances_expose_four_colors_and_eight_candidates() {
        let d = make_dataset(DatasetKind::Aa, Split::Test, 0, 2, &DatasetParams::default())
            .unwrap();
        assert_eq!(d.len(), 20);
        for inst in &d {
            assert_eq!(inst.num_classes(), 8);
            let mut colors: Vec<u16> = inst
                .group
                .members
                .iter()
                .map(|&m| inst.appearance_key[m as usize])
                .collect();
            colors.sort_unstable();
            colors.dedup();
            assert_eq!(colors.len(), 4, "instance {} colors: {:?}", inst.id, colors);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let small = DatasetParams { width: 32, height: 32, groups: 3, ..Default::default() };
        let a = make_dataset(DatasetKind::Es, Split::Valid, 5, 2, &small).unwrap();
        let b = make_dataset(DatasetKind::Es, Split::Valid, 5, 2, &small).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.group, y.group);
            assert_eq!(x.classmap, y.classmap);
            let xb: Vec<u32> = x.heightmap.elevations().iter().map(|e| e.to_bits()).collect();
            let yb: Vec<u32> = y.heightmap.elevations().iter().map(|e| e.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn groups_differ_across_splits_and_indices() {
        let p = DatasetParams { width: 16, height: 16, groups: 10, ..Default::default() };
        let d = make_dataset(DatasetKind::Std, Split::Test, 0, 1, &p).unwrap();
        let distinct: std::collections::HashSet<Vec<u16>> =
            d.iter().map(|i| i.group.members.clone()).collect();
        assert!(distinct.len() > 1);
    }
}
