//! Experiment configuration and end-to-end orchestration: dataset synthesis,
//! per-class GP training, likelihood synthesis, evaluation, and the alpha
//! sweep. The CLI and the acceptance suite both drive this module.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{synthetic_classify, LikelihoodMap};
use crate::executor::{alpha_sweep, evaluate_suite, Method, SuiteConfig, SuiteReport};
use crate::gp::{fit, GPModel, HyperGrid, TrainingSet};
use crate::grid::Cell;
use crate::planner::HeuristicMode;
use crate::risk::{ClassDraw, RiskConfig};
use crate::rng::{derive_stream, domain};
use crate::terrain::{class_table, make_dataset, DatasetKind, DatasetParams, ProblemInstance, Split};
use crate::{Error, Result};

// ── configuration ────────────────────────────────────────────────────────────

fn default_instances_per_group() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kinds: Vec<DatasetKind>,
    pub split: Split,
    pub instances_per_group: usize,
    pub groups: usize,
    pub width: usize,
    pub height: usize,
    pub roughness: f64,
    pub feature_scale: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let p = DatasetParams::default();
        DatasetConfig {
            kinds: vec![DatasetKind::Std, DatasetKind::Es, DatasetKind::Aa],
            split: Split::Test,
            instances_per_group: default_instances_per_group(),
            groups: p.groups,
            width: p.width,
            height: p.height,
            roughness: p.roughness,
            feature_scale: p.feature_scale,
        }
    }
}

impl DatasetConfig {
    pub fn params(&self) -> DatasetParams {
        DatasetParams {
            width: self.width,
            height: self.height,
            roughness: self.roughness,
            feature_scale: self.feature_scale,
            groups: self.groups,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    /// Training measurements per class.
    pub samples_per_class: usize,
    /// Half-width of the training pitch range, degrees.
    pub pitch_span_deg: f64,
    pub grid: HyperGrid,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { samples_per_class: 50, pitch_span_deg: 30.0, grid: HyperGrid::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub accuracy_std: f64,
    pub accuracy_es: f64,
    pub accuracy_aa: f64,
    /// Box-blur radius in cells.
    pub smoothing: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { accuracy_std: 0.95, accuracy_es: 0.9, accuracy_aa: 1.0, smoothing: 1 }
    }
}

impl ClassifierConfig {
    pub fn accuracy_for(&self, kind: DatasetKind) -> f64 {
        match kind {
            DatasetKind::Std => self.accuracy_std,
            DatasetKind::Es => self.accuracy_es,
            DatasetKind::Aa => self.accuracy_aa,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskSection {
    pub alpha: f64,
    pub mc_samples: usize,
    pub class_draw: ClassDraw,
}

impl Default for RiskSection {
    fn default() -> Self {
        RiskSection { alpha: 0.99, mc_samples: 1000, class_draw: ClassDraw::Shared }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub u_ref: f64,
    pub heuristic: HeuristicMode,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection {
            u_ref: 0.1,
            heuristic: HeuristicMode::Zero,
            start: (8, 8),
            goal: (88, 88),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Method labels like "mgp+cvar".
    pub methods: Vec<String>,
    /// Alpha grid of the sweep subcommand.
    pub alphas: Vec<f64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            methods: crate::executor::all_methods().iter().map(|m| m.label()).collect(),
            alphas: vec![0.0, 0.6, 0.9, 0.99],
        }
    }
}

/// Complete experiment description. Defaults give a desk-scale run (10
/// groups x 2 test instances per dataset) that finishes in minutes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub gp: GpConfig,
    pub classifier: ClassifierConfig,
    pub risk: RiskSection,
    pub planner: PlannerSection,
    pub evaluation: EvaluationSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.kinds.is_empty() {
            return Err(Error::config("dataset.kinds is empty"));
        }
        if self.dataset.instances_per_group == 0 || self.dataset.groups == 0 {
            return Err(Error::config("dataset needs groups and instances_per_group >= 1"));
        }
        if self.gp.samples_per_class == 0 {
            return Err(Error::config("gp.samples_per_class must be >= 1"));
        }
        if !(self.gp.pitch_span_deg > 0.0 && self.gp.pitch_span_deg <= 45.0) {
            return Err(Error::config("gp.pitch_span_deg must lie in (0, 45]"));
        }
        if self.evaluation.methods.is_empty() {
            return Err(Error::config("evaluation.methods is empty"));
        }
        for m in &self.evaluation.methods {
            Method::parse(m).map_err(|e| Error::config(e.to_string()))?;
        }
        if !(self.planner.u_ref > 0.0) {
            return Err(Error::config("planner.u_ref must be positive"));
        }
        self.risk_config().validate().map_err(|e| Error::config(e.to_string()))?;
        for &a in &self.evaluation.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("sweep alpha {a} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn risk_config(&self) -> RiskConfig {
        RiskConfig {
            alpha: self.risk.alpha,
            mc_samples: self.risk.mc_samples,
            seed: self.seed,
            class_draw: self.risk.class_draw,
        }
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            risk: self.risk_config(),
            u_ref: self.planner.u_ref,
            heuristic: self.planner.heuristic,
            start: Cell::new(self.planner.start.0, self.planner.start.1),
            goal: Cell::new(self.planner.goal.0, self.planner.goal.1),
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.evaluation.methods.iter().map(|m| Method::parse(m)).collect()
    }
}

// ── pipeline stages ──────────────────────────────────────────────────────────

/// Synthetic slip measurements for one class: pitches uniform over the
/// training span, slips drawn from the ground-truth measurement process.
pub fn training_set_for_class(
    kind: DatasetKind,
    class: u16,
    seed: u64,
    samples: usize,
    pitch_span_deg: f64,
) -> TrainingSet {
    let truth = &class_table(kind)[class as usize];
    let span = pitch_span_deg.to_radians();
    let mut rng = derive_stream(seed, &[domain::GP_TRAINING, kind.tag(), class as u64]);
    let pitches: Vec<f64> = (0..samples).map(|_| rng.gen_range(-span..=span)).collect();
    let slips: Vec<f64> = pitches.iter().map(|&p| truth.draw(p, &mut rng)).collect();
    TrainingSet { pitches, slips, class_id: class }
}

/// Fit one GP per candidate class of the dataset kind.
pub fn train_models(kind: DatasetKind, seed: u64, cfg: &GpConfig) -> Result<Vec<GPModel>> {
    let n = class_table(kind).len();
    (0..n as u16)
        .into_par_iter()
        .map(|class| {
            let set =
                training_set_for_class(kind, class, seed, cfg.samples_per_class, cfg.pitch_span_deg);
            fit(set, &cfg.grid)
        })
        .collect()
}

/// Synthetic classifier likelihoods for every instance of one kind.
pub fn build_likelihoods(
    instances: &[ProblemInstance],
    cls: &ClassifierConfig,
    seed: u64,
) -> Result<Vec<LikelihoodMap>> {
    instances
        .par_iter()
        .map(|inst| {
            let s = crate::rng::derive_seed(seed, &[domain::CLASSIFIER, inst.seed]);
            synthetic_classify(inst, cls.accuracy_for(inst.kind), cls.smoothing, s)
        })
        .collect()
}

/// Everything one dataset kind contributes to a full run.
#[derive(Debug)]
pub struct DatasetEvaluation {
    pub kind: DatasetKind,
    pub report: SuiteReport,
}

/// Generate, train, classify, plan, and execute one dataset kind.
pub fn evaluate_kind(config: &ExperimentConfig, kind: DatasetKind) -> Result<DatasetEvaluation> {
    let instances = make_dataset(
        kind,
        config.dataset.split,
        config.seed,
        config.dataset.instances_per_group,
        &config.dataset.params(),
    )?;
    let models = train_models(kind, config.seed, &config.gp)?;
    let likelihoods = build_likelihoods(&instances, &config.classifier, config.seed)?;
    let report = evaluate_suite(
        kind.name(),
        &instances,
        &likelihoods,
        &models,
        &config.methods()?,
        &config.suite_config(),
    )?;
    Ok(DatasetEvaluation { kind, report })
}

/// Run the alpha sweep (MGP+CVaR across `evaluation.alphas`) on one kind.
pub fn sweep_kind(config: &ExperimentConfig, kind: DatasetKind) -> Result<Vec<SuiteReport>> {
    let instances = make_dataset(
        kind,
        config.dataset.split,
        config.seed,
        config.dataset.instances_per_group,
        &config.dataset.params(),
    )?;
    let models = train_models(kind, config.seed, &config.gp)?;
    let likelihoods = build_likelihoods(&instances, &config.classifier, config.seed)?;
    alpha_sweep(
        kind.name(),
        &instances,
        &likelihoods,
        &models,
        &config.evaluation.alphas,
        &config.suite_config(),
    )
}

/// Full evaluation over every configured kind, in configuration order.
pub fn run_full_evaluation(
    config: &ExperimentConfig,
) -> Result<BTreeMap<&'static str, SuiteReport>> {
    let mut out = BTreeMap::new();
    for &kind in &config.dataset.kinds {
        let eval = evaluate_kind(config, kind)?;
        out.insert(kind.name(), eval.report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("sneaky = 1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ExperimentConfig::from_toml_str("[dataset]\nbogus = true").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn toml_round_trip_preserves_settings() {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 42;
        cfg.risk.alpha = 0.9;
        cfg.evaluation.methods = vec!["sgp+ev".into(), "mgp+cvar".into()];
        let text = toml::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.risk.alpha, 0.9);
        assert_eq!(back.methods().unwrap().len(), 2);
    }

    #[test]
    fn bad_method_labels_fail_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.evaluation.methods = vec!["warp+drive".into()];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.evaluation.methods.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn training_sets_are_deterministic_and_in_span() {
        let a = training_set_for_class(DatasetKind::Std, 3, 7, 50, 30.0);
        let b = training_set_for_class(DatasetKind::Std, 3, 7, 50, 30.0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        let span = 30.0f64.to_radians();
        assert!(a.pitches.iter().all(|p| p.abs() <= span));
        let c = training_set_for_class(DatasetKind::Std, 4, 7, 50, 30.0);
        assert_ne!(a.slips, c.slips);
    }

    #[test]
    fn trained_models_cover_every_class_and_repeat() {
        let cfg = GpConfig { samples_per_class: 30, ..Default::default() };
        let a = train_models(DatasetKind::Aa, 11, &cfg).unwrap();
        assert_eq!(a.len(), 8);
        let b = train_models(DatasetKind::Aa, 11, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.hyperparams(), y.hyperparams());
            assert_eq!(x.class_id(), y.class_id());
        }
        // Treacherous AA classes carry more predictive spread at high pitch
        // than their benign partners.
        let phi = 25f64.to_radians();
        for pair in 0..4usize {
            let benign = a[2 * pair].predict(phi);
            let rough = a[2 * pair + 1].predict(phi);
            assert!(rough.0 > benign.0, "pair {pair}: mean ordering");
        }
    }

    #[test]
    fn likelihoods_align_with_instances() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.width = 24;
        cfg.dataset.height = 24;
        cfg.dataset.groups = 2;
        let instances = make_dataset(
            DatasetKind::Aa,
            Split::Test,
            cfg.seed,
            1,
            &cfg.dataset.params(),
        )
        .unwrap();
        let maps = build_likelihoods(&instances, &cfg.classifier, cfg.seed).unwrap();
        assert_eq!(maps.len(), instances.len());
        assert_eq!(maps[0].num_classes(), 8);
    }
}
