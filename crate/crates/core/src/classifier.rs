//! Per-cell terrain-class likelihoods.
//!
//! Likelihood maps come from three sources: a numerically stable softmax over
//! externally produced logits, a synthetic error-injecting classifier that
//! stands in for a trained segmentation model, or a raw `likelihood.f32`
//! raster. Every map satisfies per-cell simplex constraints.

use std::path::Path;

use crate::grid::{read_f32_raster, write_f32_raster, Cell};
use crate::terrain::ProblemInstance;
use crate::{Error, Result};

/// Per-cell categorical distribution over terrain classes, cell-major in
/// memory (`probs[cell * num_classes + class]`).
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMap {
    width: usize,
    height: usize,
    num_classes: usize,
    probs: Vec<f64>,
}

impl LikelihoodMap {
    /// Build a map from per-cell distributions, enforcing the simplex
    /// invariant (non-negative, each cell summing to 1 within 1e-6).
    pub fn from_probs(
        width: usize,
        height: usize,
        num_classes: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if probs.len() != width * height * num_classes || num_classes == 0 {
            return Err(Error::data(format!(
                "likelihood buffer length {} does not match {}x{}x{}",
                probs.len(),
                width,
                height,
                num_classes
            )));
        }
        let map = LikelihoodMap { width, height, num_classes, probs };
        map.check_simplex(1e-6)?;
        Ok(map)
    }

    fn check_simplex(&self, tol: f64) -> Result<()> {
        for cell in 0..self.width * self.height {
            let row = &self.probs[cell * self.num_classes..(cell + 1) * self.num_classes];
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::data(format!("cell {cell}: negative or non-finite probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::data(format!(
                    "cell {cell}: probabilities sum to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn cell_probs(&self, cell: Cell) -> &[f64] {
        let i = cell.y * self.width + cell.x;
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Most likely class at a cell; ties resolve to the lowest class id.
    pub fn argmax_class(&self, cell: Cell) -> u16 {
        let row = self.cell_probs(cell);
        let mut best = 0usize;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        best as u16
    }

    /// Collapse every cell onto its argmax class (the single-GP baseline's
    /// view of the world).
    pub fn one_hot_argmax(&self) -> LikelihoodMap {
        let mut probs = vec![0.0; self.probs.len()];
        for i in 0..self.width * self.height {
            let cell = Cell::new(i % self.width, i / self.width);
            probs[i * self.num_classes + self.argmax_class(cell) as usize] = 1.0;
        }
        LikelihoodMap { width: self.width, height: self.height, num_classes: self.num_classes, probs }
    }
}

/// Numerically stable per-cell softmax over `logits` (cell-major).
pub fn softmax_from_logits(
    width: usize,
    height: usize,
    num_classes: usize,
    logits: &[f64],
) -> Result<LikelihoodMap> {
    if logits.len() != width * height * num_classes || num_classes == 0 {
        return Err(Error::data("logit buffer does not match the requested dimensions"));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::data("logits must be finite"));
    }
    let mut probs = vec![0.0; logits.len()];
    for cell in 0..width * height {
        let row = &logits[cell * num_classes..(cell + 1) * num_classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let out = &mut probs[cell * num_classes..(cell + 1) * num_classes];
        let mut sum = 0.0;
        for (o, &l) in out.iter_mut().zip(row) {
            *o = (l - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
    LikelihoodMap::from_probs(width, height, num_classes, probs)
}

/// Synthetic classifier emulating softened per-pixel segmentation.
///
/// Each cell puts `accuracy` mass on the classes sharing the true class's
/// appearance key (split uniformly among them — a single class for Std/ES,
/// the color-cue pair for AA) and spreads the remainder uniformly over the
/// other classes. The planes are then box-blurred with radius `smoothing`
/// and renormalized. The model is fully deterministic; `_seed` is reserved
/// for randomized error modes.
pub fn synthetic_classify(
    instance: &ProblemInstance,
    accuracy: f64,
    smoothing: usize,
    _seed: u64,
) -> Result<LikelihoodMap> {
    let c = instance.num_classes();
    if !(accuracy > 1.0 / c as f64 && accuracy <= 1.0) {
        return Err(Error::param(format!(
            "accuracy must lie in (1/{c}, 1], got {accuracy}"
        )));
    }
    let w = instance.classmap.width();
    let h = instance.classmap.height();

    let mut probs = vec![0.0; w * h * c];
    for (i, &true_class) in instance.classmap.ids().iter().enumerate() {
        let key = instance.appearance_key[true_class as usize];
        let peers = instance.appearance_key.iter().filter(|&&k| k == key).count();
        let rest = c - peers;
        let on_peer = accuracy / peers as f64;
        let off = if rest == 0 { 0.0 } else { (1.0 - accuracy) / rest as f64 };
        for cls in 0..c {
            probs[i * c + cls] =
                if instance.appearance_key[cls] == key { on_peer } else { off };
        }
    }

    if smoothing > 0 {
        probs = box_blur_planes(&probs, w, h, c, smoothing);
        // Renormalize: equal window counts keep cells near the simplex, but
        // floating-point accumulation is not exact.
        for cell in 0..w * h {
            let row = &mut probs[cell * c..(cell + 1) * c];
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
    }

    LikelihoodMap::from_probs(w, h, c, probs)
}

/// Box blur of every class plane with a (2r+1)² window clamped to the map;
/// each output is the window average over in-bounds cells.
fn box_blur_planes(probs: &[f64], w: usize, h: usize, c: usize, r: usize) -> Vec<f64> {
    // Summed-area table per class plane.
    let mut out = vec![0.0; probs.len()];
    let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
    for cls in 0..c {
        for y in 0..h {
            for x in 0..w {
                sat[(y + 1) * (w + 1) + (x + 1)] = probs[(y * w + x) * c + cls]
                    + sat[y * (w + 1) + (x + 1)]
                    + sat[(y + 1) * (w + 1) + x]
                    - sat[y * (w + 1) + x];
            }
        }
        for y in 0..h {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r).min(h - 1);
            for x in 0..w {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r).min(w - 1);
                let sum = sat[(y1 + 1) * (w + 1) + (x1 + 1)]
                    - sat[y0 * (w + 1) + (x1 + 1)]
                    - sat[(y1 + 1) * (w + 1) + x0]
                    + sat[y0 * (w + 1) + x0];
                let count = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
                out[(y * w + x) * c + cls] = sum / count;
            }
        }
    }
    out
}

// ── raster i/o ───────────────────────────────────────────────────────────────
// `likelihood.f32`: header-free f32 planes ordered class-major; dimensions
// travel in the instance manifest.

pub fn save_likelihoods(path: &Path, map: &LikelihoodMap) -> Result<()> {
    let (w, h, c) = (map.width, map.height, map.num_classes);
    let mut planes = Vec::with_capacity(w * h * c);
    for cls in 0..c {
        for cell in 0..w * h {
            planes.push(map.probs[cell * c + cls] as f32);
        }
    }
    write_f32_raster(path, &planes)
}

/// Load a likelihood raster, validating normalization: cells whose
/// probabilities sum within 1e-3 of one are renormalized, anything further
/// off is rejected.
pub fn load_likelihoods(
    path: &Path,
    width: usize,
    height: usize,
    num_classes: usize,
) -> Result<LikelihoodMap> {
    let planes = read_f32_raster(path, width * height * num_classes)?;
    let mut probs = vec![0.0f64; planes.len()];
    for cls in 0..num_classes {
        for cell in 0..width * height {
            probs[cell * num_classes + cls] = f64::from(planes[cls * width * height + cell]);
        }
    }
    for cell in 0..width * height {
        let row = &mut probs[cell * num_classes..(cell + 1) * num_classes];
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::data(format!(
                "{}: cell {cell} has negative or non-finite probability",
                path.display()
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-3 {
            return Err(Error::data(format!(
                "{}: cell {cell} probabilities sum to {sum}, beyond the 1e-3 tolerance",
                path.display()
            )));
        }
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    LikelihoodMap::from_probs(width, height, num_classes, probs)
}
