//! Fractal heightmap generation (diamond-square) and edge pitch geometry.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Cell, Grid};
use crate::rng::{derive_stream, domain};
use crate::{Error, Result};

/// Edge pitch magnitudes are normalized to peak at this angle, inside the
/// ±45° envelope the slip models are defined over.
pub const MAX_PITCH_DEG: f64 = 40.0;

/// Terrain geometry over a regular grid. Elevations are stored as `f32` so
/// in-memory values round-trip the `height.f32` raster exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    width: usize,
    height: usize,
    /// Meters per cell.
    resolution: f64,
    /// Row-major elevations in meters.
    elevation: Vec<f32>,
}

impl HeightMap {
    pub fn from_parts(
        width: usize,
        height: usize,
        resolution: f64,
        elevation: Vec<f32>,
    ) -> Result<Self> {
        if elevation.len() != width * height {
            return Err(Error::data(format!(
                "elevation length {} does not match {}x{}",
                elevation.len(),
                width,
                height
            )));
        }
        if !elevation.iter().all(|e| e.is_finite()) {
            return Err(Error::data("non-finite elevation"));
        }
        if !(resolution > 0.0) {
            return Err(Error::param("resolution must be positive"));
        }
        Ok(HeightMap { width, height, resolution, elevation })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn elevations(&self) -> &[f32] {
        &self.elevation
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    pub fn elevation(&self, cell: Cell) -> f64 {
        f64::from(self.elevation[self.index(cell)])
    }

    /// 3-D position of the cell center in meters.
    pub fn position(&self, cell: Cell) -> [f64; 3] {
        [
            cell.x as f64 * self.resolution,
            cell.y as f64 * self.resolution,
            self.elevation(cell),
        ]
    }

    /// 3-D Euclidean length of the edge between two neighboring cells.
    pub fn edge_length(&self, from: Cell, to: Cell) -> f64 {
        let a = self.position(from);
        let b = self.position(to);
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let dz = a[2] - b[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Pitch angle in radians of the transition `from -> to`: the arctangent
    /// of elevation rise over horizontal run. Positive when ascending;
    /// antisymmetric under edge reversal.
    pub fn pitch_at_edge(&self, from: Cell, to: Cell) -> Result<f64> {
        if !self.in_bounds(from) || !self.in_bounds(to) {
            return Err(Error::graph(format!(
                "edge ({},{})->({},{}) leaves the {}x{} map",
                from.x, from.y, to.x, to.y, self.width, self.height
            )));
        }
        let dx = to.x as i64 - from.x as i64;
        let dy = to.y as i64 - from.y as i64;
        if dx == 0 && dy == 0 || dx.abs() > 1 || dy.abs() > 1 {
            return Err(Error::graph(format!(
                "cells ({},{}) and ({},{}) are not 8-neighbors",
                from.x, from.y, to.x, to.y
            )));
        }
        let run = self.resolution * (((dx * dx + dy * dy) as f64).sqrt());
        let rise = self.elevation(to) - self.elevation(from);
        Ok(rise.atan2(run))
    }

    /// Maximum |pitch| over all directed 8-neighbor edges.
    pub fn max_abs_pitch(&self) -> f64 {
        let grid: Grid<()> = Grid::filled(self.width, self.height, ());
        let mut max = 0.0f64;
        for cell in grid.cells() {
            for dir in 0..8 {
                if let Some(n) = grid.neighbor(cell, dir) {
                    let p = self.pitch_at_edge(cell, n).expect("neighbor edge");
                    max = max.max(p.abs());
                }
            }
        }
        max
    }
}

/// Generate a diamond-square fractal surface, deterministic in `seed`.
///
/// `roughness` in (0, 1] is the per-subdivision amplitude decay (1 keeps all
/// scales at full amplitude). The surface is synthesized on the smallest
/// 2^k+1 square covering the requested size, bilinearly resampled to
/// `width x height`, then rescaled so the steepest 8-neighbor edge sits at
/// [`MAX_PITCH_DEG`].
pub fn generate_heightmap(
    seed: u64,
    width: usize,
    height: usize,
    roughness: f64,
) -> Result<HeightMap> {
    if width < 2 || height < 2 {
        return Err(Error::param("heightmap dimensions must be at least 2x2"));
    }
    if !(roughness > 0.0 && roughness <= 1.0) {
        return Err(Error::param(format!(
            "roughness must lie in (0, 1], got {roughness}"
        )));
    }

    let mut rng = derive_stream(seed, &[domain::HEIGHTMAP]);

    // Smallest 2^k + 1 square covering the request.
    let need = width.max(height);
    let mut span = 1usize;
    while span + 1 < need {
        span *= 2;
    }
    let side = span + 1;

    let mut surf = vec![0.0f64; side * side];
    let at = |x: usize, y: usize| y * side + x;

    for &(x, y) in &[(0, 0), (span, 0), (0, span), (span, span)] {
        surf[at(x, y)] = rng.gen_range(-1.0..=1.0);
    }

    let mut step = span;
    let mut amp = roughness;
    while step >= 2 {
        let half = step / 2;

        // Diamond pass: square centers.
        for y in (half..side).step_by(step) {
            for x in (half..side).step_by(step) {
                let sum = surf[at(x - half, y - half)]
                    + surf[at(x + half, y - half)]
                    + surf[at(x - half, y + half)]
                    + surf[at(x + half, y + half)];
                surf[at(x, y)] = sum / 4.0 + rng.gen_range(-amp..=amp);
            }
        }

        // Square pass: edge midpoints, averaging the 3-4 in-bounds diamond
        // neighbors.
        for y in (0..side).step_by(half) {
            let x0 = if (y / half) % 2 == 0 { half } else { 0 };
            for x in (x0..side).step_by(step) {
                let mut sum = 0.0;
                let mut n = 0.0;
                if x >= half {
                    sum += surf[at(x - half, y)];
                    n += 1.0;
                }
                if x + half < side {
                    sum += surf[at(x + half, y)];
                    n += 1.0;
                }
                if y >= half {
                    sum += surf[at(x, y - half)];
                    n += 1.0;
                }
                if y + half < side {
                    sum += surf[at(x, y + half)];
                    n += 1.0;
                }
                surf[at(x, y)] = sum / n + rng.gen_range(-amp..=amp);
            }
        }

        step = half;
        amp *= roughness;
    }

    // Bilinear resample onto the requested dims (corners map to corners).
    let resolution = 1.0f64;
    let mut elev = vec![0.0f64; width * height];
    let sx = span as f64 / (width - 1) as f64;
    let sy = span as f64 / (height - 1) as f64;
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 * sx;
            let fy = y as f64 * sy;
            let x0 = (fx.floor() as usize).min(span - 1);
            let y0 = (fy.floor() as usize).min(span - 1);
            let tx = fx - x0 as f64;
            let ty = fy - y0 as f64;
            let v00 = surf[at(x0, y0)];
            let v10 = surf[at(x0 + 1, y0)];
            let v01 = surf[at(x0, y0 + 1)];
            let v11 = surf[at(x0 + 1, y0 + 1)];
            let top = v00 + tx * (v10 - v00);
            let bot = v01 + tx * (v11 - v01);
            elev[y * width + x] = top + ty * (bot - top);
        }
    }

    // Rescale so the steepest edge hits MAX_PITCH_DEG, then rebase to zero.
    let target_tan = MAX_PITCH_DEG.to_radians().tan();
    let mut max_tan = 0.0f64;
    for y in 0..height {
        for x in 0..width {
            for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let rise = (elev[ny as usize * width + nx as usize] - elev[y * width + x]).abs();
                let run = resolution * ((dx * dx + dy * dy) as f64).sqrt();
                max_tan = max_tan.max(rise / run);
            }
        }
    }
    let scale = if max_tan > 0.0 { target_tan / max_tan } else { 1.0 };
    let base = elev.iter().cloned().fold(f64::INFINITY, f64::min);
    let elevation: Vec<f32> = elev.iter().map(|&e| ((e - base) * scale) as f32).collect();

    HeightMap::from_parts(width, height, resolution, elevation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DIRECTIONS;
    use rand::Rng;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_heightmap(7, 96, 96, 0.5).unwrap();
        let b = generate_heightmap(7, 96, 96, 0.5).unwrap();
        let bits = |h: &HeightMap| h.elevations().iter().map(|e| e.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_roughness_is_rejected() {
        assert!(matches!(generate_heightmap(7, 96, 96, 0.0), Err(Error::Param(_))));
        assert!(matches!(generate_heightmap(7, 96, 96, 1.5), Err(Error::Param(_))));
        assert!(matches!(generate_heightmap(7, 1, 96, 0.5), Err(Error::Param(_))));
    }

    // Oracle: exhaustive scan of all directed 8-neighbor edges.
    #[test]
    fn pitch_stays_within_45_degrees() {
        let h = generate_heightmap(7, 96, 96, 0.5).unwrap();
        let limit = 45.0f64.to_radians();
        assert!(h.max_abs_pitch() <= limit + 1e-9);
        // The normalization targets MAX_PITCH_DEG exactly (up to f32 rounding).
        assert!((h.max_abs_pitch() - MAX_PITCH_DEG.to_radians()).abs() < 1e-5);
    }

    #[test]
    fn odd_sizes_resample_without_error() {
        let h = generate_heightmap(3, 97, 41, 0.6).unwrap();
        assert_eq!(h.width(), 97);
        assert_eq!(h.height(), 41);
        assert!(h.max_abs_pitch() <= 45.0f64.to_radians() + 1e-9);
    }

    #[test]
    fn flat_edge_has_zero_pitch() {
        let h = HeightMap::from_parts(2, 1, 1.0, vec![3.0, 3.0]).unwrap();
        let p = h.pitch_at_edge(Cell::new(0, 0), Cell::new(1, 0)).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn unit_rise_over_unit_run_is_quarter_pi() {
        let h = HeightMap::from_parts(2, 1, 1.0, vec![0.0, 1.0]).unwrap();
        let p = h.pitch_at_edge(Cell::new(0, 0), Cell::new(1, 0)).unwrap();
        assert!((p - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((p - 0.7854).abs() < 1e-4);
    }

    // Oracle: direct evaluation in both directions on random edges.
    #[test]
    fn pitch_is_antisymmetric() {
        let h = generate_heightmap(11, 64, 64, 0.7).unwrap();
        let mut rng = crate::rng::derive_stream(99, &[0xABCD]);
        let mut checked = 0;
        while checked < 1000 {
            let x = rng.gen_range(0..64usize);
            let y = rng.gen_range(0..64usize);
            let dir = rng.gen_range(0..8usize);
            let (dx, dy) = DIRECTIONS[dir];
            let nx = x as i64 + dx as i64;
            let ny = y as i64 + dy as i64;
            if nx < 0 || ny < 0 || nx >= 64 || ny >= 64 {
                continue;
            }
            let a = Cell::new(x, y);
            let b = Cell::new(nx as usize, ny as usize);
            let fwd = h.pitch_at_edge(a, b).unwrap();
            let rev = h.pitch_at_edge(b, a).unwrap();
            assert_eq!(fwd + rev, 0.0, "pitch not antisymmetric at ({x},{y}) dir {dir}");
            checked += 1;
        }
    }

    #[test]
    fn non_neighbor_pairs_are_graph_errors() {
        let h = generate_heightmap(1, 8, 8, 0.5).unwrap();
        let e = h.pitch_at_edge(Cell::new(0, 0), Cell::new(2, 0));
        assert!(matches!(e, Err(Error::Graph(_))));
        let e = h.pitch_at_edge(Cell::new(0, 0), Cell::new(0, 0));
        assert!(matches!(e, Err(Error::Graph(_))));
        let e = h.pitch_at_edge(Cell::new(0, 0), Cell::new(8, 0));
        assert!(matches!(e, Err(Error::Graph(_))));
    }

    #[test]
    fn diagonal_edge_length_includes_elevation() {
        let h = HeightMap::from_parts(2, 2, 1.0, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let len = h.edge_length(Cell::new(0, 0), Cell::new(1, 1));
        assert!((len - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn minimal_two_by_two_works() {
        let h = generate_heightmap(5, 2, 2, 0.5).unwrap();
        assert_eq!(h.elevations().len(), 4);
    }
}
