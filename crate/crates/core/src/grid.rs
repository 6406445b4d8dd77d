//! Row-major grid container, 8-neighbor topology, and raw raster I/O.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Offsets of the eight neighbors, scanned row by row. This order is frozen:
/// it defines the direction index used in edge RNG keys and in the 8-plane
/// `cost.f32` raster layout.
pub const DIRECTIONS: [(i32, i32); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// A grid cell addressed by column `x` and row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }

    /// Direction index (0..8) of the step from `self` to `other`, if they
    /// are 8-neighbors.
    pub fn direction_to(&self, other: Cell) -> Option<usize> {
        let dx = other.x as i64 - self.x as i64;
        let dy = other.y as i64 - self.y as i64;
        DIRECTIONS
            .iter()
            .position(|&(ox, oy)| ox as i64 == dx && oy as i64 == dy)
    }
}

/// Dense row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid { width, height, data: vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { width, height, data }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::data(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Grid { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        debug_assert!(self.in_bounds(cell));
        cell.y * self.width + cell.x
    }

    pub fn cell_of(&self, index: usize) -> Cell {
        Cell { x: index % self.width, y: index / self.width }
    }

    pub fn get(&self, cell: Cell) -> &T {
        &self.data[self.index(cell)]
    }

    pub fn get_mut(&mut self, cell: Cell) -> &mut T {
        let i = self.index(cell);
        &mut self.data[i]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Neighbor of `cell` in direction `dir`, if inside the grid.
    pub fn neighbor(&self, cell: Cell, dir: usize) -> Option<Cell> {
        let (dx, dy) = DIRECTIONS[dir];
        let nx = cell.x as i64 + dx as i64;
        let ny = cell.y as i64 + dy as i64;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            None
        } else {
            Some(Cell { x: nx as usize, y: ny as usize })
        }
    }

    /// Iterate all cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_of(i))
    }
}

// ── raster i/o ───────────────────────────────────────────────────────────────
// Header-free little-endian rasters; dimensions travel in manifest.json.

pub fn write_f32_raster(path: &Path, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_f32_raster(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() != expected_len * 4 {
        return Err(Error::data(format!(
            "{}: expected {} f32 values ({} bytes), found {} bytes",
            path.display(),
            expected_len,
            expected_len * 4,
            buf.len()
        )));
    }
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_u16_raster(path: &Path, values: &[u16]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 2);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_u16_raster(path: &Path, expected_len: usize) -> Result<Vec<u16>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() != expected_len * 2 {
        return Err(Error::data(format!(
            "{}: expected {} u16 values ({} bytes), found {} bytes",
            path.display(),
            expected_len,
            expected_len * 2,
            buf.len()
        )));
    }
    Ok(buf.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_round_trip() {
        let g: Grid<u8> = Grid::filled(4, 4, 0);
        let c = Cell::new(1, 1);
        for dir in 0..8 {
            let n = g.neighbor(c, dir).unwrap();
            assert_eq!(c.direction_to(n), Some(dir));
        }
    }

    #[test]
    fn border_neighbors_clip() {
        let g: Grid<u8> = Grid::filled(3, 3, 0);
        let corner = Cell::new(0, 0);
        let count = (0..8).filter(|&d| g.neighbor(corner, d).is_some()).count();
        assert_eq!(count, 3);
    }

    #[test]
    fn raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f32_path = dir.path().join("a.f32");
        let vals = vec![0.0f32, -1.5, 3.25, f32::MIN_POSITIVE];
        write_f32_raster(&f32_path, &vals).unwrap();
        assert_eq!(read_f32_raster(&f32_path, 4).unwrap(), vals);
        assert!(read_f32_raster(&f32_path, 5).is_err());

        let u16_path = dir.path().join("a.u16");
        write_u16_raster(&u16_path, &[0, 7, 65535]).unwrap();
        assert_eq!(read_u16_raster(&u16_path, 3).unwrap(), vec![0, 7, 65535]);
    }
}
