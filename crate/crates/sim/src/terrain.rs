//! Ground models: flat floor or a grid of square pedestals.

use crate::spatial::Vec3;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    PedestalGrid,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TerrainError {
    #[error("h_max must be finite and nonnegative, got {0}")]
    NegativeHeight(f64),
    #[error("pedestal grid must have positive size and cell count")]
    EmptyGrid,
}

/// Height field made of axis-aligned square columns centred on the world origin.
/// Outside the grid the ground is at height zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub kind: TerrainKind,
    pub pedestal_size: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    /// Row-major (`y` major) column heights, metres.
    pub heights: Vec<f64>,
}

/// One contact between a sphere (or point) and the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundContact {
    /// Unit normal pointing out of the ground.
    pub normal: Vec3,
    /// Penetration depth, positive when overlapping.
    pub depth: f64,
}

impl Default for Terrain {
    fn default() -> Self {
        Self::flat()
    }
}

impl Terrain {
    pub fn flat() -> Self {
        Self { kind: TerrainKind::Flat, pedestal_size: 0.0, cells_x: 0, cells_y: 0, heights: Vec::new() }
    }

    /// Pedestal grid with heights drawn uniformly from `[0, h_max]`.
    pub fn pedestals<R: Rng + ?Sized>(
        h_max: f64,
        pedestal_size: f64,
        cells_x: usize,
        cells_y: usize,
        rng: &mut R,
    ) -> Result<Self, TerrainError> {
        if !(h_max.is_finite() && h_max >= 0.0) {
            return Err(TerrainError::NegativeHeight(h_max));
        }
        if !(pedestal_size > 0.0) || cells_x == 0 || cells_y == 0 {
            return Err(TerrainError::EmptyGrid);
        }
        if h_max == 0.0 {
            return Ok(Self::flat());
        }
        let heights = (0..cells_x * cells_y).map(|_| rng.random::<f64>() * h_max).collect();
        Ok(Self { kind: TerrainKind::PedestalGrid, pedestal_size, cells_x, cells_y, heights })
    }

    pub fn is_flat(&self) -> bool {
        self.kind == TerrainKind::Flat || self.heights.iter().all(|&h| h == 0.0)
    }

    fn origin(&self) -> (f64, f64) {
        (-0.5 * self.cells_x as f64 * self.pedestal_size, -0.5 * self.cells_y as f64 * self.pedestal_size)
    }

    fn cell_of(&self, x: f64, y: f64) -> Option<(i64, i64)> {
        if self.kind == TerrainKind::Flat {
            return None;
        }
        let (x0, y0) = self.origin();
        Some((((x - x0) / self.pedestal_size).floor() as i64, ((y - y0) / self.pedestal_size).floor() as i64))
    }

    fn cell_height(&self, ix: i64, iy: i64) -> f64 {
        if ix < 0 || iy < 0 || ix >= self.cells_x as i64 || iy >= self.cells_y as i64 {
            0.0
        } else {
            self.heights[iy as usize * self.cells_x + ix as usize]
        }
    }

    /// Ground height directly below `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        match self.cell_of(x, y) {
            None => 0.0,
            Some((ix, iy)) => self.cell_height(ix, iy),
        }
    }

    /// Contacts of a sphere of `radius` centred at `center` (radius 0 for points).
    pub fn collide(&self, center: &Vec3, radius: f64, out: &mut Vec<GroundContact>) {
        let Some((ix, iy)) = self.cell_of(center.x, center.y) else {
            let depth = radius - center.z;
            if depth > 0.0 {
                out.push(GroundContact { normal: Vec3::z(), depth });
            }
            return;
        };
        let s = self.pedestal_size;
        let (x0, y0) = self.origin();
        let h = self.cell_height(ix, iy);
        let lo_x = x0 + ix as f64 * s;
        let lo_y = y0 + iy as f64 * s;
        let bottom = center.z - radius;

        // Inside or on top of the own column: resolve along the shallowest exit.
        if bottom < h {
            let mut best = GroundContact { normal: Vec3::z(), depth: h - bottom };
            if center.z < h {
                let sides = [
                    (ix - 1, iy, center.x - lo_x, -Vec3::x()),
                    (ix + 1, iy, lo_x + s - center.x, Vec3::x()),
                    (ix, iy - 1, center.y - lo_y, -Vec3::y()),
                    (ix, iy + 1, lo_y + s - center.y, Vec3::y()),
                ];
                for (nx, ny, dist, normal) in sides {
                    if self.cell_height(nx, ny) < center.z {
                        let depth = dist + radius;
                        if depth < best.depth {
                            best = GroundContact { normal, depth };
                        }
                    }
                }
            }
            out.push(best);
        }
        // Walls of taller neighbours.
        if radius > 0.0 {
            let walls = [
                (ix - 1, iy, center.x - lo_x, Vec3::x()),
                (ix + 1, iy, lo_x + s - center.x, -Vec3::x()),
                (ix, iy - 1, center.y - lo_y, Vec3::y()),
                (ix, iy + 1, lo_y + s - center.y, -Vec3::y()),
            ];
            for (nx, ny, dist, normal) in walls {
                if self.cell_height(nx, ny) > center.z && dist < radius {
                    out.push(GroundContact { normal, depth: radius - dist });
                }
            }
        }
    }
}
