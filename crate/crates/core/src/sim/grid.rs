//! Uniform spatial hash for broad-phase pair search.

use std::collections::HashMap;

use super::geometry::Vec3;

pub struct SpatialHash {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl SpatialHash {
    pub fn new(cell: f64) -> Self {
        debug_assert!(cell > 0.0);
        SpatialHash {
            cell,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: &Vec3) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    pub fn build(cell: f64, points: impl Iterator<Item = Vec3>) -> Self {
        let mut grid = SpatialHash::new(cell);
        for (i, p) in points.enumerate() {
            let k = grid.key(&p);
            grid.cells.entry(k).or_default().push(i);
        }
        grid
    }

    /// Indices `j > i` of points within `reach` of point `i`, found through
    /// the 27 surrounding cells. `reach` must not exceed the cell size.
    /// Output is sorted so callers see the same order on every run.
    pub fn pairs_within(&self, points: &[Vec3], reach: f64) -> Vec<(usize, usize)> {
        debug_assert!(reach <= self.cell);
        let reach2 = reach * reach;
        let mut out = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let (cx, cy, cz) = self.key(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            if j > i && (points[j] - p).norm_squared() <= reach2 {
                                out.push((i, j));
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}
