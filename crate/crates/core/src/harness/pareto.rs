//! Brute-force Pareto front of the toy objective in loss space.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::toy2d_loss;

pub const FRONT_GRID: usize = 2000;
pub const FRONT_RANGE: (f64, f64) = (-12.0, 12.0);
pub const DEFAULT_FRONT_PATH: &str = "artifacts/toy_front.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub grid: usize,
    pub range: (f64, f64),
    /// Non-dominated loss pairs sorted by the first loss.
    pub points: Vec<[f64; 2]>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i == n - 1 { hi } else { lo + i as f64 * step })
}

/// Keeps the points not weakly dominated by any other, sorted by the first
/// coordinate.
pub fn non_dominated(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut front = Vec::new();
    let mut best = f64::INFINITY;
    for p in pts {
        if p[1] < best {
            best = p[1];
            front.push(p);
        }
    }
    front
}

impl ParetoFront {
    /// Evaluates the toy on a `grid × grid` lattice over `range²`.
    pub fn build(grid: usize, range: (f64, f64)) -> Result<Self> {
        if grid < 2 || !(range.0 < range.1) {
            return Err(Error::InvalidInput("front grid needs ≥ 2 points and a non-empty range".into()));
        }
        let axis: Vec<f64> = linspace(range.0, range.1, grid).collect();
        let mut pts = Vec::with_capacity(grid * grid);
        for &a in &axis {
            for &b in &axis {
                pts.push(toy2d_loss([a, b]));
            }
        }
        Ok(Self { grid, range, points: non_dominated(pts) })
    }

    pub fn build_default() -> Self {
        Self::build(FRONT_GRID, FRONT_RANGE).expect("valid defaults")
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FrontCacheMissing(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    /// Largest distance between neighbouring front points.
    pub fn max_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| ((w[0][0] - w[1][0]).powi(2) + (w[0][1] - w[1][1]).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Success threshold: twice the sampling resolution along the front.
    pub fn threshold(&self) -> f64 {
        2.0 * self.max_gap()
    }

    /// Distance from `losses` to the nearest sampled front point.
    pub fn proximity(&self, losses: [f64; 2]) -> f64 {
        self.points
            .iter()
            .map(|p| ((p[0] - losses[0]).powi(2) + (p[1] - losses[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}
