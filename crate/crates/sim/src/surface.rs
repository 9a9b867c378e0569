//! Reward-surface grid for a two-rule hierarchy, written as CSV.

use std::io::Write;

use rh_core::hierarchy::reward_smooth;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("grid resolution must be at least 2, got {0}")]
    BadResolution(usize),
    #[error("surface i/o failure at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Smooth reward over (rho1, rho2) in [-1, 1]^2 on a res x res grid.
pub fn reward_surface(a: f64, c: f64, res: usize) -> Result<Vec<(f64, f64, f64)>, SurfaceError> {
    if res < 2 {
        return Err(SurfaceError::BadResolution(res));
    }
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (res - 1) as f64;
    let mut grid = Vec::with_capacity(res * res);
    for i in 0..res {
        for j in 0..res {
            let (r1, r2) = (coord(i), coord(j));
            grid.push((r1, r2, reward_smooth(&[r1, r2], a, c)));
        }
    }
    Ok(grid)
}

pub fn emit_reward_surface(a: f64, c: f64, res: usize, path: &str) -> Result<(), SurfaceError> {
    let grid = reward_surface(a, c, res)?;
    let io_err = |source: std::io::Error| SurfaceError::Io {
        path: path.to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut buf = std::io::BufWriter::new(file);
    writeln!(buf, "rho1,rho2,reward").map_err(io_err)?;
    for (r1, r2, reward) in grid {
        writeln!(buf, "{r1},{r2},{reward}").map_err(io_err)?;
    }
    buf.flush().map_err(io_err)
}

/// Mean reward of each sign quadrant, keyed (sign of rho1, sign of rho2).
/// Grid points on an axis are excluded.
pub fn quadrant_means(grid: &[(f64, f64, f64)]) -> [f64; 4] {
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for &(r1, r2, reward) in grid {
        if r1 == 0.0 || r2 == 0.0 {
            continue;
        }
        let q = match (r1 > 0.0, r2 > 0.0) {
            (false, false) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (true, true) => 3,
        };
        sums[q] += reward;
        counts[q] += 1;
    }
    std::array::from_fn(|q| sums[q] / counts[q] as f64)
}
