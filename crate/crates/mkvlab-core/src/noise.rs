//! Discretised Brownian paths for common, idiosyncratic and regularisation
//! noises, including the concatenation operation that defines shifted
//! controls.
//!
//! Paths are stored at grid resolution only; there is no Brownian-bridge
//! refinement. All noises in one bundle share a single [`TimeGrid`]; mixed
//! grids are rejected rather than interpolated.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamId, StreamKind};

/// Relative tolerance used to decide whether a time lies on the grid.
const GRID_SNAP_TOL: f64 = 1e-12;

/// Uniform partition of `[t0, t_end]` into `n_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::config("time grid endpoints must be finite"));
        }
        if t0 >= t_end {
            return Err(Error::config(format!(
                "time grid needs t0 < t_end, got [{t0}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::config("time grid needs at least one step"));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// k-th grid point; exact at both endpoints.
    pub fn point(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_steps);
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + (self.t_end - self.t0) * (k as f64 / self.n_steps as f64)
        }
    }

    /// Grid index of `t`, if `t` lies on the grid (up to rounding).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt()).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        let scale = self.t_end.abs().max(self.t0.abs()).max(1.0);
        ((self.point(k) - t).abs() <= GRID_SNAP_TOL * scale).then_some(k)
    }

    /// Grid with every `factor`-th point kept. `factor` must divide
    /// `n_steps`; used for step-halving studies on a shared fine path.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::precondition(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps
            )));
        }
        TimeGrid::new(self.t0, self.t_end, self.n_steps / factor)
    }
}

/// A Brownian path sampled on a [`TimeGrid`]; `values[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    dim: usize,
    /// `(n_steps + 1) × dim`, row-major.
    values: Vec<f64>,
}

impl BrownianPath {
    /// Sample with iid `N(0, dt·I)` increments on the default stream of
    /// `seed`. Deterministic for fixed `(grid, dim, seed)`.
    pub fn sample(grid: TimeGrid, dim: usize, seed: u64) -> Result<Self> {
        Self::sample_stream(grid, dim, seed, StreamId::new(0, StreamKind::Common, 0))
    }

    /// Sample on an explicit stream address.
    pub fn sample_stream(grid: TimeGrid, dim: usize, seed: u64, id: StreamId) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("path dimension must be positive"));
        }
        let mut rng = stream_rng(seed, id);
        let sqrt_dt = grid.dt().sqrt();
        let mut values = vec![0.0; grid.n_points() * dim];
        for k in 1..grid.n_points() {
            for j in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                values[k * dim + j] = values[(k - 1) * dim + j] + sqrt_dt * z;
            }
        }
        Ok(BrownianPath { grid, dim, values })
    }

    /// A path that is identically zero (useful as a deterministic stub).
    pub fn zero(grid: TimeGrid, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("path dimension must be positive"));
        }
        Ok(BrownianPath {
            grid,
            dim,
            values: vec![0.0; grid.n_points() * dim],
        })
    }

    /// Build from explicit values (must start at the origin).
    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() * dim {
            return Err(Error::dimension(format!(
                "expected {} values, got {}",
                grid.n_points() * dim,
                values.len()
            )));
        }
        if values[..dim].iter().any(|v| *v != 0.0) {
            return Err(Error::precondition("Brownian path must start at 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::precondition("Brownian path values must be finite"));
        }
        Ok(BrownianPath { grid, dim, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value at grid index `k` as a `dim`-slice.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Increment over step `k` (from point `k` to `k + 1`), component `j`.
    pub fn increment(&self, k: usize, j: usize) -> f64 {
        self.values[(k + 1) * self.dim + j] - self.values[k * self.dim + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Concatenation at grid time `r`:
    ///
    /// ```text
    /// out(s) = w_hat(s)                       for s < r,
    ///          w_hat(r) + w(s) − w(r)         for s ≥ r.
    /// ```
    ///
    /// `r` must lie on the shared grid; both paths must share the grid and
    /// dimension.
    pub fn concat(w_hat: &BrownianPath, w: &BrownianPath, r: f64) -> Result<BrownianPath> {
        if w_hat.grid != w.grid {
            return Err(Error::precondition("concatenation requires a shared grid"));
        }
        if w_hat.dim != w.dim {
            return Err(Error::dimension("concatenation requires equal path dimensions"));
        }
        let kr = w_hat
            .grid
            .index_of(r)
            .ok_or_else(|| Error::precondition(format!("concatenation time {r} is off-grid")))?;
        let dim = w_hat.dim;
        let mut values = w_hat.values.clone();
        for k in kr..w_hat.grid.n_points() {
            for j in 0..dim {
                // Increment first: at k = kr the difference is exactly
                // zero, so both one-sided limits at the splice agree
                // bitwise.
                let diff = w.values[k * dim + j] - w.values[kr * dim + j];
                values[k * dim + j] = w_hat.values[kr * dim + j] + diff;
            }
        }
        Ok(BrownianPath {
            grid: w_hat.grid,
            dim,
            values,
        })
    }

    /// Restriction to every `factor`-th grid point. The restriction of a
    /// Brownian path to a subgrid is again a Brownian path, which makes
    /// step-halving studies exact on shared noise.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        let grid = self.grid.coarsen(factor)?;
        let mut values = Vec::with_capacity(grid.n_points() * self.dim);
        for k in 0..grid.n_points() {
            values.extend_from_slice(self.value(k * factor));
        }
        Ok(BrownianPath {
            grid,
            dim: self.dim,
            values,
        })
    }

    /// Debug dump: three little-endian u64 (`n_points`, `dim`, `seed`)
    /// followed by the values as little-endian f64, row-major.
    pub fn write_binary<W: Write>(&self, seed: u64, out: &mut W) -> Result<()> {
        write_matrix_binary(out, self.grid.n_points() as u64, self.dim as u64, seed, &self.values)
    }
}

/// Shared binary layout for path and measure dumps.
pub fn write_matrix_binary<W: Write>(
    out: &mut W,
    rows: u64,
    cols: u64,
    seed: u64,
    data: &[f64],
) -> Result<()> {
    out.write_all(&rows.to_le_bytes())?;
    out.write_all(&cols.to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Inverse of [`write_matrix_binary`]; returns `(rows, cols, seed, data)`.
pub fn read_matrix_binary<R: Read>(input: &mut R) -> Result<(u64, u64, u64, Vec<f64>)> {
    let mut buf = [0u8; 8];
    let mut next_u64 = |input: &mut R| -> Result<u64> {
        input.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    };
    let rows = next_u64(input)?;
    let cols = next_u64(input)?;
    let seed = next_u64(input)?;
    let count = (rows * cols) as usize;
    let mut data = Vec::with_capacity(count);
    let mut fbuf = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut fbuf)?;
        data.push(f64::from_le_bytes(fbuf));
    }
    Ok((rows, cols, seed, data))
}

/// All noise paths that drive one world of the particle system: the common
/// path W⁰, one idiosyncratic path per particle, and (optionally) the
/// regularisation paths B̄⁰, B̄^i of the n-player approximation.
#[derive(Debug, Clone)]
pub struct NoiseBundle {
    pub common: BrownianPath,
    pub idiosyncratic: Vec<BrownianPath>,
    pub reg_common: Option<BrownianPath>,
    pub reg_idiosyncratic: Option<Vec<BrownianPath>>,
    pub seed: u64,
    pub world: u32,
}

impl NoiseBundle {
    /// Sample a bundle for `world`. Idiosyncratic paths use disjoint
    /// streams indexed by particle, so they are mutually independent and
    /// reproducible in any order.
    pub fn sample(
        grid: TimeGrid,
        dim: usize,
        n_particles: usize,
        seed: u64,
        world: u32,
        with_regularisation: bool,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::config("a noise bundle needs at least one particle"));
        }
        let common =
            BrownianPath::sample_stream(grid, dim, seed, StreamId::new(world, StreamKind::Common, 0))?;
        let mut idiosyncratic = Vec::with_capacity(n_particles);
        for i in 0..n_particles {
            idiosyncratic.push(BrownianPath::sample_stream(
                grid,
                dim,
                seed,
                StreamId::new(world, StreamKind::Idiosyncratic, i as u32),
            )?);
        }
        let (reg_common, reg_idiosyncratic) = if with_regularisation {
            let rc = BrownianPath::sample_stream(
                grid,
                dim,
                seed,
                StreamId::new(world, StreamKind::RegCommon, 0),
            )?;
            let mut ri = Vec::with_capacity(n_particles);
            for i in 0..n_particles {
                ri.push(BrownianPath::sample_stream(
                    grid,
                    dim,
                    seed,
                    StreamId::new(world, StreamKind::RegIdiosyncratic, i as u32),
                )?);
            }
            (Some(rc), Some(ri))
        } else {
            (None, None)
        };
        Ok(NoiseBundle {
            common,
            idiosyncratic,
            reg_common,
            reg_idiosyncratic,
            seed,
            world,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.common.grid()
    }

    pub fn n_particles(&self) -> usize {
        self.idiosyncratic.len()
    }

    /// Restriction of every path to a coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<NoiseBundle> {
        Ok(NoiseBundle {
            common: self.common.coarsen(factor)?,
            idiosyncratic: self
                .idiosyncratic
                .iter()
                .map(|p| p.coarsen(factor))
                .collect::<Result<_>>()?,
            reg_common: self.reg_common.as_ref().map(|p| p.coarsen(factor)).transpose()?,
            reg_idiosyncratic: self
                .reg_idiosyncratic
                .as_ref()
                .map(|ps| ps.iter().map(|p| p.coarsen(factor)).collect::<Result<_>>())
                .transpose()?,
            seed: self.seed,
            world: self.world,
        })
    }
}
