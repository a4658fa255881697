//! Control representations: finite control grids, feedback policies on
//! state/measure features, open-loop path-functional controls, stopping
//! rules and shifted controls.
//!
//! The admissible-control space of the continuous problem contains all
//! adapted processes. The searchable classes here are (i) constant
//! controls and (ii) lookup tables over `(time block, x-bin, mean-bin)`
//! cells. Every value estimate carries the descriptor of the class it was
//! optimised over; the gap to the full class is reported by the
//! verification layer, never hidden.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::MeasureView;
use crate::model::ControlSet;
use crate::noise::BrownianPath;

/// A finite subset of the control set A.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    atoms: Vec<f64>,
    dim: usize,
}

impl ControlGrid {
    pub fn new(atoms: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || atoms.is_empty() || atoms.len() % dim != 0 {
            return Err(Error::config("control grid needs a nonempty multiple of dim"));
        }
        Ok(ControlGrid { atoms, dim })
    }

    /// Uniform discretisation of a control set: `points_per_dim` per axis
    /// for boxes, the atoms themselves for finite sets.
    pub fn discretize(set: &ControlSet, points_per_dim: usize) -> Result<Self> {
        match set {
            ControlSet::Finite { atoms, dim } => {
                let flat: Vec<f64> = atoms.iter().flatten().copied().collect();
                ControlGrid::new(flat, *dim)
            }
            ControlSet::Box { lo, hi } => {
                if points_per_dim == 0 {
                    return Err(Error::config("need at least one grid point per dimension"));
                }
                let dim = lo.len();
                let mut atoms: Vec<Vec<f64>> = vec![vec![]];
                for j in 0..dim {
                    let mut next = Vec::new();
                    for prefix in &atoms {
                        for k in 0..points_per_dim {
                            let frac = if points_per_dim == 1 {
                                0.5
                            } else {
                                k as f64 / (points_per_dim - 1) as f64
                            };
                            let mut p = prefix.clone();
                            p.push(lo[j] + (hi[j] - lo[j]) * frac);
                            next.push(p);
                        }
                    }
                    atoms = next;
                }
                ControlGrid::new(atoms.into_iter().flatten().collect(), dim)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    /// Check containment of every atom in the ambient control set.
    pub fn validate_against(&self, set: &ControlSet) -> Result<()> {
        for i in 0..self.len() {
            if !set.contains(self.atom(i), 1e-9) {
                return Err(Error::config(format!(
                    "control grid atom {:?} lies outside the control set",
                    self.atom(i)
                )));
            }
        }
        Ok(())
    }

    /// Largest nearest-neighbour spacing along the 1-d axis; used by
    /// Hamiltonian refinement diagnostics.
    pub fn mesh_1d(&self) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::precondition("mesh_1d needs a one-dimensional grid"));
        }
        let mut xs = self.atoms.clone();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(xs.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max))
    }
}

/// Binning of the `(x, mean)` feature plane for table policies (d = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureBins {
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_bins: usize,
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub mean_bins: usize,
}

impl FeatureBins {
    /// The default desk-scale binning: 17 x-bins over [−3, 3], 9
    /// mean-bins over [−1.5, 1.5].
    pub fn default_1d() -> Self {
        FeatureBins {
            x_lo: -3.0,
            x_hi: 3.0,
            x_bins: 17,
            mean_lo: -1.5,
            mean_hi: 1.5,
            mean_bins: 9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_bins == 0 || self.mean_bins == 0 {
            return Err(Error::config("feature bins must be positive"));
        }
        if !(self.x_lo < self.x_hi) || !(self.mean_lo < self.mean_hi) {
            return Err(Error::config("feature bin ranges must be nonempty"));
        }
        Ok(())
    }

    fn bin(&self, v: f64, lo: f64, hi: f64, n: usize) -> usize {
        if n == 1 {
            return 0;
        }
        let t = ((v - lo) / (hi - lo) * n as f64).floor();
        (t.max(0.0) as usize).min(n - 1)
    }

    pub fn x_bin(&self, x: f64) -> usize {
        self.bin(x, self.x_lo, self.x_hi, self.x_bins)
    }

    pub fn mean_bin(&self, m: f64) -> usize {
        self.bin(m, self.mean_lo, self.mean_hi, self.mean_bins)
    }

    pub fn n_cells(&self) -> usize {
        self.x_bins * self.mean_bins
    }

    pub fn cell(&self, x: f64, mean: f64) -> usize {
        self.x_bin(x) * self.mean_bins + self.mean_bin(mean)
    }
}

/// The decision data of a feedback policy.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyRule {
    /// One atom applied everywhere.
    Constant { atom: usize },
    /// `choice[block · cells + cell]` — atom per (time block, feature
    /// cell).
    Table {
        bins: FeatureBins,
        n_blocks: usize,
        choice: Vec<usize>,
    },
}

/// A feedback policy: `(step, x, μ-features) → atom of the control grid`.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    grid: Arc<ControlGrid>,
    rule: PolicyRule,
    n_steps: usize,
}

impl FeedbackPolicy {
    pub fn constant(grid: Arc<ControlGrid>, atom: usize, n_steps: usize) -> Result<Self> {
        if atom >= grid.len() {
            return Err(Error::precondition("constant policy atom out of range"));
        }
        Ok(FeedbackPolicy {
            grid,
            rule: PolicyRule::Constant { atom },
            n_steps,
        })
    }

    pub fn table(
        grid: Arc<ControlGrid>,
        bins: FeatureBins,
        n_blocks: usize,
        n_steps: usize,
        choice: Vec<usize>,
    ) -> Result<Self> {
        bins.validate()?;
        if n_blocks == 0 || n_blocks > n_steps {
            return Err(Error::config("block count must lie in 1..=n_steps"));
        }
        if choice.len() != n_blocks * bins.n_cells() {
            return Err(Error::config(format!(
                "table needs {} entries, got {}",
                n_blocks * bins.n_cells(),
                choice.len()
            )));
        }
        if choice.iter().any(|&c| c >= grid.len()) {
            return Err(Error::precondition("table entry out of grid range"));
        }
        Ok(FeedbackPolicy {
            grid,
            rule: PolicyRule::Table {
                bins,
                n_blocks,
                choice,
            },
            n_steps,
        })
    }

    pub fn grid(&self) -> &Arc<ControlGrid> {
        &self.grid
    }

    pub fn rule(&self) -> &PolicyRule {
        &self.rule
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Time block of a step (equal blocks covering the horizon).
    pub fn block_of(&self, step: usize) -> usize {
        match &self.rule {
            PolicyRule::Constant { .. } => 0,
            PolicyRule::Table { n_blocks, .. } => {
                (step * n_blocks / self.n_steps).min(n_blocks - 1)
            }
        }
    }

    /// First step of a block.
    pub fn block_start(&self, block: usize) -> usize {
        match &self.rule {
            PolicyRule::Constant { .. } => 0,
            PolicyRule::Table { n_blocks, .. } => block * self.n_steps / n_blocks,
        }
    }

    pub fn n_blocks(&self) -> usize {
        match &self.rule {
            PolicyRule::Constant { .. } => 1,
            PolicyRule::Table { n_blocks, .. } => *n_blocks,
        }
    }

    /// The action for particle state `x` under population view `mu` at a
    /// grid step. Output is always an atom of the grid.
    pub fn act(&self, step: usize, x: &[f64], mu: &MeasureView) -> &[f64] {
        match &self.rule {
            PolicyRule::Constant { atom } => self.grid.atom(*atom),
            PolicyRule::Table { bins, choice, .. } => {
                let cell = bins.cell(x[0], mu.mean[0]);
                let block = self.block_of(step);
                let idx = choice[block * bins.n_cells() + cell];
                self.grid.atom(idx)
            }
        }
    }

    /// Human-readable description of the search class this policy lives
    /// in (attached to every value estimate).
    pub fn class_descriptor(&self) -> String {
        match &self.rule {
            PolicyRule::Constant { .. } => format!("constant(|A|={})", self.grid.len()),
            PolicyRule::Table { bins, n_blocks, .. } => format!(
                "table(|A|={}, blocks={}, xbins={}, meanbins={})",
                self.grid.len(),
                n_blocks,
                bins.x_bins,
                bins.mean_bins
            ),
        }
    }
}

/// An open-loop control: a path functional of the common noise,
/// evaluated at a grid step.
#[derive(Clone)]
pub struct OpenLoopControl {
    eval: Arc<dyn Fn(usize, &BrownianPath) -> Vec<f64> + Send + Sync>,
}

impl OpenLoopControl {
    pub fn new(eval: impl Fn(usize, &BrownianPath) -> Vec<f64> + Send + Sync + 'static) -> Self {
        OpenLoopControl {
            eval: Arc::new(eval),
        }
    }

    pub fn action(&self, step: usize, w0: &BrownianPath) -> Vec<f64> {
        (self.eval)(step, w0)
    }
}

/// Stopping rules measurable in the common filtration, grid-valued.
#[derive(Debug, Clone, Copy)]
pub enum StoppingRule {
    /// A deterministic grid time.
    Deterministic(f64),
    /// First grid time with |W⁰| ≥ level (Euclidean norm); T if never.
    FirstHitAbsCommon { level: f64 },
}

impl StoppingRule {
    /// Grid index of the stopping time along a given common path.
    pub fn evaluate(&self, w0: &BrownianPath) -> Result<usize> {
        match *self {
            StoppingRule::Deterministic(t) => w0
                .grid()
                .index_of(t)
                .ok_or_else(|| Error::precondition(format!("stopping time {t} off grid"))),
            StoppingRule::FirstHitAbsCommon { level } => {
                for k in 0..w0.grid().n_points() {
                    let norm: f64 = w0.value(k).iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm >= level {
                        return Ok(k);
                    }
                }
                Ok(w0.grid().n_steps())
            }
        }
    }
}

/// A control in either representation.
#[derive(Clone)]
pub enum Control {
    Feedback(FeedbackPolicy),
    OpenLoop(OpenLoopControl),
}

/// The shifted control along a frozen prefix path: open-loop controls
/// are re-evaluated on the concatenation of the prefix with the future
/// path at the stopping time, feedback policies are invariant (state and
/// measure already carry the prefix).
pub fn shift_control(
    control: &Control,
    theta: &StoppingRule,
    w_hat: &BrownianPath,
) -> Result<Control> {
    match control {
        Control::Feedback(p) => Ok(Control::Feedback(p.clone())),
        Control::OpenLoop(open) => {
            let k_r = theta.evaluate(w_hat)?;
            let r = w_hat.grid().point(k_r);
            let prefix = w_hat.clone();
            let base = open.clone();
            Ok(Control::OpenLoop(OpenLoopControl::new(
                move |step: usize, w: &BrownianPath| {
                    let glued = BrownianPath::concat(&prefix, w, r)
                        .expect("shifted control evaluated on an incompatible grid");
                    base.action(step, &glued)
                },
            )))
        }
    }
}
