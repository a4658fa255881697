//! Experiment configuration: a human-editable TOML file with nested
//! tables (a JSON mirror of the same structure is accepted for
//! programmatic use), plus the canonical hash that ties artifacts to the
//! configuration that produced them.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn default_t_end() -> f64 {
    1.0
}
fn default_steps() -> usize {
    64
}
fn default_particles() -> usize {
    2048
}
fn default_worlds() -> usize {
    32
}
fn default_atoms() -> usize {
    3
}
fn default_x_bins() -> usize {
    17
}
fn default_mean_bins() -> usize {
    9
}
fn default_blocks() -> usize {
    4
}
fn default_passes() -> usize {
    2
}
fn default_players() -> usize {
    8
}
fn default_scale() -> u32 {
    8
}
fn default_nodes() -> usize {
    512
}
fn default_reg_samples() -> usize {
    4
}
fn default_np_worlds() -> usize {
    8
}
fn default_h_n_draws() -> usize {
    16
}
fn default_fd_step() -> f64 {
    0.1
}
fn default_eps() -> f64 {
    0.1
}
fn default_inner_bins() -> usize {
    5
}
fn default_inner_worlds() -> usize {
    8
}
fn default_residual_tol() -> f64 {
    0.02
}
fn default_l_bound() -> f64 {
    1.0
}
fn default_compact_samples() -> usize {
    32
}
fn default_compact_worlds() -> usize {
    8
}
fn default_compact_particles() -> usize {
    64
}
fn default_p() -> f64 {
    2.0
}
fn default_radii() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_eps_levels() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}
fn default_w_atoms() -> usize {
    64
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_one() -> f64 {
    1.0
}
fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Anchor time of the common-noise-anchored zoo model.
    #[serde(default = "default_half")]
    pub anchor_t1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_worlds")]
    pub worlds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub kind: InitKind,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "default_one")]
    pub std: f64,
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "default_one")]
    pub hi: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kind: InitKind::Gaussian,
            mean: 0.0,
            std: 1.0,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Gaussian,
    Uniform,
    TwoPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    #[serde(default)]
    pub class: ClassKind,
    #[serde(default = "default_x_bins")]
    pub x_bins: usize,
    #[serde(default = "default_mean_bins")]
    pub mean_bins: usize,
    #[serde(default = "default_blocks")]
    pub time_blocks: usize,
    #[serde(default = "default_passes")]
    pub passes: usize,
    #[serde(default)]
    pub max_evals: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            atoms: default_atoms(),
            class: ClassKind::Constant,
            x_bins: default_x_bins(),
            mean_bins: default_mean_bins(),
            time_blocks: default_blocks(),
            passes: default_passes(),
            max_evals: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    #[default]
    Constant,
    Table,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    #[serde(default = "default_players")]
    pub players: usize,
    #[serde(default = "default_scale")]
    pub scale: u32,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_eps")]
    pub eps0: f64,
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_reg_samples")]
    pub reg_samples: usize,
    #[serde(default = "default_np_worlds")]
    pub np_worlds: usize,
    #[serde(default = "default_h_n_draws")]
    pub h_n_draws: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            players: default_players(),
            scale: default_scale(),
            nodes: default_nodes(),
            eps: default_eps(),
            eps0: default_eps(),
            eps1: default_eps(),
            reg_samples: default_reg_samples(),
            np_worlds: default_np_worlds(),
            h_n_draws: default_h_n_draws(),
            fd_step: default_fd_step(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppSection {
    /// Deterministic stopping time (must lie on the grid)...
    #[serde(default = "default_half")]
    pub theta: f64,
    /// ...or, when positive, a first-hitting level of |W⁰|.
    #[serde(default)]
    pub theta_hit_level: f64,
    #[serde(default = "default_inner_bins")]
    pub inner_mean_bins: usize,
    #[serde(default = "default_inner_worlds")]
    pub inner_worlds: usize,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
}

impl Default for DppSection {
    fn default() -> Self {
        DppSection {
            theta: 0.5,
            theta_hit_level: 0.0,
            inner_mean_bins: default_inner_bins(),
            inner_worlds: default_inner_worlds(),
            residual_tol: default_residual_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactSection {
    #[serde(default = "default_l_bound")]
    pub l_bound: f64,
    #[serde(default = "default_compact_samples")]
    pub samples: usize,
    #[serde(default = "default_compact_worlds")]
    pub worlds: usize,
    #[serde(default = "default_compact_particles")]
    pub particles: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_radii")]
    pub tail_radii: Vec<f64>,
    #[serde(default = "default_eps_levels")]
    pub eps_levels: Vec<f64>,
}

impl Default for CompactSection {
    fn default() -> Self {
        CompactSection {
            l_bound: default_l_bound(),
            samples: default_compact_samples(),
            worlds: default_compact_worlds(),
            particles: default_compact_particles(),
            p: default_p(),
            tail_radii: default_radii(),
            eps_levels: default_eps_levels(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WassersteinSection {
    #[serde(default = "default_w_atoms")]
    pub atoms: usize,
    /// 0 → the default regularisation.
    #[serde(default)]
    pub entropic_reg: f64,
}

impl Default for WassersteinSection {
    fn default() -> Self {
        WassersteinSection {
            atoms: default_w_atoms(),
            entropic_reg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
        }
    }
}

/// The whole experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub mc: McSection,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub approx: ApproxConfig,
    #[serde(default)]
    pub dpp: DppSection,
    #[serde(default)]
    pub compact: CompactSection,
    #[serde(default)]
    pub wasserstein: WassersteinSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parse TOML (default) or JSON (by extension or on fallback).
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().map(|e| e == "json").unwrap_or(false);
        let cfg: ExperimentConfig = if is_json {
            serde_json::from_str(&text).context("parsing JSON config")?
        } else {
            match toml::from_str(&text) {
                Ok(c) => c,
                Err(toml_err) => serde_json::from_str(&text)
                    .map_err(|_| toml_err)
                    .context("parsing TOML config")?,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.grid.t0 >= self.grid.t_end {
            bail!("grid: t0 must be strictly below t_end");
        }
        if self.grid.n_steps == 0 {
            bail!("grid: n_steps must be positive");
        }
        for (name, v) in [
            ("mc.particles", self.mc.particles),
            ("mc.worlds", self.mc.worlds),
            ("control.atoms", self.control.atoms),
            ("approx.players", self.approx.players),
        ] {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        for (name, v) in [
            ("approx.eps", self.approx.eps),
            ("approx.eps0", self.approx.eps0),
            ("approx.eps1", self.approx.eps1),
        ] {
            if v < 0.0 {
                bail!("{name} must be ≥ 0");
            }
        }
        Ok(())
    }

    /// Canonical hash over the configuration (serde_json maps are
    /// ordered, so the serialisation is deterministic). The output
    /// section is excluded: where artifacts land does not change what
    /// they contain.
    pub fn hash(&self) -> String {
        let mut canon_cfg = self.clone();
        canon_cfg.output = OutputSection::default();
        let value = serde_json::to_value(&canon_cfg).expect("config serialises");
        let canon = serde_json::to_string(&value).expect("canonical JSON");
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
