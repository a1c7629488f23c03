//! Run configuration, read from TOML. Every key is optional except where
//! noted in the README.

use crate::error::{Error, Result};
use crate::fourier_core::ParamGrid;
use crate::kam_reducibility::KamSchedule;
use crate::nls_model::BuiltinPlugin;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Points per axis on [1/2, 3/2].
    pub points: usize,
    /// Explicit frequency vectors; overrides `points` when non-empty.
    pub omegas: Vec<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 33, omegas: vec![] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KamSpec {
    pub n0: usize,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub abs_floor: f64,
    pub screen: bool,
}

impl Default for KamSpec {
    fn default() -> Self {
        KamSpec { n0: 8, max_iters: 10, stop_tol: 1e-13, abs_floor: 1e-10, screen: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PluginSpec {
    pub kind: String,
    /// Replaces the default built-in terms; h, p and kappa are all required.
    pub builtin: Option<BuiltinPlugin>,
}

impl Default for PluginSpec {
    fn default() -> Self {
        PluginSpec { kind: "builtin".into(), builtin: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub d: usize,
    pub m: f64,
    pub eps: f64,
    /// γ = ε^a.
    pub gamma_exp: f64,
    /// Defaults to d + 2.
    pub tau: Option<f64>,
    pub tau0: Option<f64>,
    pub gamma0: f64,
    pub grid: GridSpec,
    pub n0: usize,
    pub n_cap: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Defaults to (d + 2)/2.
    pub s0: Option<f64>,
    pub kam: KamSpec,
    pub plugin: PluginSpec,
    pub divisor_floor: f64,
    /// Upper bound on γ‖h‖_{s₀}/‖g‖_{s₀+2τ+5} before an ω is dropped.
    pub tame_cap: f64,
    /// Reuse the previous iterate's Φ_∞ in the next reduction.
    pub warm_start: bool,
    /// Upper bound on ε/γ.
    pub smallness: f64,
    pub stability_periods: f64,
    pub stability_samples: usize,
    pub collocation_points: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            d: 1,
            m: 1.0,
            eps: 1e-3,
            gamma_exp: 0.5,
            tau: None,
            tau0: None,
            gamma0: 0.1,
            grid: GridSpec::default(),
            n0: 8,
            n_cap: 12,
            max_iters: 6,
            tol: 1e-13,
            s0: None,
            kam: KamSpec::default(),
            plugin: PluginSpec::default(),
            divisor_floor: 1e-10,
            tame_cap: 1e3,
            warm_start: false,
            smallness: 0.5,
            stability_periods: 100.0,
            stability_samples: 200,
            collocation_points: 64,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SolverConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.d) {
            return bad(format!("d must be 1, 2 or 3, got {}", self.d));
        }
        if !(self.m > 0.0) {
            return bad(format!("m must be positive, got {}", self.m));
        }
        if !(self.eps >= 0.0 && self.eps < 1.0) {
            return bad(format!("ε must lie in [0, 1), got {}", self.eps));
        }
        if !(self.gamma_exp > 0.0 && self.gamma_exp < 1.0) {
            return bad(format!("gamma_exp must lie in (0, 1), got {}", self.gamma_exp));
        }
        if self.n0 < 2 || self.n_cap < self.n0 {
            return bad(format!("need 2 ≤ n0 ≤ n_cap, got n0 = {}, n_cap = {}", self.n0, self.n_cap));
        }
        let positive = [
            ("tol", self.tol),
            ("divisor_floor", self.divisor_floor),
            ("tame_cap", self.tame_cap),
            ("gamma0", self.gamma0),
            ("smallness", self.smallness),
            ("kam.stop_tol", self.kam.stop_tol),
            ("kam.abs_floor", self.kam.abs_floor),
            ("stability_periods", self.stability_periods),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        if self.plugin.kind != "builtin" {
            return bad(format!("unknown plugin kind {:?}", self.plugin.kind));
        }
        if self.grid.points == 0 && self.grid.omegas.is_empty() {
            return bad("grid needs at least one point".into());
        }
        if self.grid.omegas.iter().any(|w| w.len() != self.d) {
            return bad("every grid.omegas entry needs d components".into());
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.eps.powf(self.gamma_exp)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.d as f64 + 2.0)
    }

    pub fn tau0(&self) -> f64 {
        self.tau0.unwrap_or(self.d as f64 + 1.0)
    }

    pub fn s0(&self) -> f64 {
        self.s0.unwrap_or((self.d as f64 + 2.0) / 2.0)
    }

    pub fn grid(&self) -> ParamGrid {
        let mut g = if self.grid.omegas.is_empty() {
            ParamGrid::uniform(self.d, self.grid.points)
        } else {
            ParamGrid { d: self.d, points: self.grid.omegas.clone(), spacing: 0.0, diophantine: (0.0, 0.0, 0) }
        };
        g.diophantine = (self.gamma0, self.tau0(), 32);
        g
    }

    pub fn plugin(&self) -> BuiltinPlugin {
        self.plugin.builtin.clone().unwrap_or_else(|| BuiltinPlugin::default_for(self.d))
    }

    pub fn kam_schedule(&self, e_abs: f64) -> KamSchedule {
        let mut k = KamSchedule::new(self.d, self.kam.n0, self.eps, self.gamma(), e_abs);
        k.tau = self.tau();
        k.alpha_exp = 7.0 * k.tau + 3.0;
        k.beta_exp = 7.0 * k.tau + 5.0;
        k.s0 = self.s0();
        k.max_iters = self.kam.max_iters;
        k.stop_tol = self.kam.stop_tol;
        k.abs_floor = self.kam.abs_floor;
        k.screen = self.kam.screen;
        k
    }
}
