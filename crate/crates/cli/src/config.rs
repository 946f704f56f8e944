//! Run configuration: TOML file sections plus command-line overrides.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use walkcollide::harness::experiments::{
    ChaosConfig, ChaosTarget, CollisionsConfig, ConvergenceConfig, DualityConfig, ExpMomentConfig,
    Generator, KernelsConfig, PartitionConfig, ProductSumConfig, TightnessConfig, UStatConfig,
};

/// Raised for anything the user can fix in the config or flags.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalksSection {
    pub k: Option<usize>,
    pub horizon: Option<usize>,
    pub ladder: Option<Vec<usize>>,
    pub m_ladder: Option<Vec<f64>>,
    pub kmax: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub beta: Option<f64>,
    pub generator: Option<Generator>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosSection {
    pub gamma: Option<f64>,
    pub time_cells: Option<usize>,
    pub space_step: Option<f64>,
    pub half_width: Option<f64>,
    pub max_order: Option<usize>,
    pub replicates: Option<usize>,
    /// Adds the chaos-side target to the duality experiment.
    pub target: Option<bool>,
    pub rel_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub replicates: Option<usize>,
    pub env_replicates: Option<usize>,
    pub gap_factor: Option<f64>,
    pub threshold: Option<f64>,
    pub max_order: Option<usize>,
    pub norm_samples: Option<usize>,
    pub norm_rel_tol: Option<f64>,
    pub clt_ladder: Option<Vec<usize>>,
    pub clt_samples: Option<usize>,
    pub ustat_horizon: Option<usize>,
    pub ustat_nodes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub walks: WalksSection,
    pub environment: EnvironmentSection,
    pub chaos: ChaosSection,
    pub harness: HarnessSection,
}

fn invalid(msg: String) -> anyhow::Error {
    ConfigError(msg).into()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(|e| invalid(format!("{e:#}")))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks counts, ladders and ranges, naming the offending field.
    pub fn validate(&self) -> anyhow::Result<()> {
        let positive = [
            ("walks.k", self.walks.k),
            ("walks.horizon", self.walks.horizon),
            ("walks.kmax", self.walks.kmax),
            ("chaos.time_cells", self.chaos.time_cells),
            ("chaos.replicates", self.chaos.replicates),
            ("harness.replicates", self.harness.replicates),
            ("harness.norm_samples", self.harness.norm_samples),
            ("harness.clt_samples", self.harness.clt_samples),
            ("harness.ustat_horizon", self.harness.ustat_horizon),
            ("harness.ustat_nodes", self.harness.ustat_nodes),
        ];
        for (name, v) in positive {
            if v == Some(0) {
                bail!(invalid(format!("{name} must be positive")));
            }
        }
        if matches!(self.walks.k, Some(k) if k < 2) {
            bail!(invalid("walks.k must be at least 2".into()));
        }
        if matches!(self.harness.replicates, Some(1)) || matches!(self.chaos.replicates, Some(1)) {
            bail!(invalid("replicate counts must be at least 2".into()));
        }
        for (name, ladder) in [("walks.ladder", &self.walks.ladder), ("harness.clt_ladder", &self.harness.clt_ladder)] {
            if let Some(l) = ladder {
                if l.is_empty() || l[0] == 0 || l.windows(2).any(|w| w[0] >= w[1]) {
                    bail!(invalid(format!("{name} must be nonempty, positive and strictly increasing")));
                }
            }
        }
        if let Some(m) = &self.walks.m_ladder {
            if m.is_empty() || m.windows(2).any(|w| !(w[0] < w[1])) {
                bail!(invalid("walks.m_ladder must be nonempty and strictly increasing".into()));
            }
        }
        for (name, v) in [
            ("environment.alpha", self.environment.alpha),
            ("environment.beta", self.environment.beta),
            ("chaos.gamma", self.chaos.gamma),
        ] {
            if matches!(v, Some(x) if !(x >= 0.0 && x.is_finite())) {
                bail!(invalid(format!("{name} must be finite and nonnegative")));
            }
        }
        for (name, v) in [
            ("environment.sigma", self.environment.sigma),
            ("chaos.space_step", self.chaos.space_step),
            ("chaos.half_width", self.chaos.half_width),
            ("harness.gap_factor", self.harness.gap_factor),
            ("harness.threshold", self.harness.threshold),
            ("harness.norm_rel_tol", self.harness.norm_rel_tol),
        ] {
            if matches!(v, Some(x) if !(x > 0.0 && x.is_finite())) {
                bail!(invalid(format!("{name} must be finite and positive")));
            }
        }
        Ok(())
    }

    pub fn collisions(&self) -> CollisionsConfig {
        let d = CollisionsConfig::default();
        CollisionsConfig {
            k: self.walks.k.unwrap_or(d.k),
            horizon: self.walks.horizon.unwrap_or(d.horizon),
            replicates: self.harness.replicates.unwrap_or(d.replicates),
        }
    }

    pub fn kmax(&self) -> usize {
        self.walks.kmax.unwrap_or(10)
    }

    pub fn partition(&self) -> PartitionConfig {
        let d = PartitionConfig::default();
        PartitionConfig {
            ladder: self.walks.ladder.clone().unwrap_or(d.ladder),
            k: self.walks.k.unwrap_or(d.k),
            alpha: self.environment.alpha.unwrap_or(d.alpha),
            sigma: self.environment.sigma.unwrap_or(d.sigma),
            replicates: self.harness.replicates.unwrap_or(d.replicates),
        }
    }

    pub fn chaos(&self) -> ChaosConfig {
        let d = ChaosConfig::default();
        ChaosConfig {
            gamma: self.chaos.gamma.unwrap_or(d.gamma),
            time_cells: self.chaos.time_cells.unwrap_or(d.time_cells),
            space_step: self.chaos.space_step.unwrap_or(d.space_step),
            half_width: self.chaos.half_width.unwrap_or(d.half_width),
            max_order: self.chaos.max_order.unwrap_or(d.max_order),
            replicates: self.chaos.replicates.unwrap_or(d.replicates),
        }
    }

    pub fn duality(&self) -> DualityConfig {
        let d = DualityConfig::default();
        let chaos = self.chaos.target.unwrap_or(false).then(|| {
            let t = ChaosTarget::default();
            ChaosTarget {
                time_cells: self.chaos.time_cells.unwrap_or(t.time_cells),
                space_step: self.chaos.space_step.unwrap_or(t.space_step),
                half_width: self.chaos.half_width.unwrap_or(t.half_width),
                max_order: self.chaos.max_order.unwrap_or(t.max_order),
                replicates: self.chaos.replicates.unwrap_or(t.replicates),
                rel_tol: self.chaos.rel_tol.unwrap_or(t.rel_tol),
            }
        });
        DualityConfig {
            ladder: self.walks.ladder.clone().unwrap_or(d.ladder),
            k: self.walks.k.unwrap_or(d.k),
            alpha: self.environment.alpha.unwrap_or(d.alpha),
            sigma: self.environment.sigma.unwrap_or(d.sigma),
            walk_replicates: self.harness.replicates.unwrap_or(d.walk_replicates),
            env_replicates: self.harness.env_replicates.unwrap_or(d.env_replicates),
            gap_factor: self.harness.gap_factor.unwrap_or(d.gap_factor),
            chaos,
        }
    }

    pub fn product_sum(&self) -> ProductSumConfig {
        let d = ProductSumConfig::default();
        ProductSumConfig {
            generator: self.environment.generator.unwrap_or(d.generator),
            ladder: self.walks.ladder.clone().unwrap_or(d.ladder),
            replicates: self.harness.replicates.unwrap_or(d.replicates),
            k: self.walks.k.unwrap_or(d.k),
            alpha: self.environment.alpha.unwrap_or(d.alpha),
            sigma: self.environment.sigma.unwrap_or(d.sigma),
            slack: d.slack,
        }
    }

    pub fn expmoment(&self) -> ExpMomentConfig {
        let d = ExpMomentConfig::default();
        ExpMomentConfig {
            beta: self.environment.beta.unwrap_or(d.beta),
            ladder: self.walks.ladder.clone().unwrap_or(d.ladder),
            replicates: self.harness.replicates.unwrap_or(d.replicates),
        }
    }

    pub fn tightness(&self) -> TightnessConfig {
        let d = TightnessConfig::default();
        TightnessConfig {
            k: self.walks.k.unwrap_or(d.k),
            ladder: self.walks.ladder.clone().unwrap_or(d.ladder),
            m_ladder: self.walks.m_ladder.clone().unwrap_or(d.m_ladder),
            replicates: self.harness.replicates.unwrap_or(d.replicates),
            threshold: self.harness.threshold.unwrap_or(d.threshold),
        }
    }

    pub fn convergence(&self) -> ConvergenceConfig {
        let d = ConvergenceConfig::default();
        ConvergenceConfig {
            k: self.walks.k.unwrap_or(d.k),
            alpha: self.environment.alpha.unwrap_or(d.alpha),
            sigma: self.environment.sigma.unwrap_or(d.sigma),
            ladder: self.walks.ladder.clone().unwrap_or(d.ladder),
            replicates: self.harness.replicates.unwrap_or(d.replicates),
        }
    }

    pub fn kernels(&self) -> KernelsConfig {
        let d = KernelsConfig::default();
        KernelsConfig {
            max_order: self.harness.max_order.unwrap_or(d.max_order),
            norm_samples: self.harness.norm_samples.unwrap_or(d.norm_samples),
            norm_rel_tol: self.harness.norm_rel_tol.unwrap_or(d.norm_rel_tol),
            clt_ladder: self.harness.clt_ladder.clone().unwrap_or(d.clt_ladder),
            clt_samples: self.harness.clt_samples.unwrap_or(d.clt_samples),
        }
    }

    pub fn ustat(&self) -> UStatConfig {
        let d = UStatConfig::default();
        UStatConfig {
            horizon: self.harness.ustat_horizon.unwrap_or(d.horizon),
            replicates: self.harness.replicates.unwrap_or(d.replicates),
            amplitude: self.environment.beta.unwrap_or(d.amplitude),
            nodes: self.harness.ustat_nodes.unwrap_or(d.nodes),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.duality(), DualityConfig::default());
        assert_eq!(cfg.expmoment(), ExpMomentConfig::default());
    }

    #[test]
    fn sections_feed_experiments() {
        let cfg = RunConfig::from_toml(
            "seed = 5\n[walks]\nk = 3\nladder = [8, 16]\n[environment]\nalpha = 0.0\n[harness]\nreplicates = 40\n",
        )
        .unwrap();
        let d = cfg.duality();
        assert_eq!((d.k, d.ladder.clone(), d.alpha, d.walk_replicates), (3, vec![8, 16], 0.0, 40));
        assert_eq!(cfg.seed, Some(5));
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::from_toml("[walks]\nladder = [16, 8]\n").unwrap_err();
        assert!(err.to_string().contains("walks.ladder"));
        let err = RunConfig::from_toml("[walks]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = RunConfig::from_toml("[harness]\nreplicates = 0\n").unwrap_err();
        assert!(err.to_string().contains("harness.replicates"));
    }
}
