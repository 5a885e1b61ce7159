//! TOML configuration and built-in presets.
//!
//! A preset supplies a base table and a `--config` file overrides it key
//! by key. Every key is optional until a command needs it.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;
use toml::Table;

use msprobit::metrics::SplitSpec;
use msprobit::model::{ChainConfig, Prior, PriorPrecision};
use msprobit::sampler::DEFAULT_TARGET_RATE;
use msprobit::simulate::{ExperimentSpec, SimSpec};

use crate::error::{CliError, CliResult};

/// Threshold proposal sd used for scales without a configured value.
pub const DEFAULT_PROPOSAL_SD: f64 = 0.5;

const EXPERIMENT1: &str = r#"
[simulate]
n = 400
p = 48
thresholds = [1, 3, 3]
min_per_class = 1

[chain]
prior_precision = 1.0
proposal_variance = [1.0, 0.3, 0.3]
burn_in = 50000
thinning = 100
stored_draws = 500

[experiment]
replications = 500
"#;

const EXPERIMENT2: &str = r#"
[simulate]
n = 40
p = 48
thresholds = [1, 3, 3]
min_per_class = 1

[chain]
prior_precision = 0.1
proposal_variance = [5.0, 1.9, 1.9]
burn_in = 50000
thinning = 100
stored_draws = 500

[experiment]
replications = 500
"#;

const EXPERIMENT1_DESK: &str = r#"
[simulate]
n = 120
p = 8
thresholds = [1, 3, 3]
min_per_class = 1

[chain]
prior_precision = 1.0
proposal_variance = [1.0, 0.3, 0.3]
burn_in = 2000
thinning = 5
stored_draws = 400

[experiment]
replications = 20
"#;

const EXPERIMENT2_DESK: &str = r#"
[simulate]
n = 40
p = 48
thresholds = [1, 3, 3]
min_per_class = 1

[chain]
prior_precision = 0.1
proposal_variance = [5.0, 1.9, 1.9]
burn_in = 5000
thinning = 10
stored_draws = 500

[experiment]
replications = 20
"#;

pub const PRESETS: [(&str, &str); 4] = [
    ("experiment1", EXPERIMENT1),
    ("experiment2", EXPERIMENT2),
    ("experiment1-desk", EXPERIMENT1_DESK),
    ("experiment2-desk", EXPERIMENT2_DESK),
];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub simulate: Option<SimulateSection>,
    pub chain: Option<ChainSection>,
    pub experiment: Option<ExperimentSection>,
    pub evaluate: Option<EvaluateSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Observations per scale.
    pub n: Option<usize>,
    pub p: Option<usize>,
    /// Thresholds per scale (classes minus one).
    pub thresholds: Option<Vec<usize>>,
    pub min_per_class: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    /// λ in the prior precision λ·I.
    pub prior_precision: Option<f64>,
    /// Common prior mean of every coefficient.
    pub prior_mean: Option<f64>,
    pub proposal_sd: Option<Vec<f64>>,
    /// Alternative to `proposal_sd`, given as variances.
    pub proposal_variance: Option<Vec<f64>>,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub stored_draws: Option<usize>,
    /// Normal prior variance on each threshold; flat when absent.
    pub gamma_prior_variance: Option<f64>,
    /// Tune the proposal sds before fitting.
    pub tune: Option<bool>,
    pub target_acceptance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub fraction: Option<f64>,
    pub num_splits: Option<usize>,
    pub standardize: Option<bool>,
}

fn preset_table(name: &str) -> CliResult<Table> {
    let text = PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::Validation(format!("unknown preset {name:?}; known presets: {}", known.join(", ")))
    })?;
    Ok(text.parse().expect("built-in presets are valid TOML"))
}

/// Recursively overlays `over` onto `base`. Setting one of the two proposal
/// keys drops the other from the base.
fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                let twin = match key.as_str() {
                    "proposal_sd" => Some("proposal_variance"),
                    "proposal_variance" => Some("proposal_sd"),
                    _ => None,
                };
                if let Some(twin) = twin {
                    base.remove(twin);
                }
                base.insert(key, value);
            }
        }
    }
}

/// Loads the preset (if any) overlaid with the config file (if any).
pub fn load(preset: Option<&str>, path: Option<&Path>) -> CliResult<ConfigFile> {
    let mut table = match preset {
        Some(name) => preset_table(name)?,
        None => Table::new(),
    };
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        // typed parse first: its errors carry line numbers
        toml::from_str::<ConfigFile>(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let over: Table = text.parse().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        merge(&mut table, over);
    }
    let config: ConfigFile = table.try_into().map_err(|e| CliError::Validation(format!("configuration: {e}")))?;
    if let Some(chain) = &config.chain {
        if chain.proposal_sd.is_some() && chain.proposal_variance.is_some() {
            return Err(CliError::Validation("set either chain.proposal_sd or chain.proposal_variance, not both".into()));
        }
    }
    Ok(config)
}

fn missing(key: &str) -> CliError {
    CliError::Validation(format!("configuration is missing {key}"))
}

impl ConfigFile {
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    pub fn chains(&self, flag: Option<usize>) -> CliResult<usize> {
        let chains = flag.or(self.chains).unwrap_or(1);
        if chains == 0 {
            return Err(CliError::Validation("chains must be at least 1".into()));
        }
        Ok(chains)
    }

    pub fn sim_spec(&self) -> CliResult<SimSpec> {
        let s = self.simulate.as_ref().ok_or_else(|| missing("the [simulate] section"))?;
        Ok(SimSpec {
            n: s.n.ok_or_else(|| missing("simulate.n"))?,
            p: s.p.ok_or_else(|| missing("simulate.p"))?,
            thresholds: s.thresholds.clone().ok_or_else(|| missing("simulate.thresholds"))?,
            min_per_class: s.min_per_class.unwrap_or(1),
        })
    }

    fn chain_section(&self) -> ChainSection {
        self.chain.clone().unwrap_or_default()
    }

    pub fn proposal_sd(&self, num_scales: usize) -> CliResult<Vec<f64>> {
        let c = self.chain_section();
        let sd = match (c.proposal_sd, c.proposal_variance) {
            (Some(sd), _) => sd,
            (None, Some(var)) => var.iter().map(|v| v.sqrt()).collect(),
            (None, None) => vec![DEFAULT_PROPOSAL_SD; num_scales],
        };
        if sd.len() != num_scales {
            return Err(CliError::Validation(format!(
                "chain proposal lists {} values for {num_scales} scales",
                sd.len()
            )));
        }
        Ok(sd)
    }

    /// Chain settings for data with `p` features and `num_scales` scales.
    pub fn chain_config(&self, p: usize, num_scales: usize, seed: u64) -> CliResult<ChainConfig> {
        let c = self.chain_section();
        let prior = Prior::new(
            DVector::from_element(p, c.prior_mean.unwrap_or(0.0)),
            PriorPrecision::ScaledIdentity(c.prior_precision.unwrap_or(1.0)),
        )?;
        let mut config = ChainConfig::new(prior, self.proposal_sd(num_scales)?)
            .with_schedule(
                c.burn_in.unwrap_or(ChainConfig::DEFAULT_BURN_IN),
                c.thinning.unwrap_or(ChainConfig::DEFAULT_THINNING),
                c.stored_draws.unwrap_or(ChainConfig::DEFAULT_STORED_DRAWS),
            )
            .with_seed(seed);
        config.gamma_prior_variance = c.gamma_prior_variance;
        Ok(config)
    }

    /// `Some(target)` when tuning is switched on.
    pub fn tuning_target(&self) -> Option<f64> {
        let c = self.chain_section();
        c.tune.unwrap_or(false).then(|| c.target_acceptance.unwrap_or(DEFAULT_TARGET_RATE))
    }

    pub fn experiment_spec(&self, seed: u64, chains: usize) -> CliResult<ExperimentSpec> {
        let sim = self.sim_spec()?;
        let c = self.chain_section();
        if c.prior_mean.unwrap_or(0.0) != 0.0 {
            return Err(CliError::Validation("experiments use a zero prior mean".into()));
        }
        Ok(ExperimentSpec {
            replications: self
                .experiment
                .as_ref()
                .and_then(|e| e.replications)
                .ok_or_else(|| missing("experiment.replications"))?,
            proposal_sd: self.proposal_sd(sim.num_scales())?,
            sim,
            prior_precision: c.prior_precision.unwrap_or(1.0),
            burn_in: c.burn_in.unwrap_or(ChainConfig::DEFAULT_BURN_IN),
            thinning: c.thinning.unwrap_or(ChainConfig::DEFAULT_THINNING),
            stored_draws: c.stored_draws.unwrap_or(ChainConfig::DEFAULT_STORED_DRAWS),
            chains,
            seed,
        })
    }

    pub fn split_spec(&self, chains: usize, standardize_flag: bool) -> CliResult<SplitSpec> {
        let e = self.evaluate.clone().unwrap_or_default();
        Ok(SplitSpec {
            fraction: e.fraction.ok_or_else(|| missing("evaluate.fraction"))?,
            num_splits: e.num_splits.ok_or_else(|| missing("evaluate.num_splits"))?,
            chains,
            standardize: standardize_flag || e.standardize.unwrap_or(false),
        })
    }
}
