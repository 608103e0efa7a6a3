//! The TOML run configuration shared by `train`, `synth` and `bench`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alphazero::{AgentConfig, TrainingSetup};
use crate::error::{Error, Result};
use crate::gates::{clifford_t, ActionTable, Architecture, GateKind};
use crate::network::NetConfig;
use crate::targets::CurriculumState;

/// Environment variable naming the default checkpoint directory.
pub const CHECKPOINT_DIR_VAR: &str = "QSYNTH_CHECKPOINT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    AllToAll,
    /// CNOTs between neighbours, pointing from lower to higher index.
    Line,
    /// Single-qubit gates on the ancilla only, CNOTs between the ancilla and
    /// each data qubit.
    AncillaStar,
    /// `pairs` and `sites` given explicitly.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub data_qubits: usize,
    #[serde(default)]
    pub ancilla: bool,
    pub connectivity: Connectivity,
    pub gates: Vec<GateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            data_qubits: 2,
            ancilla: false,
            connectivity: Connectivity::AllToAll,
            gates: clifford_t(),
            pairs: None,
            sites: None,
        }
    }
}

impl ArchitectureSpec {
    pub fn build(&self) -> Result<Architecture> {
        let n = self.data_qubits + usize::from(self.ancilla);
        let mut arch = match self.connectivity {
            Connectivity::AllToAll => Architecture::all_to_all(n),
            Connectivity::Line => Architecture::line(n),
            Connectivity::AncillaStar => {
                if !self.ancilla {
                    return Err(Error::InvalidArchitecture("ancilla-star needs `ancilla = true`".into()));
                }
                Architecture::ancilla_star(self.data_qubits)
            }
            Connectivity::Custom => {
                let (Some(pairs), Some(sites)) = (&self.pairs, &self.sites) else {
                    return Err(Error::InvalidArchitecture("custom connectivity needs `pairs` and `sites`".into()));
                };
                Architecture {
                    n_data: self.data_qubits,
                    has_ancilla: self.ancilla,
                    connectivity: pairs.clone(),
                    single_qubit_sites: sites.clone(),
                }
            }
        };
        if self.connectivity != Connectivity::Custom && (self.pairs.is_some() || self.sites.is_some()) {
            return Err(Error::InvalidArchitecture("`pairs` and `sites` need `connectivity = \"custom\"`".into()));
        }
        arch.n_data = self.data_qubits;
        arch.has_ancilla = self.ancilla;
        arch.validate()?;
        Ok(arch)
    }

    pub fn table(&self) -> Result<ActionTable> {
        ActionTable::build(&self.gates, &self.build()?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub blocks: usize,
    pub channels: usize,
    pub policy_channels: usize,
    pub value_channels: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let d = NetConfig::new(1, 1);
        Self {
            blocks: d.blocks,
            channels: d.channels,
            policy_channels: d.policy_channels,
            value_channels: d.value_channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSpec {
    /// Mean depth of the first level.
    pub mu: usize,
    pub sigma: f64,
    pub d_min: usize,
    pub d_max: usize,
    /// Last level trained.
    pub final_mu: usize,
}

impl Default for CurriculumSpec {
    fn default() -> Self {
        let c = CurriculumState::default();
        Self { mu: c.mu, sigma: c.sigma, d_min: c.d_min, d_max: c.d_max, final_mu: 30 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub architecture: ArchitectureSpec,
    pub agent: AgentConfig,
    pub network: NetworkSpec,
    pub curriculum: CurriculumSpec,
    pub paths: Paths,
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First line assigning `key`, or the line of `[section]`, or 1.
fn line_of(text: &str, section: &str, key: Option<&str>) -> usize {
    let lines: Vec<&str> = text.lines().collect();
    let header = format!("[{section}]");
    let start = lines.iter().position(|l| l.trim() == header);
    if let Some(key) = key {
        let from = start.map_or(0, |s| s + 1);
        for (i, l) in lines.iter().enumerate().skip(from) {
            let t = l.trim_start();
            if t.starts_with('[') && start.is_some() {
                break;
            }
            if t.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('=')) {
                return i + 1;
            }
        }
    }
    start.map_or(1, |s| s + 1)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map_or(1, |s| line_at(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.check(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { line: 0, message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization")
    }

    /// Semantic checks, with errors pointed at the offending key in `text`.
    fn check(&self, text: &str) -> Result<()> {
        let at = |section: &str, key: Option<&str>, e: Error| Error::Config {
            line: line_of(text, section, key),
            message: e.to_string(),
        };
        let arch_key = match self.architecture.connectivity {
            Connectivity::Custom => "pairs",
            _ => "connectivity",
        };
        self.architecture.build().map_err(|e| at("architecture", Some(arch_key), e))?;
        self.architecture.table().map_err(|e| at("architecture", Some("gates"), e))?;
        self.agent.validate().map_err(|e| at("agent", None, e))?;
        self.net_config()?.validate().map_err(|e| at("network", None, e))?;
        let c = &self.curriculum;
        if c.d_min == 0 || c.d_min > c.d_max {
            return Err(at("curriculum", Some("d_min"), Error::InvalidArgument("need 1 <= d_min <= d_max".into())));
        }
        if !(c.sigma >= 0.0 && c.sigma.is_finite()) {
            return Err(at(
                "curriculum",
                Some("sigma"),
                Error::InvalidArgument("sigma must be finite and >= 0".into()),
            ));
        }
        if c.final_mu < c.mu {
            return Err(at("curriculum", Some("final_mu"), Error::InvalidArgument("final_mu is below mu".into())));
        }
        Ok(())
    }

    pub fn net_config(&self) -> Result<NetConfig> {
        let table = self.architecture.table()?;
        let n = &self.network;
        Ok(NetConfig {
            dim: table.dim(),
            n_actions: table.len(),
            blocks: n.blocks,
            channels: n.channels,
            policy_channels: n.policy_channels,
            value_channels: n.value_channels,
        })
    }

    /// Checkpoint directory: the configured one, else the environment
    /// variable, else `checkpoints`.
    pub fn checkpoint_dir(&self) -> PathBuf {
        self.paths.checkpoint_dir.clone().unwrap_or_else(default_checkpoint_dir)
    }

    pub fn training_setup(&self, resume: bool) -> Result<TrainingSetup> {
        let mut setup = TrainingSetup::new(self.architecture.build()?, self.architecture.gates.clone())?;
        setup.agent = self.agent.clone();
        setup.network = self.net_config()?;
        setup.curriculum = CurriculumState {
            mu: self.curriculum.mu,
            sigma: self.curriculum.sigma,
            d_min: self.curriculum.d_min,
            d_max: self.curriculum.d_max,
            ..CurriculumState::default()
        };
        setup.final_mu = self.curriculum.final_mu;
        setup.seed = self.seed;
        setup.checkpoint_dir = Some(self.checkpoint_dir());
        setup.resume = resume;
        Ok(setup)
    }
}

pub fn default_checkpoint_dir() -> PathBuf {
    std::env::var_os(CHECKPOINT_DIR_VAR).map_or_else(|| PathBuf::from("checkpoints"), PathBuf::from)
}
