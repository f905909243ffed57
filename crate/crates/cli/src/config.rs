//! Run configuration: a TOML file of `key = value` sections, with the paper's
//! experiment defaults, overridable per-field by command-line flags. The
//! merged result is what lands in the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use faprec::channel::SystemConfig;
use faprec::constellation::{Constellation, FiniteAlphabet};
use faprec::harness::{PrecoderSpec, SweepKind, SweepSpec};
use faprec::precoders::Ide2Config;
use faprec::unfolded::{ParamsFile, TrainConfig};

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub n_antennas: usize,
    pub n_users: usize,
    pub p_t: f64,
    pub snr_db: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            n_antennas: 128,
            n_users: 16,
            p_t: 1.0,
            snr_db: 14.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationSection {
    pub constellation: String,
}

impl Default for ModulationSection {
    fn default() -> Self {
        Self {
            constellation: "16qam".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecoderSection {
    /// One of "zf", "zf-quant", "ide2", "pgd", "ide2-net".
    pub name: String,
    pub t_max: usize,
    pub alpha: f64,
    #[serde(default = "default_one")]
    pub gamma: f64,
    /// Step size for the "pgd" reference.
    pub lambda: f64,
    /// Parameter file for "ide2-net".
    pub params: Option<PathBuf>,
}

impl Default for PrecoderSection {
    fn default() -> Self {
        Self {
            name: "ide2".into(),
            t_max: 20,
            alpha: 0.95,
            gamma: 1.0,
            lambda: 0.01,
            params: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub layers: usize,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub lr_floor: f64,
    /// Defaults to the system SNR when absent.
    pub snr_db_train: Option<f64>,
    pub val_samples: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::desk_default();
        Self {
            layers: 20,
            epochs: d.epochs,
            samples_per_epoch: d.samples_per_epoch,
            batch_size: d.batch_size,
            lr_initial: d.lr_initial,
            lr_decay_every: d.lr_decay_every,
            lr_decay_factor: d.lr_decay_factor,
            lr_floor: d.lr_floor,
            snr_db_train: None,
            val_samples: d.val_samples,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// "snr", "layers", or "epsilon".
    pub kind: String,
    pub values: Vec<f64>,
    /// 0 selects the smallest count delivering at least 1e5 bits per point.
    pub trials_per_point: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kind: "snr".into(),
            values: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
            trials_per_point: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub epsilon: f64,
    /// 0 selects the smallest count delivering at least 1e5 bits.
    pub trials: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            trials: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub n_antennas: usize,
    pub n_users: usize,
    pub instances: usize,
    pub t_max: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            n_antennas: 6,
            n_users: 2,
            instances: 1000,
            t_max: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// The whole merged configuration. Serialized verbatim into run manifests.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker thread cap; 0 uses the machine parallelism.
    pub threads: usize,
    pub system: SystemSection,
    pub modulation: ModulationSection,
    pub precoder: PrecoderSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub eval: EvalSection,
    pub oracle: OracleSection,
    pub output: OutputSection,
}

/// CLI errors carry the exit-code split the interface promises: usage
/// problems exit 1, numerical aborts exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => write!(f, "{}", m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<faprec::Error> for CliError {
    fn from(e: faprec::Error) -> Self {
        match e {
            faprec::Error::Numerical(_) | faprec::Error::Diverged { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {}", path.display(), e))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::Usage(format!("config file {}: {}", path.display(), e))
        })
    }

    pub fn system(&self) -> CliResult<SystemConfig> {
        Ok(SystemConfig::new(
            self.system.n_antennas,
            self.system.n_users,
            self.system.p_t,
            self.system.snr_db,
        )?)
    }

    pub fn constellation(&self) -> CliResult<Constellation> {
        Ok(Constellation::by_name(&self.modulation.constellation)?)
    }

    pub fn alphabet(&self) -> CliResult<FiniteAlphabet> {
        Ok(FiniteAlphabet::one_bit(self.system.p_t)?)
    }

    /// Build the precoder choice, loading the parameter file for "ide2-net".
    pub fn precoder_spec(&self) -> CliResult<PrecoderSpec> {
        match self.precoder.name.as_str() {
            "zf" => Ok(PrecoderSpec::Zf),
            "zf-quant" => Ok(PrecoderSpec::ZfQuantized),
            "ide2" => Ok(PrecoderSpec::Ide2(Ide2Config {
                t_max: self.precoder.t_max,
                alpha: self.precoder.alpha,
                gamma: self.precoder.gamma,
            })),
            "pgd" => Ok(PrecoderSpec::Pgd {
                lambda: self.precoder.lambda,
                t_max: self.precoder.t_max,
            }),
            "ide2-net" => {
                let path = self.precoder.params.as_ref().ok_or_else(|| {
                    CliError::Usage(
                        "precoder 'ide2-net' needs a parameter file (--params or [precoder] params)"
                            .into(),
                    )
                })?;
                let file = ParamsFile::load(path)?;
                if file.system.n_antennas != self.system.n_antennas
                    || file.system.n_users != self.system.n_users
                {
                    eprintln!(
                        "warning: parameters were trained at N={}, K={} but this run uses N={}, K={}",
                        file.system.n_antennas,
                        file.system.n_users,
                        self.system.n_antennas,
                        self.system.n_users
                    );
                }
                Ok(PrecoderSpec::Ide2Net(file.params))
            }
            other => Err(CliError::Usage(format!(
                "unknown precoder '{}'; expected zf, zf-quant, ide2, pgd, or ide2-net",
                other
            ))),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            samples_per_epoch: self.train.samples_per_epoch,
            batch_size: self.train.batch_size,
            lr_initial: self.train.lr_initial,
            lr_decay_every: self.train.lr_decay_every,
            lr_decay_factor: self.train.lr_decay_factor,
            lr_floor: self.train.lr_floor,
            snr_db_train: self.train.snr_db_train.unwrap_or(self.system.snr_db),
            val_samples: self.train.val_samples,
            seed: self.seed,
        }
    }

    pub fn sweep_kind(&self) -> CliResult<SweepKind> {
        match self.sweep.kind.as_str() {
            "snr" => Ok(SweepKind::Snr),
            "layers" => Ok(SweepKind::Layers),
            "epsilon" => Ok(SweepKind::Epsilon),
            other => Err(CliError::Usage(format!(
                "unknown sweep kind '{}'; expected snr, layers, or epsilon",
                other
            ))),
        }
    }

    /// Smallest trial count delivering at least 1e5 transmitted bits.
    pub fn auto_trials(&self, cons: &Constellation) -> usize {
        let bits_per_trial = (self.system.n_users * cons.bits_per_symbol()) as u64;
        100_000u64.div_ceil(bits_per_trial) as usize
    }

    pub fn sweep_spec(&self) -> CliResult<SweepSpec> {
        let cons = self.constellation()?;
        let trials = if self.sweep.trials_per_point == 0 {
            self.auto_trials(&cons)
        } else {
            self.sweep.trials_per_point
        };
        Ok(SweepSpec {
            kind: self.sweep_kind()?,
            values: self.sweep.values.clone(),
            trials_per_point: trials,
            sys: self.system()?,
            precoder: self.precoder_spec()?,
            constellation: cons,
            alphabet: self.alphabet()?,
            seed: self.seed,
        })
    }
}
