use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar10, synthetic_blobs, BlobSpec, Dataset};
use crate::error::{Error, Result};
use crate::nn::{Activation, OptimizerSpec};
use crate::sparsity::{chain_dims, er_densities, Seed, SparsityPlan, Stream};
use crate::train::{Backend, LayerSpec, LrSchedule, SequentialModel, TrainConfig};

pub const DEFAULT_LAYERS: [usize; 4] = [3072, 1024, 512, 10];
pub const DEFAULT_MILESTONES: [f64; 2] = [0.5, 0.75];
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const MOMENTUM: f64 = 0.9;

/// Initial learning rate for a global density.
pub fn default_lr(density: f64) -> f64 {
    if density >= 0.2 {
        0.01
    } else if density >= 0.05 {
        0.03
    } else {
        0.1
    }
}

/// Where training data comes from. Textual forms: `cifar10:DIR` and
/// `synthetic:train=N,test=N,classes=N,spread=X` (every key optional).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Cifar10 {
        dir: PathBuf,
    },
    Synthetic {
        /// Total training examples, split evenly over classes.
        train: usize,
        test: usize,
        /// Defaults to the model's output width.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
        spread: f64,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            train: 1000,
            test: 200,
            classes: None,
            spread: 1.0,
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "cifar10" => {
                if rest.is_empty() {
                    return Err(Error::config("cifar10 dataset needs a directory: cifar10:DIR"));
                }
                Ok(DatasetSpec::Cifar10 { dir: rest.into() })
            }
            "synthetic" => {
                let DatasetSpec::Synthetic {
                    mut train,
                    mut test,
                    mut classes,
                    mut spread,
                } = DatasetSpec::default()
                else {
                    unreachable!()
                };
                for kv in rest.split(',').filter(|p| !p.is_empty()) {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::config(format!("expected key=value, got '{kv}'")))?;
                    let bad = || Error::config(format!("bad value for {k}: '{v}'"));
                    match k {
                        "train" => train = v.parse().map_err(|_| bad())?,
                        "test" => test = v.parse().map_err(|_| bad())?,
                        "classes" => classes = Some(v.parse().map_err(|_| bad())?),
                        "spread" => spread = v.parse().map_err(|_| bad())?,
                        other => return Err(Error::config(format!("unknown synthetic key '{other}'"))),
                    }
                }
                Ok(DatasetSpec::Synthetic {
                    train,
                    test,
                    classes,
                    spread,
                })
            }
            other => Err(Error::config(format!(
                "unknown dataset '{other}', expected cifar10:DIR or synthetic:SPEC"
            ))),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Cifar10 { dir } => write!(f, "cifar10:{}", dir.display()),
            DatasetSpec::Synthetic {
                train,
                test,
                classes,
                spread,
            } => {
                write!(f, "synthetic:train={train},test={test},spread={spread}")?;
                if let Some(c) = classes {
                    write!(f, ",classes={c}")?;
                }
                Ok(())
            }
        }
    }
}

impl DatasetSpec {
    /// Loads or generates the data for a model with the given input and
    /// output widths.
    pub fn load(&self, features: usize, outputs: usize, seed: Seed) -> Result<Dataset<f32>> {
        match self {
            DatasetSpec::Cifar10 { dir } => {
                let ds = load_cifar10(dir)?;
                if ds.features() != features || ds.classes() != outputs {
                    return Err(Error::config(format!(
                        "CIFAR-10 needs layers {}..{}, model has {features}..{outputs}",
                        ds.features(),
                        ds.classes()
                    )));
                }
                Ok(ds)
            }
            DatasetSpec::Synthetic {
                train,
                test,
                classes,
                spread,
            } => {
                let classes = classes.unwrap_or(outputs);
                if classes != outputs {
                    return Err(Error::config(format!(
                        "synthetic data has {classes} classes but the model outputs {outputs}"
                    )));
                }
                let mut spec = BlobSpec::new(classes, features, train / classes.max(1), *spread);
                spec.test_per_class = test / classes.max(1);
                if spec.train_per_class == 0 {
                    return Err(Error::config("synthetic train size smaller than the class count"));
                }
                synthetic_blobs(&spec, &mut seed.stream(Stream::Data, 0))
            }
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub layers: Vec<usize>,
    pub density: f64,
    pub backend: Backend,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate; `None` picks it from the density.
    pub lr: Option<f64>,
    pub lr_milestones: Vec<f64>,
    pub lr_gamma: f64,
    pub seed: Seed,
    pub dataset: DatasetSpec,
    pub augment: bool,
    /// Worker threads; `None` keeps the ambient pool.
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS.to_vec(),
            density: 1.0,
            backend: Backend::Sparse,
            epochs: 100,
            batch_size: 100,
            lr: None,
            lr_milestones: DEFAULT_MILESTONES.to_vec(),
            lr_gamma: DEFAULT_GAMMA,
            seed: Seed::default(),
            dataset: DatasetSpec::default(),
            augment: false,
            threads: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::config("model needs at least an input and an output size"));
        }
        if self.layers.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::config(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("thread count must be positive"));
        }
        self.schedule().map(|_| ())
    }

    pub fn resolved_lr(&self) -> f64 {
        self.lr.unwrap_or_else(|| default_lr(self.density))
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        let lr = self.resolved_lr();
        if self.lr_milestones.is_empty() {
            let s = LrSchedule::constant(lr);
            s.validate().map_err(|e| Error::config(e.to_string()))?;
            Ok(s)
        } else {
            LrSchedule::multi_step(lr, self.lr_milestones.clone(), self.lr_gamma)
                .map_err(|e| Error::config(e.to_string()))
        }
    }

    pub fn plan(&self) -> Result<SparsityPlan> {
        er_densities(&chain_dims(&self.layers), self.density).map_err(|e| Error::config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            shuffle: true,
            seed: self.seed,
            augment: self.augment,
            evaluate: true,
        }
    }
}

/// Builds and compiles the experiment's MLP: ReLU on hidden layers, no
/// activation on the output, Nesterov momentum everywhere. Layers the
/// allocation saturates become plain dense layers.
pub fn build_model(config: &ExperimentConfig) -> Result<(SequentialModel<f32>, SparsityPlan)> {
    config.validate()?;
    let plan = config.plan()?;
    let mut model = SequentialModel::new().with_backend(config.backend);
    let last = plan.layer_dims.len() - 1;
    for (i, &(_, n_out)) in plan.layer_dims.iter().enumerate() {
        let act = if i == last {
            Activation::NoActivation
        } else {
            Activation::ReLU
        };
        let opt = OptimizerSpec::nesterov(MOMENTUM);
        model.add(if plan.is_saturated(i) {
            LayerSpec::dense(n_out, act, opt)
        } else {
            LayerSpec::sparse_nnz(n_out, plan.layer_nnz[i], act, opt)
        });
    }
    model.compile(config.layers[0], config.batch_size, config.seed)?;
    Ok((model, plan))
}
