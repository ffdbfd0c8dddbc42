use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    Activation, ActivationLayer, BatchNorm, DenseLinear, Dropout, Layer, Mode, OptimizerSpec, SparseLinear,
};
use crate::sparsity::{nnz_for_density, sample_pattern, xavier_init, Seed, Stream};
use crate::tensor::{CsrMatrix, DenseMatrix, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Xavier,
}

/// How sparse layers are realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// CSR weights driven by the sparse kernels.
    #[default]
    Sparse,
    /// Dense weights with a binary mask.
    Masked,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Backend::Sparse),
            "masked" | "masked-dense" | "masked_dense" => Ok(Backend::Masked),
            other => Err(Error::config(format!("unknown backend '{other}'"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Sparse => "sparse",
            Backend::Masked => "masked",
        })
    }
}

/// Uncompiled description of one layer. Input widths are inferred by
/// [`SequentialModel::compile`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Sparse {
        units: usize,
        density: f64,
        /// Exact nonzero count; overrides `density` when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nnz: Option<usize>,
        activation: Activation,
        optimizer: OptimizerSpec,
        #[serde(default)]
        init: Init,
    },
    Dense {
        units: usize,
        activation: Activation,
        optimizer: OptimizerSpec,
        #[serde(default)]
        init: Init,
    },
    BatchNormalization {
        #[serde(default)]
        optimizer: OptimizerSpec,
    },
    Dropout {
        p: f64,
    },
    Activation {
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn sparse(units: usize, density: f64, activation: Activation, optimizer: OptimizerSpec) -> Self {
        LayerSpec::Sparse {
            units,
            density,
            nnz: None,
            activation,
            optimizer,
            init: Init::Xavier,
        }
    }

    pub fn sparse_nnz(units: usize, nnz: usize, activation: Activation, optimizer: OptimizerSpec) -> Self {
        LayerSpec::Sparse {
            units,
            density: f64::NAN,
            nnz: Some(nnz),
            activation,
            optimizer,
            init: Init::Xavier,
        }
    }

    pub fn dense(units: usize, activation: Activation, optimizer: OptimizerSpec) -> Self {
        LayerSpec::Dense {
            units,
            activation,
            optimizer,
            init: Init::Xavier,
        }
    }

    pub fn batch_normalization() -> Self {
        LayerSpec::BatchNormalization {
            optimizer: OptimizerSpec::GradientDescent,
        }
    }

    pub fn dropout(p: f64) -> Self {
        LayerSpec::Dropout { p }
    }

    pub fn activation(activation: Activation) -> Self {
        LayerSpec::Activation { activation }
    }

    fn is_parameterized(&self) -> bool {
        !matches!(self, LayerSpec::Dropout { .. } | LayerSpec::Activation { .. })
    }
}

/// Ordered stack of layers, built with [`add`](Self::add) and then
/// [`compile`](Self::compile)d into trainable layers.
pub struct SequentialModel<T = f32> {
    specs: Vec<LayerSpec>,
    backend: Backend,
    layers: Option<Vec<Layer<T>>>,
    input_size: usize,
    batch_size: usize,
}

impl<T: Scalar> Default for SequentialModel<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> SequentialModel<T> {
    pub fn new() -> Self {
        Self {
            specs: Vec::new(),
            backend: Backend::Sparse,
            layers: None,
            input_size: 0,
            batch_size: 0,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn add(&mut self, spec: LayerSpec) -> &mut Self {
        self.specs.push(spec);
        self.layers = None;
        self
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn is_compiled(&self) -> bool {
        self.layers.is_some()
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Width of the model output (only meaningful once compiled).
    pub fn output_size(&self) -> usize {
        self.layers.as_deref().map_or(0, |layers| {
            layers
                .iter()
                .rev()
                .find_map(|l| l.weight_stats().map(|(_, o, _)| o))
                .unwrap_or(self.input_size)
        })
    }

    /// Allocates and initializes every layer. Layer `i` draws its pattern
    /// and initial weights from `seed`'s streams indexed by `i`, so the same
    /// seed always yields the same model.
    pub fn compile(&mut self, input_size: usize, batch_size: usize, seed: Seed) -> Result<()> {
        if input_size == 0 || batch_size == 0 {
            return Err(Error::config("input size and batch size must be positive"));
        }
        if !self.specs.iter().any(LayerSpec::is_parameterized) {
            return Err(Error::config("model needs at least one parameterized layer"));
        }
        let mut width = input_size;
        let mut layers = Vec::with_capacity(self.specs.len());
        for (idx, spec) in self.specs.iter().enumerate() {
            let li = idx as u64;
            let layer = match *spec {
                LayerSpec::Sparse {
                    units,
                    density,
                    nnz,
                    activation,
                    optimizer,
                    init: Init::Xavier,
                } => {
                    if units == 0 {
                        return Err(Error::config(format!("layer {idx} has zero units")));
                    }
                    let nnz = match nnz {
                        Some(n) => n,
                        None => nnz_for_density(units, width, density)
                            .map_err(|e| Error::config(format!("layer {idx}: {e}")))?,
                    };
                    let pattern = sample_pattern(units, width, nnz, &mut seed.stream(Stream::Pattern, li))?;
                    let values = xavier_init(width, units, nnz, &mut seed.stream(Stream::Init, li));
                    let w = CsrMatrix::new(pattern, values)?;
                    let bias = vec![T::zero(); units];
                    width = units;
                    match self.backend {
                        Backend::Sparse => Layer::Sparse(SparseLinear::new(w, bias, activation, optimizer)?),
                        Backend::Masked => {
                            Layer::Dense(DenseLinear::masked_from_sparse(&w, bias, activation, optimizer)?)
                        }
                    }
                }
                LayerSpec::Dense {
                    units,
                    activation,
                    optimizer,
                    init: Init::Xavier,
                } => {
                    if units == 0 {
                        return Err(Error::config(format!("layer {idx} has zero units")));
                    }
                    let values = xavier_init(width, units, units * width, &mut seed.stream(Stream::Init, li));
                    let w = DenseMatrix::from_vec(units, width, values)?;
                    width = units;
                    Layer::Dense(DenseLinear::new(w, vec![T::zero(); units], activation, optimizer)?)
                }
                LayerSpec::BatchNormalization { optimizer } => Layer::BatchNorm(BatchNorm::new(width, optimizer)?),
                LayerSpec::Dropout { p } => Layer::Dropout(Dropout::new(p, seed.stream(Stream::Dropout, li))?),
                LayerSpec::Activation { activation } => Layer::Activation(ActivationLayer::new(activation)),
            };
            layers.push(layer);
        }
        self.layers = Some(layers);
        self.input_size = input_size;
        self.batch_size = batch_size;
        Ok(())
    }

    /// Wraps already-built layers, checking that their widths chain.
    pub fn from_layers(layers: Vec<Layer<T>>, input_size: usize, batch_size: usize) -> Result<Self> {
        let mut width = input_size;
        for (idx, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Sparse(_) | Layer::Dense(_) => {
                    let (n_in, n_out, _) = layer.weight_stats().expect("linear layer");
                    if n_in != width {
                        return Err(Error::config(format!(
                            "layer {idx} expects {n_in} inputs but receives {width}"
                        )));
                    }
                    width = n_out;
                }
                Layer::BatchNorm(bn) if bn.features() != width => {
                    return Err(Error::config(format!(
                        "batch norm layer {idx} has {} features but receives {width}",
                        bn.features()
                    )));
                }
                _ => {}
            }
        }
        let backend = if layers
            .iter()
            .any(|l| matches!(l, Layer::Dense(d) if d.mask().is_some()))
        {
            Backend::Masked
        } else {
            Backend::Sparse
        };
        Ok(Self {
            specs: Vec::new(),
            backend,
            layers: Some(layers),
            input_size,
            batch_size,
        })
    }

    pub fn layers(&self) -> Result<&[Layer<T>]> {
        self.layers
            .as_deref()
            .ok_or_else(|| Error::state("model is not compiled"))
    }

    pub fn layers_mut(&mut self) -> Result<&mut [Layer<T>]> {
        self.layers
            .as_deref_mut()
            .ok_or_else(|| Error::state("model is not compiled"))
    }

    pub fn feedforward_mode(&mut self, x: &DenseMatrix<T>, mode: Mode) -> Result<DenseMatrix<T>> {
        let input_size = self.input_size;
        let layers = self.layers_mut()?;
        if x.rows() != input_size {
            return Err(Error::invalid(format!(
                "model expects {input_size} input features, got {}",
                x.rows()
            )));
        }
        let mut h = x.clone();
        for layer in layers.iter_mut() {
            h = layer.forward(h, mode)?;
        }
        Ok(h)
    }

    /// Training-mode forward pass; caches what backpropagation needs.
    pub fn feedforward(&mut self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.feedforward_mode(x, Mode::Training)
    }

    /// Inference-mode forward pass (dropout off, batch-norm running stats).
    pub fn predict(&mut self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.feedforward_mode(x, Mode::Inference)
    }

    fn backprop(&mut self, dy: DenseMatrix<T>, want_input_grad: bool) -> Result<Option<DenseMatrix<T>>> {
        let layers = self.layers_mut()?;
        let mut grad = Some(dy);
        for (idx, layer) in layers.iter_mut().enumerate().rev() {
            let g = grad.take().ok_or_else(|| Error::state("gradient chain interrupted"))?;
            // Nothing below the first layer consumes dX, so skip it unless asked.
            let need = idx > 0 || want_input_grad;
            grad = layer.backward(g, need)?;
            if !need {
                grad = None;
            }
        }
        Ok(grad)
    }

    /// Walks the layers in reverse, filling every parameter gradient.
    /// `y` is the output returned by the matching [`feedforward`](Self::feedforward).
    pub fn backpropagate(&mut self, y: &DenseMatrix<T>, dy: DenseMatrix<T>) -> Result<()> {
        if y.shape() != dy.shape() {
            return Err(Error::invalid(format!(
                "output {:?} and its gradient {:?} differ in shape",
                y.shape(),
                dy.shape()
            )));
        }
        self.backprop(dy, false).map(|_| ())
    }

    /// Like [`backpropagate`](Self::backpropagate) but also returns the
    /// gradient with respect to the model input.
    pub fn backpropagate_to_input(&mut self, dy: DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.backprop(dy, true)?
            .ok_or_else(|| Error::state("input gradient unavailable"))
    }

    /// Applies every layer's optimizer with learning rate `eta`.
    pub fn optimize(&mut self, eta: f64) -> Result<()> {
        let eta = T::from_f64(eta);
        for layer in self.layers_mut()? {
            layer.optimize(eta)?;
        }
        Ok(())
    }

    /// Flat copy of every parameter tensor, in layer order. Handy for
    /// bitwise comparisons between runs.
    pub fn parameters_snapshot(&mut self) -> Result<Vec<Vec<T>>> {
        let mut out = Vec::new();
        for layer in self.layers_mut()? {
            for p in layer.params_mut() {
                out.push(p.values.to_vec());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_layer_shapes() {
        let mut m = SequentialModel::<f32>::new();
        m.add(LayerSpec::dense(
            10,
            Activation::NoActivation,
            OptimizerSpec::GradientDescent,
        ));
        m.compile(5, 4, Seed(1)).unwrap();
        match &m.layers().unwrap()[0] {
            Layer::Dense(d) => {
                assert_eq!(d.weights().shape(), (10, 5));
                assert_eq!(d.bias().len(), 10);
            }
            _ => panic!("expected dense layer"),
        }
        assert_eq!(m.output_size(), 10);
    }

    #[test]
    fn uncompiled_model_is_state_error() {
        let mut m = SequentialModel::<f32>::new();
        m.add(LayerSpec::dense(2, Activation::ReLU, OptimizerSpec::GradientDescent));
        assert!(matches!(m.feedforward(&DenseMatrix::zeros(3, 1)), Err(Error::State(_))));
        assert!(matches!(m.optimize(0.1), Err(Error::State(_))));
    }

    #[test]
    fn compile_rejects_degenerate_models() {
        let mut m = SequentialModel::<f32>::new();
        m.add(LayerSpec::dropout(0.3));
        assert!(matches!(m.compile(3, 1, Seed(1)), Err(Error::Config(_))));
        let mut m = SequentialModel::<f32>::new();
        m.add(LayerSpec::sparse(
            4,
            0.0,
            Activation::ReLU,
            OptimizerSpec::GradientDescent,
        ));
        assert!(matches!(m.compile(3, 1, Seed(1)), Err(Error::Config(_))));
    }

    #[test]
    fn identity_model_passes_input_through() {
        let mut m = SequentialModel::<f32>::new();
        m.add(LayerSpec::dense(
            3,
            Activation::NoActivation,
            OptimizerSpec::GradientDescent,
        ));
        m.compile(3, 2, Seed(1)).unwrap();
        if let Layer::Dense(d) = &mut m.layers_mut().unwrap()[0] {
            *d.weights_mut() = DenseMatrix::identity(3);
        }
        let x = DenseMatrix::from_fn(3, 2, |i, j| (i as f32) - (j as f32) * 0.5);
        assert_eq!(m.feedforward(&x).unwrap(), x);
    }

    #[test]
    fn backpropagate_before_feedforward_fails() {
        let mut m = SequentialModel::<f32>::new();
        m.add(LayerSpec::dense(2, Activation::ReLU, OptimizerSpec::GradientDescent));
        m.compile(3, 1, Seed(1)).unwrap();
        let y = DenseMatrix::zeros(2, 1);
        assert!(matches!(m.backpropagate(&y, y.clone()), Err(Error::State(_))));
    }

    #[test]
    fn from_layers_checks_chain() {
        let w = DenseMatrix::<f32>::zeros(4, 3);
        let l = DenseLinear::new(w, vec![0.0; 4], Activation::ReLU, OptimizerSpec::GradientDescent).unwrap();
        assert!(SequentialModel::from_layers(vec![Layer::Dense(l)], 5, 1).is_err());
    }
}
