//! Model persistence: a directory holding `manifest.json` plus one NPY file
//! per tensor. Sparse layers store values, column indices and row pointers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::npy::{self, NpyArray};
use crate::error::{Error, Result};
use crate::nn::{Activation, ActivationLayer, BatchNorm, DenseLinear, Dropout, Layer, OptimizerSpec, SparseLinear};
use crate::sparsity::{Seed, Stream};
use crate::tensor::{CsrMatrix, DenseMatrix, Scalar, SparsityPattern};
use crate::train::SequentialModel;

pub const SCHEMA_VERSION: &str = "1.0";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: String,
    pub n_in: usize,
    pub n_out: usize,
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub dtype: String,
    pub input_size: usize,
    pub batch_size: usize,
    pub layers: Vec<LayerEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveInfo {
    pub dir: PathBuf,
    /// `(file name, bytes)` for every file written, manifest included.
    pub files: Vec<(String, u64)>,
    pub total_bytes: u64,
}

struct Writer<'a> {
    dir: &'a Path,
    layer: usize,
    written: Vec<(String, u64)>,
}

impl Writer<'_> {
    fn name(&self, tensor: &str) -> String {
        format!("layer{:02}_{tensor}.npy", self.layer)
    }

    fn scalars<T: Scalar>(
        &mut self,
        files: &mut BTreeMap<String, String>,
        tensor: &str,
        shape: &[usize],
        v: &[T],
    ) -> Result<()> {
        let name = self.name(tensor);
        let bytes = npy::write_scalars(&self.dir.join(&name), shape, v)?;
        self.written.push((name.clone(), bytes));
        files.insert(tensor.to_string(), name);
        Ok(())
    }

    fn indices(&mut self, files: &mut BTreeMap<String, String>, tensor: &str, v: &[u32]) -> Result<()> {
        let name = self.name(tensor);
        let ints: Vec<i32> = v.iter().map(|&x| x as i32).collect();
        let bytes = npy::write_i32(&self.dir.join(&name), &[ints.len()], &ints)?;
        self.written.push((name.clone(), bytes));
        files.insert(tensor.to_string(), name);
        Ok(())
    }

    fn bytes(&mut self, files: &mut BTreeMap<String, String>, tensor: &str, shape: &[usize], v: &[u8]) -> Result<()> {
        let name = self.name(tensor);
        let bytes = npy::write_u8(&self.dir.join(&name), shape, v)?;
        self.written.push((name.clone(), bytes));
        files.insert(tensor.to_string(), name);
        Ok(())
    }
}

/// Writes `model` into `dir` (created if missing).
pub fn save_model<T: Scalar>(model: &SequentialModel<T>, dir: impl AsRef<Path>) -> Result<ArchiveInfo> {
    let dir = dir.as_ref();
    let layers = model.layers()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = Writer {
        dir,
        layer: 0,
        written: Vec::new(),
    };
    let mut entries = Vec::with_capacity(layers.len());
    let mut width = model.input_size();
    for (idx, layer) in layers.iter().enumerate() {
        w.layer = idx;
        let mut files = BTreeMap::new();
        let entry = match layer {
            Layer::Sparse(l) => {
                let s = l.weights();
                w.scalars(&mut files, "values", &[s.nnz()], s.values())?;
                w.indices(&mut files, "col_idx", s.col_idx())?;
                w.indices(&mut files, "row_ptr", s.row_ptr())?;
                w.scalars(&mut files, "bias", &[l.n_out()], l.bias())?;
                width = l.n_out();
                LayerEntry {
                    kind: "sparse".into(),
                    n_in: l.n_in(),
                    n_out: l.n_out(),
                    density: s.pattern().density(),
                    activation: Some(l.activation()),
                    optimizer: Some(*l.optimizer()),
                    p: None,
                    files,
                }
            }
            Layer::Dense(l) => {
                let shape = [l.n_out(), l.n_in()];
                w.scalars(&mut files, "weights", &shape, l.weights().as_slice())?;
                if let Some(mask) = l.mask() {
                    let bits: Vec<u8> = mask.as_slice().iter().map(|&m| u8::from(m != T::zero())).collect();
                    w.bytes(&mut files, "mask", &shape, &bits)?;
                }
                w.scalars(&mut files, "bias", &[l.n_out()], l.bias())?;
                width = l.n_out();
                LayerEntry {
                    kind: layer.kind().into(),
                    n_in: l.n_in(),
                    n_out: l.n_out(),
                    density: l.active_weights() as f64 / (l.n_in() * l.n_out()) as f64,
                    activation: Some(l.activation()),
                    optimizer: Some(*l.optimizer()),
                    p: None,
                    files,
                }
            }
            Layer::BatchNorm(l) => {
                let n = [l.features()];
                w.scalars(&mut files, "gamma", &n, l.gamma())?;
                w.scalars(&mut files, "beta", &n, l.beta())?;
                w.scalars(&mut files, "running_mean", &n, l.running_mean())?;
                w.scalars(&mut files, "running_var", &n, l.running_var())?;
                LayerEntry {
                    kind: "batch_norm".into(),
                    n_in: width,
                    n_out: width,
                    density: 1.0,
                    activation: None,
                    optimizer: Some(*l.optimizer()),
                    p: None,
                    files,
                }
            }
            Layer::Dropout(l) => LayerEntry {
                kind: "dropout".into(),
                n_in: width,
                n_out: width,
                density: 1.0,
                activation: None,
                optimizer: None,
                p: Some(l.p()),
                files,
            },
            Layer::Activation(l) => LayerEntry {
                kind: "activation".into(),
                n_in: width,
                n_out: width,
                density: 1.0,
                activation: Some(l.activation()),
                optimizer: None,
                p: None,
                files,
            },
        };
        entries.push(entry);
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        dtype: T::NPY_DESCR.into(),
        input_size: model.input_size(),
        batch_size: model.batch_size(),
        layers: entries,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let mpath = dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, &json).map_err(|e| Error::io(&mpath, e))?;
    let mut files = w.written;
    files.push((MANIFEST_FILE.into(), json.len() as u64));
    let total_bytes = files.iter().map(|(_, b)| b).sum();
    Ok(ArchiveInfo {
        dir: dir.to_path_buf(),
        files,
        total_bytes,
    })
}

struct Reader<'a> {
    dir: &'a Path,
}

impl Reader<'_> {
    fn array(&self, entry: &LayerEntry, tensor: &str, shape: &[usize]) -> Result<(PathBuf, NpyArray)> {
        let name = entry.files.get(tensor).ok_or_else(|| {
            Error::format(
                self.dir.join(MANIFEST_FILE),
                format!("{} layer lacks '{tensor}'", entry.kind),
            )
        })?;
        let path = self.dir.join(name);
        let arr = npy::read_npy(&path)?;
        if arr.shape != shape {
            return Err(Error::format(
                &path,
                format!("shape {:?} does not match manifest {:?}", arr.shape, shape),
            ));
        }
        Ok((path, arr))
    }

    fn scalars<T: Scalar>(&self, entry: &LayerEntry, tensor: &str, shape: &[usize]) -> Result<Vec<T>> {
        let (path, arr) = self.array(entry, tensor, shape)?;
        arr.to_scalars(&path)
    }

    fn indices(&self, entry: &LayerEntry, tensor: &str, len: Option<usize>) -> Result<Vec<u32>> {
        let name = entry.files.get(tensor).map(|n| self.dir.join(n));
        let path =
            name.ok_or_else(|| Error::format(self.dir.join(MANIFEST_FILE), format!("sparse layer lacks '{tensor}'")))?;
        let arr = npy::read_npy(&path)?;
        if arr.shape.len() != 1 || len.is_some_and(|n| arr.shape[0] != n) {
            return Err(Error::format(&path, format!("unexpected index shape {:?}", arr.shape)));
        }
        arr.to_i32(&path)?
            .into_iter()
            .map(|v| u32::try_from(v).map_err(|_| Error::format(&path, "negative index")))
            .collect()
    }
}

/// Reads a model written by [`save_model`]. Optimizer state starts from zero.
pub fn load_model<T: Scalar>(dir: impl AsRef<Path>) -> Result<SequentialModel<T>> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let text = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    let major = manifest.schema_version.split('.').next().unwrap_or("");
    if major != "1" {
        return Err(Error::format(
            &mpath,
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    if manifest.dtype != T::NPY_DESCR {
        return Err(Error::format(
            &mpath,
            format!(
                "archive dtype {} does not match requested {}",
                manifest.dtype,
                T::NPY_DESCR
            ),
        ));
    }
    let r = Reader { dir };
    let fmt = |e: Error| match e {
        Error::InvalidArgument(msg) | Error::Config(msg) => Error::format(&mpath, msg),
        other => other,
    };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (idx, e) in manifest.layers.iter().enumerate() {
        let act = e.activation.unwrap_or_default();
        let opt = e.optimizer.unwrap_or_default();
        let layer = match e.kind.as_str() {
            "sparse" => {
                let row_ptr = r.indices(e, "row_ptr", Some(e.n_out + 1))?;
                let col_idx = r.indices(e, "col_idx", None)?;
                let values = r.scalars::<T>(e, "values", &[col_idx.len()])?;
                let pattern = SparsityPattern::new(e.n_out, e.n_in, row_ptr, col_idx).map_err(fmt)?;
                let w = CsrMatrix::new(pattern, values).map_err(fmt)?;
                let bias = r.scalars(e, "bias", &[e.n_out])?;
                Layer::Sparse(SparseLinear::new(w, bias, act, opt).map_err(fmt)?)
            }
            "dense" | "masked_dense" => {
                let shape = [e.n_out, e.n_in];
                let w = DenseMatrix::from_vec(e.n_out, e.n_in, r.scalars(e, "weights", &shape)?).map_err(fmt)?;
                let bias = r.scalars(e, "bias", &[e.n_out])?;
                let mut l = DenseLinear::new(w, bias, act, opt).map_err(fmt)?;
                if e.kind == "masked_dense" {
                    let (path, arr) = r.array(e, "mask", &shape)?;
                    let bits = arr.to_u8(&path)?;
                    let mask = DenseMatrix::from_vec(
                        e.n_out,
                        e.n_in,
                        bits.iter()
                            .map(|&b| if b != 0 { T::one() } else { T::zero() })
                            .collect(),
                    )?;
                    l = l.with_mask(mask).map_err(fmt)?;
                }
                Layer::Dense(l)
            }
            "batch_norm" => {
                let n = [e.n_out];
                Layer::BatchNorm(
                    BatchNorm::from_parts(
                        r.scalars(e, "gamma", &n)?,
                        r.scalars(e, "beta", &n)?,
                        r.scalars(e, "running_mean", &n)?,
                        r.scalars(e, "running_var", &n)?,
                        opt,
                    )
                    .map_err(fmt)?,
                )
            }
            "dropout" => {
                let p = e.p.ok_or_else(|| Error::format(&mpath, "dropout layer lacks p"))?;
                Layer::Dropout(Dropout::new(p, Seed::default().stream(Stream::Dropout, idx as u64)).map_err(fmt)?)
            }
            "activation" => Layer::Activation(ActivationLayer::new(act)),
            other => return Err(Error::format(&mpath, format!("unknown layer kind '{other}'"))),
        };
        layers.push(layer);
    }
    SequentialModel::from_layers(layers, manifest.input_size, manifest.batch_size.max(1)).map_err(fmt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSize {
    pub layer: usize,
    pub kind: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub layers: Vec<LayerSize>,
    pub total_bytes: u64,
}

/// Payload bytes of the archive [`save_model`] would write, headers excluded.
/// Dense: `s·(n_in·n_out + n_out)`; sparse: `s·(2·nnz + (n_out + 1) + n_out)`
/// with `s` the scalar width (4 for `f32`) and 4-byte indices.
pub fn model_size_report<T: Scalar>(model: &SequentialModel<T>) -> Result<SizeReport> {
    let s = std::mem::size_of::<T>() as u64;
    let mut layers = Vec::new();
    for (idx, layer) in model.layers()?.iter().enumerate() {
        let bytes = match layer {
            Layer::Sparse(l) => {
                let (nnz, n_out) = (l.weights().nnz() as u64, l.n_out() as u64);
                s * nnz + 4 * nnz + 4 * (n_out + 1) + s * n_out
            }
            Layer::Dense(l) => {
                let (w, n_out) = ((l.n_in() * l.n_out()) as u64, l.n_out() as u64);
                s * (w + n_out) + if l.mask().is_some() { w } else { 0 }
            }
            Layer::BatchNorm(l) => 4 * s * l.features() as u64,
            Layer::Dropout(_) | Layer::Activation(_) => 0,
        };
        layers.push(LayerSize {
            layer: idx,
            kind: layer.kind().into(),
            bytes,
        });
    }
    let total_bytes = layers.iter().map(|l| l.bytes).sum();
    Ok(SizeReport { layers, total_bytes })
}
