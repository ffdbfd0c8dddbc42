//! C ABI over the csrnet library.
//!
//! Every function returns a [`CsrnetStatus`]; on failure
//! [`csrnet_last_error`] describes what went wrong on the calling thread.
//! Objects are opaque handles released with their `_free` function.
//! Matrices cross the boundary row-major as `features × examples`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use csrnet::data::{load_cifar10, load_model, one_hot, save_model, synthetic_blobs, BlobSpec, Dataset};
use csrnet::nn::{Activation, Layer, OptimizerSpec, SoftmaxCrossEntropy};
use csrnet::sparsity::{density_report, Seed, Stream};
use csrnet::train::{sgd_train, Backend, LayerSpec, LrSchedule, SequentialModel, TrainConfig};
use csrnet::{DenseMatrix, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsrnetStatus {
    Ok = 0,
    InvalidArgument = 1,
    State = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    NullPointer = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsrnetBackend {
    Sparse = 0,
    Masked = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsrnetActivation {
    None = 0,
    Relu = 1,
}

/// Opaque model handle.
pub struct CsrnetModel {
    inner: SequentialModel<f32>,
}

/// Opaque dataset handle.
pub struct CsrnetDataset {
    inner: Dataset<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CsrnetStatus {
    match e {
        Error::InvalidArgument(_) => CsrnetStatus::InvalidArgument,
        Error::State(_) => CsrnetStatus::State,
        Error::Config(_) => CsrnetStatus::Config,
        Error::Format { .. } => CsrnetStatus::Format,
        Error::Io { .. } => CsrnetStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult = Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> CsrnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsrnetStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            CsrnetStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            CsrnetStatus::InvalidArgument
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CsrnetStatus::Panic
        }
    }
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Arg("path is not valid UTF-8".into()))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn optimizer(momentum: f64, nesterov: bool) -> OptimizerSpec {
    if momentum == 0.0 {
        OptimizerSpec::GradientDescent
    } else {
        OptimizerSpec::Momentum { mu: momentum, nesterov }
    }
}

fn activation(a: u32) -> Result<Activation, Failure> {
    match a {
        x if x == CsrnetActivation::None as u32 => Ok(Activation::NoActivation),
        x if x == CsrnetActivation::Relu as u32 => Ok(Activation::ReLU),
        other => Err(Failure::Arg(format!("unknown activation {other}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn csrnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn csrnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `backend` is a [`CsrnetBackend`] value.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_new(backend: u32, out: *mut *mut CsrnetModel) -> CsrnetStatus {
    guard(|| {
        let backend = match backend {
            x if x == CsrnetBackend::Sparse as u32 => Backend::Sparse,
            x if x == CsrnetBackend::Masked as u32 => Backend::Masked,
            other => return Err(Failure::Arg(format!("unknown backend {other}"))),
        };
        write_out(
            out,
            CsrnetModel {
                inner: SequentialModel::new().with_backend(backend),
            },
        )
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_free(model: *mut CsrnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Appends a sparse layer. `act` is a [`CsrnetActivation`] value;
/// `momentum` 0 selects plain gradient descent.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_add_sparse(
    model: *mut CsrnetModel,
    units: usize,
    density: f64,
    act: u32,
    momentum: f64,
    nesterov: bool,
) -> CsrnetStatus {
    guard(|| {
        as_mut(model, "model")?.inner.add(LayerSpec::sparse(
            units,
            density,
            activation(act)?,
            optimizer(momentum, nesterov),
        ));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_add_dense(
    model: *mut CsrnetModel,
    units: usize,
    act: u32,
    momentum: f64,
    nesterov: bool,
) -> CsrnetStatus {
    guard(|| {
        as_mut(model, "model")?
            .inner
            .add(LayerSpec::dense(units, activation(act)?, optimizer(momentum, nesterov)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_add_batchnorm(model: *mut CsrnetModel) -> CsrnetStatus {
    guard(|| {
        as_mut(model, "model")?.inner.add(LayerSpec::batch_normalization());
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_add_dropout(model: *mut CsrnetModel, p: f64) -> CsrnetStatus {
    guard(|| {
        as_mut(model, "model")?.inner.add(LayerSpec::dropout(p));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_compile(
    model: *mut CsrnetModel,
    input_size: usize,
    batch_size: usize,
    seed: u64,
) -> CsrnetStatus {
    guard(|| {
        as_mut(model, "model")?
            .inner
            .compile(input_size, batch_size, Seed(seed))?;
        Ok(())
    })
}

/// Inference-mode forward pass of `cols` examples. `x` holds
/// `input_size × cols` values, `out` room for `output_size × cols`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_feedforward(
    model: *mut CsrnetModel,
    x: *const f32,
    rows: usize,
    cols: usize,
    out: *mut f32,
    out_len: usize,
) -> CsrnetStatus {
    guard(|| {
        let m = &mut as_mut(model, "model")?.inner;
        let x = DenseMatrix::from_vec(rows, cols, slice(x, rows * cols, "x")?.to_vec())?;
        let y = m.predict(&x)?;
        if out_len < y.len() {
            return Err(Failure::Arg(format!("output buffer holds {out_len}, need {}", y.len())));
        }
        if !y.is_empty() {
            if out.is_null() {
                return Err(Failure::Null("out"));
            }
            ptr::copy_nonoverlapping(y.as_slice().as_ptr(), out, y.len());
        }
        Ok(())
    })
}

/// Output width of a compiled model.
///
/// # Safety
/// `model` must be a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_output_size(model: *const CsrnetModel, out: *mut usize) -> CsrnetStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        m.layers()?;
        *as_mut(out, "out")? = m.output_size();
        Ok(())
    })
}

/// Global weight density (stored weights over dense weight count).
///
/// # Safety
/// `model` must be a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_density(model: *const CsrnetModel, out: *mut f64) -> CsrnetStatus {
    guard(|| {
        let r = density_report(&as_ref(model, "model")?.inner)?;
        *as_mut(out, "out")? = r.global_density;
        Ok(())
    })
}

/// Number of layers in a compiled model.
///
/// # Safety
/// `model` must be a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_layer_count(model: *const CsrnetModel, out: *mut usize) -> CsrnetStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(model, "model")?.inner.layers()?.len();
        Ok(())
    })
}

/// Copies layer `layer`'s weights as a dense `n_out × n_in` matrix.
/// `*written` receives the element count; pass a null `out` to query it.
///
/// # Safety
/// `out` must hold `out_len` floats when non-null; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_layer_weights(
    model: *const CsrnetModel,
    layer: usize,
    out: *mut f32,
    out_len: usize,
    written: *mut usize,
) -> CsrnetStatus {
    guard(|| {
        let layers = as_ref(model, "model")?.inner.layers()?;
        let l = layers
            .get(layer)
            .ok_or_else(|| Failure::Arg(format!("layer {layer} out of range ({} layers)", layers.len())))?;
        let w = match l {
            Layer::Sparse(s) => s.weights().to_dense(),
            Layer::Dense(d) => d.weights().clone(),
            _ => return Err(Failure::Arg(format!("layer {layer} has no weights"))),
        };
        *as_mut(written, "written")? = w.len();
        if out.is_null() {
            return Ok(());
        }
        if out_len < w.len() {
            return Err(Failure::Arg(format!("output buffer holds {out_len}, need {}", w.len())));
        }
        ptr::copy_nonoverlapping(w.as_slice().as_ptr(), out, w.len());
        Ok(())
    })
}

/// Gaussian-blob classification data.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn csrnet_dataset_synthetic(
    classes: usize,
    features: usize,
    train_per_class: usize,
    test_per_class: usize,
    spread: f64,
    seed: u64,
    out: *mut *mut CsrnetDataset,
) -> CsrnetStatus {
    guard(|| {
        let mut spec = BlobSpec::new(classes, features, train_per_class, spread);
        spec.test_per_class = test_per_class;
        let ds = synthetic_blobs(&spec, &mut Seed(seed).stream(Stream::Data, 0))?;
        write_out(out, CsrnetDataset { inner: ds })
    })
}

/// Dataset from caller arrays: `x_*` are `features × n` row-major, labels
/// are class indices below `classes`.
///
/// # Safety
/// Arrays must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn csrnet_dataset_from_arrays(
    features: usize,
    classes: usize,
    x_train: *const f32,
    labels_train: *const u32,
    n_train: usize,
    x_test: *const f32,
    labels_test: *const u32,
    n_test: usize,
    out: *mut *mut CsrnetDataset,
) -> CsrnetStatus {
    guard(|| {
        let labels = |p, n, what| -> Result<Vec<usize>, Failure> {
            Ok(slice(p, n, what)?.iter().map(|&l| l as usize).collect())
        };
        let ds = Dataset::new(
            DenseMatrix::from_vec(
                features,
                n_train,
                slice(x_train, features * n_train, "x_train")?.to_vec(),
            )?,
            one_hot(&labels(labels_train, n_train, "labels_train")?, classes)?,
            DenseMatrix::from_vec(features, n_test, slice(x_test, features * n_test, "x_test")?.to_vec())?,
            one_hot(&labels(labels_test, n_test, "labels_test")?, classes)?,
        )?;
        write_out(out, CsrnetDataset { inner: ds })
    })
}

/// Binary CIFAR-10 from a directory holding the `data_batch_*.bin` files.
///
/// # Safety
/// `dir` must be a NUL-terminated string, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn csrnet_dataset_load_cifar10(dir: *const c_char, out: *mut *mut CsrnetDataset) -> CsrnetStatus {
    guard(|| {
        let ds = load_cifar10(path_arg(dir)?)?;
        write_out(out, CsrnetDataset { inner: ds })
    })
}

/// # Safety
/// `ds` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn csrnet_dataset_free(ds: *mut CsrnetDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains with a constant learning rate and softmax cross-entropy.
/// Optional `train_loss` / `test_acc` receive one value per epoch.
///
/// # Safety
/// Handles must be live; non-null metric arrays must hold `epochs` values.
#[no_mangle]
pub unsafe extern "C" fn csrnet_train(
    model: *mut CsrnetModel,
    ds: *const CsrnetDataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    shuffle: bool,
    train_loss: *mut f64,
    test_acc: *mut f64,
) -> CsrnetStatus {
    guard(|| {
        let m = &mut as_mut(model, "model")?.inner;
        let d = &as_ref(ds, "dataset")?.inner;
        let config = TrainConfig {
            epochs,
            batch_size,
            shuffle,
            seed: Seed(seed),
            augment: false,
            evaluate: !test_acc.is_null(),
        };
        let history = sgd_train(m, d, &SoftmaxCrossEntropy, &LrSchedule::constant(lr), &config)?;
        for (i, e) in history.iter().enumerate() {
            if !train_loss.is_null() {
                *train_loss.add(i) = e.train_loss;
            }
            if !test_acc.is_null() {
                *test_acc.add(i) = e.test_acc.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle, `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_save(model: *const CsrnetModel, dir: *const c_char) -> CsrnetStatus {
    guard(|| {
        save_model(&as_ref(model, "model")?.inner, path_arg(dir)?)?;
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn csrnet_model_load(dir: *const c_char, out: *mut *mut CsrnetModel) -> CsrnetStatus {
    guard(|| {
        let inner = load_model(path_arg(dir)?)?;
        write_out(out, CsrnetModel { inner })
    })
}
