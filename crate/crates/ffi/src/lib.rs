//! C ABI for building, loading, saving and running kanlab models.
//!
//! Every fallible call returns a [`KanStatus`]; on failure the message is
//! available from [`kan_last_error`] on the same thread. Models are opaque
//! [`KanModel`] handles released with [`kan_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kanlab::flops;
use kanlab::layers::checkpoint;
use kanlab::phase::{build_grid_phases, scale_ratio, ScaleConstants};
use kanlab::{KanError, ModelKind, ModelStack, Tensor};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Checkpoint = 5,
    Numeric = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KanModelKind {
    SineKan = 0,
    FourierKan = 1,
    BSplineKan = 2,
    Mlp = 3,
}

// Kinds cross the boundary as plain integers so an out-of-range value
// from C is an error rather than an invalid Rust enum.
fn model_kind(k: u32) -> Result<ModelKind, KanStatus> {
    match k {
        k if k == KanModelKind::SineKan as u32 => Ok(ModelKind::SineKan),
        k if k == KanModelKind::FourierKan as u32 => Ok(ModelKind::FourierKan),
        k if k == KanModelKind::BSplineKan as u32 => Ok(ModelKind::BSplineKan),
        k if k == KanModelKind::Mlp as u32 => Ok(ModelKind::Mlp),
        _ => Err(fail(KanStatus::InvalidArgument, format!("unknown model kind {k}"))),
    }
}

/// Opaque model handle.
pub struct KanModel {
    inner: ModelStack,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &KanError) -> KanStatus {
    match e {
        KanError::Shape { .. } => KanStatus::Shape,
        KanError::Io(_) | KanError::Data { .. } => KanStatus::Io,
        KanError::Checkpoint(_) => KanStatus::Checkpoint,
        KanError::NonFinite { .. } | KanError::Divergence { .. } => KanStatus::Numeric,
        _ => KanStatus::InvalidArgument,
    }
}

fn fail(status: KanStatus, msg: impl Into<String>) -> KanStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), KanStatus>) -> KanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KanStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(KanStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: kanlab::Result<T>) -> Result<T, KanStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), KanStatus> {
    if p.is_null() {
        Err(fail(KanStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, KanStatus> {
    non_null(p, "path")?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(KanStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a freshly initialised model. `kind` is a [`KanModelKind`] value.
///
/// # Safety
/// `widths` must point to `n_widths` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kan_model_new(
    kind: u32,
    widths: *const usize,
    n_widths: usize,
    grid: usize,
    order: usize,
    seed: u64,
    out: *mut *mut KanModel,
) -> KanStatus {
    guard(|| {
        non_null(widths, "widths")?;
        non_null(out, "out")?;
        let w = std::slice::from_raw_parts(widths, n_widths);
        let m = lib(ModelStack::build(model_kind(kind)?, w, grid, order, seed))?;
        *out = Box::into_raw(Box::new(KanModel { inner: m }));
        Ok(())
    })
}

/// Loads a checkpoint written by [`kan_model_save`] or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kan_model_load(path: *const c_char, out: *mut *mut KanModel) -> KanStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = path_arg(path)?;
        let m = lib(checkpoint::load(&p))?;
        *out = Box::into_raw(Box::new(KanModel { inner: m }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kan_model_save(model: *const KanModel, path: *const c_char) -> KanStatus {
    guard(|| {
        non_null(model, "model")?;
        let p = path_arg(path)?;
        lib(checkpoint::save(&(*model).inner, &p))
    })
}

/// Runs inference on `batch` row-major rows of `d_in` features, writing
/// `batch * d_out` values to `out`.
///
/// # Safety
/// `x` must hold `x_len` values and `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn kan_model_forward(
    model: *const KanModel,
    x: *const f64,
    x_len: usize,
    batch: usize,
    out: *mut f64,
    out_len: usize,
) -> KanStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(x, "x")?;
        non_null(out, "out")?;
        let m = &(*model).inner;
        if batch == 0 || x_len != batch * m.d_in() {
            return Err(fail(
                KanStatus::Shape,
                format!("x holds {x_len} values, expected {batch} x {}", m.d_in()),
            ));
        }
        if out_len != batch * m.d_out() {
            return Err(fail(
                KanStatus::Shape,
                format!("out holds {out_len} values, expected {batch} x {}", m.d_out()),
            ));
        }
        let xs = std::slice::from_raw_parts(x, x_len).to_vec();
        let t = lib(Tensor::new(vec![batch, m.d_in()], xs))?;
        let y = lib(m.forward(&t))?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(y.data());
        Ok(())
    })
}

/// Input width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kan_model_d_in(model: *const KanModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.d_in())
}

/// Output width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kan_model_d_out(model: *const KanModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.d_out())
}

/// Number of layers, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kan_model_num_layers(model: *const KanModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.layers().len())
}

/// Trainable parameter count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kan_model_param_count(model: *const KanModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.param_count())
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kan_model_free(model: *mut KanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Modeled forward FLOPs of one layer. `order` is ignored except for
/// B-SplineKAN; `grid` is ignored for MLP.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kan_layer_flops(
    kind: u32,
    batch: u64,
    d_in: u64,
    d_out: u64,
    grid: u64,
    order: u64,
    out: *mut u64,
) -> KanStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lib(flops::layer_flops(model_kind(kind)?, batch, d_in, d_out, grid, order))?;
        Ok(())
    })
}

/// Phase scale ratio `R(g)` under the default constants.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kan_scale_ratio(g: usize, out: *mut f64) -> KanStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lib(scale_ratio(g, &ScaleConstants::default()))?;
        Ok(())
    })
}

/// Writes the `g` grid phases under the default constants.
///
/// # Safety
/// `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn kan_grid_phases(g: usize, out: *mut f64, out_len: usize) -> KanStatus {
    guard(|| {
        non_null(out, "out")?;
        if out_len != g {
            return Err(fail(KanStatus::Shape, format!("out holds {out_len} values, expected {g}")));
        }
        let p = lib(build_grid_phases(g, &ScaleConstants::default()))?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&p);
        Ok(())
    })
}
