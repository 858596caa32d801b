//! C ABI over the debias toolkit.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_from_rows` functions and released with the matching `*_free`.
//! Every fallible call returns a `DebiasStatus`; on failure the message is
//! available from `debias_last_error()` on the same thread until the next
//! failing call. Matrices are dense, row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use debias::inlp::{self, ClassifierConfig, InlpConfig, Projection, ProjectionMode};
use debias::labeled::{self, LabeledVectorSet};
use debias::space::{self, EmbeddingSpace};
use debias::Error;

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DebiasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    UnknownToken = 6,
    Degenerate = 7,
    Panic = 8,
}

/// How successive nullspace projections are combined.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DebiasProjectionMode {
    OrthogonalBasis = 0,
    Product = 1,
}

/// INLP settings. Obtain defaults from `debias_inlp_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DebiasInlpConfig {
    pub max_classifiers: usize,
    pub stop_epsilon: f64,
    pub mode: DebiasProjectionMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub warm_start: bool,
}

/// Labeled vectors (opaque).
pub struct DebiasLabeledSet(LabeledVectorSet);

/// Embedding space (opaque).
pub struct DebiasSpace(EmbeddingSpace);

/// Learned projection (opaque).
pub struct DebiasProjection(Projection);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> DebiasStatus {
    match err {
        Error::Io { .. } => DebiasStatus::Io,
        Error::Parse { .. } => DebiasStatus::Parse,
        Error::DimensionMismatch { .. } => DebiasStatus::DimensionMismatch,
        Error::UnknownToken(_) => DebiasStatus::UnknownToken,
        Error::Degenerate(_) | Error::RankDeficient(_) | Error::ZeroVector(_) => DebiasStatus::Degenerate,
        Error::InvalidArgument(_) | Error::DuplicateToken(_) => DebiasStatus::InvalidArgument,
    }
}

struct Fail(DebiasStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DebiasStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DebiasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DebiasStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DebiasStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Fail(DebiasStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn checked_len(n: usize, d: usize) -> Result<usize, Fail> {
    n.checked_mul(d)
        .ok_or_else(|| Fail(DebiasStatus::InvalidArgument, "matrix size overflows".into()))
}

/// Message of the last failed call on this thread; empty if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn debias_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn debias_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn debias_inlp_config_default() -> DebiasInlpConfig {
    let c = InlpConfig::default();
    DebiasInlpConfig {
        max_classifiers: c.max_classifiers,
        stop_epsilon: c.stop_epsilon,
        mode: DebiasProjectionMode::OrthogonalBasis,
        epochs: c.classifier.epochs,
        learning_rate: c.classifier.learning_rate,
        l2: c.classifier.l2,
        seed: c.classifier.seed,
        warm_start: c.warm_start,
    }
}

impl From<&DebiasInlpConfig> for InlpConfig {
    fn from(c: &DebiasInlpConfig) -> Self {
        InlpConfig {
            max_classifiers: c.max_classifiers,
            stop_epsilon: c.stop_epsilon,
            mode: match c.mode {
                DebiasProjectionMode::OrthogonalBasis => ProjectionMode::OrthogonalBasis,
                DebiasProjectionMode::Product => ProjectionMode::Product,
            },
            classifier: ClassifierConfig {
                epochs: c.epochs,
                learning_rate: c.learning_rate,
                l2: c.l2,
                seed: c.seed,
            },
            warm_start: c.warm_start,
        }
    }
}

// ---- labeled sets ----

/// Loads a labeled vector file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn debias_labeled_load(path: *const c_char, out: *mut *mut DebiasLabeledSet) -> DebiasStatus {
    guard(|| {
        let set = labeled::load_labeled(path_arg(path)?)?;
        put(out, DebiasLabeledSet(set))
    })
}

/// Builds a binary labeled set from `n` row-major `d`-dimensional vectors
/// and labels in {0, 1}. Row ids are `0..n`.
///
/// # Safety
/// `data` must hold `n*d` doubles, `labels` `n` values, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn debias_labeled_from_rows(
    data: *const f64,
    n: usize,
    d: usize,
    labels: *const u32,
    out: *mut *mut DebiasLabeledSet,
) -> DebiasStatus {
    guard(|| {
        let data = slice(data, checked_len(n, d)?, "data")?.to_vec();
        let labels: Vec<usize> = slice(labels, n, "labels")?.iter().map(|&l| l as usize).collect();
        let ids = (0..n).map(|i| i.to_string()).collect();
        let set = LabeledVectorSet::binary(ids, data, d, labels)?;
        put(out, DebiasLabeledSet(set))
    })
}

/// # Safety
/// `set` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn debias_labeled_free(set: *mut DebiasLabeledSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of vectors; 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_labeled_len(set: *const DebiasLabeledSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// Vector dimension; 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_labeled_dim(set: *const DebiasLabeledSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.dim())
}

// ---- embedding spaces ----

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn debias_space_load(path: *const c_char, out: *mut *mut DebiasSpace) -> DebiasStatus {
    guard(|| {
        let s = space::load_space(path_arg(path)?)?;
        put(out, DebiasSpace(s))
    })
}

/// # Safety
/// `space` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn debias_space_save(space: *const DebiasSpace, path: *const c_char) -> DebiasStatus {
    guard(|| {
        let s = handle(space, "space")?;
        Ok(space::save_space(&s.0, path_arg(path)?)?)
    })
}

/// # Safety
/// `space` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn debias_space_free(space: *mut DebiasSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_space_len(space: *const DebiasSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_space_dim(space: *const DebiasSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.dim())
}

// ---- projections ----

/// Runs INLP on a binary train set, stopping on `dev`.
///
/// # Safety
/// Handles must be live; `config` may be null for defaults; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn debias_run_inlp(
    train: *const DebiasLabeledSet,
    dev: *const DebiasLabeledSet,
    config: *const DebiasInlpConfig,
    out: *mut *mut DebiasProjection,
) -> DebiasStatus {
    guard(|| {
        let train = handle(train, "train")?;
        let dev = handle(dev, "dev")?;
        let cfg = match config.as_ref() {
            Some(c) => InlpConfig::from(c),
            None => InlpConfig::default(),
        };
        let proj = inlp::run_inlp(&train.0, &dev.0, &cfg)?;
        put(out, DebiasProjection(proj))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_load(path: *const c_char, out: *mut *mut DebiasProjection) -> DebiasStatus {
    guard(|| {
        let p = inlp::load_projection(path_arg(path)?)?;
        put(out, DebiasProjection(p))
    })
}

/// # Safety
/// `proj` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_save(proj: *const DebiasProjection, path: *const c_char) -> DebiasStatus {
    guard(|| {
        let p = handle(proj, "projection")?;
        Ok(inlp::save_projection(&p.0, path_arg(path)?)?)
    })
}

/// # Safety
/// `proj` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_free(proj: *mut DebiasProjection) {
    if !proj.is_null() {
        drop(Box::from_raw(proj));
    }
}

/// # Safety
/// `proj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_dim(proj: *const DebiasProjection) -> usize {
    proj.as_ref().map_or(0, |p| p.0.dim())
}

/// Number of removed directions.
///
/// # Safety
/// `proj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_removed(proj: *const DebiasProjection) -> usize {
    proj.as_ref().map_or(0, |p| p.0.dim() - p.0.rank())
}

/// Classifiers trained, including the one that triggered the stop.
///
/// # Safety
/// `proj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_iterations(proj: *const DebiasProjection) -> usize {
    proj.as_ref().map_or(0, |p| p.0.iterations)
}

/// # Safety
/// `proj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_converged(proj: *const DebiasProjection) -> bool {
    proj.as_ref().is_some_and(|p| p.0.converged)
}

/// Copies the `d×d` matrix into `out` (row-major, `len` ≥ d*d).
///
/// # Safety
/// `proj` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_matrix(
    proj: *const DebiasProjection,
    out: *mut f64,
    len: usize,
) -> DebiasStatus {
    guard(|| {
        let p = &handle(proj, "projection")?.0;
        let d = p.dim();
        if len < d * d {
            return Err(Fail(
                DebiasStatus::InvalidArgument,
                format!("buffer holds {len}, need {}", d * d),
            ));
        }
        let out = slice_mut(out, d * d, "out")?;
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = p.matrix[(i, j)];
            }
        }
        Ok(())
    })
}

/// Projects `n` row-major vectors of dimension `d` into `out` (`n*d`).
///
/// # Safety
/// `rows` and `out` must each hold `n*d` doubles.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_apply(
    proj: *const DebiasProjection,
    rows: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> DebiasStatus {
    guard(|| {
        let p = &handle(proj, "projection")?.0;
        let len = checked_len(n, d)?;
        let projected = p.apply_rows(slice(rows, len, "rows")?, d)?;
        slice_mut(out, len, "out")?.copy_from_slice(&projected);
        Ok(())
    })
}

/// Projects every vector of a space into a new space handle.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn debias_projection_apply_space(
    proj: *const DebiasProjection,
    space: *const DebiasSpace,
    out: *mut *mut DebiasSpace,
) -> DebiasStatus {
    guard(|| {
        let p = &handle(proj, "projection")?.0;
        let s = &handle(space, "space")?.0;
        let projected = p.apply_space(s)?;
        put(out, DebiasSpace(projected))
    })
}

/// Writes the `d×d` projection onto the nullspace of the `r×d` matrix `w`.
///
/// # Safety
/// `w` must hold `r*d` doubles and `out` `d*d`.
#[no_mangle]
pub unsafe extern "C" fn debias_nullspace_projection(w: *const f64, r: usize, d: usize, out: *mut f64) -> DebiasStatus {
    guard(|| {
        if d == 0 {
            return Err(Fail(DebiasStatus::InvalidArgument, "dimension must be >= 1".into()));
        }
        let w = nalgebra::DMatrix::from_row_slice(r, d, slice(w, checked_len(r, d)?, "w")?);
        let p = inlp::nullspace_projection(&w)?;
        let out = slice_mut(out, checked_len(d, d)?, "out")?;
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = p[(i, j)];
            }
        }
        Ok(())
    })
}
