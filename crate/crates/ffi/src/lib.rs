//! C interface to a trained attribute-inversion generator, the attribute
//! table loader and the two evaluation metrics.
//!
//! Every function returns an [`AttrinvStatus`]. On failure a description is
//! kept per thread and can be read with [`attrinv_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use attrinv::data::{preprocess, AttributeTable, RawImage};
use attrinv::generator::Generator;
use attrinv::metrics::{compute_dfn, compute_fid, Matrix};
use attrinv::trainer::load_checkpoint;
use attrinv::{Error, ImageTensor};
use candle_core::Device;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrinvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Shape = 5,
    Domain = 6,
    Numeric = 7,
    Checkpoint = 8,
    Image = 9,
    Internal = 10,
    Panic = 11,
}

/// Trained generator loaded from a checkpoint.
pub struct AttrinvGenerator {
    generator: Generator,
}

/// Parsed attribute list.
pub struct AttrinvAttributeTable {
    table: AttributeTable,
}

/// Summary statistics of the per-image DFN ratios.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AttrinvDfnSummary {
    pub mean: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub iqr: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AttrinvStatus {
    match err {
        Error::Io { .. } => AttrinvStatus::Io,
        Error::Parse { .. } => AttrinvStatus::Parse,
        Error::Shape(_) => AttrinvStatus::Shape,
        Error::Config(_) => AttrinvStatus::InvalidArgument,
        Error::Domain(_) => AttrinvStatus::Domain,
        Error::NonFinite { .. } | Error::Numeric(_) => AttrinvStatus::Numeric,
        Error::Checkpoint(_) => AttrinvStatus::Checkpoint,
        Error::Image { .. } => AttrinvStatus::Image,
        _ => AttrinvStatus::Internal,
    }
}

struct Failure(AttrinvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AttrinvStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(AttrinvStatus::InvalidArgument, message.into())
}

/// Runs `body`, converting errors and panics into a status plus a stored
/// message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AttrinvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AttrinvStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            AttrinvStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Message describing the last failed call on this thread, or NULL if the
/// last call succeeded. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn attrinv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads the generator stored in a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attrinv_generator_load(
    path: *const c_char,
    out: *mut *mut AttrinvGenerator,
) -> AttrinvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let state = load_checkpoint(&path, &Device::Cpu)?;
        let handle = Box::new(AttrinvGenerator {
            generator: state.into_generator(),
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Side length of the square images the generator produces; 0 for NULL.
///
/// # Safety
/// `generator` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn attrinv_generator_resolution(generator: *const AttrinvGenerator) -> usize {
    generator.as_ref().map_or(0, |g| g.generator.config().resolution)
}

/// Translates one interleaved RGB8 image of any size. The input is center
/// cropped and resampled to the generator resolution `r`; `out_inverted`
/// receives `G(x)` as `r * r * 3` RGB8 bytes. When `out_cycle` is not NULL
/// it receives `G(G(x))` in the same layout. `out_len` is the capacity of
/// each output buffer.
///
/// # Safety
/// `pixels` must hold `height * width * 3` bytes; output buffers must hold
/// `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn attrinv_generator_invert(
    generator: *const AttrinvGenerator,
    pixels: *const u8,
    height: usize,
    width: usize,
    out_inverted: *mut u8,
    out_cycle: *mut u8,
    out_len: usize,
) -> AttrinvStatus {
    guard(|| {
        let g = &generator.as_ref().ok_or_else(|| null("generator"))?.generator;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        if out_inverted.is_null() {
            return Err(null("out_inverted"));
        }
        let r = g.config().resolution;
        if out_len < r * r * 3 {
            return Err(invalid(format!("output buffers need {} bytes, got {out_len}", r * r * 3)));
        }
        let len = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| invalid("image dimensions overflow"))?;
        let data = std::slice::from_raw_parts(pixels, len).to_vec();
        let x = preprocess(&RawImage::new(height, width, 3, data)?, r)?;
        let t = x
            .to_tensor(&Device::Cpu, g.params().dtype())
            .and_then(|t| Ok(t.unsqueeze(0)?))?;
        let (x1, x0) = g.cycle(&t)?;
        let write = |t: &candle_core::Tensor, dst: *mut u8| -> Result<(), Failure> {
            let img = ImageTensor::from_tensor(&t.squeeze(0).map_err(Error::from)?)?;
            let bytes = img.to_rgb8().into_raw();
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), dst, bytes.len());
            Ok(())
        };
        write(&x1, out_inverted)?;
        if !out_cycle.is_null() {
            write(&x0, out_cycle)?;
        }
        Ok(())
    })
}

/// Releases a generator handle. NULL is ignored.
///
/// # Safety
/// `generator` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn attrinv_generator_free(generator: *mut AttrinvGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

/// Parses an attribute list in the CelebA text layout.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attrinv_attribute_table_load(
    path: *const c_char,
    out: *mut *mut AttrinvAttributeTable,
) -> AttrinvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let table = AttributeTable::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AttrinvAttributeTable { table }));
        Ok(())
    })
}

/// Number of image rows; 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn attrinv_attribute_table_rows(table: *const AttrinvAttributeTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.len())
}

/// Number of attribute columns; 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn attrinv_attribute_table_columns(table: *const AttrinvAttributeTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.names().len())
}

/// Writes the 0/1 label of `row` for attribute `column` into `out`.
///
/// # Safety
/// `table` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn attrinv_attribute_table_label(
    table: *const AttrinvAttributeTable,
    row: usize,
    column: usize,
    out: *mut u8,
) -> AttrinvStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.table;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = t
            .rows()
            .get(row)
            .ok_or_else(|| invalid(format!("row {row} out of range ({} rows)", t.len())))?;
        *out = *r
            .labels
            .get(column)
            .ok_or_else(|| invalid(format!("column {column} out of range ({} columns)", r.labels.len())))?;
        Ok(())
    })
}

/// Releases a table handle. NULL is ignored.
///
/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn attrinv_attribute_table_free(table: *mut AttrinvAttributeTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

unsafe fn matrix_arg(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<Matrix, Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid(format!("{what} dimensions overflow")))?;
    Ok(Matrix::from_row_slice(rows, cols, std::slice::from_raw_parts(data, len)))
}

/// DFN statistics for `n` paired embeddings of width `dim`, both given
/// row-major.
///
/// # Safety
/// `real` and `generated` must each hold `n * dim` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn attrinv_dfn(
    real: *const f64,
    generated: *const f64,
    n: usize,
    dim: usize,
    out: *mut AttrinvDfnSummary,
) -> AttrinvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = matrix_arg(real, n, dim, "real")?;
        let b = matrix_arg(generated, n, dim, "generated")?;
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let r = compute_dfn(&a, &b, &ids)?;
        *out = AttrinvDfnSummary {
            mean: r.mean,
            q25: r.q25,
            q50: r.q50,
            q75: r.q75,
            iqr: r.iqr,
        };
        Ok(())
    })
}

/// Fréchet distance between Gaussian fits of two row-major feature sets of
/// width `dim`, with `epsilon` added to both covariance diagonals.
///
/// # Safety
/// `real` must hold `n_real * dim` values, `generated` `n_generated * dim`;
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn attrinv_fid(
    real: *const f64,
    n_real: usize,
    generated: *const f64,
    n_generated: usize,
    dim: usize,
    epsilon: f64,
    out: *mut f64,
) -> AttrinvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(invalid(format!("epsilon {epsilon} must be finite and non-negative")));
        }
        let a = matrix_arg(real, n_real, dim, "real")?;
        let b = matrix_arg(generated, n_generated, dim, "generated")?;
        *out = compute_fid(&a, &b, epsilon)?.value;
        Ok(())
    })
}
