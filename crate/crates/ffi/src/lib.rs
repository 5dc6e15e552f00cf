//! C ABI over the geometry and shape-model kernels.
//!
//! Conventions:
//! - Constructors return an opaque handle, or null on failure.
//! - Fallible operations return a [`SpicorrStatus`]; results are written
//!   through out-pointers only on `Ok`.
//! - Point buffers are row-major xyz triples (`3 * count` doubles); face
//!   buffers are vertex-index triples (`3 * count` uint32).
//! - The most recent failure message is stored per thread and copied out
//!   by `spicorr_last_error`.
//! - Handles are not thread-safe; share them across threads only with
//!   external synchronization.
//!
//! The matching header is generated into `include/spicorr.h` at build
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe, UnwindSafe};

use spicorr::error::Error;
use spicorr::eval::{
    compactness, fit_pca, generalization, pearson, specificity, PcaShapeModel,
};
use spicorr::geometry::{
    chamfer_distance, point_to_mesh_distance, surface_to_surface_distance, ChamferMode, PointSet,
    SurfaceMesh,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpicorrStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// Inputs violated the operation's preconditions.
    InvalidInput = 2,
    /// Structurally valid but numerically degenerate inputs.
    Degenerate = 3,
    /// The quantity does not exist for these inputs (e.g. correlation of
    /// a constant sequence).
    Undefined = 4,
    /// Unexpected internal failure; see `spicorr_last_error`.
    Internal = 5,
}

/// Chamfer distance flavor.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpicorrChamferMode {
    /// Mean Euclidean nearest-neighbor distance, both directions.
    L1Point = 0,
    /// Mean squared Euclidean nearest-neighbor distance, both directions.
    SquaredL2Point = 1,
}

pub struct SpicorrPoints {
    inner: PointSet,
}

pub struct SpicorrMesh {
    inner: SurfaceMesh,
}

pub struct SpicorrPca {
    inner: PcaShapeModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs stripped");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpicorrStatus {
    match e {
        Error::InvalidInput(_) => SpicorrStatus::InvalidInput,
        Error::Degenerate(_) => SpicorrStatus::Degenerate,
        _ => SpicorrStatus::Internal,
    }
}

fn fail(e: &Error) -> SpicorrStatus {
    set_error(e.to_string());
    status_of(e)
}

fn null_arg(what: &str) -> SpicorrStatus {
    set_error(format!("null argument: {what}"));
    SpicorrStatus::NullArgument
}

/// Runs `f`, converting panics into `Internal` so unwinding never crosses
/// the ABI boundary.
fn guarded<F: FnOnce() -> SpicorrStatus + UnwindSafe>(f: F) -> SpicorrStatus {
    match catch_unwind(f) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            SpicorrStatus::Internal
        }
    }
}

fn guarded_ptr<T, F: FnOnce() -> *mut T + UnwindSafe>(f: F) -> *mut T {
    match catch_unwind(f) {
        Ok(p) => p,
        Err(_) => {
            set_error("internal panic".to_string());
            std::ptr::null_mut()
        }
    }
}

/// Version of the library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spicorr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the most recent error message on this thread into `buf`
/// (truncating to `cap - 1` bytes plus a NUL) and returns the full
/// message length including the NUL, or 0 when no error is stored.
/// Passing a null `buf` or zero `cap` just queries the length.
///
/// # Safety
/// `buf`, when non-null, must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn spicorr_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let stored = e.borrow();
        let Some(msg) = stored.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            // Guarantee termination even when truncated.
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

unsafe fn slice_from<'a, T>(ptr: *const T, len: usize) -> &'a [T] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(ptr, len)
    }
}

/// Builds a point set from `count` xyz triples. Returns null when the
/// buffer is null (for nonzero `count`) or any coordinate is non-finite.
///
/// # Safety
/// `xyz` must point to `3 * count` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn spicorr_points_new(xyz: *const f64, count: usize) -> *mut SpicorrPoints {
    if xyz.is_null() && count > 0 {
        null_arg("xyz");
        return std::ptr::null_mut();
    }
    let flat = slice_from(xyz, 3 * count);
    guarded_ptr(move || match PointSet::from_flat(flat) {
        Ok(inner) => Box::into_raw(Box::new(SpicorrPoints { inner })),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    })
}

/// Frees a point set; null is a no-op.
///
/// # Safety
/// `p` must be a pointer from `spicorr_points_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spicorr_points_free(p: *mut SpicorrPoints) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of points in the set; 0 for null.
///
/// # Safety
/// `p` must be null or a live points handle.
#[no_mangle]
pub unsafe extern "C" fn spicorr_points_len(p: *const SpicorrPoints) -> usize {
    if p.is_null() {
        0
    } else {
        (*p).inner.len()
    }
}

/// Builds a triangle mesh from `vertex_count` xyz triples and
/// `face_count` index triples. Returns null on invalid topology
/// (out-of-range indices, fewer than 4 vertices, no faces).
///
/// # Safety
/// `xyz` must point to `3 * vertex_count` doubles and `faces` to
/// `3 * face_count` uint32 values.
#[no_mangle]
pub unsafe extern "C" fn spicorr_mesh_new(
    xyz: *const f64,
    vertex_count: usize,
    faces: *const u32,
    face_count: usize,
) -> *mut SpicorrMesh {
    if (xyz.is_null() && vertex_count > 0) || (faces.is_null() && face_count > 0) {
        null_arg("xyz/faces");
        return std::ptr::null_mut();
    }
    let flat = slice_from(xyz, 3 * vertex_count);
    let fidx = slice_from(faces, 3 * face_count);
    guarded_ptr(move || {
        let vertices = match PointSet::from_flat(flat) {
            Ok(p) => p.points,
            Err(e) => {
                fail(&e);
                return std::ptr::null_mut();
            }
        };
        let tris: Vec<[usize; 3]> = fidx
            .chunks_exact(3)
            .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
            .collect();
        match SurfaceMesh::new(vertices, tris) {
            Ok(inner) => Box::into_raw(Box::new(SpicorrMesh { inner })),
            Err(e) => {
                fail(&e);
                std::ptr::null_mut()
            }
        }
    })
}

/// Frees a mesh; null is a no-op.
///
/// # Safety
/// `m` must be a pointer from `spicorr_mesh_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spicorr_mesh_free(m: *mut SpicorrMesh) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Symmetric Chamfer distance between two point sets.
///
/// # Safety
/// `a` and `b` must be live points handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_chamfer_distance(
    a: *const SpicorrPoints,
    b: *const SpicorrPoints,
    mode: SpicorrChamferMode,
    out: *mut f64,
) -> SpicorrStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return null_arg("a/b/out");
    }
    let (a, b) = (&(*a).inner, &(*b).inner);
    guarded(AssertUnwindSafe(move || {
        let m = match mode {
            SpicorrChamferMode::L1Point => ChamferMode::L1Point,
            SpicorrChamferMode::SquaredL2Point => ChamferMode::SquaredL2Point,
        };
        match chamfer_distance(a, b, m) {
            Ok(d) => {
                *out = d;
                SpicorrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// Mean distance from each point to the mesh surface.
///
/// # Safety
/// `points` and `mesh` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_point_to_mesh_distance(
    points: *const SpicorrPoints,
    mesh: *const SpicorrMesh,
    out: *mut f64,
) -> SpicorrStatus {
    if points.is_null() || mesh.is_null() || out.is_null() {
        return null_arg("points/mesh/out");
    }
    let (p, m) = (&(*points).inner, &(*mesh).inner);
    guarded(AssertUnwindSafe(move || match point_to_mesh_distance(p, m) {
        Ok(d) => {
            *out = d;
            SpicorrStatus::Ok
        }
        Err(e) => fail(&e),
    }))
}

/// Surface-to-surface distance: the mean mesh is warped by the landmark
/// map `mean_corr -> predicted_corr` and compared against `truth`.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_surface_to_surface_distance(
    truth: *const SpicorrMesh,
    predicted_corr: *const SpicorrPoints,
    mean_corr: *const SpicorrPoints,
    mean_mesh: *const SpicorrMesh,
    out: *mut f64,
) -> SpicorrStatus {
    if truth.is_null()
        || predicted_corr.is_null()
        || mean_corr.is_null()
        || mean_mesh.is_null()
        || out.is_null()
    {
        return null_arg("truth/predicted_corr/mean_corr/mean_mesh/out");
    }
    let (t, p, c, m) = (
        &(*truth).inner,
        &(*predicted_corr).inner,
        &(*mean_corr).inner,
        &(*mean_mesh).inner,
    );
    guarded(AssertUnwindSafe(
        move || match surface_to_surface_distance(t, p, c, m) {
            Ok(d) => {
                *out = d;
                SpicorrStatus::Ok
            }
            Err(e) => fail(&e),
        },
    ))
}

/// Pearson correlation of two equally long sequences. Returns
/// `Undefined` when either sequence is constant or shorter than 2.
///
/// # Safety
/// `x` and `y` must point to `n` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pearson(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut f64,
) -> SpicorrStatus {
    if (x.is_null() || y.is_null()) && n > 0 {
        return null_arg("x/y");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let (xs, ys) = (slice_from(x, n), slice_from(y, n));
    guarded(AssertUnwindSafe(move || match pearson(xs, ys) {
        Some(r) => {
            *out = r;
            SpicorrStatus::Ok
        }
        None => {
            set_error("correlation undefined for these sequences".to_string());
            SpicorrStatus::Undefined
        }
    }))
}

unsafe fn shapes_from(
    data: *const f64,
    shapes: usize,
    points_per_shape: usize,
) -> Result<Vec<PointSet>, Error> {
    let flat = slice_from(data, 3 * shapes * points_per_shape);
    flat.chunks_exact(3 * points_per_shape)
        .map(PointSet::from_flat)
        .collect()
}

/// Fits a PCA shape model to `shapes` correspondence sets, each of
/// `points_per_shape` xyz triples, laid out consecutively.
///
/// # Safety
/// `data` must point to `3 * shapes * points_per_shape` doubles.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pca_fit(
    data: *const f64,
    shapes: usize,
    points_per_shape: usize,
) -> *mut SpicorrPca {
    if data.is_null() && shapes * points_per_shape > 0 {
        null_arg("data");
        return std::ptr::null_mut();
    }
    let sets = match shapes_from(data, shapes, points_per_shape) {
        Ok(s) => s,
        Err(e) => {
            fail(&e);
            return std::ptr::null_mut();
        }
    };
    guarded_ptr(move || match fit_pca(&sets) {
        Ok(inner) => Box::into_raw(Box::new(SpicorrPca { inner })),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    })
}

/// Frees a PCA model; null is a no-op.
///
/// # Safety
/// `p` must be a pointer from `spicorr_pca_fit`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pca_free(p: *mut SpicorrPca) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of retained eigenmodes; 0 for null.
///
/// # Safety
/// `p` must be null or a live PCA handle.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pca_mode_count(p: *const SpicorrPca) -> usize {
    if p.is_null() {
        0
    } else {
        (*p).inner.pca.eigenvalues.len()
    }
}

/// Smallest number of modes whose cumulative variance share reaches
/// `threshold`. A variance-free (degenerate) cohort yields 0 modes.
///
/// # Safety
/// `p` must be a live PCA handle; `out_modes` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pca_compactness(
    p: *const SpicorrPca,
    threshold: f64,
    out_modes: *mut usize,
) -> SpicorrStatus {
    if p.is_null() || out_modes.is_null() {
        return null_arg("pca/out_modes");
    }
    let model = &(*p).inner;
    guarded(AssertUnwindSafe(move || match compactness(model, threshold) {
        Ok(report) => {
            *out_modes = report.modes;
            SpicorrStatus::Ok
        }
        Err(e) => fail(&e),
    }))
}

/// Copies the cumulative variance curve (one share per mode, ending at
/// 1) into `buf` and stores the number of modes in `written`. When `cap`
/// is too small, fills what fits and still reports the full length.
///
/// # Safety
/// `p` must be a live PCA handle; `buf` must hold `cap` doubles;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pca_cumulative_variance(
    p: *const SpicorrPca,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SpicorrStatus {
    if p.is_null() || written.is_null() || (buf.is_null() && cap > 0) {
        return null_arg("pca/buf/written");
    }
    let model = &(*p).inner;
    guarded(AssertUnwindSafe(move || {
        match compactness(model, 0.95) {
            Ok(report) => {
                let n = report.curve.len().min(cap);
                if n > 0 {
                    std::ptr::copy_nonoverlapping(report.curve.as_ptr(), buf, n);
                }
                *written = report.curve.len();
                SpicorrStatus::Ok
            }
            Err(e) => fail(&e),
        }
    }))
}

/// Mean per-point squared reconstruction error of held-out shapes
/// projected onto the model's 95% basis. Layout as in
/// `spicorr_pca_fit`.
///
/// # Safety
/// `p` must be a live PCA handle; `data` must hold
/// `3 * shapes * points_per_shape` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pca_generalization(
    p: *const SpicorrPca,
    data: *const f64,
    shapes: usize,
    points_per_shape: usize,
    out: *mut f64,
) -> SpicorrStatus {
    if p.is_null() || out.is_null() || (data.is_null() && shapes * points_per_shape > 0) {
        return null_arg("pca/data/out");
    }
    let model = &(*p).inner;
    let sets = match shapes_from(data, shapes, points_per_shape) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    guarded(AssertUnwindSafe(move || match generalization(model, &sets) {
        Ok(g) => {
            *out = g;
            SpicorrStatus::Ok
        }
        Err(e) => fail(&e),
    }))
}

/// Specificity: mean distance from `samples` random model draws to their
/// nearest training shape. `data` is the training cohort, laid out as in
/// `spicorr_pca_fit`; the draw is deterministic in `seed`.
///
/// # Safety
/// `p` must be a live PCA handle; `data` must hold
/// `3 * shapes * points_per_shape` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spicorr_pca_specificity(
    p: *const SpicorrPca,
    data: *const f64,
    shapes: usize,
    points_per_shape: usize,
    samples: usize,
    seed: u64,
    out: *mut f64,
) -> SpicorrStatus {
    if p.is_null() || out.is_null() || (data.is_null() && shapes * points_per_shape > 0) {
        return null_arg("pca/data/out");
    }
    let model = &(*p).inner;
    let sets = match shapes_from(data, shapes, points_per_shape) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    guarded(AssertUnwindSafe(
        move || match specificity(model, &sets, samples, seed) {
            Ok(s) => {
                *out = s;
                SpicorrStatus::Ok
            }
            Err(e) => fail(&e),
        },
    ))
}
