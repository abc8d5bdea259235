//! C interface to the randscat library.
//!
//! Every function returns a [`RandscatStatus`]; on failure the message is
//! kept per thread and read with [`randscat_last_error_message`]. Handles are
//! opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use randscat::domain::{GridSpec, MediumScene};
use randscat::forward::{FarFieldDataset, ForwardModel, IncidentConfig};
use randscat::greens::WaveNumber;
use randscat::noise::draw_noise;
use randscat::pipeline::{run_pipeline, ExperimentConfig};
use randscat::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandscatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    InvalidScene = 4,
    NonFinite = 5,
    GridMismatch = 6,
    BelowThreshold = 7,
    Truncation = 8,
    CoverageGap = 9,
    MixedSeeds = 10,
    InsufficientSeeds = 11,
    SmallnessGate = 12,
    FixedPointDiverged = 13,
    EigenNotConverged = 14,
    Format = 15,
    Checksum = 16,
    Config = 17,
    Io = 18,
    IndexOutOfRange = 19,
    Panic = 20,
}

fn status_of(e: &Error) -> RandscatStatus {
    use RandscatStatus as S;
    match e {
        Error::InvalidGrid(_) => S::InvalidGrid,
        Error::InvalidScene(_) => S::InvalidScene,
        Error::InvalidArgument(_) => S::InvalidArgument,
        Error::NonFinite(_) => S::NonFinite,
        Error::GridMismatch(_) => S::GridMismatch,
        Error::BelowThreshold { .. } => S::BelowThreshold,
        Error::Truncation { .. } => S::Truncation,
        Error::CoverageGap { .. } => S::CoverageGap,
        Error::MixedSeeds(_) => S::MixedSeeds,
        Error::InsufficientSeeds { .. } => S::InsufficientSeeds,
        Error::SmallnessGate { .. } => S::SmallnessGate,
        Error::FixedPointDiverged { .. } => S::FixedPointDiverged,
        Error::EigenNotConverged { .. } => S::EigenNotConverged,
        Error::Request { source, .. } | Error::Stage { source, .. } => status_of(source),
        Error::Format { .. } | Error::Json(_) | Error::Csv(_) => S::Format,
        Error::Checksum(_) => S::Checksum,
        Error::Config(_) => S::Config,
        Error::Io { .. } => S::Io,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RandscatStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RandscatStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> RandscatStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RandscatStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            RandscatStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RandscatStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn vec3(p: *const f64, what: &str) -> Result<[f64; 3], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok([*p, *p.add(1), *p.add(2)])
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// A medium: grid, noise amplitude, potential and source.
pub struct RandscatScene(MediumScene);

/// A forward model bound to a scene, with default solver settings.
pub struct RandscatModel(ForwardModel);

/// A far-field dataset read from disk.
pub struct RandscatDataset(FarFieldDataset);

/// One dataset record. `has_d` / `has_seed` mark the optional fields.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RandscatRecord {
    pub k: f64,
    pub xhat: [f64; 3],
    pub d: [f64; 3],
    pub has_d: bool,
    pub seed: u64,
    pub has_seed: bool,
    pub re: f64,
    pub im: f64,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn randscat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminator; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn randscat_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the number of bytes written excluding the terminator.
///
/// # Safety
/// `buf` must be valid for `cap` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn randscat_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    if buf.is_null() || cap == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(cap - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Loads a scene manifest and its volumes.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randscat_scene_load(path: *const c_char, out: *mut *mut RandscatScene) -> RandscatStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let scene = MediumScene::load(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RandscatScene(scene)));
        Ok(())
    })
}

/// Builds a scene from voxel arrays of length `n[0]·n[1]·n[2]` in
/// x-fastest order. Any of the three arrays may be null for zero.
///
/// # Safety
/// Non-null arrays must hold `len` values; `origin`, `extent` hold 3 and
/// `n` holds 3.
#[no_mangle]
pub unsafe extern "C" fn randscat_scene_new(
    origin: *const f64,
    extent: *const f64,
    n: *const usize,
    sigma: *const f64,
    potential: *const f64,
    source: *const f64,
    len: usize,
    out: *mut *mut RandscatScene,
) -> RandscatStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if n.is_null() {
            return Err(null("n"));
        }
        let dims = [*n, *n.add(1), *n.add(2)];
        let grid = GridSpec::new(vec3(origin, "origin")?, vec3(extent, "extent")?, dims)?;
        if len != grid.len() {
            return Err(Fail(RandscatStatus::GridMismatch, format!("len {len} does not match the grid's {} voxels", grid.len())));
        }
        let take = |p: *const f64| match p.is_null() {
            true => vec![0.0; len],
            false => std::slice::from_raw_parts(p, len).to_vec(),
        };
        let scene = MediumScene::new(grid, take(sigma), take(potential), take(source))?;
        *out = Box::into_raw(Box::new(RandscatScene(scene)));
        Ok(())
    })
}

/// Number of voxels in the scene grid.
///
/// # Safety
/// `scene` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randscat_scene_len(scene: *const RandscatScene, out: *mut usize) -> RandscatStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(scene, "scene")?.0.grid().len();
        Ok(())
    })
}

/// Writes the scene manifest and its volumes.
///
/// # Safety
/// `scene` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn randscat_scene_save(scene: *const RandscatScene, path: *const c_char) -> RandscatStatus {
    guard(|| {
        handle(scene, "scene")?.0.save(&path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `scene` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn randscat_scene_free(scene: *mut RandscatScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// A forward model for `scene` with default solver settings. The scene
/// handle stays owned by the caller.
///
/// # Safety
/// `scene` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randscat_model_new(scene: *const RandscatScene, out: *mut *mut RandscatModel) -> RandscatStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = ForwardModel::new(handle(scene, "scene")?.0.clone(), Default::default())?;
        *out = Box::into_raw(Box::new(RandscatModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn randscat_model_free(model: *mut RandscatModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Far-field pattern at `(k, xhat)`. `d` null gives a passive measurement;
/// `has_seed` false gives a noise-free one.
///
/// # Safety
/// `model` must come from this library; `xhat` (and `d` when non-null)
/// hold 3 values; `re`, `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randscat_far_field(
    model: *const RandscatModel,
    k: f64,
    xhat: *const f64,
    d: *const f64,
    has_seed: bool,
    seed: u64,
    re: *mut f64,
    im: *mut f64,
) -> RandscatStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let (re, im) = (out_ref(re, "re")?, out_ref(im, "im")?);
        let inc = match d.is_null() {
            true => IncidentConfig::passive(),
            false => IncidentConfig::active(vec3(d, "d")?)?,
        };
        let noise = has_seed.then(|| draw_noise(model.scene().grid(), seed));
        let v = model.at(WaveNumber::new(k)?)?.far_field(vec3(xhat, "xhat")?, &inc, noise.as_ref())?.value;
        *re = v.re;
        *im = v.im;
        Ok(())
    })
}

/// Reads a far-field dataset file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randscat_dataset_read(path: *const c_char, out: *mut *mut RandscatDataset) -> RandscatStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let data = FarFieldDataset::read(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RandscatDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `data` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randscat_dataset_len(data: *const RandscatDataset, out: *mut usize) -> RandscatStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(data, "data")?.0.len();
        Ok(())
    })
}

/// Copies record `index` (dataset order) into `out`.
///
/// # Safety
/// `data` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randscat_dataset_record(
    data: *const RandscatDataset,
    index: usize,
    out: *mut RandscatRecord,
) -> RandscatStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let records = handle(data, "data")?.0.records();
        let r = records.get(index).ok_or_else(|| {
            Fail(RandscatStatus::IndexOutOfRange, format!("record {index} of {}", records.len()))
        })?;
        *out = RandscatRecord {
            k: r.k,
            xhat: r.xhat,
            d: r.d.unwrap_or_default(),
            has_d: r.d.is_some(),
            seed: r.seed.unwrap_or_default(),
            has_seed: r.seed.is_some(),
            re: r.value.re,
            im: r.value.im,
        };
        Ok(())
    })
}

/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn randscat_dataset_free(data: *mut RandscatDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Runs (or resumes) the experiment in `config_path`, writing into
/// `out_dir`. `flags`, when non-null, receives the number of diagnostic
/// flags raised by the recovery.
///
/// # Safety
/// Strings must be NUL-terminated; `flags` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn randscat_run_pipeline(config_path: *const c_char, out_dir: *const c_char, flags: *mut u32) -> RandscatStatus {
    guard(|| {
        let config_path = path_arg(config_path, "config_path")?;
        let out_dir = path_arg(out_dir, "out_dir")?;
        let config = ExperimentConfig::load(&config_path)?;
        let base = config_path.parent().unwrap_or(Path::new(""));
        let manifest = run_pipeline(&config, base, &out_dir)?;
        if let Some(f) = flags.as_mut() {
            *f = manifest.flags.len() as u32;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut out = ptr::null_mut();
        let s = unsafe { randscat_scene_load(ptr::null(), &mut out) };
        assert_eq!(s, RandscatStatus::NullPointer);
        assert!(randscat_last_error_length() > 0);
        assert!(out.is_null());
    }

    #[test]
    fn error_codes_follow_wrapped_sources() {
        let inner = Error::Checksum("x".into());
        let e = Error::Stage { stage: "plan".into(), source: Box::new(inner) };
        assert_eq!(status_of(&e), RandscatStatus::Checksum);
    }

    #[test]
    fn messages_truncate_with_terminator() {
        set_error("abcdef".into());
        let mut buf = [1 as c_char; 4];
        let n = unsafe { randscat_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 3);
        assert_eq!(buf[3], 0);
    }
}
