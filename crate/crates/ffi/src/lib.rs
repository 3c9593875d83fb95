//! C ABI over the `reid_rerank` engine.
//!
//! Every fallible call returns an [`RrStatus`] and writes its result through an out-pointer.
//! On failure the thread-local message from [`rr_last_error_message`] describes the cause.
//! Handles are opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use reid_rerank::curriculum::{alpha, ScheduleConfig};
use reid_rerank::metrics::ConfigEcho;
use reid_rerank::pipeline::{compute_distances, effective_echo, reports_json, StageError};
use reid_rerank::{
    evaluate, generate, load_split, save_split, Direction, DistanceMatrix, Error, ErrorKind, EvalReport,
    EvalSplit, RerankConfig, RerankMode, SynthConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Data = 3,
    Internal = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrMode {
    None = 0,
    KReciprocal = 1,
    Temporal = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrDirection {
    VisibleToInfrared = 0,
    InfraredToVisible = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrSchedule {
    Fixed = 0,
    Exponential = 1,
    Cosine = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RrSynthConfig {
    pub seed: u64,
    pub num_ids: usize,
    pub cams_per_id: usize,
    pub frames_per_tracklet: usize,
    pub dim: usize,
    pub identity_spread: f64,
    pub modality_offset_scale: f64,
    pub camera_offset_scale: f64,
    pub frame_noise: f64,
    pub latent_rank: usize,
    pub direction: RrDirection,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RrRerankConfig {
    pub k1: usize,
    pub k2: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Temporal groups per tracklet.
    pub groups: usize,
    pub expanded_sets: bool,
    pub normalize_base: bool,
}

/// A query/gallery split.
pub struct RrSplit(EvalSplit);

/// A query-by-gallery distance matrix together with the setup that produced it.
pub struct RrDistance {
    matrix: DistanceMatrix,
    echo: ConfigEcho,
}

/// CMC/mAP scores of one distance matrix.
pub struct RrReport(EvalReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Argument(String),
    Core(Error),
    Stage(StageError),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Stage(e)
    }
}

fn kind_status(kind: ErrorKind) -> RrStatus {
    match kind {
        ErrorKind::Config => RrStatus::Config,
        ErrorKind::Data => RrStatus::Data,
        ErrorKind::Internal => RrStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RrStatus::Ok
        }
        Ok(Err(Failure::Argument(m))) => {
            set_last_error(m);
            RrStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            kind_status(e.kind())
        }
        Ok(Err(Failure::Stage(e))) => {
            set_last_error(e.to_string());
            kind_status(e.source.kind())
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            RrStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::Argument(format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::Argument(format!("{name} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Argument("path is null".into()));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Argument("path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn direction_from(d: RrDirection) -> Direction {
    match d {
        RrDirection::VisibleToInfrared => Direction::VisibleToInfrared,
        RrDirection::InfraredToVisible => Direction::InfraredToVisible,
    }
}

fn direction_to(d: Direction) -> RrDirection {
    match d {
        Direction::VisibleToInfrared => RrDirection::VisibleToInfrared,
        Direction::InfraredToVisible => RrDirection::InfraredToVisible,
    }
}

impl From<&SynthConfig> for RrSynthConfig {
    fn from(c: &SynthConfig) -> Self {
        Self {
            seed: c.seed,
            num_ids: c.num_ids,
            cams_per_id: c.cams_per_id,
            frames_per_tracklet: c.frames_per_tracklet,
            dim: c.dim,
            identity_spread: c.identity_spread,
            modality_offset_scale: c.modality_offset_scale,
            camera_offset_scale: c.camera_offset_scale,
            frame_noise: c.frame_noise,
            latent_rank: c.latent_rank,
            direction: direction_to(c.direction),
        }
    }
}

impl From<&RrSynthConfig> for SynthConfig {
    fn from(c: &RrSynthConfig) -> Self {
        Self {
            seed: c.seed,
            num_ids: c.num_ids,
            cams_per_id: c.cams_per_id,
            frames_per_tracklet: c.frames_per_tracklet,
            dim: c.dim,
            identity_spread: c.identity_spread,
            modality_offset_scale: c.modality_offset_scale,
            camera_offset_scale: c.camera_offset_scale,
            frame_noise: c.frame_noise,
            latent_rank: c.latent_rank,
            direction: direction_from(c.direction),
        }
    }
}

impl From<&RerankConfig> for RrRerankConfig {
    fn from(c: &RerankConfig) -> Self {
        Self {
            k1: c.k1,
            k2: c.k2,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            groups: c.groups,
            expanded_sets: c.expanded_sets,
            normalize_base: c.normalize_base,
        }
    }
}

impl From<&RrRerankConfig> for RerankConfig {
    fn from(c: &RrRerankConfig) -> Self {
        Self {
            k1: c.k1,
            k2: c.k2,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            groups: c.groups,
            expanded_sets: c.expanded_sets,
            normalize_base: c.normalize_base,
        }
    }
}

/// Message of the last failed call on this thread, or null after a success.
///
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn rr_synth_config_default() -> RrSynthConfig {
    (&SynthConfig::default()).into()
}

#[no_mangle]
pub extern "C" fn rr_rerank_config_default() -> RrRerankConfig {
    (&RerankConfig::default()).into()
}

/// Generates a synthetic split.
///
/// # Safety
/// `config` must be null or point to a valid config; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_split_generate(config: *const RrSynthConfig, out: *mut *mut RrSplit) -> RrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = config.as_ref().map(SynthConfig::from).unwrap_or_default();
        *out = Box::into_raw(Box::new(RrSplit(generate(&cfg)?)));
        Ok(())
    })
}

/// Loads a split from its directory or manifest path.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_split_load(path: *const c_char, out: *mut *mut RrSplit) -> RrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let split = load_split(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(RrSplit(split)));
        Ok(())
    })
}

/// Writes a split to directory `path`.
///
/// # Safety
/// `split` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rr_split_save(split: *const RrSplit, path: *const c_char) -> RrStatus {
    guard(|| {
        let split = borrow(split, "split")?;
        save_split(&split.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// The same records with query and gallery roles swapped.
///
/// # Safety
/// `split` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_split_reversed(split: *const RrSplit, out: *mut *mut RrSplit) -> RrStatus {
    guard(|| {
        let split = borrow(split, "split")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(RrSplit(split.0.reversed())));
        Ok(())
    })
}

/// # Safety
/// `split` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_split_num_queries(split: *const RrSplit) -> usize {
    split.as_ref().map_or(0, |s| s.0.queries().len())
}

/// # Safety
/// `split` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_split_num_gallery(split: *const RrSplit) -> usize {
    split.as_ref().map_or(0, |s| s.0.gallery().len())
}

/// # Safety
/// `split` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_split_dim(split: *const RrSplit) -> usize {
    split.as_ref().map_or(0, |s| s.0.dim())
}

/// # Safety
/// `split` must be null or a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_split_direction(split: *const RrSplit, out: *mut RrDirection) -> RrStatus {
    guard(|| {
        let split = borrow(split, "split")?;
        *out_ptr(out, "out")? = direction_to(split.0.direction());
        Ok(())
    })
}

/// # Safety
/// `split` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rr_split_free(split: *mut RrSplit) {
    if !split.is_null() {
        drop(Box::from_raw(split));
    }
}

/// Final query-gallery distances for `mode`. A null `config` uses the defaults.
///
/// # Safety
/// `split` must be a live handle, `config` null or valid, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_distance_compute(
    split: *const RrSplit,
    mode: RrMode,
    config: *const RrRerankConfig,
    out: *mut *mut RrDistance,
) -> RrStatus {
    guard(|| {
        let split = borrow(split, "split")?;
        let out = out_ptr(out, "out")?;
        let cfg = config.as_ref().map(RerankConfig::from).unwrap_or_default();
        let mode = match mode {
            RrMode::None => RerankMode::None,
            RrMode::KReciprocal => RerankMode::KReciprocal,
            RrMode::Temporal => RerankMode::TemporalKReciprocal,
        };
        let matrix = compute_distances(&split.0, mode, &cfg, &mut BTreeMap::new())?;
        *out = Box::into_raw(Box::new(RrDistance {
            matrix,
            echo: effective_echo(mode, &cfg),
        }));
        Ok(())
    })
}

/// # Safety
/// `dist` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_distance_rows(dist: *const RrDistance) -> usize {
    dist.as_ref().map_or(0, |d| d.matrix.rows())
}

/// # Safety
/// `dist` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_distance_cols(dist: *const RrDistance) -> usize {
    dist.as_ref().map_or(0, |d| d.matrix.cols())
}

/// Copies the row-major values into `buf`, which must hold exactly `rows * cols` doubles.
///
/// # Safety
/// `dist` must be a live handle and `buf` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rr_distance_copy(dist: *const RrDistance, buf: *mut f64, len: usize) -> RrStatus {
    guard(|| {
        let dist = borrow(dist, "dist")?;
        if buf.is_null() {
            return Err(Failure::Argument("buf is null".into()));
        }
        let values = dist.matrix.values();
        if len != values.len() {
            return Err(Failure::Argument(format!(
                "buffer holds {len} values, matrix has {}",
                values.len()
            )));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `dist` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rr_distance_free(dist: *mut RrDistance) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Scores `dist` against the labels of `split`.
///
/// # Safety
/// `dist` and `split` must be live handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_evaluate(
    dist: *const RrDistance,
    split: *const RrSplit,
    exclude_same_camera: bool,
    out: *mut *mut RrReport,
) -> RrStatus {
    guard(|| {
        let dist = borrow(dist, "dist")?;
        let split = borrow(split, "split")?;
        let out = out_ptr(out, "out")?;
        let mut report = evaluate(&dist.matrix, &split.0, exclude_same_camera)?;
        report.config_echo = Some(dist.echo.clone());
        *out = Box::into_raw(Box::new(RrReport(report)));
        Ok(())
    })
}

/// Mean average precision, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_report_map(report: *const RrReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.map)
}

/// CMC at 1-based `rank`, saturating at the gallery size; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_report_cmc(report: *const RrReport, rank: usize) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.rank(rank))
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_report_num_queries(report: *const RrReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.num_queries)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rr_report_skipped_queries(report: *const RrReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.skipped_queries)
}

/// The report in the CLI's JSON format. Release the string with [`rr_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_report_to_json(report: *const RrReport, out: *mut *mut c_char) -> RrStatus {
    guard(|| {
        let report = borrow(report, "report")?;
        let out = out_ptr(out, "out")?;
        let json = reports_json(std::slice::from_ref(&report.0))?;
        let c = CString::new(json).map_err(|_| Error::Internal("report contains a NUL byte".into()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rr_report_free(report: *mut RrReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Curriculum factor at normalized progress `progress`. `param` is alpha, tau or phi.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_curriculum_alpha(
    strategy: RrSchedule,
    param: f64,
    progress: f64,
    out: *mut f64,
) -> RrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = match strategy {
            RrSchedule::Fixed => ScheduleConfig::Fixed { alpha: param },
            RrSchedule::Exponential => ScheduleConfig::Exponential { tau: param },
            RrSchedule::Cosine => ScheduleConfig::Cosine { phi: param },
        };
        *out = alpha(&cfg, progress)?;
        Ok(())
    })
}
