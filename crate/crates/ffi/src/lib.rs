//! C ABI over the msma library.
//!
//! Objects are opaque handles created by `msma_*_generate`/`_load`/`msma_predict`
//! and released with the matching `_free`. Every fallible call returns an
//! [`MsmaStatus`]; on failure [`msma_last_error`] describes the cause.
//! Handles are not thread-safe; the error message is per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use msma::autodiff::Checkpoint;
use msma::model::{FusionMode, PredictionSet};
use msma::scene::{generate_dataset, read_dataset, vectorize, write_dataset, GenerateConfig, LayoutSpec, SceneInput, SceneRecord};
use msma::train::{evaluate, load_predictor, Cohort, Predictor};
use msma::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// A file was malformed.
    Parse = 4,
    /// A checkpoint does not fit the model or the data.
    Incompatible = 5,
    /// A computation produced non-finite values.
    Numerical = 6,
    /// Any other failure, including internal panics.
    Internal = 7,
}

/// Fusion applied to agents seen by both sensors and broadcasts.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmaFusion {
    Full = 0,
    SensorOnly = 1,
    CommOnly = 2,
}

/// Agents scored by [`msma_evaluate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmaCohort {
    All = 0,
    /// Inside the sensing range.
    Sensing = 1,
    /// Broadcasting their own trajectories.
    Connected = 2,
}

/// Dataset generation settings; start from [`msma_generate_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MsmaGenerateConfig {
    pub scenes: usize,
    pub seed: u64,
    /// Market penetration rate in [0, 1].
    pub mpr: f64,
    pub latency_frames: usize,
    /// Sensor noise variance in m², within [0, 0.5].
    pub noise_variance: f64,
    /// Vehicles per scene.
    pub agents: usize,
}

/// Best-mode errors over a cohort; `agents == 0` means the cohort was empty
/// and the other fields are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MsmaMetrics {
    pub agents: usize,
    /// Average displacement error, m.
    pub ade: f64,
    /// Final displacement error, m.
    pub fde: f64,
    /// Fraction of agents with final error above 2 m.
    pub miss_rate: f64,
}

/// Scenes with their model inputs.
pub struct MsmaDataset {
    records: Vec<SceneRecord>,
    inputs: Vec<SceneInput>,
}

/// A trained predictor.
pub struct MsmaModel {
    inner: Box<dyn Predictor>,
}

/// Multimodal predictions for one scene.
pub struct MsmaPrediction {
    inner: PredictionSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MsmaStatus {
    match e {
        Error::Config(_) | Error::Param(_) | Error::Empty(_) | Error::Generation(_) => MsmaStatus::InvalidArgument,
        Error::Io(_) => MsmaStatus::Io,
        Error::Parse { .. } => MsmaStatus::Parse,
        Error::Incompatible(_) => MsmaStatus::Incompatible,
        Error::Numerical(_) => MsmaStatus::Numerical,
        _ => MsmaStatus::Internal,
    }
}

struct Fail(MsmaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MsmaStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(MsmaStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording its error and containing panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MsmaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsmaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            MsmaStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn dataset_from(records: Vec<SceneRecord>) -> Result<MsmaDataset, Fail> {
    let inputs = records.iter().map(vectorize).collect::<msma::Result<Vec<_>>>()?;
    Ok(MsmaDataset { records, inputs })
}

/// Message of the last failed call on this thread, or null if none. The
/// string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn msma_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msma_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default generation settings.
#[no_mangle]
pub extern "C" fn msma_generate_config_default() -> MsmaGenerateConfig {
    let g = GenerateConfig::default();
    MsmaGenerateConfig {
        scenes: g.scenes,
        seed: g.seed,
        mpr: g.mpr,
        latency_frames: g.latency_frames,
        noise_variance: g.noise_variance,
        agents: g.agents,
    }
}

/// Generates scenes on the built-in town layout.
///
/// # Safety
/// `config` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn msma_dataset_generate(config: *const MsmaGenerateConfig, out: *mut *mut MsmaDataset) -> MsmaStatus {
    guard(|| {
        let c = handle(config, "config")?;
        let out = out_arg(out, "out")?;
        let cfg = GenerateConfig {
            scenes: c.scenes,
            seed: c.seed,
            mpr: c.mpr,
            latency_frames: c.latency_frames,
            noise_variance: c.noise_variance,
            agents: c.agents,
            ..GenerateConfig::default()
        };
        let ds = dataset_from(generate_dataset(&LayoutSpec::town(), &cfg)?)?;
        *out = Box::into_raw(Box::new(ds));
        Ok(())
    })
}

/// Reads a JSON-lines dataset.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msma_dataset_load(path: *const c_char, out: *mut *mut MsmaDataset) -> MsmaStatus {
    guard(|| {
        let path = path_arg(path)?;
        let out = out_arg(out, "out")?;
        let ds = dataset_from(read_dataset(&path)?)?;
        *out = Box::into_raw(Box::new(ds));
        Ok(())
    })
}

/// Writes a dataset as JSON lines.
///
/// # Safety
/// `dataset` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn msma_dataset_save(dataset: *const MsmaDataset, path: *const c_char) -> MsmaStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        write_dataset(&path_arg(path)?, &ds.records)?;
        Ok(())
    })
}

/// Number of scenes; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msma_dataset_len(dataset: *const MsmaDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.records.len())
}

/// Identifier of the scene at `index`.
///
/// # Safety
/// `dataset` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msma_dataset_scene_id(dataset: *const MsmaDataset, index: usize, out: *mut u64) -> MsmaStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        let r = ds
            .records
            .get(index)
            .ok_or_else(|| invalid(format!("scene index {index} out of range ({} scenes)", ds.records.len())))?;
        *out = r.scene_id;
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msma_dataset_free(dataset: *mut MsmaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Loads a checkpoint written by `msma train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msma_model_load(path: *const c_char, out: *mut *mut MsmaModel) -> MsmaStatus {
    guard(|| {
        let path = path_arg(path)?;
        let out = out_arg(out, "out")?;
        let inner = load_predictor(&Checkpoint::read(&path)?)?;
        *out = Box::into_raw(Box::new(MsmaModel { inner }));
        Ok(())
    })
}

/// Predicted modes per agent; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msma_model_modes(model: *const MsmaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.modes())
}

/// Predicted frames per mode; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msma_model_horizon(model: *const MsmaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.horizon())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msma_model_free(model: *mut MsmaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn check_fits(model: &dyn Predictor, ds: &MsmaDataset) -> Result<(), Fail> {
    if let Some(a) = ds.inputs.first().and_then(|s| s.agents.first()) {
        if a.truth_history.len() != model.history() || a.future.len() != model.horizon() {
            return Err(Error::Incompatible(format!(
                "model expects {} history / {} future frames, dataset has {} / {}",
                model.history(),
                model.horizon(),
                a.truth_history.len(),
                a.future.len()
            ))
            .into());
        }
    }
    Ok(())
}

/// Eval-mode predictions for the scene at `index`, in that scene's frame
/// (metres, centred on the connected vehicle).
///
/// # Safety
/// `model` and `dataset` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msma_predict(
    model: *const MsmaModel,
    dataset: *const MsmaDataset,
    index: usize,
    fusion: MsmaFusion,
    out: *mut *mut MsmaPrediction,
) -> MsmaStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        check_fits(m.inner.as_ref(), ds)?;
        let scene = ds
            .inputs
            .get(index)
            .ok_or_else(|| invalid(format!("scene index {index} out of range ({} scenes)", ds.inputs.len())))?;
        let inner = m.inner.predict(scene, fusion_mode(fusion))?;
        *out = Box::into_raw(Box::new(MsmaPrediction { inner }));
        Ok(())
    })
}

fn fusion_mode(f: MsmaFusion) -> FusionMode {
    match f {
        MsmaFusion::Full => FusionMode::Full,
        MsmaFusion::SensorOnly => FusionMode::SensorOnly,
        MsmaFusion::CommOnly => FusionMode::CommOnly,
    }
}

/// Number of predicted agents; 0 for a null handle.
///
/// # Safety
/// `prediction` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msma_prediction_agents(prediction: *const MsmaPrediction) -> usize {
    prediction.as_ref().map_or(0, |p| p.inner.len())
}

/// Identifier of the agent at `agent`.
///
/// # Safety
/// `prediction` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msma_prediction_agent_id(prediction: *const MsmaPrediction, agent: usize, out: *mut u32) -> MsmaStatus {
    guard(|| {
        let p = handle(prediction, "prediction")?;
        let out = out_arg(out, "out")?;
        *out = *p.inner.agent_ids.get(agent).ok_or_else(|| invalid(format!("agent {agent} out of range")))?;
        Ok(())
    })
}

/// Copies all mode means as `x, y` pairs, indexed
/// `((agent·modes + mode)·horizon + step)·2`. `len` is the buffer length in
/// doubles and must be at least `agents·modes·horizon·2`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn msma_prediction_means(prediction: *const MsmaPrediction, buf: *mut f64, len: usize) -> MsmaStatus {
    guard(|| {
        let p = handle(prediction, "prediction")?;
        let need = p.inner.means.len() * 2;
        let dst = slice_arg(buf, len, need)?;
        for (d, m) in dst.chunks_exact_mut(2).zip(&p.inner.means) {
            d.copy_from_slice(m);
        }
        Ok(())
    })
}

/// Copies the mode probabilities, indexed `agent·modes + mode`. `len` must be
/// at least `agents·modes`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn msma_prediction_scores(prediction: *const MsmaPrediction, buf: *mut f64, len: usize) -> MsmaStatus {
    guard(|| {
        let p = handle(prediction, "prediction")?;
        let dst = slice_arg(buf, len, p.inner.scores.len())?;
        dst[..p.inner.scores.len()].copy_from_slice(&p.inner.scores);
        Ok(())
    })
}

unsafe fn slice_arg<'a>(buf: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Fail> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < need {
        return Err(invalid(format!("buffer holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(buf, len))
}

/// # Safety
/// `prediction` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msma_prediction_free(prediction: *mut MsmaPrediction) {
    if !prediction.is_null() {
        drop(Box::from_raw(prediction));
    }
}

/// Best-mode ADE, FDE and miss rate of `model` over every scene of `dataset`.
///
/// # Safety
/// `model` and `dataset` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msma_evaluate(
    model: *const MsmaModel,
    dataset: *const MsmaDataset,
    cohort: MsmaCohort,
    fusion: MsmaFusion,
    out: *mut MsmaMetrics,
) -> MsmaStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        check_fits(m.inner.as_ref(), ds)?;
        let c = match cohort {
            MsmaCohort::All => Cohort::All,
            MsmaCohort::Sensing => Cohort::Sensing,
            MsmaCohort::Connected => Cohort::Connected,
        };
        let r = evaluate(m.inner.as_ref(), &ds.inputs, &[c], fusion_mode(fusion))?.remove(0);
        *out = match r.metrics {
            Some(x) => MsmaMetrics {
                agents: r.agents,
                ade: x.ade,
                fde: x.fde,
                miss_rate: x.mr,
            },
            None => MsmaMetrics {
                agents: 0,
                ade: f64::NAN,
                fde: f64::NAN,
                miss_rate: f64::NAN,
            },
        };
        Ok(())
    })
}
