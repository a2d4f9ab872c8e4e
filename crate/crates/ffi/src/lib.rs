//! C ABI for scentgen.
//!
//! Every fallible function returns a [`ScentgenStatus`]; on failure the
//! message is available from [`scentgen_last_error`] on the same thread.
//! Strings returned through out-parameters are owned by the caller and must be
//! released with [`scentgen_string_free`]. Handles are released with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use scentgen::chemrules;
use scentgen::cli::{self, CliError, Query};
use scentgen::diffusion::{self, Checkpoint, TrainConfig};
use scentgen::generator::{self, Corpus, GenerationConfig, Generator};
use scentgen::sensorselect::{self, Scenario};
use scentgen::smiles;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScentgenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BadInput = 3,
    Diverged = 4,
    ValidationFailed = 5,
    Internal = 6,
}

/// Set-cover strategy for [`scentgen_select_sensors`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScentgenSelectMode {
    Greedy = 0,
    Exact = 1,
    Subtract = 2,
}

/// A loaded model ready for sampling.
pub struct ScentgenGenerator {
    inner: Generator,
    config: GenerationConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ScentgenStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::BadInput(_) => ScentgenStatus::BadInput,
            CliError::Diverged(_) => ScentgenStatus::Diverged,
            CliError::Internal(_) => ScentgenStatus::Internal,
            CliError::ValidationFailed(_) => ScentgenStatus::ValidationFailed,
        };
        Failure(status, e.to_string())
    }
}

fn bad_input(msg: impl Into<String>) -> Failure {
    Failure(ScentgenStatus::BadInput, msg.into())
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ScentgenStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScentgenStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            ScentgenStatus::Internal
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ScentgenStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ScentgenStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ScentgenStatus::NullPointer, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(ScentgenStatus::Internal, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Library version, a static string owned by the library.
#[no_mangle]
pub extern "C" fn scentgen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or null if the last call
/// succeeded. Free with [`scentgen_string_free`].
#[no_mangle]
pub extern "C" fn scentgen_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null_mut(), |c| c.clone().into_raw()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a pointer previously returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scentgen_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Canonical SMILES of `smiles_in`.
///
/// # Safety
/// `smiles_in` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scentgen_canonicalize(smiles_in: *const c_char, out: *mut *mut c_char) -> ScentgenStatus {
    guard(|| {
        let s = str_arg(smiles_in, "smiles")?;
        let g = smiles::parse(s).map_err(|e| bad_input(e.to_string()))?;
        let c = smiles::canonicalize(&g).map_err(|e| bad_input(e.to_string()))?;
        write_string(out, c)
    })
}

/// Runs the validation pipeline on one SMILES string. `report_json` receives
/// the per-stage report; `passed` is set to 1 or 0. A molecule that fails
/// validation is not an error.
///
/// # Safety
/// `smiles_in` is a NUL-terminated string; `passed` and `report_json` are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scentgen_validate_smiles(
    smiles_in: *const c_char,
    passed: *mut i32,
    report_json: *mut *mut c_char,
) -> ScentgenStatus {
    guard(|| {
        let s = str_arg(smiles_in, "smiles")?;
        if passed.is_null() {
            return Err(Failure(ScentgenStatus::NullPointer, "passed is null".into()));
        }
        let g = smiles::parse(s).map_err(|e| bad_input(e.to_string()))?;
        let (_, report) = chemrules::sanitize_graph(&g);
        write_string(report_json, to_json(&report))?;
        *passed = i32::from(report.final_verdict);
        Ok(())
    })
}

/// Trains on a `smiles,descriptors` CSV and writes a checkpoint and, if
/// `metrics_path` is non-null, the per-epoch metrics CSV. `config_json` may be
/// null for defaults.
///
/// # Safety
/// String arguments are null (where allowed) or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn scentgen_train(
    dataset_path: *const c_char,
    config_json: *const c_char,
    checkpoint_path: *const c_char,
    metrics_path: *const c_char,
) -> ScentgenStatus {
    guard(|| {
        let data = PathBuf::from(str_arg(dataset_path, "dataset_path")?);
        let out = PathBuf::from(str_arg(checkpoint_path, "checkpoint_path")?);
        let metrics = opt_str_arg(metrics_path, "metrics_path")?.map(PathBuf::from);
        let cfg = match opt_str_arg(config_json, "config_json")? {
            Some(j) => TrainConfig::from_json(j).map_err(|e| Failure::from(CliError::from(e)))?,
            None => TrainConfig::default(),
        };
        let (ckpt, rows) = cli::train_checkpoint(&data, cfg, |_| {})?;
        if let Some(m) = metrics {
            diffusion::write_metrics_csv(&m, &rows).map_err(|e| Failure::from(CliError::from(e)))?;
        }
        ckpt.save(&out).map_err(|e| Failure::from(CliError::from(e)))
    })
}

/// Loads a checkpoint. Sampling settings default to the checkpoint's training
/// config and can be replaced with [`scentgen_generator_configure`].
///
/// # Safety
/// `checkpoint_path` is NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scentgen_generator_load(
    checkpoint_path: *const c_char,
    out: *mut *mut ScentgenGenerator,
) -> ScentgenStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(checkpoint_path, "checkpoint_path")?);
        if out.is_null() {
            return Err(Failure(ScentgenStatus::NullPointer, "out is null".into()));
        }
        if !path.exists() {
            return Err(bad_input(format!("checkpoint not found: {}", path.display())));
        }
        let ckpt = Checkpoint::load(&path).map_err(|e| Failure::from(CliError::from(e)))?;
        let config = GenerationConfig {
            mode: if ckpt.config.constrained {
                generator::Mode::Constrained
            } else {
                generator::Mode::Unconstrained
            },
            allowlist: ckpt.config.allowlist.clone(),
            steps: ckpt.config.steps,
            tau: ckpt.config.sample_tau,
            seed: ckpt.config.seed,
            ..GenerationConfig::default()
        };
        let inner = Generator::from_checkpoint(&ckpt, Corpus::bundled()).map_err(|e| Failure::from(CliError::from(e)))?;
        *out = Box::into_raw(Box::new(ScentgenGenerator { inner, config }));
        Ok(())
    })
}

/// Replaces the sampling settings with a JSON generation config.
///
/// # Safety
/// `generator` is a live handle; `config_json` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn scentgen_generator_configure(
    generator: *mut ScentgenGenerator,
    config_json: *const c_char,
) -> ScentgenStatus {
    guard(|| {
        let g = generator
            .as_mut()
            .ok_or_else(|| Failure(ScentgenStatus::NullPointer, "generator is null".into()))?;
        let j = str_arg(config_json, "config_json")?;
        let cfg: GenerationConfig = serde_json::from_str(j).map_err(|e| bad_input(e.to_string()))?;
        cfg.validate().map_err(|e| Failure::from(CliError::from(e)))?;
        g.config = cfg;
        Ok(())
    })
}

/// Samples for a query `{"descriptors": [...], "count": n}` and returns the
/// reports as JSONL (empty for `count` 0).
///
/// # Safety
/// `generator` is a live handle; `query_json` is NUL-terminated; `out_jsonl` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scentgen_generate(
    generator: *const ScentgenGenerator,
    query_json: *const c_char,
    out_jsonl: *mut *mut c_char,
) -> ScentgenStatus {
    guard(|| {
        let g = generator
            .as_ref()
            .ok_or_else(|| Failure(ScentgenStatus::NullPointer, "generator is null".into()))?;
        let q: Query = serde_json::from_str(str_arg(query_json, "query_json")?).map_err(|e| bad_input(e.to_string()))?;
        let y = g.inner.encode(&q.descriptors);
        let reports = g
            .inner
            .sample_many(&y, &g.config, q.count)
            .map_err(|e| Failure::from(CliError::from(e)))?;
        write_string(out_jsonl, generator::reports_to_jsonl(&reports))
    })
}

/// Releases a generator. Null is ignored.
///
/// # Safety
/// `generator` is null or a handle from [`scentgen_generator_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scentgen_generator_free(generator: *mut ScentgenGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

/// Chooses sensors for a scenario JSON and returns the selection as JSON.
/// `mode` is a [`ScentgenSelectMode`] value.
///
/// # Safety
/// `scenario_json` is NUL-terminated; `out_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scentgen_select_sensors(
    scenario_json: *const c_char,
    mode: i32,
    out_json: *mut *mut c_char,
) -> ScentgenStatus {
    guard(|| {
        let mode = match mode {
            0 => ScentgenSelectMode::Greedy,
            1 => ScentgenSelectMode::Exact,
            2 => ScentgenSelectMode::Subtract,
            other => return Err(bad_input(format!("unknown select mode {other}"))),
        };
        let sc = Scenario::from_json(str_arg(scenario_json, "scenario_json")?).map_err(|e| Failure::from(CliError::from(e)))?;
        let problem = sc.problem().map_err(|e| Failure::from(CliError::from(e)))?;
        let result = match mode {
            ScentgenSelectMode::Greedy => sensorselect::greedy_cover(&problem),
            ScentgenSelectMode::Exact => sensorselect::exact_cover(&problem).map_err(|e| Failure::from(CliError::from(e)))?,
            ScentgenSelectMode::Subtract => {
                let current = if sc.current.is_empty() {
                    sc.sensors.iter().map(|s| s.id.clone()).collect()
                } else {
                    sc.current.clone()
                };
                sensorselect::subtractive_prune(&current, &problem).map_err(|e| Failure::from(CliError::from(e)))?
            }
        };
        write_string(out_json, to_json(&result))
    })
}
