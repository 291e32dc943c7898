//! C ABI for lapkit environments.
//!
//! Environments are opaque `LapkitEnv` handles created with
//! [`lapkit_env_new`] and released with [`lapkit_env_free`]. Every fallible
//! call returns a [`LapkitStatus`]; the message for the most recent failure on
//! the calling thread is available from [`lapkit_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use lapkit::envcore::{EnvConfig, EnvError, Environment, Observation};
use lapkit::envs::{make_env, EnvId};
use lapkit::kinematics::{ptsd_to_pose, PtsdState, RcmFrame};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LapkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    NotReady = 4,
    ActionShape = 5,
    BufferTooSmall = 6,
    Internal = 7,
    Panic = 8,
}

/// Opaque environment handle.
pub struct LapkitEnv {
    env: Environment,
}

/// Scalar results of one step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LapkitStepOutput {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub success: bool,
    pub failure: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let msg = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: LapkitStatus, message: impl Into<String>) -> LapkitStatus {
    set_error(message);
    status
}

fn env_status(e: EnvError) -> LapkitStatus {
    let status = match e {
        EnvError::NotReset | EnvError::EpisodeOver => LapkitStatus::NotReady,
        EnvError::ActionShapeMismatch { .. } | EnvError::InvalidAction(_) => LapkitStatus::ActionShape,
        EnvError::InvalidConfig(_) | EnvError::UnknownEnv(_) => LapkitStatus::InvalidConfig,
        _ => LapkitStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> LapkitStatus) -> LapkitStatus {
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(LapkitStatus::Panic, "panic inside lapkit"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, LapkitStatus> {
    if p.is_null() {
        return Err(fail(LapkitStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LapkitStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn observation_values(obs: &Observation) -> Vec<f64> {
    match obs {
        Observation::State(v) => v.clone(),
        Observation::Rgb { data, .. } => data.iter().map(|&b| f64::from(b)).collect(),
        Observation::Rgbd { data, .. } => data.iter().map(|&x| f64::from(x)).collect(),
    }
}

unsafe fn copy_observation(obs: &Observation, out: *mut f64, capacity: usize, out_len: *mut usize) -> LapkitStatus {
    let values = observation_values(obs);
    if !out_len.is_null() {
        *out_len = values.len();
    }
    if out.is_null() {
        return if capacity == 0 {
            LapkitStatus::Ok
        } else {
            fail(LapkitStatus::NullPointer, "observation buffer is null")
        };
    }
    if capacity < values.len() {
        return fail(
            LapkitStatus::BufferTooSmall,
            format!("observation needs {} values, buffer holds {capacity}", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    LapkitStatus::Ok
}

/// Message for the last failure on this thread. Valid until the next lapkit call.
#[no_mangle]
pub extern "C" fn lapkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lapkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an environment.
///
/// `config_json` may be null for defaults or hold a JSON overlay of the
/// environment config.
///
/// # Safety
/// `env_id` and a non-null `config_json` must be NUL-terminated strings;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lapkit_env_new(
    env_id: *const c_char,
    config_json: *const c_char,
    out: *mut *mut LapkitEnv,
) -> LapkitStatus {
    guard(|| {
        if out.is_null() {
            return fail(LapkitStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let name = match str_arg(env_id, "env_id") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let id: EnvId = match name.parse() {
            Ok(id) => id,
            Err(e) => return env_status(e),
        };
        let config = if config_json.is_null() {
            EnvConfig::default_for(id)
        } else {
            let text = match str_arg(config_json, "config_json") {
                Ok(s) => s,
                Err(s) => return s,
            };
            match EnvConfig::from_json_str(id, text) {
                Ok(c) => c,
                Err(e) => return env_status(e),
            }
        };
        match make_env(id, config) {
            Ok(env) => {
                *out = Box::into_raw(Box::new(LapkitEnv { env }));
                LapkitStatus::Ok
            }
            Err(e) => env_status(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `env` must come from [`lapkit_env_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lapkit_env_free(env: *mut LapkitEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of values the `action` array of [`lapkit_env_step`] must hold.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lapkit_env_action_len(env: *const LapkitEnv, out: *mut usize) -> LapkitStatus {
    if env.is_null() || out.is_null() {
        return fail(LapkitStatus::NullPointer, "env or out is null");
    }
    *out = (*env).env.action_len();
    LapkitStatus::Ok
}

/// Dimension of the continuous action space.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lapkit_env_action_dim(env: *const LapkitEnv, out: *mut usize) -> LapkitStatus {
    if env.is_null() || out.is_null() {
        return fail(LapkitStatus::NullPointer, "env or out is null");
    }
    *out = (*env).env.action_dim();
    LapkitStatus::Ok
}

/// Number of values in one observation.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lapkit_env_obs_len(env: *const LapkitEnv, out: *mut usize) -> LapkitStatus {
    if env.is_null() || out.is_null() {
        return fail(LapkitStatus::NullPointer, "env or out is null");
    }
    *out = (*env).env.observation_shape().iter().product();
    LapkitStatus::Ok
}

/// Resets the episode and writes the first observation into `obs`.
///
/// `obs_len` receives the observation length even when the buffer is too small.
///
/// # Safety
/// `env` must be a live handle; `obs` must hold `obs_capacity` doubles;
/// `obs_len` may be null.
#[no_mangle]
pub unsafe extern "C" fn lapkit_env_reset(
    env: *mut LapkitEnv,
    seed: u64,
    obs: *mut f64,
    obs_capacity: usize,
    obs_len: *mut usize,
) -> LapkitStatus {
    guard(|| {
        if env.is_null() {
            return fail(LapkitStatus::NullPointer, "env is null");
        }
        match (*env).env.reset(seed) {
            Ok(o) => copy_observation(&o, obs, obs_capacity, obs_len),
            Err(e) => env_status(e),
        }
    })
}

/// Advances one agent step.
///
/// # Safety
/// `env` must be a live handle; `action` must hold `action_len` doubles;
/// `obs` must hold `obs_capacity` doubles; `obs_len` and `result` may be null.
#[no_mangle]
pub unsafe extern "C" fn lapkit_env_step(
    env: *mut LapkitEnv,
    action: *const f64,
    action_len: usize,
    obs: *mut f64,
    obs_capacity: usize,
    obs_len: *mut usize,
    result: *mut LapkitStepOutput,
) -> LapkitStatus {
    guard(|| {
        if env.is_null() || (action.is_null() && action_len > 0) {
            return fail(LapkitStatus::NullPointer, "env or action is null");
        }
        let action = if action_len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(action, action_len)
        };
        let step = match (*env).env.step(action) {
            Ok(s) => s,
            Err(e) => return env_status(e),
        };
        if !result.is_null() {
            *result = LapkitStepOutput {
                reward: step.reward,
                terminated: step.terminated,
                truncated: step.truncated,
                success: step.info.success,
                failure: step.info.failure,
            };
        }
        copy_observation(&step.observation, obs, obs_capacity, obs_len)
    })
}

/// Maps a TPSD state (degrees, mm) through an RCM frame to a pose
/// `[x, y, z, qx, qy, qz, qw]`.
///
/// # Safety
/// `ptsd` must hold 4 doubles, `rcm_position` and `rcm_orientation` 3 each,
/// and `pose_out` must have room for 7.
#[no_mangle]
pub unsafe extern "C" fn lapkit_ptsd_to_pose(
    ptsd: *const f64,
    rcm_position: *const f64,
    rcm_orientation: *const f64,
    pose_out: *mut f64,
) -> LapkitStatus {
    if ptsd.is_null() || rcm_position.is_null() || rcm_orientation.is_null() || pose_out.is_null() {
        return fail(LapkitStatus::NullPointer, "argument is null");
    }
    let p = std::slice::from_raw_parts(ptsd, 4);
    let state = PtsdState::new(p[0], p[1], p[2], p[3]);
    if !state.is_finite() {
        return fail(LapkitStatus::InvalidArgument, "ptsd contains non-finite values");
    }
    let rcm = RcmFrame::new(
        ptr::read(rcm_position.cast::<[f64; 3]>()),
        ptr::read(rcm_orientation.cast::<[f64; 3]>()),
    );
    let pose = ptsd_to_pose(&state, &rcm).to_array();
    ptr::copy_nonoverlapping(pose.as_ptr(), pose_out, 7);
    LapkitStatus::Ok
}
