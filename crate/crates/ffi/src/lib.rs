//! C ABI over the simulator core.
//!
//! Every fallible function returns an [`RnStatus`]. On failure the message is
//! available from [`rn_last_error`] on the same thread. Handles are opaque and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use robustnav::dynamics::Action;
use robustnav::metrics;
use robustnav::task::{difficulty_for, Env, EnvConfig, EpisodeSpec, Observation, TaskSpec};
use robustnav::world::{self, GoalRegion, GridMap, Point, Pose, SceneParams};
use robustnav::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Parse = 3,
    Generation = 4,
    Unreachable = 5,
    IllegalAction = 6,
    EpisodeDone = 7,
    NoEpisode = 8,
    BufferTooSmall = 9,
    Io = 10,
    Internal = 11,
}

/// Actions accepted by [`rn_env_step`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnAction {
    MoveAhead = 0,
    RotateLeft = 1,
    RotateRight = 2,
    LookUp = 3,
    LookDown = 4,
    End = 5,
}

impl From<RnAction> for Action {
    fn from(a: RnAction) -> Self {
        match a {
            RnAction::MoveAhead => Action::MoveAhead,
            RnAction::RotateLeft => Action::RotateLeft,
            RnAction::RotateRight => Action::RotateRight,
            RnAction::LookUp => Action::LookUp,
            RnAction::LookDown => Action::LookDown,
            RnAction::End => Action::End,
        }
    }
}

/// Result of one [`rn_env_step`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RnStepResult {
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub failed_action: bool,
    /// Distance to the goal; NaN when the task has no gps_compass.
    pub gps_r: f64,
    /// Bearing to the goal in degrees; NaN when absent.
    pub gps_theta: f64,
}

/// Opaque scene handle.
pub struct RnScene {
    map: Arc<GridMap>,
}

/// Opaque environment handle.
pub struct RnEnv {
    env: Env,
    obs: Option<Observation>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RnStatus {
    match e {
        Error::Parse { .. } => RnStatus::Parse,
        Error::Generation { .. } => RnStatus::Generation,
        Error::Unreachable => RnStatus::Unreachable,
        Error::IllegalAction(_) => RnStatus::IllegalAction,
        Error::EpisodeDone => RnStatus::EpisodeDone,
        Error::NoEpisode => RnStatus::NoEpisode,
        Error::Io(_) => RnStatus::Io,
        _ => RnStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Status(RnStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Run `f`, converting errors and panics into a status plus last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RnStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} must not be null"));
            RnStatus::NullArgument
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            RnStatus::Internal
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn nonnull_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generate a scene with default parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rn_scene_generate(seed: u64, out: *mut *mut RnScene) -> RnStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        let map = world::generate_scene(seed, &SceneParams::default())?;
        *out = Box::into_raw(Box::new(RnScene { map: Arc::new(map) }));
        Ok(())
    })
}

/// Load a scene from its binary file contents.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_scene_load(bytes: *const u8, len: usize, out: *mut *mut RnScene) -> RnStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        if bytes.is_null() {
            return Err(Fail::Null("bytes"));
        }
        let data = std::slice::from_raw_parts(bytes, len);
        let map = world::load_scene(data)?;
        *out = Box::into_raw(Box::new(RnScene { map: Arc::new(map) }));
        Ok(())
    })
}

/// Serialize a scene. Release the buffer with [`rn_bytes_free`].
///
/// # Safety
/// `scene` must come from this library; `out_bytes` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_scene_save(scene: *const RnScene, out_bytes: *mut *mut u8, out_len: *mut usize) -> RnStatus {
    guard(|| {
        let scene = nonnull(scene, "scene")?;
        let out_bytes = nonnull_mut(out_bytes, "out_bytes")?;
        let out_len = nonnull_mut(out_len, "out_len")?;
        let bytes = world::save_scene(&scene.map).into_boxed_slice();
        *out_len = bytes.len();
        *out_bytes = Box::into_raw(bytes).cast();
        Ok(())
    })
}

/// Grid dimensions and cell size of a scene.
///
/// # Safety
/// `scene` must come from this library; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_scene_dims(
    scene: *const RnScene,
    width: *mut usize,
    height: *mut usize,
    cell_size: *mut f64,
) -> RnStatus {
    guard(|| {
        let scene = nonnull(scene, "scene")?;
        *nonnull_mut(width, "width")? = scene.map.width();
        *nonnull_mut(height, "height")? = scene.map.height();
        *nonnull_mut(cell_size, "cell_size")? = scene.map.cell_size();
        Ok(())
    })
}

/// # Safety
/// `scene` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rn_scene_free(scene: *mut RnScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Release a buffer returned by this library.
///
/// # Safety
/// `bytes` and `len` must come from the same call into this library.
#[no_mangle]
pub unsafe extern "C" fn rn_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}

/// Geodesic distance between two points for the default agent radius.
///
/// # Safety
/// `scene` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_geodesic_distance(
    scene: *const RnScene,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    out: *mut f64,
) -> RnStatus {
    guard(|| {
        let scene = nonnull(scene, "scene")?;
        let out = nonnull_mut(out, "out")?;
        let goal = GoalRegion::Point(Point { x: x1, y: y1 });
        *out = world::geodesic_distance(&scene.map, Point { x: x0, y: y0 }, &goal).ok_or(Error::Unreachable)?;
        Ok(())
    })
}

/// Create an environment over a scene. `config_toml` may be null for the
/// defaults; otherwise it is an environment config in TOML.
///
/// # Safety
/// `scene` must come from this library; `config_toml` must be null or a
/// NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_env_new(scene: *const RnScene, config_toml: *const c_char, out: *mut *mut RnEnv) -> RnStatus {
    guard(|| {
        let scene = nonnull(scene, "scene")?;
        let out = nonnull_mut(out, "out")?;
        let config = if config_toml.is_null() {
            EnvConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml)
                .to_str()
                .map_err(|_| Fail::Status(RnStatus::InvalidArgument, "config is not UTF-8".into()))?;
            toml::from_str(text).map_err(|e| {
                Fail::Core(Error::Parse {
                    offset: e.span().map(|s| s.start).unwrap_or(0),
                    message: e.message().to_string(),
                })
            })?
        };
        let env = Env::new(scene.map.clone(), config)?;
        *out = Box::into_raw(Box::new(RnEnv { env, obs: None }));
        Ok(())
    })
}

/// Start a PointNav episode from a start pose to a goal point.
///
/// # Safety
/// `env` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn rn_env_reset_pointnav(
    env: *mut RnEnv,
    seed: u64,
    start_x: f64,
    start_y: f64,
    start_heading: f64,
    goal_x: f64,
    goal_y: f64,
) -> RnStatus {
    guard(|| {
        let env = nonnull_mut(env, "env")?;
        let map = env.env.map().clone();
        let goal = Point { x: goal_x, y: goal_y };
        let start = Pose::new(start_x, start_y, start_heading);
        let l = world::geodesic_distance(&map, start.position(), &GoalRegion::Point(goal)).ok_or(Error::Unreachable)?;
        let task = TaskSpec::PointNav { goal };
        let spec = EpisodeSpec {
            episode_id: format!("ffi-{seed}"),
            scene_id: map.scene_id().to_string(),
            seed,
            task,
            start,
            difficulty: difficulty_for(task.kind(), l).unwrap_or(robustnav::task::Difficulty::Hard),
            l,
        };
        env.obs = Some(env.env.reset(&spec)?);
        Ok(())
    })
}

/// Apply one action.
///
/// # Safety
/// `env` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_env_step(env: *mut RnEnv, action: RnAction, out: *mut RnStepResult) -> RnStatus {
    guard(|| {
        let env = nonnull_mut(env, "env")?;
        let out = nonnull_mut(out, "out")?;
        let r = env.env.step(action.into())?;
        let [gps_r, gps_theta] = r.obs.gps_compass.unwrap_or([f64::NAN, f64::NAN]);
        *out = RnStepResult {
            reward: r.reward,
            done: r.done,
            success: r.success,
            failed_action: r.info.failed_action,
            gps_r,
            gps_theta,
        };
        env.obs = Some(r.obs);
        Ok(())
    })
}

/// Copy the latest observation into caller buffers.
///
/// `rgb` needs `width * height * 3` bytes. `depth` may be null; otherwise it
/// needs `width * height` floats and the sensor must include depth. Call with
/// null buffers to query `width` and `height` only.
///
/// # Safety
/// Buffers must hold at least the stated capacities; `width` and `height`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_env_frame(
    env: *const RnEnv,
    width: *mut usize,
    height: *mut usize,
    rgb: *mut u8,
    rgb_cap: usize,
    depth: *mut f32,
    depth_cap: usize,
) -> RnStatus {
    guard(|| {
        let env = nonnull(env, "env")?;
        let obs = env.obs.as_ref().ok_or(Error::NoEpisode)?;
        *nonnull_mut(width, "width")? = obs.width;
        *nonnull_mut(height, "height")? = obs.height;
        if !rgb.is_null() {
            if rgb_cap < obs.rgb.len() {
                return Err(Fail::Status(
                    RnStatus::BufferTooSmall,
                    format!("rgb buffer holds {rgb_cap} bytes, need {}", obs.rgb.len()),
                ));
            }
            ptr::copy_nonoverlapping(obs.rgb.as_ptr(), rgb, obs.rgb.len());
        }
        if !depth.is_null() {
            let d = obs
                .depth
                .as_ref()
                .ok_or_else(|| Fail::Status(RnStatus::InvalidArgument, "sensor has no depth".into()))?;
            if depth_cap < d.len() {
                return Err(Fail::Status(
                    RnStatus::BufferTooSmall,
                    format!("depth buffer holds {depth_cap} floats, need {}", d.len()),
                ));
            }
            ptr::copy_nonoverlapping(d.as_ptr(), depth, d.len());
        }
        Ok(())
    })
}

/// # Safety
/// `env` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rn_env_free(env: *mut RnEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Success weighted by path length.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_spl(success: bool, l: f64, p: f64, out: *mut f64) -> RnStatus {
    guard(|| {
        *nonnull_mut(out, "out")? = metrics::spl(success, l, p)?;
        Ok(())
    })
}
