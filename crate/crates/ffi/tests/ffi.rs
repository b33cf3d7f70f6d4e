use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use robustnav_ffi::*;

fn last_error() -> String {
    let p = rn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scene(seed: u64) -> *mut RnScene {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rn_scene_generate(seed, &mut s) }, RnStatus::Ok);
    s
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(rn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scene_save_load_round_trip() {
    let s = scene(4);
    let (mut bytes, mut len) = (ptr::null_mut(), 0usize);
    assert_eq!(unsafe { rn_scene_save(s, &mut bytes, &mut len) }, RnStatus::Ok);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { rn_scene_load(bytes, len, &mut t) }, RnStatus::Ok);
    let (mut bytes2, mut len2) = (ptr::null_mut(), 0usize);
    assert_eq!(unsafe { rn_scene_save(t, &mut bytes2, &mut len2) }, RnStatus::Ok);
    assert_eq!(unsafe { std::slice::from_raw_parts(bytes, len) }, unsafe {
        std::slice::from_raw_parts(bytes2, len2)
    });
    let (mut w, mut h, mut c) = (0, 0, 0.0);
    assert_eq!(unsafe { rn_scene_dims(t, &mut w, &mut h, &mut c) }, RnStatus::Ok);
    assert_eq!((w, h, c), (160, 160, 0.05));
    unsafe {
        rn_bytes_free(bytes, len);
        rn_bytes_free(bytes2, len2);
        rn_scene_free(s);
        rn_scene_free(t);
    }
}

#[test]
fn truncated_scene_reports_parse_error() {
    let s = scene(1);
    let (mut bytes, mut len) = (ptr::null_mut(), 0usize);
    unsafe { rn_scene_save(s, &mut bytes, &mut len) };
    let mut t = ptr::null_mut();
    let st = unsafe { rn_scene_load(bytes, len / 2, &mut t) };
    assert_eq!(st, RnStatus::Parse);
    assert!(t.is_null());
    assert!(last_error().contains("byte"), "{}", last_error());
    unsafe {
        rn_bytes_free(bytes, len);
        rn_scene_free(s);
    }
}

#[test]
fn null_arguments_are_rejected() {
    assert_eq!(unsafe { rn_scene_generate(0, ptr::null_mut()) }, RnStatus::NullArgument);
    assert!(last_error().contains("out"));
    let mut d = 0.0;
    assert_eq!(
        unsafe { rn_geodesic_distance(ptr::null(), 0.0, 0.0, 1.0, 1.0, &mut d) },
        RnStatus::NullArgument
    );
    assert_eq!(unsafe { rn_spl(true, 1.0, 1.0, ptr::null_mut()) }, RnStatus::NullArgument);
    unsafe {
        rn_scene_free(ptr::null_mut());
        rn_env_free(ptr::null_mut());
        rn_bytes_free(ptr::null_mut(), 0);
    }
}

#[test]
fn spl_hand_values() {
    let mut out = -1.0;
    assert_eq!(unsafe { rn_spl(true, 3.0, 3.0, &mut out) }, RnStatus::Ok);
    assert_eq!(out, 1.0);
    assert_eq!(unsafe { rn_spl(true, 3.0, 6.0, &mut out) }, RnStatus::Ok);
    assert_eq!(out, 0.5);
    assert_eq!(unsafe { rn_spl(false, 3.0, 3.0, &mut out) }, RnStatus::Ok);
    assert_eq!(out, 0.0);
    assert_eq!(unsafe { rn_spl(true, 0.0, 3.0, &mut out) }, RnStatus::InvalidArgument);
}

#[test]
fn geodesic_matches_core() {
    let s = scene(2);
    let map = robustnav::world::generate_scene(2, &robustnav::world::SceneParams::default()).unwrap();
    let cells: Vec<usize> = (0..map.width() * map.height())
        .filter(|&i| map.is_navigable(i, robustnav::world::DEFAULT_AGENT_RADIUS))
        .collect();
    let a = map.cell_center(cells[0]);
    let b = map.cell_center(cells[cells.len() - 1]);
    let expect = robustnav::world::geodesic_distance(&map, a, &robustnav::world::GoalRegion::Point(b)).unwrap();
    let mut d = 0.0;
    assert_eq!(unsafe { rn_geodesic_distance(s, a.x, a.y, b.x, b.y, &mut d) }, RnStatus::Ok);
    assert_eq!(d, expect);
    assert_eq!(
        unsafe { rn_geodesic_distance(s, -5.0, -5.0, b.x, b.y, &mut d) },
        RnStatus::Unreachable
    );
    unsafe { rn_scene_free(s) };
}

#[test]
fn env_episode_through_the_abi() {
    let s = scene(3);
    let map = robustnav::world::generate_scene(3, &robustnav::world::SceneParams::default()).unwrap();
    let cells: Vec<usize> = (0..map.width() * map.height())
        .filter(|&i| map.is_navigable(i, robustnav::world::DEFAULT_AGENT_RADIUS))
        .collect();
    let start = map.cell_center(cells[cells.len() / 3]);
    let goal = map.cell_center(cells[2 * cells.len() / 3]);

    let cfg = CString::new("sensor = \"rgbd\"\n[intrinsics]\nh_fov = 79.0\nwidth = 32\nheight = 24\nmax_depth = 10.0\n").unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { rn_env_new(s, cfg.as_ptr(), &mut env) }, RnStatus::Ok);

    let mut r = RnStepResult::default();
    assert_eq!(unsafe { rn_env_step(env, RnAction::MoveAhead, &mut r) }, RnStatus::NoEpisode);
    let (mut w, mut h) = (0usize, 0usize);
    assert_eq!(
        unsafe { rn_env_frame(env, &mut w, &mut h, ptr::null_mut(), 0, ptr::null_mut(), 0) },
        RnStatus::NoEpisode
    );

    assert_eq!(
        unsafe { rn_env_reset_pointnav(env, 9, start.x, start.y, 0.0, goal.x, goal.y) },
        RnStatus::Ok
    );
    assert_eq!(
        unsafe { rn_env_frame(env, &mut w, &mut h, ptr::null_mut(), 0, ptr::null_mut(), 0) },
        RnStatus::Ok
    );
    assert_eq!((w, h), (32, 24));
    let mut rgb = vec![0u8; w * h * 3];
    let mut depth = vec![0f32; w * h];
    assert_eq!(
        unsafe { rn_env_frame(env, &mut w, &mut h, rgb.as_mut_ptr(), 10, ptr::null_mut(), 0) },
        RnStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe {
            rn_env_frame(
                env,
                &mut w,
                &mut h,
                rgb.as_mut_ptr(),
                rgb.len(),
                depth.as_mut_ptr(),
                depth.len(),
            )
        },
        RnStatus::Ok
    );
    assert!(depth.iter().all(|d| *d > 0.0));

    assert_eq!(unsafe { rn_env_step(env, RnAction::LookUp, &mut r) }, RnStatus::IllegalAction);
    assert_eq!(unsafe { rn_env_step(env, RnAction::RotateLeft, &mut r) }, RnStatus::Ok);
    assert!(r.gps_r > 0.0 && r.gps_theta.is_finite());
    assert!(!r.done);
    assert_eq!(unsafe { rn_env_step(env, RnAction::End, &mut r) }, RnStatus::Ok);
    assert!(r.done && !r.success);
    assert_eq!(unsafe { rn_env_step(env, RnAction::End, &mut r) }, RnStatus::EpisodeDone);

    let bad = CString::new("max_steps = \"many\"").unwrap();
    let mut env2 = ptr::null_mut();
    assert_eq!(unsafe { rn_env_new(s, bad.as_ptr(), &mut env2) }, RnStatus::Parse);
    assert!(env2.is_null());
    unsafe {
        rn_env_free(env);
        rn_scene_free(s);
    }
}

#[test]
fn header_declares_the_abi() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/robustnav.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "rn_version",
        "rn_last_error",
        "rn_scene_generate",
        "rn_scene_load",
        "rn_scene_save",
        "rn_scene_free",
        "rn_geodesic_distance",
        "rn_env_new",
        "rn_env_reset_pointnav",
        "rn_env_step",
        "rn_env_frame",
        "rn_env_free",
        "rn_spl",
        "rn_bytes_free",
        "typedef struct RnScene RnScene",
        "typedef struct RnEnv RnEnv",
        "RN_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Build and run a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("librobustnav_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "robustnav.h"
int main(void) {
    RnScene *s = NULL;
    if (rn_scene_generate(5, &s) != RN_STATUS_OK) { puts(rn_last_error()); return 1; }
    double spl = 0.0;
    if (rn_spl(true, 2.0, 4.0, &spl) != RN_STATUS_OK || spl != 0.5) return 2;
    if (rn_scene_generate(5, NULL) != RN_STATUS_NULL_ARGUMENT) return 3;
    RnEnv *e = NULL;
    if (rn_env_new(s, NULL, &e) != RN_STATUS_OK) return 4;
    rn_env_free(e);
    rn_scene_free(s);
    printf("ok %s\n", rn_version());
    return 0;
}
"#,
    )
    .unwrap();
    let out = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
