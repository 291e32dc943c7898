use std::path::PathBuf;
use std::process::Command;

fn target_profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_matches_exports() {
    let header = include_str!("../include/lapkit.h");
    for name in [
        "lapkit_env_new",
        "lapkit_env_free",
        "lapkit_env_reset",
        "lapkit_env_step",
        "lapkit_env_action_len",
        "lapkit_env_action_dim",
        "lapkit_env_obs_len",
        "lapkit_last_error",
        "lapkit_version",
        "lapkit_ptsd_to_pose",
        "typedef struct LapkitEnv LapkitEnv;",
        "LAPKIT_STATUS_ACTION_SHAPE = 5",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_profile_dir().join("liblapkit_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("lapkit_c_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
