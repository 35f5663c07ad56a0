use std::path::PathBuf;
use std::process::Command;

use msma::model::{ModelConfig, Msma};

/// Directory holding the built static library: `cargo test` emits it next to
/// the test binary in `deps/`.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header_and_static_library() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = lib_dir().join("libmsma_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .output()
        .expect("a C compiler on PATH");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ck = dir.path().join("m.ckpt");
    let cfg = ModelConfig {
        history: 30,
        horizon: 50,
        ..ModelConfig::tiny()
    };
    Msma::new(cfg, 1).unwrap().checkpoint().unwrap().write(&ck).unwrap();
    let run = Command::new(&exe).arg(&ck).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("status 2"), "{stdout}");
}
