use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use debias_ffi::*;

fn planted(n: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<u32>) {
    let set = debias::synth::planted_direction(n, d, 0.1, seed);
    (set.data().to_vec(), set.labels().iter().map(|&l| l as u32).collect())
}

unsafe fn labeled(n: usize, d: usize, seed: u64) -> *mut DebiasLabeledSet {
    let (data, labels) = planted(n, d, seed);
    let mut out = ptr::null_mut();
    assert_eq!(
        debias_labeled_from_rows(data.as_ptr(), n, d, labels.as_ptr(), &mut out),
        DebiasStatus::Ok
    );
    out
}

#[test]
fn inlp_round_trip_through_the_abi() {
    unsafe {
        let d = 6;
        let train = labeled(600, d, 1);
        let dev = labeled(300, d, 2);
        assert_eq!(debias_labeled_len(train), 600);
        assert_eq!(debias_labeled_dim(train), d);

        let mut proj = ptr::null_mut();
        let cfg = debias_inlp_config_default();
        assert_eq!(cfg.max_classifiers, 35);
        assert_eq!(debias_run_inlp(train, dev, &cfg, &mut proj), DebiasStatus::Ok);
        assert_eq!(debias_projection_dim(proj), d);
        assert!(debias_projection_removed(proj) >= 1);
        assert!(debias_projection_iterations(proj) >= debias_projection_removed(proj));

        let mut m = vec![0.0; d * d];
        assert_eq!(
            debias_projection_matrix(proj, m.as_mut_ptr(), m.len()),
            DebiasStatus::Ok
        );
        for i in 0..d {
            for j in 0..d {
                assert!((m[i * d + j] - m[j * d + i]).abs() < 1e-9);
            }
        }
        let x: Vec<f64> = (0..2 * d).map(|i| i as f64).collect();
        let mut y = vec![0.0; 2 * d];
        let mut z = vec![0.0; 2 * d];
        assert_eq!(
            debias_projection_apply(proj, x.as_ptr(), 2, d, y.as_mut_ptr()),
            DebiasStatus::Ok
        );
        assert_eq!(
            debias_projection_apply(proj, y.as_ptr(), 2, d, z.as_mut_ptr()),
            DebiasStatus::Ok
        );
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-9);
        }

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.proj").to_str().unwrap()).unwrap();
        assert_eq!(debias_projection_save(proj, path.as_ptr()), DebiasStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(debias_projection_load(path.as_ptr(), &mut loaded), DebiasStatus::Ok);
        let mut m2 = vec![0.0; d * d];
        debias_projection_matrix(loaded, m2.as_mut_ptr(), m2.len());
        assert_eq!(m, m2);

        debias_projection_free(loaded);
        debias_projection_free(proj);
        debias_labeled_free(train);
        debias_labeled_free(dev);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let missing = CString::new("/nonexistent/space.vec").unwrap();
        let mut space = ptr::null_mut();
        assert_eq!(debias_space_load(missing.as_ptr(), &mut space), DebiasStatus::Io);
        assert!(space.is_null());
        let msg = CStr::from_ptr(debias_last_error()).to_str().unwrap();
        assert!(msg.contains("/nonexistent/space.vec"), "{msg}");

        assert_eq!(debias_space_load(ptr::null(), &mut space), DebiasStatus::NullPointer);

        let train = labeled(50, 4, 1);
        let dev = labeled(50, 3, 2);
        let mut proj = ptr::null_mut();
        assert_eq!(
            debias_run_inlp(train, dev, ptr::null(), &mut proj),
            DebiasStatus::DimensionMismatch
        );

        let (data, _) = planted(4, 2, 1);
        let bad_labels = [0u32, 1, 2, 0];
        let mut set = ptr::null_mut();
        assert_eq!(
            debias_labeled_from_rows(data.as_ptr(), 4, 2, bad_labels.as_ptr(), &mut set),
            DebiasStatus::InvalidArgument
        );

        let mut small = [0.0; 3];
        let p = {
            let mut p = ptr::null_mut();
            debias_run_inlp(train, train, ptr::null(), &mut p);
            p
        };
        assert_eq!(
            debias_projection_matrix(p, small.as_mut_ptr(), 3),
            DebiasStatus::InvalidArgument
        );

        debias_projection_free(p);
        debias_labeled_free(train);
        debias_labeled_free(dev);
        debias_space_free(ptr::null_mut());
    }
}

#[test]
fn nullspace_projection_matches_closed_form() {
    let w = [3.0, 4.0, 0.0];
    let mut p = [0.0; 9];
    let st = unsafe { debias_nullspace_projection(w.as_ptr(), 1, 3, p.as_mut_ptr()) };
    assert_eq!(st, DebiasStatus::Ok);
    let u = [0.6, 0.8, 0.0];
    for i in 0..3 {
        for j in 0..3 {
            let expected = f64::from(u8::from(i == j)) - u[i] * u[j];
            assert!((p[i * 3 + j] - expected).abs() < 1e-12);
        }
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/debias.h")
}

#[test]
fn header_declares_the_exported_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "debias_last_error",
        "debias_version",
        "debias_inlp_config_default",
        "debias_labeled_load",
        "debias_labeled_from_rows",
        "debias_labeled_free",
        "debias_space_load",
        "debias_space_save",
        "debias_space_free",
        "debias_run_inlp",
        "debias_projection_load",
        "debias_projection_save",
        "debias_projection_apply",
        "debias_projection_apply_space",
        "debias_projection_matrix",
        "debias_projection_free",
        "debias_nullspace_projection",
        "typedef struct DebiasProjection DebiasProjection",
        "DEBIAS_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let version = unsafe { CStr::from_ptr(debias_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "debias.h"

int main(void) {
    double w[4] = {1.0, 1.0, 0.0, 0.0};
    double p[16];
    if (debias_nullspace_projection(w, 1, 4, p) != DEBIAS_STATUS_OK) return 1;
    DebiasSpace *s = NULL;
    DebiasStatus st = debias_space_load("/nonexistent.vec", &s);
    if (st != DEBIAS_STATUS_IO || s != NULL) return 2;
    printf("%.3f %.3f %s\n", p[0], p[1], debias_version());
    return 0;
}
"#;

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_static_library() {
    let Ok(exe) = std::env::current_exe() else { return };
    let deps = exe.parent().unwrap();
    let lib = [
        deps.join("libdebias_ffi.a"),
        deps.parent().unwrap().join("libdebias_ffi.a"),
    ]
    .into_iter()
    .find(|p| p.is_file());
    let Some(lib) = lib else {
        eprintln!("skipping: static library not built");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.trim(), format!("0.500 -0.500 {}", env!("CARGO_PKG_VERSION")));
}
