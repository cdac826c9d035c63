//! Calls through the exported C ABI.

use std::f64::consts::PI;
use std::ffi::CStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use semiclass_ffi::*;

fn last_error() -> String {
    let p = semiclass_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Fixture {
    grid: *mut SemiclassGrid,
    bands: *mut SemiclassBands,
}

const HARMONICS: [u32; 1] = [1];
const AMPLITUDES: [f64; 1] = [0.15];

impl Fixture {
    fn new() -> Self {
        let mut grid = ptr::null_mut();
        let mut bands = ptr::null_mut();
        unsafe {
            assert_eq!(semiclass_grid_new(2.0 * PI, 64, 16, &mut grid), SemiclassStatus::Ok);
            assert_eq!(
                semiclass_bands_new(grid, HARMONICS.as_ptr(), AMPLITUDES.as_ptr(), 1, 10, 4, 0.05, &mut bands),
                SemiclassStatus::Ok
            );
        }
        Fixture { grid, bands }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            semiclass_bands_free(self.bands);
            semiclass_grid_free(self.grid);
        }
    }
}

#[test]
fn band_queries() {
    let f = Fixture::new();
    let (mut n_k, mut n_bands) = (0, 0);
    let mut e = vec![0.0; 64];
    let mut v = vec![0.0; 64];
    let mut k = vec![0.0; 64];
    let (mut isolated, mut zak) = (false, 0.0);
    unsafe {
        assert_eq!(semiclass_bands_shape(f.bands, &mut n_k, &mut n_bands), SemiclassStatus::Ok);
        assert_eq!((n_k, n_bands), (64, 4));
        assert_eq!(semiclass_bands_k_grid(f.bands, k.as_mut_ptr(), k.len()), SemiclassStatus::Ok);
        assert_eq!(semiclass_bands_energies(f.bands, 0, e.as_mut_ptr(), e.len()), SemiclassStatus::Ok);
        assert_eq!(semiclass_bands_velocities(f.bands, 0, v.as_mut_ptr(), v.len()), SemiclassStatus::Ok);
        assert_eq!(semiclass_bands_isolation(f.bands, 0, &mut isolated, &mut zak), SemiclassStatus::Ok);
    }
    assert!((k[0] + 0.5).abs() < 1e-15 && (k[1] - k[0] - 1.0 / 64.0).abs() < 1e-15);
    let j = 32 + 13;
    assert!(v[j] > 0.0 && e[j] > e[32]);
    assert!(isolated);
    assert!((zak.abs() - PI).abs() < 1e-6, "zak {zak}");

    unsafe {
        assert_eq!(semiclass_bands_energies(f.bands, 9, e.as_mut_ptr(), e.len()), SemiclassStatus::InvalidArgument);
        assert!(last_error().contains("band 9"));
        assert_eq!(semiclass_bands_energies(f.bands, 0, e.as_mut_ptr(), 10), SemiclassStatus::InvalidArgument);
        assert_eq!(semiclass_bands_energies(f.bands, 0, ptr::null_mut(), 64), SemiclassStatus::NullPointer);
    }
}

#[test]
fn packet_propagation_and_position() {
    let f = Fixture::new();
    let mut psi = ptr::null_mut();
    let mut out = ptr::null_mut();
    let (mut n, mut norm, mut x0, mut x1) = (0, 0.0, 0.0, 0.0);
    let gaussians = [0.1, 0.4, 0.5];
    unsafe {
        assert_eq!(semiclass_packet_new(f.bands, 0, 0.2, 0.05, &mut psi), SemiclassStatus::Ok);
        assert_eq!(semiclass_wave_info(psi, &mut n, &mut norm), SemiclassStatus::Ok);
        assert_eq!(n, 64 * 16);
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(semiclass_wave_position(psi, 0.2, &mut x0), SemiclassStatus::Ok);
        let status = semiclass_propagate(
            psi,
            HARMONICS.as_ptr(),
            AMPLITUDES.as_ptr(),
            1,
            gaussians.as_ptr(),
            1,
            0.2,
            0.5,
            0.0,
            &mut out,
            &mut x1,
        );
        assert_eq!(status, SemiclassStatus::Ok, "{}", last_error());
        assert_eq!(semiclass_wave_info(out, &mut n, &mut norm), SemiclassStatus::Ok);
        assert!((norm - 1.0).abs() < 1e-10);
        semiclass_wave_free(out);
        semiclass_wave_free(psi);
    }
    // group velocity of band 1 near k = 0.2 is positive and below the free value
    assert!(x1 > x0 && x1 - x0 < 0.2 * 0.5, "{x0} -> {x1}");
}

#[test]
fn wave_round_trip_and_errors() {
    let f = Fixture::new();
    let mut n = 0;
    unsafe { semiclass_grid_n_points(f.grid, &mut n) };
    let samples: Vec<f64> = (0..2 * n).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
    let mut w = ptr::null_mut();
    let mut back = vec![0.0; 2 * n];
    unsafe {
        assert_eq!(semiclass_wave_new(f.grid, samples.as_ptr(), n, &mut w), SemiclassStatus::Ok);
        assert_eq!(semiclass_wave_samples(w, back.as_mut_ptr(), back.len()), SemiclassStatus::Ok);
        semiclass_wave_free(w);
        assert_eq!(semiclass_wave_new(f.grid, samples.as_ptr(), n / 2, &mut w), SemiclassStatus::GridMismatch);
    }
    assert_eq!(back, samples);

    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(semiclass_grid_new(2.0 * PI, 12, 16, &mut g), SemiclassStatus::InvalidArgument);
        assert!(g.is_null());
        assert!(last_error().contains("power of two"));
        assert_eq!(semiclass_grid_new(-1.0, 16, 16, &mut g), SemiclassStatus::InvalidArgument);
        assert_eq!(semiclass_grid_new(1.0, 16, 16, ptr::null_mut()), SemiclassStatus::NullPointer);
        semiclass_grid_free(ptr::null_mut());
        semiclass_bands_free(ptr::null_mut());
        semiclass_wave_free(ptr::null_mut());
    }
}

#[test]
fn free_band_packet_is_not_isolated() {
    let mut grid = ptr::null_mut();
    let mut bands = ptr::null_mut();
    let mut psi = ptr::null_mut();
    let mut v = vec![0.0; 64];
    unsafe {
        semiclass_grid_new(2.0 * PI, 64, 8, &mut grid);
        let s = semiclass_bands_new(grid, ptr::null(), ptr::null(), 0, 8, 2, 0.05, &mut bands);
        assert_eq!(s, SemiclassStatus::Ok, "{}", last_error());
        assert_eq!(semiclass_bands_velocities(bands, 0, v.as_mut_ptr(), v.len()), SemiclassStatus::NotIsolated);
        assert_eq!(semiclass_packet_new(bands, 0, 0.35, 0.028, &mut psi), SemiclassStatus::NotIsolated);
        semiclass_bands_free(bands);
        semiclass_grid_free(grid);
    }
}

#[test]
fn fit_order_through_abi() {
    let eps = [0.2, 0.1, 0.05, 0.025];
    let vals: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
    let (mut slope, mut r2) = (0.0, 0.0);
    unsafe {
        assert_eq!(semiclass_fit_order(eps.as_ptr(), vals.as_ptr(), 4, &mut slope, &mut r2), SemiclassStatus::Ok);
        assert!((slope - 2.0).abs() < 1e-12 && r2 > 1.0 - 1e-12);
        assert_eq!(semiclass_fit_order(eps.as_ptr(), vals.as_ptr(), 2, &mut slope, &mut r2), SemiclassStatus::MetricFloor);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(semiclass_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = fs::read_to_string(crate_dir().join("include/semiclass.h")).unwrap();
    let src = fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct SemiclassWave SemiclassWave;"));
    assert!(header.contains("SEMICLASS_STATUS_PANIC = 12"));
}

/// Directory holding the library artifacts of this build.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = artifact_dir().join("libsemiclass_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler named cc");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
