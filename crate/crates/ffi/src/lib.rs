//! C ABI over the `semiclass` laboratory.
//!
//! Every function returns a [`SemiclassStatus`]. On failure the message is
//! kept per thread and read with [`semiclass_last_error_message`]. Handles
//! are opaque, created by `*_new` functions and released by the matching
//! `*_free`. Complex arrays are interleaved `re, im` pairs of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use num_complex::Complex64;
use semiclass::bands::{compute_band_structure, BandStructure};
use semiclass::bloch::WaveFunction;
use semiclass::error::Error;
use semiclass::harness::fit_order;
use semiclass::lattice::{build_grid, build_lattice, ExternalKind, ExternalPotential, GaussianTerm, PeriodicPotential, SimulationGrid};
use semiclass::propagator::{position_expectation, prepare_band_packet, propagate, PropagatorConfig};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemiclassStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GridMismatch = 3,
    NotIsolated = 4,
    Gauge = 5,
    WrapContamination = 6,
    Instability = 7,
    BankIncomplete = 8,
    MetricFloor = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

impl From<&Error> for SemiclassStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => SemiclassStatus::InvalidArgument,
            Error::GridMismatch(_) => SemiclassStatus::GridMismatch,
            Error::NotIsolated { .. } => SemiclassStatus::NotIsolated,
            Error::Gauge { .. } => SemiclassStatus::Gauge,
            Error::WrapContamination { .. } => SemiclassStatus::WrapContamination,
            Error::Instability(_) => SemiclassStatus::Instability,
            Error::BankIncomplete { .. } => SemiclassStatus::BankIncomplete,
            Error::MetricFloor(_) => SemiclassStatus::MetricFloor,
            Error::Config(_) => SemiclassStatus::Config,
            Error::Io(_) => SemiclassStatus::Io,
        }
    }
}

/// Real-space grid over a periodic box of lattice cells.
pub struct SemiclassGrid(SimulationGrid);

/// Band structure on the quasimomentum grid of a [`SemiclassGrid`].
pub struct SemiclassBands {
    grid: SimulationGrid,
    bs: BandStructure,
}

/// Wave function sampled on a grid.
pub struct SemiclassWave(WaveFunction);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SemiclassStatus, msg: impl Into<String>) -> SemiclassStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), SemiclassStatus>) -> SemiclassStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SemiclassStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SemiclassStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn check<T>(r: semiclass::error::Result<T>) -> Result<T, SemiclassStatus> {
    r.map_err(|e| fail((&e).into(), e.to_string()))
}

fn null(name: &str) -> SemiclassStatus {
    fail(SemiclassStatus::NullPointer, format!("{name} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, SemiclassStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn as_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, SemiclassStatus> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], SemiclassStatus> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(name))
    } else {
        Ok(slice::from_raw_parts(p, len))
    }
}

unsafe fn as_mut_slice<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], SemiclassStatus> {
    if len == 0 {
        Ok(&mut [])
    } else if p.is_null() {
        Err(null(name))
    } else {
        Ok(slice::from_raw_parts_mut(p, len))
    }
}

fn check_len(have: usize, need: usize, name: &str) -> Result<(), SemiclassStatus> {
    if have < need {
        return Err(fail(SemiclassStatus::InvalidArgument, format!("{name} holds {have} values, {need} needed")));
    }
    Ok(())
}

fn into_handle<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before building `value`
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

unsafe fn periodic(harmonics: *const u32, amplitudes: *const f64, n: usize) -> Result<PeriodicPotential, SemiclassStatus> {
    let m = as_slice(harmonics, n, "harmonics")?;
    let v = as_slice(amplitudes, n, "amplitudes")?;
    check(PeriodicPotential::new(m.iter().copied().zip(v.iter().copied()).collect()))
}

unsafe fn external(terms: *const f64, n: usize) -> Result<ExternalPotential, SemiclassStatus> {
    let t = as_slice(terms, 3 * n, "gaussian_terms")?;
    let terms: Vec<GaussianTerm> =
        t.chunks_exact(3).map(|c| GaussianTerm { amplitude: c[0], center: c[1], width: c[2] }).collect();
    check(ExternalPotential::new(ExternalKind::GaussianSum, terms))
}

/// Message of the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn semiclass_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn semiclass_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Grid of `n_cells` cells of length `a`, `points_per_cell` samples each.
/// Both counts must be powers of two, at least 4.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn semiclass_grid_new(
    a: f64,
    n_cells: usize,
    points_per_cell: usize,
    out: *mut *mut SemiclassGrid,
) -> SemiclassStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let lattice = check(build_lattice(a))?;
        into_handle(out, SemiclassGrid(check(build_grid(lattice, n_cells, points_per_cell))?));
        Ok(())
    })
}

/// Number of real-space samples.
///
/// # Safety
/// `grid` must be a live grid handle or null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_grid_n_points(grid: *const SemiclassGrid, out: *mut usize) -> SemiclassStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(grid, "grid")?.0.n_points();
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle from [`semiclass_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semiclass_grid_free(grid: *mut SemiclassGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Bands of `V(x) = Σ 2 amplitudes[i] cos(harmonics[i] γ* x)` on the
/// k-grid of `grid`, from a plane-wave basis with `|G| ≤ cutoff γ*`.
///
/// # Safety
/// `grid` must be a live handle, the arrays must hold `n_terms` values
/// each and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_bands_new(
    grid: *const SemiclassGrid,
    harmonics: *const u32,
    amplitudes: *const f64,
    n_terms: usize,
    cutoff: usize,
    n_bands: usize,
    gap_floor: f64,
    out: *mut *mut SemiclassBands,
) -> SemiclassStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = as_ref(grid, "grid")?.0;
        let v = periodic(harmonics, amplitudes, n_terms)?;
        let bs = check(compute_band_structure(&v, &grid, cutoff, n_bands, gap_floor))?;
        into_handle(out, SemiclassBands { grid, bs });
        Ok(())
    })
}

/// Number of k-points and of computed bands.
///
/// # Safety
/// `bands` must be a live handle; `n_k` and `n_bands` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_bands_shape(
    bands: *const SemiclassBands,
    n_k: *mut usize,
    n_bands: *mut usize,
) -> SemiclassStatus {
    guard(|| {
        let b = as_ref(bands, "bands")?;
        *as_mut(n_k, "n_k")? = b.bs.n_k();
        *as_mut(n_bands, "n_bands")? = b.bs.n_bands();
        Ok(())
    })
}

fn band_index(b: &SemiclassBands, n: usize) -> Result<(), SemiclassStatus> {
    if n >= b.bs.n_bands() {
        return Err(fail(SemiclassStatus::InvalidArgument, format!("band {n} out of range")));
    }
    Ok(())
}

/// Copies the k-grid into `out` (`len ≥ n_k`).
///
/// # Safety
/// `bands` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn semiclass_bands_k_grid(bands: *const SemiclassBands, out: *mut f64, len: usize) -> SemiclassStatus {
    guard(|| {
        let b = as_ref(bands, "bands")?;
        check_len(len, b.bs.n_k(), "out")?;
        as_mut_slice(out, len, "out")?[..b.bs.n_k()].copy_from_slice(&b.bs.k_grid());
        Ok(())
    })
}

/// Copies `E_n` on the k-grid into `out` (`len ≥ n_k`), `n` 0-based.
///
/// # Safety
/// `bands` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn semiclass_bands_energies(
    bands: *const SemiclassBands,
    n: usize,
    out: *mut f64,
    len: usize,
) -> SemiclassStatus {
    guard(|| {
        let b = as_ref(bands, "bands")?;
        band_index(b, n)?;
        check_len(len, b.bs.n_k(), "out")?;
        as_mut_slice(out, len, "out")?[..b.bs.n_k()].copy_from_slice(b.bs.energies(n));
        Ok(())
    })
}

/// Copies the velocities `∇E_n` into `out`. Fails unless band `n` is
/// isolated.
///
/// # Safety
/// `bands` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn semiclass_bands_velocities(
    bands: *const SemiclassBands,
    n: usize,
    out: *mut f64,
    len: usize,
) -> SemiclassStatus {
    guard(|| {
        let b = as_ref(bands, "bands")?;
        band_index(b, n)?;
        check_len(len, b.bs.n_k(), "out")?;
        let v = check(b.bs.band_velocity(n))?;
        as_mut_slice(out, len, "out")?[..b.bs.n_k()].copy_from_slice(v);
        Ok(())
    })
}

/// Whether band `n` is isolated and, if so, its Zak phase in `(-π, π]`
/// (`NaN` otherwise).
///
/// # Safety
/// `bands` must be a live handle; `isolated` and `zak_phase` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_bands_isolation(
    bands: *const SemiclassBands,
    n: usize,
    isolated: *mut bool,
    zak_phase: *mut f64,
) -> SemiclassStatus {
    guard(|| {
        let b = as_ref(bands, "bands")?;
        band_index(b, n)?;
        *as_mut(isolated, "isolated")? = b.bs.is_isolated(n);
        *as_mut(zak_phase, "zak_phase")? = b.bs.zak_phase(n).unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `bands` must be null or a handle from [`semiclass_bands_new`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn semiclass_bands_free(bands: *mut SemiclassBands) {
    if !bands.is_null() {
        drop(Box::from_raw(bands));
    }
}

/// Normalized packet in band `n` with Gaussian Bloch coefficients of
/// center `k_center` and width `sigma_k`.
///
/// # Safety
/// `bands` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_packet_new(
    bands: *const SemiclassBands,
    n: usize,
    k_center: f64,
    sigma_k: f64,
    out: *mut *mut SemiclassWave,
) -> SemiclassStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let b = as_ref(bands, "bands")?;
        band_index(b, n)?;
        into_handle(out, SemiclassWave(check(prepare_band_packet(&b.bs, &b.grid, n, k_center, sigma_k))?));
        Ok(())
    })
}

/// Wave function from `n_points` interleaved samples on `grid`.
///
/// # Safety
/// `grid` must be a live handle, `samples` must hold `2 * n_points`
/// doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_wave_new(
    grid: *const SemiclassGrid,
    samples: *const f64,
    n_points: usize,
    out: *mut *mut SemiclassWave,
) -> SemiclassStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = as_ref(grid, "grid")?.0;
        let s = as_slice(samples, 2 * n_points, "samples")?;
        let z = s.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        into_handle(out, SemiclassWave(check(WaveFunction::new(grid, z))?));
        Ok(())
    })
}

/// Number of samples and `L²` norm.
///
/// # Safety
/// `wave` must be a live handle; `n_points` and `norm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_wave_info(
    wave: *const SemiclassWave,
    n_points: *mut usize,
    norm: *mut f64,
) -> SemiclassStatus {
    guard(|| {
        let w = as_ref(wave, "wave")?;
        *as_mut(n_points, "n_points")? = w.0.samples().len();
        *as_mut(norm, "norm")? = w.0.norm();
        Ok(())
    })
}

/// Copies the samples as interleaved pairs into `out` (`len ≥ 2 n_points`).
///
/// # Safety
/// `wave` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn semiclass_wave_samples(wave: *const SemiclassWave, out: *mut f64, len: usize) -> SemiclassStatus {
    guard(|| {
        let w = as_ref(wave, "wave")?;
        let s = w.0.samples();
        check_len(len, 2 * s.len(), "out")?;
        let dst = as_mut_slice(out, len, "out")?;
        for (d, z) in dst.chunks_exact_mut(2).zip(s) {
            d[0] = z.re;
            d[1] = z.im;
        }
        Ok(())
    })
}

/// Macroscopic position `⟨ψ, εx ψ⟩`, with `x` unwrapped about the center
/// of mass.
///
/// # Safety
/// `wave` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_wave_position(wave: *const SemiclassWave, epsilon: f64, out: *mut f64) -> SemiclassStatus {
    guard(|| {
        let w = as_ref(wave, "wave")?;
        *as_mut(out, "out")? = check(position_expectation(&w.0, epsilon))?;
        Ok(())
    })
}

/// # Safety
/// `wave` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semiclass_wave_free(wave: *mut SemiclassWave) {
    if !wave.is_null() {
        drop(Box::from_raw(wave));
    }
}

/// Evolves `wave` to macroscopic time `t_macro` under
/// `-½Δ + V(x) + W(εx)`, with `V` as in [`semiclass_bands_new`] and `W` a
/// sum of `n_gaussians` bumps given as `(amplitude, center, width)`
/// triples. `dt_factor` sets the micro step `dt_factor / E_max`; pass 0
/// for the default. Writes the final macroscopic position to `position`
/// if it is non-null.
///
/// # Safety
/// `wave` must be a live handle, the arrays must hold `n_terms` values and
/// `3 * n_gaussians` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_propagate(
    wave: *const SemiclassWave,
    harmonics: *const u32,
    amplitudes: *const f64,
    n_terms: usize,
    gaussians: *const f64,
    n_gaussians: usize,
    epsilon: f64,
    t_macro: f64,
    dt_factor: f64,
    out: *mut *mut SemiclassWave,
    position: *mut f64,
) -> SemiclassStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let w0 = as_ref(wave, "wave")?;
        let v = periodic(harmonics, amplitudes, n_terms)?;
        let w = external(gaussians, n_gaussians)?;
        let mut cfg = PropagatorConfig::new(epsilon, t_macro);
        if dt_factor != 0.0 {
            cfg.dt_factor = dt_factor;
        }
        let state = check(propagate(&w0.0, &v, &w, &cfg))?;
        if let Some(p) = position.as_mut() {
            *p = state.position_expectation();
        }
        into_handle(out, SemiclassWave(state.psi));
        Ok(())
    })
}

/// Least-squares slope of `log values` against `log epsilons`. Needs at
/// least three points above the numerical floor.
///
/// # Safety
/// Both arrays must hold `n` doubles; `slope` and `r2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semiclass_fit_order(
    epsilons: *const f64,
    values: *const f64,
    n: usize,
    slope: *mut f64,
    r2: *mut f64,
) -> SemiclassStatus {
    guard(|| {
        let e = as_slice(epsilons, n, "epsilons")?;
        let v = as_slice(values, n, "values")?;
        let fit = check(fit_order(e, v))?;
        *as_mut(slope, "slope")? = fit.slope;
        *as_mut(r2, "r2")? = fit.r2;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    fn message() -> String {
        unsafe { CStr::from_ptr(semiclass_last_error_message()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, SemiclassStatus::Panic);
        assert_eq!(message(), "panic: boom");
    }

    #[test]
    fn errors_map_to_matching_codes() {
        let cases = [
            (Error::GridMismatch(String::new()), SemiclassStatus::GridMismatch),
            (Error::NotIsolated { band: 0, k: 0.5, margin: 0.0 }, SemiclassStatus::NotIsolated),
            (Error::WrapContamination { mass: 1.0, tolerance: 1e-10 }, SemiclassStatus::WrapContamination),
            (Error::BankIncomplete { captured: 0.5, required: 0.99 }, SemiclassStatus::BankIncomplete),
            (Error::MetricFloor(String::new()), SemiclassStatus::MetricFloor),
        ];
        for (e, code) in cases {
            let text = e.to_string();
            assert_eq!(guard(|| check::<()>(Err(e))), code);
            assert_eq!(message(), text);
        }
    }
}
