//! C ABI over the fenceflow pipeline and its geometry kernels.
//!
//! Conventions: every fallible function returns an [`FfStatus`]; results go
//! to out-parameters. The pipeline is an opaque handle created from a config
//! JSON string; its last error message is owned by the handle and stays
//! valid until the next call on that handle (or until it is freed). Null
//! pointers are rejected with `FF_STATUS_INVALID_ARGUMENT`, never
//! dereferenced.

use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use fenceflow_core::config::RunConfig;
use fenceflow_core::geo::{self, LonLat};
use fenceflow_core::pipeline::{run_command, run_synth, Command};
use fenceflow_core::synth::SynthSpec;

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    InvalidArgument = 1,
    ConfigError = 2,
    InputError = 3,
    InternalError = 4,
}

fn status_from_exit(code: i32) -> FfStatus {
    match code {
        2 => FfStatus::ConfigError,
        3 => FfStatus::InputError,
        _ => FfStatus::InternalError,
    }
}

/// Pipeline stage selector for `ff_pipeline_run`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum FfCommand {
    Validate = 0,
    Trips = 1,
    Congestion = 2,
    Classify = 3,
}

/// Opaque pipeline handle.
pub struct FfPipeline {
    config: RunConfig,
    last_error: Option<CString>,
}

impl FfPipeline {
    fn set_error(&mut self, msg: String) {
        self.last_error = CString::new(msg).ok();
    }
}

/// Version of the underlying library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ff_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Great-circle distance in metres between two (lon, lat) positions.
#[no_mangle]
pub extern "C" fn ff_haversine_m(lon_a: f64, lat_a: f64, lon_b: f64, lat_b: f64) -> f64 {
    geo::haversine_m(LonLat::new(lon_a, lat_a), LonLat::new(lon_b, lat_b))
}

/// Congestion density of one cell: (inflow - outflow) / capacity.
#[no_mangle]
pub extern "C" fn ff_congestion_density(inflow: u64, outflow: u64, capacity_pc: u32) -> f64 {
    if capacity_pc == 0 {
        return f64::NAN;
    }
    fenceflow_core::congestion::congestion_of(
        fenceflow_core::congestion::Flow { inflow, outflow },
        capacity_pc,
    )
}

unsafe fn ring_from_raw(coords: *const f64, n_vertices: usize) -> Option<Vec<LonLat>> {
    if coords.is_null() || n_vertices == 0 || n_vertices > (1 << 20) {
        return None;
    }
    let flat = std::slice::from_raw_parts(coords, n_vertices * 2);
    Some(
        flat.chunks_exact(2)
            .map(|c| LonLat::new(c[0], c[1]))
            .collect(),
    )
}

/// Polygon area in m² of a ring given as `n_vertices` (lon, lat) pairs in a
/// flat array. The ring may omit the closing vertex.
///
/// # Safety
/// `coords` must point to `2 * n_vertices` readable doubles and `out_area`
/// to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ff_polygon_area_m2(
    coords: *const f64,
    n_vertices: usize,
    out_area: *mut f64,
) -> FfStatus {
    if out_area.is_null() {
        return FfStatus::InvalidArgument;
    }
    let Some(ring) = ring_from_raw(coords, n_vertices) else {
        return FfStatus::InvalidArgument;
    };
    match geo::polygon_area_m2(&ring) {
        Ok(area) => {
            *out_area = area;
            FfStatus::Ok
        }
        Err(_) => FfStatus::InputError,
    }
}

/// Even-odd containment test (boundary counts as inside). Writes 1 or 0.
///
/// # Safety
/// `coords` must point to `2 * n_vertices` readable doubles and `out_inside`
/// to a writable int.
#[no_mangle]
pub unsafe extern "C" fn ff_point_in_polygon(
    lon: f64,
    lat: f64,
    coords: *const f64,
    n_vertices: usize,
    out_inside: *mut i32,
) -> FfStatus {
    if out_inside.is_null() {
        return FfStatus::InvalidArgument;
    }
    let Some(ring) = ring_from_raw(coords, n_vertices) else {
        return FfStatus::InvalidArgument;
    };
    *out_inside = geo::point_in_polygon(LonLat::new(lon, lat), &ring) as i32;
    FfStatus::Ok
}

/// Parking capacity from fence area at `slot_area_m2` per slot.
#[no_mangle]
pub extern "C" fn ff_capacity_from_area(area_m2: f64, slot_area_m2: f64) -> u32 {
    if slot_area_m2 <= 0.0 || !area_m2.is_finite() {
        return 0;
    }
    fenceflow_core::ingest::capacity_from_area(area_m2, slot_area_m2)
}

/// Creates a pipeline from a config JSON string (same schema as the CLI's
/// `--config` file). On success writes the handle to `out_pipeline`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out_pipeline` a
/// writable pointer slot. Free the handle with `ff_pipeline_free`.
#[no_mangle]
pub unsafe extern "C" fn ff_pipeline_new(
    config_json: *const c_char,
    out_pipeline: *mut *mut FfPipeline,
) -> FfStatus {
    if config_json.is_null() || out_pipeline.is_null() {
        return FfStatus::InvalidArgument;
    }
    *out_pipeline = ptr::null_mut();
    let Ok(json) = CStr::from_ptr(config_json).to_str() else {
        return FfStatus::InvalidArgument;
    };
    match RunConfig::from_json(json.as_bytes()) {
        Ok(config) => {
            let handle = Box::new(FfPipeline {
                config,
                last_error: None,
            });
            *out_pipeline = Box::into_raw(handle);
            FfStatus::Ok
        }
        Err(_) => FfStatus::ConfigError,
    }
}

/// Runs one pipeline command. Outputs land in the config's `out_dir`; the
/// run manifest is written on success and failure alike.
///
/// # Safety
/// `pipeline` must be a live handle from `ff_pipeline_new`.
#[no_mangle]
pub unsafe extern "C" fn ff_pipeline_run(pipeline: *mut FfPipeline, cmd: FfCommand) -> FfStatus {
    let Some(p) = pipeline.as_mut() else {
        return FfStatus::InvalidArgument;
    };
    let command = match cmd {
        FfCommand::Validate => Command::Validate,
        FfCommand::Trips => Command::Trips,
        FfCommand::Congestion => Command::Congestion,
        FfCommand::Classify => Command::Classify,
    };
    match run_command(command, &p.config) {
        Ok(_) => {
            p.last_error = None;
            FfStatus::Ok
        }
        Err(e) => {
            let code = e.exit_code();
            p.set_error(format!("{e}"));
            status_from_exit(code)
        }
    }
}

/// Last error message of this handle, or null when the last call succeeded.
/// Valid until the next call on the handle.
///
/// # Safety
/// `pipeline` must be a live handle from `ff_pipeline_new`.
#[no_mangle]
pub unsafe extern "C" fn ff_pipeline_last_error(pipeline: *const FfPipeline) -> *const c_char {
    let Some(p) = pipeline.as_ref() else {
        return ptr::null();
    };
    p.last_error
        .as_ref()
        .map(|s| s.as_ptr())
        .unwrap_or(ptr::null())
}

/// Frees a pipeline handle. Passing null is a no-op.
///
/// # Safety
/// `pipeline` must be null or a handle from `ff_pipeline_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ff_pipeline_free(pipeline: *mut FfPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Writes a seeded synthetic dataset (events, fences, POIs, transit, config,
/// ground truth) into `out_dir`.
///
/// # Safety
/// `out_dir` must be a NUL-terminated path string.
#[no_mangle]
pub unsafe extern "C" fn ff_synth(
    out_dir: *const c_char,
    seed: u64,
    fences: usize,
    bikes: usize,
    trips: usize,
) -> FfStatus {
    if out_dir.is_null() {
        return FfStatus::InvalidArgument;
    }
    let Ok(dir) = CStr::from_ptr(out_dir).to_str() else {
        return FfStatus::InvalidArgument;
    };
    let spec = SynthSpec {
        seed,
        fences: fences.max(1),
        bikes: bikes.max(1),
        trips,
        ..Default::default()
    };
    match run_synth(&spec, &PathBuf::from(dir)) {
        Ok(_) => FfStatus::Ok,
        Err(e) => status_from_exit(e.exit_code()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(ff_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn haversine_and_congestion_kernels() {
        assert_eq!(ff_haversine_m(118.1, 24.5, 118.1, 24.5), 0.0);
        let d = ff_haversine_m(118.0, 24.5, 118.01, 24.5);
        assert!((d - 1013.0).abs() < 1013.0 * 0.01);
        assert_eq!(ff_congestion_density(10, 3, 5), 1.4);
        assert!(ff_congestion_density(1, 0, 0).is_nan());
        assert_eq!(ff_capacity_from_area(6.0, 1.2), 5);
        assert_eq!(ff_capacity_from_area(0.5, 1.2), 1);
    }

    #[test]
    fn polygon_kernels_via_flat_arrays() {
        // Roughly 10 m x 10 m square at 24.5 N.
        let dlat = 10.0 / fenceflow_core::geo::M_PER_DEG_LAT;
        let dlon = dlat / (24.5f64.to_radians().cos());
        let coords = [
            118.1,
            24.5,
            118.1 + dlon,
            24.5,
            118.1 + dlon,
            24.5 + dlat,
            118.1,
            24.5 + dlat,
        ];
        let mut area = 0.0;
        let st = unsafe { ff_polygon_area_m2(coords.as_ptr(), 4, &mut area) };
        assert!(st == FfStatus::Ok);
        assert!((area - 100.0).abs() < 0.2, "area {area}");
        let mut inside = 0;
        let st = unsafe {
            ff_point_in_polygon(
                118.1 + dlon / 2.0,
                24.5 + dlat / 2.0,
                coords.as_ptr(),
                4,
                &mut inside,
            )
        };
        assert!(st == FfStatus::Ok);
        assert_eq!(inside, 1);
        // Null rejection.
        let st = unsafe { ff_polygon_area_m2(std::ptr::null(), 4, &mut area) };
        assert!(st == FfStatus::InvalidArgument);
    }

    #[test]
    fn pipeline_handle_lifecycle() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let out_dir = dir.path().join("out");
        let st = unsafe {
            ff_synth(
                CString::new(data_dir.to_str().unwrap()).unwrap().as_ptr(),
                7,
                12,
                20,
                80,
            )
        };
        assert!(st == FfStatus::Ok);

        let config = serde_json::json!({
            "inputs": {
                "events": data_dir.join("events.csv"),
                "fences": data_dir.join("fences.geojson"),
                "pois": data_dir.join("pois.csv"),
            },
            "out_dir": out_dir,
            "seed": 7,
        })
        .to_string();
        let config_c = CString::new(config).unwrap();
        let mut handle: *mut FfPipeline = std::ptr::null_mut();
        let st = unsafe { ff_pipeline_new(config_c.as_ptr(), &mut handle) };
        assert!(st == FfStatus::Ok);
        assert!(!handle.is_null());
        assert!(unsafe { ff_pipeline_last_error(handle) }.is_null());

        let st = unsafe { ff_pipeline_run(handle, FfCommand::Classify) };
        assert!(st == FfStatus::Ok);
        assert!(out_dir.join("clusters.csv").exists());
        assert!(out_dir.join("run_manifest.json").exists());
        unsafe { ff_pipeline_free(handle) };

        // A broken config is a config error with no handle.
        let bad = CString::new("{ not json").unwrap();
        let mut handle2: *mut FfPipeline = std::ptr::null_mut();
        let st = unsafe { ff_pipeline_new(bad.as_ptr(), &mut handle2) };
        assert!(st == FfStatus::ConfigError);
        assert!(handle2.is_null());
    }

    #[test]
    fn run_failure_sets_last_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = serde_json::json!({
            "inputs": {
                "events": dir.path().join("missing.csv"),
                "fences": dir.path().join("missing.geojson"),
                "pois": dir.path().join("missing.csv"),
            },
            "out_dir": dir.path().join("out"),
        })
        .to_string();
        let config_c = CString::new(config).unwrap();
        let mut handle: *mut FfPipeline = std::ptr::null_mut();
        assert!(unsafe { ff_pipeline_new(config_c.as_ptr(), &mut handle) } == FfStatus::Ok);
        let st = unsafe { ff_pipeline_run(handle, FfCommand::Validate) };
        assert!(st == FfStatus::InputError);
        let msg = unsafe { CStr::from_ptr(ff_pipeline_last_error(handle)) };
        assert!(msg.to_str().unwrap().contains("missing"));
        unsafe { ff_pipeline_free(handle) };
    }
}
