use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use kornlab::gridfield::PeriodicGrid;
use kornlab::kornfem::{self, BoundaryCondition};
use kornlab::mat2kit::{self, Mat2, Rotation};
use kornlab::rigidity::{self, AlphaProfile};
use kornlab::shells::{self, FourierProfile, ShellSpec};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Serialized through `json.loads`, so results arrive as plain dicts and lists.
fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn mat(f: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(f[0][0], f[0][1], f[1][0], f[1][1])
}

fn rows(m: Mat2) -> [[f64; 2]; 2] {
    [[m.m11, m.m12], [m.m21, m.m22]]
}

/// Conformal and anticonformal parts of a 2x2 matrix given as nested rows.
#[pyfunction]
fn split(f: [[f64; 2]; 2]) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let s = mat2kit::split(mat(f));
    (rows(s.conformal()), rows(s.anticonformal()))
}

#[pyfunction]
fn dist_so2(f: [[f64; 2]; 2]) -> f64 {
    mat2kit::dist_so2(mat(f))
}

/// Angle of the closest rotation, or `None` when the conformal part vanishes.
#[pyfunction]
fn closest_rotation(f: [[f64; 2]; 2]) -> Option<f64> {
    mat2kit::closest_rotation(mat(f)).rotation().map(|r| r.theta())
}

#[pyfunction]
#[pyo3(signature = (domain = "square", level = 3, bc = "tangential"))]
fn korn_constant<'py>(py: Python<'py>, domain: &str, level: usize, bc: &str) -> PyResult<Bound<'py, PyAny>> {
    let bc = match bc {
        "tangential" => BoundaryCondition::Tangential,
        "dirichlet" => BoundaryCondition::Dirichlet,
        other => return Err(value_err(format!("unknown boundary condition {other:?}"))),
    };
    let dom = kornlab::cli::builtin_domain(domain).map_err(value_err)?;
    let mesh = dom.mesh(level).map_err(value_err)?;
    let est = py.detach(|| kornfem::korn_constant(&mesh, bc)).map_err(runtime_err)?;
    to_py(py, &est)
}

#[pyfunction]
#[pyo3(signature = (n = 256, length = 20.0, amplitude = 1.0, width = 1.0, r0 = 0.0))]
fn synthesize_extremal<'py>(
    py: Python<'py>,
    n: usize,
    length: f64,
    amplitude: f64,
    width: f64,
    r0: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = PeriodicGrid::new(n, length).map_err(value_err)?;
    let alpha = AlphaProfile::GaussianBump {
        amplitude,
        width,
        center: [0.0, 0.0],
    }
    .sample(grid);
    let e = py
        .detach(|| rigidity::synthesize_extremal(&alpha, Rotation::new(r0)))
        .map_err(runtime_err)?;
    to_py(py, &e.report)
}

#[pyfunction]
#[pyo3(signature = (h_list, profile = None, angular_resolution = 2048, radial_layers = 8))]
fn blowup_experiment<'py>(
    py: Python<'py>,
    h_list: Vec<f64>,
    profile: Option<&str>,
    angular_resolution: usize,
    radial_layers: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut spec = ShellSpec {
        angular_resolution,
        radial_layers,
        ..ShellSpec::default()
    };
    if let Some(p) = profile {
        spec.profile = FourierProfile::parse(p).map_err(value_err)?;
    }
    let table = py.detach(|| shells::blowup_experiment(&spec, &h_list)).map_err(runtime_err)?;
    to_py(py, &table)
}

#[pymodule(name = "kornlab")]
fn kornlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(dist_so2, m)?)?;
    m.add_function(wrap_pyfunction!(closest_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(korn_constant, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_extremal, m)?)?;
    m.add_function(wrap_pyfunction!(blowup_experiment, m)?)?;
    Ok(())
}
