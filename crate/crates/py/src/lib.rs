//! Python bindings for the genfs workbench.
//!
//! Structured results cross the boundary as JSON and come back as plain
//! Python dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use ::genfs::agents::{compile_module, CacheStore, GenerationTask, MockClient, MockScript};
use ::genfs::blockdev::{run_workload as run_workload_core, WorkloadConfig, WorkloadKind};
use ::genfs::depgraph::check_entailment;
use ::genfs::features::FeatureConfig;
use ::genfs::fs::{
    explore_all, parse_trace, run_trace, seeded_scenarios, split_path, FsState, InodeKind, SnapshotNode,
};
use ::genfs::patch::{apply, parse_patch, plan};
use ::genfs::spec;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use serde::Serialize;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn features_from(json: Option<&str>) -> PyResult<FeatureConfig> {
    json.map_or(Ok(FeatureConfig::default()), |j| FeatureConfig::from_json(j).map_err(value_err))
}

/// A parsed specification document.
#[pyclass(name = "SpecDocument", module = "genfs", frozen)]
struct PySpecDocument {
    inner: spec::SpecDocument,
}

#[pymethods]
impl PySpecDocument {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        spec::parse_spec(text).map(|inner| PySpecDocument { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        spec::load_dir(&dir).map(|inner| PySpecDocument { inner }).map_err(value_err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        spec::save_dir(&self.inner, &dir).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn version_id(&self) -> &str {
        &self.inner.version_id
    }

    fn module_names(&self) -> Vec<String> {
        self.inner.modules.iter().map(|m| m.name.clone()).collect()
    }

    fn serialize(&self) -> String {
        spec::serialize_spec(&self.inner)
    }

    /// Well-formedness diagnostics, one string each; empty when clean.
    fn diagnostics(&self) -> Vec<String> {
        spec::check_wellformed(&self.inner).iter().map(ToString::to_string).collect()
    }

    fn entailment<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &check_entailment(&self.inner))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.modules.len()
    }

    fn __repr__(&self) -> String {
        format!("SpecDocument(version_id={:?}, modules={})", self.inner.version_id, self.inner.modules.len())
    }
}

/// Leaves-first application order of a patch against `base`.
#[pyfunction]
fn patch_plan(patch: &str, base: &PySpecDocument) -> PyResult<Vec<String>> {
    let p = parse_patch(patch).map_err(value_err)?;
    plan(&p, &base.inner).map_err(value_err)
}

/// Applies a patch; raises ValueError (base left untouched) on any failure.
#[pyfunction]
fn patch_apply(patch: &str, base: &PySpecDocument) -> PyResult<PySpecDocument> {
    let p = parse_patch(patch).map_err(value_err)?;
    apply(&p, &base.inner).map(|o| PySpecDocument { inner: o.document }).map_err(value_err)
}

/// The reference concurrent file system. Paths are `/`-separated strings.
#[pyclass(name = "FileSystem", module = "genfs", frozen)]
struct PyFileSystem {
    fs: Arc<FsState>,
}

fn parts(path: &str) -> Vec<String> {
    split_path(path)
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[pymethods]
impl PyFileSystem {
    #[new]
    #[pyo3(signature = (features=None))]
    fn new(features: Option<&str>) -> PyResult<Self> {
        Ok(PyFileSystem { fs: Arc::new(FsState::new(features_from(features)?)) })
    }

    /// Creates `name` under directory `path`; 0 on success, -1 otherwise.
    #[pyo3(signature = (path, name, kind="file"))]
    fn ins(&self, py: Python<'_>, path: &str, name: &str, kind: &str) -> PyResult<i32> {
        let kind = match kind {
            "file" => InodeKind::File,
            "dir" => InodeKind::Dir,
            other => return Err(PyValueError::new_err(format!("kind must be 'file' or 'dir', not {other:?}"))),
        };
        let p = parts(path);
        Ok(py.detach(|| self.fs.ins(&refs(&p), name, kind)))
    }

    fn remove(&self, py: Python<'_>, path: &str, name: &str) -> i32 {
        let p = parts(path);
        py.detach(|| self.fs.remove(&refs(&p), name))
    }

    fn rename(&self, py: Python<'_>, src: &str, src_name: &str, dst: &str, dst_name: &str) -> i32 {
        let (s, d) = (parts(src), parts(dst));
        py.detach(|| self.fs.rename(&refs(&s), src_name, &refs(&d), dst_name))
    }

    fn write(&self, py: Python<'_>, path: &str, off: u64, data: &[u8]) -> i32 {
        let p = parts(path);
        py.detach(|| self.fs.write(&refs(&p), off, data))
    }

    /// File bytes, or None when `path` is not a file.
    fn read<'py>(&self, py: Python<'py>, path: &str, off: u64, len: u64) -> Option<Bound<'py, PyBytes>> {
        let p = parts(path);
        let data = py.detach(|| self.fs.read(&refs(&p), off, len))?;
        Some(PyBytes::new(py, &data))
    }

    fn sync(&self) -> usize {
        self.fs.sync()
    }

    /// `{path: None | bytes}`; None marks a directory.
    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (path, node) in self.fs.snapshot() {
            match node {
                SnapshotNode::Dir => d.set_item(path, py.None())?,
                SnapshotNode::File(bytes) => d.set_item(path, PyBytes::new(py, &bytes))?,
            }
        }
        Ok(d)
    }

    /// Inode count; raises ValueError when the tree invariant is broken.
    fn check_tree(&self) -> PyResult<usize> {
        self.fs.check_tree().map_err(PyValueError::new_err)
    }

    fn monitor_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.fs.monitor().report())
    }

    fn disk_counters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.fs.storage().disk().counters())
    }

    /// Runs a trace script and returns its report.
    fn run_trace<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let trace = parse_trace(text).map_err(value_err)?;
        let report = py.detach(|| run_trace(&self.fs, &trace));
        to_py(py, &report)
    }
}

/// Runs a named workload and returns its metrics report.
#[pyfunction]
#[pyo3(signature = (kind, features=None, seed=42, workload=None))]
fn run_workload<'py>(
    py: Python<'py>,
    kind: &str,
    features: Option<&str>,
    seed: u64,
    workload: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let k = WorkloadKind::parse(kind).ok_or_else(|| PyValueError::new_err(format!("unknown workload {kind:?}")))?;
    let cfg = match workload {
        Some(j) => serde_json::from_str::<WorkloadConfig>(j).map_err(value_err)?,
        None => WorkloadConfig::default_for(k),
    };
    let f = features_from(features)?;
    let report = py.detach(|| run_workload_core(&cfg, &f, seed)).map_err(PyValueError::new_err)?;
    to_py(py, &report)
}

/// Exhaustively explores `count` seeded scenarios and returns one report each.
#[pyfunction]
#[pyo3(signature = (seed=42, count=5, threads=3, max_ops=6, max_schedules=100_000))]
fn explore_seeded<'py>(
    py: Python<'py>,
    seed: u64,
    count: usize,
    threads: usize,
    max_ops: usize,
    max_schedules: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let reports: Vec<_> = py.detach(|| {
        seeded_scenarios(seed, count, threads, max_ops).iter().map(|s| explore_all(s, max_schedules)).collect()
    });
    to_py(py, &reports)
}

/// Two-phase generation of one module with the scripted mock client, which
/// plays both the generator and the reviewer. `script` is the mock JSON.
#[pyfunction]
fn compile_with_mock<'py>(
    py: Python<'py>,
    doc: &PySpecDocument,
    module: &str,
    script: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let script: MockScript = serde_json::from_str(script).map_err(value_err)?;
    let client = MockClient::new(script);
    let task = GenerationTask::from_document(&doc.inner, module).or_else(|_| {
        doc.inner
            .module(module)
            .map(|m| GenerationTask::standalone(m.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("no module {module:?}")))
    })?;
    let generated = compile_module(&task, &client, &client, &CacheStore::in_memory()).map_err(value_err)?;
    to_py(py, &generated)
}

#[pymodule]
fn genfs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpecDocument>()?;
    m.add_class::<PyFileSystem>()?;
    m.add_function(wrap_pyfunction!(patch_plan, m)?)?;
    m.add_function(wrap_pyfunction!(patch_apply, m)?)?;
    m.add_function(wrap_pyfunction!(run_workload, m)?)?;
    m.add_function(wrap_pyfunction!(explore_seeded, m)?)?;
    m.add_function(wrap_pyfunction!(compile_with_mock, m)?)?;
    Ok(())
}
