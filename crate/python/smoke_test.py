"""Smoke test for the genfs Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/py
then run with pytest or plain python.
"""

import json
import pathlib

import genfs

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"


def test_spec_round_trip():
    doc = genfs.SpecDocument.parse((FIXTURES / "ins.gspec").read_text())
    assert "ins" in doc.module_names()
    assert doc.diagnostics() == []
    again = genfs.SpecDocument.parse(doc.serialize())
    assert again.serialize() == doc.serialize()
    assert again.to_dict() == doc.to_dict()


def test_patch_plan_and_apply():
    base = genfs.SpecDocument.load(FIXTURES / "fs_base")
    assert len(base) == 45
    patch = (FIXTURES / "patches" / "extent.patch.gspec").read_text()
    assert genfs.patch_plan(patch, base) == ["common", "lowlevel_file", "inode_management"]
    out = genfs.patch_apply(patch, base)
    assert out.diagnostics() == []
    assert out.entailment()["unsatisfied"] == []
    bad = (FIXTURES / "patches" / "mut_cycle.patch.gspec").read_text()
    try:
        genfs.patch_apply(bad, base)
    except ValueError as e:
        assert "cycle" in str(e).lower()
    else:
        raise AssertionError("cyclic patch accepted")


def test_file_system_ops():
    fs = genfs.FileSystem()
    assert fs.ins("/", "a", "dir") == 0
    assert fs.ins("/a", "f") == 0
    assert fs.write("/a/f", 0, b"hello") == 0
    assert fs.read("/a/f", 0, 5) == b"hello"
    assert fs.rename("/a", "f", "/", "g") == 0
    assert fs.read("/a/f", 0, 5) is None
    snap = fs.snapshot()
    assert snap["/a"] is None and snap["/g"] == b"hello"
    assert fs.check_tree() == 3
    report = fs.monitor_report()
    assert report["violations"] == [] and report["peak_coupling"] <= 2
    trace = fs.run_trace("ins / name=b kind=dir\nexpect ret=0\n")
    assert trace["failed_expectations"] == 0


def test_workload_and_explorer():
    eager = genfs.run_workload("append_batch")
    delayed = genfs.run_workload("append_batch", features=json.dumps({"delayed": {"enabled": True}}))
    assert delayed["counters"]["data_writes"] * 10 <= eager["counters"]["data_writes"]
    reports = genfs.explore_seeded(seed=1, count=2)
    assert all(r["non_serial"] == 0 and not r["truncated"] for r in reports)


def test_mock_generation():
    doc = genfs.SpecDocument.parse((FIXTURES / "ins.gspec").read_text())
    script = {"codegen": ["int atomfs_ins(void) { return 0; }"], "speceval": ["FAIL: Case 2 unhandled", "PASS", "PASS"]}
    g = genfs.compile_with_mock(doc, "ins", json.dumps(script))
    assert g["attempts_used"] == [2, 1]
    assert g["final_code"].startswith("int atomfs_ins")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name}: ok")
