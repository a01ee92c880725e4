import json
import math

import pytest

import cqop
from cqop.verify import (DEFAULT_TOLERANCES, FLOOR_CHECKS, convergence_study,
                         run_suite)

EXPECTED_IDS_SPHERE = [
    "area", "herm_p", "herm_H", "herm_v2", "herm_F", "herm_L", "spectrum",
    "div_frame", "h_v2_identity", "h_L2", "v2_pp", "velocity", "conservation",
    "force_equiv", "torque_piece_1", "torque_piece_2", "torque_piece_herm",
    "torque_net", "torque_ablation", "radiality_total", "radiality_f1",
    "bare_gradient_defect",
]


@pytest.fixture(scope="module")
def small_sphere():
    chart = cqop.builtin_chart("sphere", 1.0)
    grid = cqop.build_grid(chart, 16, 32)
    return chart, grid


def test_sphere_suite_all_pass(small_sphere):
    chart, grid = small_sphere
    report = run_suite(chart, grid, 7)
    failed = [c.id for c in report.checks if not c.passed]
    assert failed == []
    assert report.summary == {"pass": len(report.checks), "fail": 0}


def test_registered_ids_appear_exactly_once(small_sphere, cylinder_report, ring_report):
    chart, grid = small_sphere
    report = run_suite(chart, grid, 3)
    ids = [c.id for c in report.checks]
    assert ids == EXPECTED_IDS_SPHERE
    for rep in (cylinder_report, ring_report):
        ids = [c.id for c in rep.checks]
        assert len(ids) == len(set(ids))
        assert "h_L2" not in ids and "radiality_f1" not in ids


def test_deterministic_given_seed(small_sphere):
    chart, grid = small_sphere
    r1 = run_suite(chart, grid, 42)
    r2 = run_suite(chart, grid, 42)
    assert [c.residual for c in r1.checks] == [c.residual for c in r2.checks]


def test_floor_checks_semantics(small_sphere):
    chart, grid = small_sphere
    report = run_suite(chart, grid, 7)
    by_id = {c.id: c for c in report.checks}
    for cid in FLOOR_CHECKS:
        assert by_id[cid].mode == "floor"
        assert by_id[cid].residual >= by_id[cid].tolerance
    # the counterexample residual sits at 2 hbar |M| / (2 hbar |M|) = 1
    assert by_id["bare_gradient_defect"].residual == pytest.approx(1.0, rel=1e-9)
    # the ablated torque residual sits at half the 2 hbar L / m R^2 scale
    assert by_id["torque_ablation"].residual == pytest.approx(0.5, rel=1e-9)


def test_tolerance_overrides(small_sphere):
    chart, grid = small_sphere
    report = run_suite(chart, grid, 7, tolerances={"force_equiv": 1e-30})
    by_id = {c.id: c for c in report.checks}
    assert not by_id["force_equiv"].passed
    assert not report.all_passed
    with pytest.raises(ValueError, match="unknown check ids"):
        run_suite(chart, grid, 7, tolerances={"nope": 1.0})
    with pytest.raises(ValueError, match="positive"):
        run_suite(chart, grid, 7, tolerances={"force_equiv": 0.0})


def test_report_json_schema(small_sphere):
    chart, grid = small_sphere
    report = run_suite(chart, grid, 7)
    data = json.loads(report.to_json())
    assert set(data) == {"chart", "checks", "notes", "summary"}
    assert set(data["summary"]) == {"pass", "fail"}
    for entry in data["checks"]:
        assert set(entry) == {"id", "description", "residual", "tolerance",
                              "pass", "wall_ms"}
    assert isinstance(data["notes"], list) and len(data["notes"]) == 4
    assert any("1/(2R^2)" in n for n in data["notes"])
    assert any("H = (1/2) m v^2" in n for n in data["notes"])


def test_report_text_table(small_sphere):
    chart, grid = small_sphere
    report = run_suite(chart, grid, 7)
    text = report.to_text()
    for cid in EXPECTED_IDS_SPHERE:
        assert cid in text
    assert "passed" in text


def test_notes_per_kind(cylinder_report, ring_report):
    assert any("ring gradient" in n for n in cylinder_report.notes)
    assert len(ring_report.notes) == 1


def test_custom_chart_rejected():
    flat = cqop.load_chart({
        "coords": ["u", "v", "w"], "h": ["1", "1", "1"], "a": 0.0,
        "domains": [{"min": 0.0, "max": 1.0, "periodic": True},
                    {"min": 0.0, "max": 1.0, "periodic": True}]})
    with pytest.raises(ValueError):
        run_suite(flat, None, 7)


def test_convergence_study_ring():
    chart = cqop.builtin_chart("ring", 1.0)
    table = convergence_study(chart, [(16, 1), (32, 1), (64, 1)], seed=5)
    assert set(table.rows) and all(len(v) == 3 for v in table.rows.values())
    assert all(table.monotone.values())
    text = table.to_text()
    assert "16x1" in text and "64x1" in text


def test_convergence_study_errors():
    chart = cqop.builtin_chart("ring", 1.0)
    with pytest.raises(ValueError, match="at least two"):
        convergence_study(chart, [(16, 1)], seed=1)
    with pytest.raises(ValueError, match="increasing"):
        convergence_study(chart, [(32, 1), (16, 1)], seed=1)


def test_default_tolerances_cover_registry(small_sphere):
    chart, grid = small_sphere
    report = run_suite(chart, grid, 1)
    for c in report.checks:
        assert c.id in DEFAULT_TOLERANCES
        if c.id != "torque_piece_herm":
            assert math.isfinite(c.tolerance)
