import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from containment.experiments import run_ensemble, verdicts_for
from containment.report import emit_report, render_plots


@pytest.fixture(scope="module")
def small_stats():
    from containment.config import load_config
    cfg = load_config("log_gain_fan.cfg").replace(T=2.0, samples=8, replicates=4)
    return run_ensemble(cfg)


def test_emit_writes_all_files(small_stats, tmp_path):
    written = emit_report(small_stats, verdicts_for(small_stats), tmp_path)
    names = {p.name for p in written}
    assert {"summary.csv", "replicates.csv", "trajectory.csv", "errors.csv", "verdicts.txt",
            "provenance.txt", "mean_sq_delta.svg", "containment.svg", "trajectories.svg"} <= names
    for p in written:
        if p.suffix == ".svg":
            ET.parse(p)
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert len(rows) == 9
    np.testing.assert_allclose(float(rows[-1]["mean_sq_delta"]), small_stats.mean_sq_delta[-1])
    traj = list(csv.DictReader(open(tmp_path / "trajectory.csv")))
    assert len(traj) == 9 * 4 * 2
    prov = (tmp_path / "provenance.txt").read_text()
    assert "version=" in prov and "master_seed=1" in prov and "config.gain=" in prov
    assert "qualitative behaviour only" in (tmp_path / "verdicts.txt").read_text()


def test_golden_summary_row(small_stats, tmp_path):
    emit_report(small_stats, [], tmp_path)
    first = (tmp_path / "summary.csv").read_text().splitlines()[:2]
    assert first[0] == "t,mean_sq_delta,mean_sq_delta_se,containment_mean,containment_max"
    assert first[1].startswith("0.0,")


def test_svg_is_deterministic(small_stats, tmp_path):
    emit_report(small_stats, [], tmp_path / "a")
    emit_report(small_stats, [], tmp_path / "b")
    for name in ("mean_sq_delta.svg", "trajectories.svg", "containment.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rerender_from_csv(small_stats, tmp_path):
    emit_report(small_stats, [], tmp_path)
    for p in tmp_path.glob("*.svg"):
        p.unlink()
    assert {p.name for p in render_plots(tmp_path)} == {"mean_sq_delta.svg", "containment.svg",
                                                        "trajectories.svg"}


def test_empty_grid_rejected(small_stats, tmp_path):
    import dataclasses
    empty = dataclasses.replace(small_stats, grid=np.array([]))
    with pytest.raises(ValueError):
        emit_report(empty, [], tmp_path)
