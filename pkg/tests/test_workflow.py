import json

import numpy as np
import pytest

from coolopt import __version__
from coolopt.config import RunConfig, config_schema
from coolopt.errors import ArtifactError, ConfigError, SolverError
from coolopt.workflow import (HISTORY_COLUMNS, _Run, export_outputs, load_manifest, run, run_reoptimize_walls,
                              run_two_stage)

TINY = {"domain.nx": 20, "domain.ny": 14, "optimizer.max_iters": 3, "layout.walls_grid": [2, 1],
        "layout.fins_grid": [2, 2], "thresholds.a_min_keep": 1e-4, "density.filter_radius": 2.0}


def tiny(mode="two_stage", **extra):
    return RunConfig().updated(**dict(TINY, mode=mode, **extra))


@pytest.fixture(scope="module")
def two_stage():
    return run_two_stage(tiny())


def test_two_stage_records_stages_and_pruning(two_stage):
    assert two_stage.status == "completed"
    assert [s.name for s in two_stage.stages] == ["A", "B"]
    events = [(r.stage, r.event) for r in two_stage.history.rows if r.event != "iterate"]
    assert events == [("A", "prune_walls"), ("A", "prune_fins_near_walls"), ("B", "prune_small_fins")]
    assert two_stage.final_J == two_stage.history.rows[-1].J


def test_stage_a_ignores_fins_and_stage_b_freezes_walls(two_stage):
    c = two_stage.components
    assert c["A_end"].fins == c["initial"].fins
    assert c["B_end"].walls == c["B_start"].walls
    for w0, w1 in zip(c["initial"].walls, c["A_end"].walls):
        assert w0 != w1


def test_snapshots_cover_stage_boundaries(two_stage):
    tags = [(s.tag, s.stage) for s in two_stage.snapshots]
    assert tags == [("start", "A"), ("end", "A"), ("start", "B"), ("end", "B")]


def test_export_writes_manifest_last_and_is_repeatable(two_stage, tmp_path):
    files = export_outputs(two_stage, tmp_path / "a")
    export_outputs(two_stage, tmp_path / "b")
    assert list(files)[-1] == "manifest.json"
    manifest = load_manifest(tmp_path / "a")
    assert manifest["code_version"] == __version__
    assert manifest["config"] == tiny().to_dict()
    assert manifest["status"] == "completed"
    assert len(manifest["snapshots"]) >= 3
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_file() and path.name != "timing.csv":
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()
    header = (tmp_path / "a" / "history.csv").read_text().splitlines()[0]
    assert tuple(header.split(",")) == HISTORY_COLUMNS


def test_unwritable_output_leaves_no_manifest(two_stage, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ArtifactError):
        export_outputs(two_stage, blocker / "out")
    assert not (blocker.parent / "out" / "manifest.json").exists()


def test_failed_evaluations_abort_the_stage(monkeypatch, tmp_path):
    calls = {"n": 0}
    original = _Run.evaluate

    def flaky(self, design, x, gradient=True):
        calls["n"] += 1
        if calls["n"] > 1:
            raise SolverError("forced failure")
        return original(self, design, x, gradient)

    monkeypatch.setattr(_Run, "evaluate", flaky)
    result = run_two_stage(tiny())
    assert result.status == "aborted"
    assert result.stages[0].aborted and result.stages[0].iterations == 0
    assert calls["n"] == 3  # initial design, the step, the half-move retry
    export_outputs(result, tmp_path)
    assert load_manifest(tmp_path)["status"] == "aborted"
    assert (tmp_path / "history.csv").read_text().count("\n") >= 2


def test_simultaneous_and_density_modes():
    sim = run(tiny("simultaneous"))
    assert [s.name for s in sim.stages] == ["AB"]
    assert sim.stages[0].J_end < sim.stages[0].J_start
    den = run(tiny("density_baseline"))
    assert den.densities.shape == (20 * 14,)
    assert np.all((den.densities >= -1e-12) & (den.densities <= 1 + 1e-12))  # filter rows sum to 1 +- eps


def test_reoptimize_from_prior_directory(two_stage, tmp_path):
    export_outputs(two_stage, tmp_path)
    result = run_reoptimize_walls(tiny("reoptimize_walls", prior_run=str(tmp_path)))
    assert result.components["initial"] == two_stage.components["final"]
    assert set(result.extra) == {"J_before", "J_after", "relative_J_change", "relative_wall_change"}


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"domian": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"mode": "nope"})
    with pytest.raises(ConfigError):
        RunConfig(mode="reoptimize_walls")
    with pytest.raises(ConfigError):
        RunConfig().updated(**{"optimizer.move": 0.0})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.from_file(bad)
    with pytest.raises(ArtifactError):
        RunConfig.from_file(tmp_path / "missing.json")


def test_config_round_trip_and_schema(tmp_path):
    import jsonschema
    cfg = tiny()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.from_file(path) == cfg
    jsonschema.validate(cfg.to_dict(), config_schema())
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"domain": {"nx": "many"}}, config_schema())
