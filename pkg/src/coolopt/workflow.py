"""Optimization runs: two-stage MMC, simultaneous MMC, density baseline, wall re-optimization.

Every run evaluates designs with the same forward model, adjoint and MMA
update.  A stage evaluates its starting design (iteration 0), then alternates
MMA steps and evaluations until the max-norm design change drops below
``tol_dx`` or the budget is spent.  The design reached by the last step is
always evaluated, so a zero budget returns the input unchanged.

A failed evaluation retries the step once with half the move limit; a second
failure aborts the stage and keeps the last design that evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cache import ComponentDesign, DensityDesign
from .config import RunConfig
from .errors import ArtifactError, ConfigError, SolverError
from .export import FieldSnapshot, save_snapshot, write_csv, write_vtk
from .geometry import ComponentSet, prune_fins_near_walls, prune_small_fins, prune_walls
from .mesh import StructuredMesh
from .mma import MmaSettings, MmaState, max_change, mma_step
from .objective import ObjectiveConfig, Solution, ThermofluidModel, adjoint_gradient

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("stage", "iteration", "event", "J", "J_minus_T_in", "max_dx", "newton_iterations",
                   "walls", "active_fins")


@dataclass
class HistoryRow:
    stage: str
    iteration: int
    event: str  # "iterate" or the name of a pruning step
    J: float
    max_dx: float
    newton_iterations: int
    walls: int
    active_fins: int
    seconds: float = 0.0


@dataclass
class OptimizationHistory:
    T_in: float
    rows: list[HistoryRow] = field(default_factory=list)

    def append(self, row: HistoryRow) -> None:
        if not np.isfinite(row.J):
            raise ValueError("history rows need a finite J")
        self.rows.append(row)

    def stage_rows(self, stage: str, event: str = "iterate") -> list[HistoryRow]:
        return [r for r in self.rows if r.stage == stage and r.event == event]

    def to_csv(self) -> str:
        """History without wall-clock times, so identical runs give identical text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for r in self.rows:
            writer.writerow([r.stage, r.iteration, r.event, f"{r.J:.10e}", f"{r.J - self.T_in:.10e}",
                             f"{r.max_dx:.10e}", r.newton_iterations, r.walls, r.active_fins])
        return buf.getvalue()

    def timing_csv(self) -> str:
        lines = ["stage,iteration,event,seconds"]
        lines += [f"{r.stage},{r.iteration},{r.event},{r.seconds:.3f}" for r in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class StageResult:
    name: str
    x: np.ndarray
    J_start: float
    J_end: float
    iterations: int
    converged: bool
    aborted: bool = False
    message: str = ""


@dataclass
class RunResult:
    config: RunConfig
    mesh: StructuredMesh
    history: OptimizationHistory
    snapshots: list[FieldSnapshot]
    components: dict[str, ComponentSet]  # tagged designs, "final" included for MMC modes
    stages: list[StageResult]
    status: str = "completed"
    message: str = ""
    final_J: float = float("nan")
    densities: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def final_components(self) -> ComponentSet | None:
        return self.components.get("final")

    def stage(self, name: str) -> StageResult:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)


class _Run:
    """Shared state of one run: mesh, model, history and snapshots."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.mesh = config.mesh()
        self.width = config.smoothing_width(self.mesh)
        self.bounds = config.component_bounds()
        self.model = ThermofluidModel(
            self.mesh, config.properties, config.ramp_parameters(), config.p_in, config.T_in,
            config.flow_settings(), ObjectiveConfig(config.p_exponent),
            energy_consistent=not config.solver.flip_exchange_sign,
            release_backflow=config.solver.release_backflow)
        self.history = OptimizationHistory(config.T_in)
        self.snapshots: list[FieldSnapshot] = []
        self.components: dict[str, ComponentSet] = {}
        self.stages: list[StageResult] = []
        self.settings = config.mma_settings()
        self.criteria = config.criteria()
        self._clock = time.perf_counter()

    def _elapsed(self) -> float:
        now = time.perf_counter()
        dt, self._clock = now - self._clock, now
        return dt

    def _counts(self, design) -> tuple[int, int]:
        if isinstance(design, ComponentDesign):
            cset = design.base
            return len(cset.walls), cset.n_active_fins
        return 0, 0

    def evaluate(self, design, x, gradient: bool = True) -> tuple[Solution, np.ndarray | None]:
        gamma, jac = design.gamma(x, jacobian=gradient)
        sol = self.model.solve(gamma, jac)
        grad = adjoint_gradient(self.model, design, x, sol).gradient if gradient else None
        return sol, grad

    def record(self, stage, iteration, event, sol: Solution, dx, counts) -> None:
        self.history.append(HistoryRow(stage, iteration, event, float(sol.J), float(dx),
                                       int(sol.flow.newton_iterations), counts[0], counts[1],
                                       self._elapsed()))

    def snapshot(self, tag, stage, iteration, sol) -> None:
        self.snapshots.append(FieldSnapshot.from_solution(tag, stage, iteration, self.mesh, sol, J=float(sol.J)))

    def optimize(self, stage: str, design, budget: int, settings: MmaSettings | None = None) -> StageResult:
        """MMA loop over the active variables of ``design``."""
        settings = settings or self.settings
        x = design.x0
        try:
            sol, grad = self.evaluate(design, x)
        except SolverError as exc:
            raise SolverError(f"stage {stage}: initial design failed to evaluate: {exc}") from exc
        counts = self._counts(design)
        self.record(stage, 0, "iterate", sol, 0.0, counts)
        self.snapshot("start", stage, 0, sol)
        J0 = J = sol.J
        every = self.config.output.snapshot_every
        state = MmaState.start(x, 0.0, 1.0, settings)
        converged, aborted, message, k = False, False, "", 0
        active = design.active
        if not np.any(active):
            budget = 0
            message = "no active variables"
        while k < budget:
            x_new, new_state = mma_step(state, x, J, grad, (0.0, 1.0), settings)
            try:
                sol_new, grad_new = self.evaluate(design, x_new)
            except SolverError as exc:
                log.warning("stage %s iteration %d failed (%s); retrying with half move", stage, k + 1, exc)
                x_new, new_state = mma_step(state.with_move(0.5 * state.move), x, J, grad, (0.0, 1.0),
                                            settings)
                try:
                    sol_new, grad_new = self.evaluate(design, x_new)
                except SolverError as exc2:
                    aborted, message = True, f"aborted at iteration {k + 1}: {exc2}"
                    log.error("stage %s %s", stage, message)
                    break
            dx = max_change(x_new, x)
            k += 1
            x, state, sol, grad, J = x_new, new_state, sol_new, grad_new, sol_new.J
            self.record(stage, k, "iterate", sol, dx, counts)
            if every and k % every == 0:
                self.snapshot("iter", stage, k, sol)
            log.info("stage %s it %3d  J = %.4f K  max dx = %.2e", stage, k, J, dx)
            if dx < self.criteria.tol_dx:
                converged = True
                break
        self.snapshot("end", stage, k, sol)
        self.last_solution = sol
        result = StageResult(stage, x.copy(), float(J0), float(J), k, converged, aborted, message)
        self.stages.append(result)
        return result

    def evaluate_event(self, stage, iteration, event, design) -> Solution:
        sol, _ = self.evaluate(design, design.x0, gradient=False)
        self.record(stage, iteration, event, sol, 0.0, self._counts(design))
        self.last_solution = sol
        return sol

    def component_design(self, cset, stage_mask, gamma_mask) -> ComponentDesign:
        return ComponentDesign(self.mesh, cset, self.bounds, stage_mask, gamma_mask, self.width)

    def finish(self, status_source: list[StageResult], **kwargs) -> RunResult:
        aborted = [s for s in status_source if s.aborted]
        status = "aborted" if aborted else "completed"
        message = "; ".join(f"{s.name}: {s.message}" for s in aborted)
        final_J = float(self.history.rows[-1].J) if self.history.rows else float("nan")
        return RunResult(self.config, self.mesh, self.history, self.snapshots, self.components, self.stages,
                         status, message, final_J, **kwargs)


def _stage_budget(config: RunConfig, stages: int = 1) -> int:
    return stages * config.optimizer.max_iters


def run_two_stage(config: RunConfig) -> RunResult:
    """Walls alone (fins excluded from gamma), prune, then fins with walls frozen, prune."""
    run = _Run(config)
    cset = config.initial_components()
    run.components["initial"] = cset
    design_a = run.component_design(cset, "walls", "walls")
    stage_a = run.optimize("A", design_a, _stage_budget(config))
    cset = design_a.components(stage_a.x)
    run.components["A_end"] = cset
    if stage_a.aborted:
        run.components["final"] = cset
        return run.finish([stage_a])

    cset = prune_walls(cset, config.thresholds.wall_frac, config.domain.Lx)
    run.evaluate_event("A", stage_a.iterations, "prune_walls", run.component_design(cset, "walls", "walls"))
    cset = prune_fins_near_walls(cset, config.d_min())
    run.components["B_start"] = cset
    run.evaluate_event("A", stage_a.iterations, "prune_fins_near_walls", run.component_design(cset, "fins", "both"))

    design_b = run.component_design(cset, "fins", "both")
    stage_b = run.optimize("B", design_b, _stage_budget(config))
    cset = design_b.components(stage_b.x)
    run.components["B_end"] = cset
    if not stage_b.aborted:
        cset = prune_small_fins(cset, config.a_min_keep(run.mesh))
        run.evaluate_event("B", stage_b.iterations, "prune_small_fins", run.component_design(cset, "fins", "both"))
    run.components["final"] = cset
    return run.finish([stage_a, stage_b])


def run_simultaneous(config: RunConfig) -> RunResult:
    """Walls and fins together; the budget matches the two stages combined."""
    run = _Run(config)
    cset = config.initial_components()
    run.components["initial"] = cset
    design = run.component_design(cset, "both", "both")
    stage = run.optimize("AB", design, _stage_budget(config, 2))
    cset = design.components(stage.x)
    run.components["AB_end"] = cset
    if not stage.aborted:
        it = stage.iterations
        cset = prune_walls(cset, config.thresholds.wall_frac, config.domain.Lx)
        run.evaluate_event("AB", it, "prune_walls", run.component_design(cset, "both", "both"))
        cset = prune_fins_near_walls(cset, config.d_min())
        run.evaluate_event("AB", it, "prune_fins_near_walls", run.component_design(cset, "both", "both"))
        cset = prune_small_fins(cset, config.a_min_keep(run.mesh))
        run.evaluate_event("AB", it, "prune_small_fins", run.component_design(cset, "both", "both"))
    run.components["final"] = cset
    return run.finish([stage])


def run_density_baseline(config: RunConfig) -> RunResult:
    """One density per element, same solvers and optimizer, budget of both stages combined."""
    run = _Run(config)
    radius = config.density.filter_radius
    design = DensityDesign(run.mesh, config.density.initial, radius * run.mesh.h if radius else None)
    move = config.density.move
    settings = replace(run.settings, move=move) if move is not None else None
    stage = run.optimize("density", design, _stage_budget(config, 2), settings)
    return run.finish([stage], densities=design.densities(stage.x))


def load_prior_components(run_dir) -> ComponentSet:
    path = Path(run_dir) / "components_final.json"
    if not path.is_file():
        raise ConfigError(f"prior run {run_dir} has no components_final.json")
    try:
        return ComponentSet.from_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc


def run_reoptimize_walls(config: RunConfig, prior: ComponentSet | None = None) -> RunResult:
    """Re-open the wall variables of a finished two-stage design with its fins frozen."""
    run = _Run(config)
    cset = prior if prior is not None else load_prior_components(config.prior_run)
    run.components["initial"] = cset
    design = run.component_design(cset, "walls", "both")
    stage = run.optimize("reopt_walls", design, _stage_budget(config))
    final = design.components(stage.x)
    run.components["final"] = final
    x0 = design.x0
    extra = {
        "J_before": stage.J_start,
        "J_after": stage.J_end,
        "relative_J_change": abs(stage.J_end - stage.J_start) / stage.J_start,
        "relative_wall_change": float(np.linalg.norm(stage.x - x0) / max(np.linalg.norm(x0), 1e-300)),
    }
    return run.finish([stage], extra=extra)


RUNNERS = {
    "two_stage": run_two_stage,
    "simultaneous": run_simultaneous,
    "density_baseline": run_density_baseline,
    "reoptimize_walls": run_reoptimize_walls,
}


def run(config: RunConfig) -> RunResult:
    return RUNNERS[config.mode](config)


# ---------------------------------------------------------------------------
# artifacts

def _dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _check_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ArtifactError(f"output directory {out} is not writable: {exc}") from exc


def export_outputs(result: RunResult, out_dir) -> dict[str, Path]:
    """Write history, snapshots, component sets, then the manifest last.

    An I/O failure raises ``ArtifactError`` before the manifest exists.
    """
    out = Path(out_dir)
    _check_writable(out)
    files: dict[str, Path] = {}

    def put(name: str, text: str) -> None:
        path = out / name
        try:
            path.write_text(text)
        except OSError as exc:
            raise ArtifactError(f"cannot write {path}: {exc}") from exc
        files[name] = path

    put("history.csv", result.history.to_csv())
    put("timing.csv", result.history.timing_csv())
    for tag, cset in result.components.items():
        put(f"components_{tag}.json", cset.to_json() + "\n")
    if result.densities is not None:
        mesh = result.mesh
        rows = ["x,y,value"] + [f"{x:.10e},{y:.10e},{v:.10e}"
                                for (x, y), v in zip(mesh.element_centers(), result.densities)]
        put("densities_final.csv", "\n".join(rows) + "\n")

    snap_dir = out / "snapshots"
    try:
        snap_dir.mkdir(exist_ok=True)
    except OSError as exc:
        raise ArtifactError(f"cannot create {snap_dir}: {exc}") from exc
    snapshot_names = []
    for snap in result.snapshots:
        save_snapshot(snap_dir / f"{snap.name}.npz", snap)
        write_vtk(snap_dir / f"{snap.name}.vtk", result.mesh, snap)
        write_csv(snap_dir, result.mesh, snap)
        snapshot_names.append(snap.name)

    manifest = {
        "status": result.status,
        "message": result.message,
        "mode": result.config.mode,
        "code_version": __version__,
        "config": result.config.to_dict(),
        "final_J": result.final_J,
        "stages": [{"name": s.name, "J_start": s.J_start, "J_end": s.J_end, "iterations": s.iterations,
                    "converged": s.converged, "aborted": s.aborted, "message": s.message}
                   for s in result.stages],
        "snapshots": snapshot_names,
        "files": sorted(files),
        "extra": result.extra,
    }
    final = result.final_components
    if final is not None:
        manifest["final_counts"] = {"walls": len(final.walls), "active_fins": final.n_active_fins}
    put("manifest.json", _dump_json(manifest))
    return files


def load_manifest(run_dir) -> dict:
    path = Path(run_dir) / "manifest.json"
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ArtifactError(f"no manifest in {run_dir}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
