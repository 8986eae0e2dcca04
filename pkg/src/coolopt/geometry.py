"""Moving morphable components: walls (superellipses) and fins (ellipses).

Each component carries a topology description function (TDF) that is
positive inside, zero on the boundary and negative outside.  TDFs are
projected to ``(0, 1)`` with a tanh map and multiplied together to form the
material field ``gamma`` (1 = fluid, 0 = solid).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError

log = logging.getLogger(__name__)

WALL_FIELDS = ("x0", "y0", "half_length", "half_thickness", "angle")
FIN_FIELDS = ("semi_major", "axis_ratio", "angle")
WALL_POWER = 6


@dataclass(frozen=True)
class WallComponent:
    x0: float
    y0: float
    half_length: float
    half_thickness: float
    angle: float = 0.0

    def __post_init__(self):
        if not (self.half_length > 0 and self.half_thickness > 0):
            raise ValueError("wall half_length and half_thickness must be positive")


@dataclass(frozen=True)
class FinComponent:
    xf: float
    yf: float
    semi_major: float
    axis_ratio: float
    angle: float = 0.0
    active: bool = True

    def __post_init__(self):
        if not (self.semi_major > 0 and self.axis_ratio > 0):
            raise ValueError("fin semi_major and axis_ratio must be positive")


@dataclass(frozen=True)
class ProjectionParameters:
    beta: float = 8.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ComponentSet:
    walls: tuple[WallComponent, ...] = ()
    fins: tuple[FinComponent, ...] = ()
    projection: ProjectionParameters = field(default_factory=ProjectionParameters)

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "fins", tuple(self.fins))

    @property
    def active_fins(self) -> list[FinComponent]:
        return [f for f in self.fins if f.active]

    @property
    def n_active_fins(self) -> int:
        return sum(f.active for f in self.fins)

    def with_beta(self, beta: float) -> "ComponentSet":
        return replace(self, projection=ProjectionParameters(beta))

    def to_dict(self) -> dict:
        return {
            "walls": [asdict(w) for w in self.walls],
            "fins": [asdict(f) for f in self.fins],
            "projection": asdict(self.projection),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComponentSet":
        try:
            return cls(
                walls=tuple(WallComponent(**w) for w in data.get("walls", [])),
                fins=tuple(FinComponent(**f) for f in data.get("fins", [])),
                projection=ProjectionParameters(**data.get("projection", {})),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid component set: {exc}") from exc

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path) -> "ComponentSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# topology description functions

def _as_points(pts) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0], pts[..., 1]


def _local_frame(x, y, xc, yc, angle):
    dx, dy = x - xc, y - yc
    c, s = np.cos(angle), np.sin(angle)
    return dx * c + dy * s, -dx * s + dy * c


def wall_tdf(w: WallComponent, pts) -> np.ndarray:
    x, y = _as_points(pts)
    s, n = _local_frame(x, y, w.x0, w.y0, w.angle)
    return 1.0 - (s / w.half_length) ** WALL_POWER - (n / w.half_thickness) ** WALL_POWER


def fin_tdf(f: FinComponent, pts) -> np.ndarray:
    x, y = _as_points(pts)
    s, n = _local_frame(x, y, f.xf, f.yf, f.angle)
    b = f.axis_ratio * f.semi_major
    return 1.0 - (s / f.semi_major) ** 2 - (n / b) ** 2


def wall_tdf_gradient(w: WallComponent, pts) -> dict[str, np.ndarray]:
    """Partial derivatives of the wall TDF w.r.t. each of its fields."""
    x, y = _as_points(pts)
    s, n = _local_frame(x, y, w.x0, w.y0, w.angle)
    L, t, m = w.half_length, w.half_thickness, WALL_POWER
    c, sn = np.cos(w.angle), np.sin(w.angle)
    dphi_ds = -m * s ** (m - 1) / L**m
    dphi_dn = -m * n ** (m - 1) / t**m
    return {
        "x0": dphi_ds * (-c) + dphi_dn * sn,
        "y0": dphi_ds * (-sn) + dphi_dn * (-c),
        "half_length": m * s**m / L ** (m + 1),
        "half_thickness": m * n**m / t ** (m + 1),
        "angle": dphi_ds * n - dphi_dn * s,
    }


def fin_tdf_gradient(f: FinComponent, pts) -> dict[str, np.ndarray]:
    x, y = _as_points(pts)
    s, n = _local_frame(x, y, f.xf, f.yf, f.angle)
    a, k = f.semi_major, f.axis_ratio
    return {
        "semi_major": 2.0 * s**2 / a**3 + 2.0 * n**2 / (k**2 * a**3),
        "axis_ratio": 2.0 * n**2 / (k**3 * a**2),
        # vanishes identically for a circle (k = 1)
        "angle": 2.0 * s * n * (1.0 - k**2) / (k**2 * a**2),
    }


def project_tdf(phi, proj: ProjectionParameters | float):
    """``0.5 (1 - tanh(beta phi))`` evaluated as a logistic for stability."""
    beta = proj.beta if isinstance(proj, ProjectionParameters) else float(proj)
    return expit(-2.0 * beta * np.asarray(phi, dtype=float))


def project_tdf_slope(phi, proj: ProjectionParameters | float):
    beta = proj.beta if isinstance(proj, ProjectionParameters) else float(proj)
    z = 2.0 * beta * np.asarray(phi, dtype=float)
    return -2.0 * beta * expit(-z) * expit(z)


# ---------------------------------------------------------------------------
# material field

def _selected(cset: ComponentSet, mask: str):
    if mask not in ("walls", "fins", "both"):
        raise ValueError(f"unknown component mask {mask!r}")
    items = []
    if mask in ("walls", "both"):
        items += [("wall", i, w) for i, w in enumerate(cset.walls)]
    if mask in ("fins", "both"):
        items += [("fin", i, f) for i, f in enumerate(cset.fins) if f.active]
    return items


def _tdf(kind, comp, pts):
    return wall_tdf(comp, pts) if kind == "wall" else fin_tdf(comp, pts)


def _tdf_gradient(kind, comp, pts):
    return (wall_tdf_gradient if kind == "wall" else fin_tdf_gradient)(comp, pts)


def _gauge_distance(x1, x2, c1, c2, m):
    """Signed distance estimate for the level set ``(x1/c1)^m + (x2/c2)^m = 1``.

    With ``R = (x1/c1)^m + (x2/c2)^m`` and ``rho = R^(1/m)`` the estimate is
    ``(1 - R) / |grad R|`` inside and ``(1 - rho) / |grad rho|`` outside; both
    agree to first order on the boundary, so the result is C1 there.  It is
    exact along both semi-axes outside.  Returns ``d`` and its partials with
    respect to ``(x1, x2, c1, c2)``.
    """
    R = (x1 / c1) ** m + (x2 / c2) ** m
    R_x = (m * x1 ** (m - 1) / c1**m, m * x2 ** (m - 1) / c2**m)
    R_c = (-m * x1**m / c1 ** (m + 1), -m * x2**m / c2 ** (m + 1))
    G2 = np.maximum(x1 ** (2 * m - 2) / c1 ** (2 * m) + x2 ** (2 * m - 2) / c2 ** (2 * m), 1e-300)
    G2_x = ((2 * m - 2) * x1 ** (2 * m - 3) / c1 ** (2 * m), (2 * m - 2) * x2 ** (2 * m - 3) / c2 ** (2 * m))
    G2_c = (-2 * m * x1 ** (2 * m - 2) / c1 ** (2 * m + 1), -2 * m * x2 ** (2 * m - 2) / c2 ** (2 * m + 1))
    G = np.sqrt(G2)
    inside = R < 1.0
    Rs = np.where(inside, 1.0, R)  # keeps the outside branch finite where unused
    rho = Rs ** (1.0 / m)
    Q = Rs ** (1.0 - 1.0 / m) / G
    d_in = (1.0 - R) / (m * G)
    d_out = (1.0 - rho) * Q
    d = np.where(inside, d_in, d_out)

    partials = []
    for Rv, G2v in zip(R_x + R_c, G2_x + G2_c):
        din_v = -Rv / (m * G) - d_in * G2v / (2.0 * G2)
        rho_v = rho * Rv / (m * Rs)
        Q_v = Q * ((1.0 - 1.0 / m) * Rv / Rs - G2v / (2.0 * G2))
        dout_v = -rho_v * Q + (1.0 - rho) * Q_v
        partials.append(np.where(inside, din_v, dout_v))
    return d, partials


def _distance_with_partials(kind, comp, pts):
    x, y = _as_points(pts)
    if kind == "wall":
        xc, yc, angle, c1, c2, m = comp.x0, comp.y0, comp.angle, comp.half_length, comp.half_thickness, WALL_POWER
    else:
        c1 = comp.semi_major
        xc, yc, angle, c2, m = comp.xf, comp.yf, comp.angle, comp.axis_ratio * c1, 2
    s, n = _local_frame(x, y, xc, yc, angle)
    d, (d_s, d_n, d_c1, d_c2) = _gauge_distance(s, n, c1, c2, m)
    return d, s, n, d_s, d_n, d_c1, d_c2


def smoothed_distance(kind: str, comp, pts) -> np.ndarray:
    """Signed distance estimate to the component boundary (positive inside)."""
    return _distance_with_partials(kind, comp, pts)[0]


def _smoothed_distance_gradient(kind, comp, pts) -> dict[str, np.ndarray]:
    _, s, n, d_s, d_n, d_c1, d_c2 = _distance_with_partials(kind, comp, pts)
    c, sn = np.cos(comp.angle), np.sin(comp.angle)
    # ds/d(angle) = n, dn/d(angle) = -s
    d_angle = d_s * n - d_n * s
    if kind == "wall":
        return {
            "x0": -c * d_s + sn * d_n,
            "y0": -sn * d_s - c * d_n,
            "half_length": d_c1,
            "half_thickness": d_c2,
            "angle": d_angle,
        }
    return {
        "semi_major": d_c1 + comp.axis_ratio * d_c2,
        "axis_ratio": comp.semi_major * d_c2,
        "angle": d_angle,
    }


def _smoothstep(t):
    """C2 step ``6t^5 - 15t^4 + 10t^3`` on ``[0, 1]`` (clamped) and its slope."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 + t * (6.0 * t - 15.0)), 30.0 * t**2 * (1.0 - t) ** 2


def _factor(kind, comp, pts, proj, width):
    """Projected occupancy factor of one component and its slope w.r.t. the sampled quantity."""
    if width is None:
        phi = _tdf(kind, comp, pts)
        return project_tdf(phi, proj), project_tdf_slope(phi, proj)
    # the floor is the tanh projection at the component center (phi = 1)
    floor = float(project_tdf(1.0, proj))
    S, dS = _smoothstep((width - smoothed_distance(kind, comp, pts)) / (2.0 * width))
    return floor + (1.0 - floor) * S, -(1.0 - floor) * dS / (2.0 * width)


def _factor_field_gradient(kind, comp, pts, width):
    if width is None:
        return _tdf_gradient(kind, comp, pts)
    return _smoothed_distance_gradient(kind, comp, pts)


def gamma_at(cset: ComponentSet, pts, mask: str = "both", width: float | None = None) -> np.ndarray:
    """Material field at ``pts``: the product of all selected projected TDFs.

    With ``width`` (a length), each factor is instead a C2 polynomial step in
    the smoothed signed distance ``d``: exactly 1 for ``d <= -width``, 0.5 on
    the boundary, and the tanh value at ``phi = 1`` for ``d >= width``.  The
    zero level sets are the same, but the transition spans ``2 width`` rather
    than a sliver far below the mesh size, so sampled fields vary smoothly with
    the design.  The step has compact support because a Brinkman term with a
    large solid/fluid contrast turns even a small exponential tail into extra
    flow resistance well outside the component.
    """
    if width is not None and not width > 0:
        raise ValueError("smoothing width must be positive")
    x, _ = _as_points(pts)
    gamma = np.ones_like(x)
    for kind, _, comp in _selected(cset, mask):
        gamma = gamma * _factor(kind, comp, pts, cset.projection, width)[0]
    return gamma


def gamma_gradient_at(cset: ComponentSet, pts, mapping: Sequence["VariableRef"],
                      mask: str = "both", width: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``gamma`` and ``d gamma / d v`` for every physical variable in ``mapping``.

    The gradient has shape ``pts.shape[:-1] + (len(mapping),)``.  The product
    of the other factors is formed from prefix/suffix products so that no
    division by a saturated factor occurs.
    """
    if width is not None and not width > 0:
        raise ValueError("smoothing width must be positive")
    x, _ = _as_points(pts)
    items = _selected(cset, mask)
    factors, slopes = [], []
    for kind, _, comp in items:
        g, dg = _factor(kind, comp, pts, cset.projection, width)
        factors.append(g)
        slopes.append(dg)
    n = len(items)
    prefix = [np.ones_like(x)]
    for g in factors:
        prefix.append(prefix[-1] * g)
    suffix = [np.ones_like(x)] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] * factors[i]
    gamma = prefix[-1]

    position = {(kind, idx): j for j, (kind, idx, _) in enumerate(items)}
    grad = np.zeros(x.shape + (len(mapping),))
    field_grads: dict[int, dict] = {}
    for col, ref in enumerate(mapping):
        j = position.get((ref.kind, ref.index))
        if j is None:
            continue
        if j not in field_grads:
            kind, _, comp = items[j]
            field_grads[j] = _factor_field_gradient(kind, comp, pts, width)
        others = prefix[j] * suffix[j + 1]
        grad[..., col] = others * slopes[j] * field_grads[j][ref.field]
    return gamma, grad


# ---------------------------------------------------------------------------
# pruning

def prune_walls(cset: ComponentSet, frac_threshold: float, Lx: float) -> ComponentSet:
    """Drop walls whose full length ``2 L`` is below ``frac_threshold * Lx``."""
    if not 0.0 < frac_threshold < 1.0:
        raise ValueError("frac_threshold must lie in (0, 1)")
    kept = tuple(w for w in cset.walls if 2.0 * w.half_length >= frac_threshold * Lx)
    if cset.walls and not kept:
        log.warning("wall pruning removed every wall")
    return replace(cset, walls=kept)


def distance_to_wall_rectangle(w: WallComponent, pts) -> np.ndarray:
    """Euclidean distance from points to the rotated rectangle (0 inside)."""
    x, y = _as_points(pts)
    s, n = _local_frame(x, y, w.x0, w.y0, w.angle)
    ds = np.maximum(np.abs(s) - w.half_length, 0.0)
    dn = np.maximum(np.abs(n) - w.half_thickness, 0.0)
    return np.hypot(ds, dn)


def prune_fins_near_walls(cset: ComponentSet, d_min: float) -> ComponentSet:
    if d_min < 0:
        raise ValueError("d_min must be non-negative")
    if not cset.fins or not cset.walls:
        return cset
    centers = np.array([[f.xf, f.yf] for f in cset.fins])
    dist = np.min([distance_to_wall_rectangle(w, centers) for w in cset.walls], axis=0)
    fins = tuple(replace(f, active=False) if f.active and d < d_min else f
                 for f, d in zip(cset.fins, dist))
    return replace(cset, fins=fins)


def prune_small_fins(cset: ComponentSet, a_min_keep: float) -> ComponentSet:
    if not a_min_keep > 0:
        raise ValueError("a_min_keep must be positive")
    fins = tuple(replace(f, active=False) if f.active and f.semi_major < a_min_keep else f
                 for f in cset.fins)
    return replace(cset, fins=fins)


# ---------------------------------------------------------------------------
# bounds and design vectors

@dataclass(frozen=True)
class ComponentBounds:
    """Absolute lower/upper bounds (SI units) for every component field."""

    x0: tuple[float, float]
    y0: tuple[float, float]
    half_length: tuple[float, float]
    half_thickness: tuple[float, float]
    wall_angle: tuple[float, float]
    semi_major: tuple[float, float]
    axis_ratio: tuple[float, float]
    fin_angle: tuple[float, float]

    @classmethod
    def defaults(cls, Lx: float, Ly: float, L=(0.02, 0.45), t=(0.01, 0.10),
                 a=(0.005, 0.06), k=(0.2, 1.0), wall_angle=(-np.pi / 2, np.pi / 2),
                 fin_angle=(-np.pi / 2, np.pi / 2)) -> "ComponentBounds":
        """Bounds given as fractions of ``Lx`` for lengths; centers are inset by ``t_min``."""
        t_min = t[0] * Lx
        return cls(
            x0=(t_min, Lx - t_min),
            y0=(t_min, Ly - t_min),
            half_length=(L[0] * Lx, L[1] * Lx),
            half_thickness=(t_min, t[1] * Lx),
            wall_angle=tuple(wall_angle),
            semi_major=(a[0] * Lx, a[1] * Lx),
            axis_ratio=tuple(k),
            fin_angle=tuple(fin_angle),
        )

    def for_field(self, kind: str, name: str) -> tuple[float, float]:
        if name == "angle":
            return self.wall_angle if kind == "wall" else self.fin_angle
        return getattr(self, name)


@dataclass(frozen=True)
class VariableRef:
    kind: str  # "wall" or "fin"
    index: int
    field: str
    lb: float
    ub: float

    @property
    def label(self) -> str:
        return f"{self.kind}{self.index}.{self.field}"


@dataclass
class DesignVector:
    values: np.ndarray
    mapping: list[VariableRef]
    stage_mask: np.ndarray  # True for variables optimized in the current stage
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.stage_mask = np.asarray(self.stage_mask, dtype=bool)
        if not (len(self.values) == len(self.mapping) == len(self.stage_mask)):
            raise ConfigError("design vector, mapping and mask lengths differ")

    @property
    def lower(self) -> np.ndarray:
        return np.array([r.lb for r in self.mapping])

    @property
    def upper(self) -> np.ndarray:
        return np.array([r.ub for r in self.mapping])

    @property
    def scale(self) -> np.ndarray:
        """d(physical) / d(scaled) for each entry."""
        return self.upper - self.lower

    def physical(self) -> np.ndarray:
        return self.lower + self.values * self.scale

    def with_values(self, values) -> "DesignVector":
        return DesignVector(np.array(values, dtype=float), self.mapping, self.stage_mask.copy())

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.mapping]


def pack_design(cset: ComponentSet, stage_mask: str, bounds: ComponentBounds) -> DesignVector:
    """Scale the fields of the selected component kinds to ``[0, 1]``.

    ``stage_mask`` is ``"walls"``, ``"fins"`` or ``"both"``.  Inactive fins are
    kept in the vector (so indices stay stable across pruning) but masked out.
    """
    if stage_mask not in ("walls", "fins", "both"):
        raise ConfigError(f"unknown stage mask {stage_mask!r}")
    mapping, values, active = [], [], []

    def add(kind, idx, comp, names, is_active):
        for name in names:
            lb, ub = bounds.for_field(kind, name)
            if not lb < ub:
                raise ConfigError(f"empty bound interval for {kind}.{name}")
            mapping.append(VariableRef(kind, idx, name, float(lb), float(ub)))
            values.append((getattr(comp, name) - lb) / (ub - lb))
            active.append(is_active)

    if stage_mask in ("walls", "both"):
        for i, w in enumerate(cset.walls):
            add("wall", i, w, WALL_FIELDS, True)
    if stage_mask in ("fins", "both"):
        for i, f in enumerate(cset.fins):
            add("fin", i, f, FIN_FIELDS, f.active)
    return DesignVector(np.array(values), mapping, np.array(active, dtype=bool))


def unpack_design(dv: DesignVector, cset: ComponentSet) -> ComponentSet:
    values = dv.values
    if np.any(values < 0.0) or np.any(values > 1.0):
        msg = f"{int(np.sum((values < 0) | (values > 1)))} design values clamped to [0, 1]"
        warnings.warn(msg, stacklevel=2)
        dv.warnings.append(msg)
        values = np.clip(values, 0.0, 1.0)
    walls = [asdict(w) for w in cset.walls]
    fins = [asdict(f) for f in cset.fins]
    for v, ref in zip(values, dv.mapping):
        target = walls if ref.kind == "wall" else fins
        if ref.index >= len(target):
            raise ConfigError(f"mapping refers to missing component {ref.label}")
        target[ref.index][ref.field] = ref.lb + v * (ref.ub - ref.lb)
    return replace(cset, walls=tuple(WallComponent(**w) for w in walls),
                   fins=tuple(FinComponent(**f) for f in fins))


# ---------------------------------------------------------------------------
# initial layout

def _grid_centers(n: int, extent: float) -> np.ndarray:
    return (np.arange(n) + 0.5) * extent / n


def wall_angle_pattern(pattern: str, i: int, j: int) -> float:
    if pattern == "horizontal":
        return 0.0
    if pattern == "vertical":
        return np.pi / 2
    if pattern == "alternating":
        return 0.0 if (i + j) % 2 == 0 else np.pi / 2
    if pattern == "diagonal":
        return np.pi / 4 if (i + j) % 2 == 0 else -np.pi / 4
    raise ConfigError(f"unknown wall angle pattern {pattern!r}")


def initial_layout(Lx: float, Ly: float, walls_grid=(2, 3), fins_grid=(6, 4),
                   wall_half_length=0.12, wall_half_thickness=0.03, angle_pattern="horizontal",
                   fin_semi_major=0.02, fin_axis_ratio=0.5, fin_angle=0.0,
                   beta=8.0) -> ComponentSet:
    """Walls and fins on uniform grids; lengths are fractions of ``Lx``."""
    walls = []
    nx, ny = walls_grid
    for j, yc in enumerate(_grid_centers(ny, Ly)):
        for i, xc in enumerate(_grid_centers(nx, Lx)):
            walls.append(WallComponent(float(xc), float(yc), wall_half_length * Lx,
                                       wall_half_thickness * Lx, wall_angle_pattern(angle_pattern, i, j)))
    fins = []
    nx, ny = fins_grid
    for yc in _grid_centers(ny, Ly):
        for xc in _grid_centers(nx, Lx):
            fins.append(FinComponent(float(xc), float(yc), fin_semi_major * Lx, fin_axis_ratio, fin_angle))
    return ComponentSet(tuple(walls), tuple(fins), ProjectionParameters(beta))


def count_summary(cset: ComponentSet) -> tuple[int, int]:
    return len(cset.walls), cset.n_active_fins


def iter_components(cset: ComponentSet) -> Iterable:
    yield from cset.walls
    yield from cset.fins
