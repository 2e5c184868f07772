"""Room, transmitter and receiver description.

Coordinate frame: origin at a floor corner, ``x`` runs across the room width
(0..width_m), ``y`` along its length (0..length_m) and ``z`` up, with the floor
at ``z = 0`` and the ceiling at ``z = height_m``.  With the default 4 m x 8 m
footprint every receiver and transmitter position used in the experiments is
interior.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from .errors import DomainError, ScenarioError

NORMAL_TOL = 1e-9
ELECTRON_CHARGE = 1.602176634e-19


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y
        yield self.z

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    @classmethod
    def of(cls, values) -> "Vec3":
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


def _check_unit(v: Vec3, name: str) -> None:
    if abs(v.norm() - 1.0) > NORMAL_TOL:
        raise ScenarioError(f"direction must be a unit vector (norm {v.norm():.12g})", name)


def az_el_to_normal(azimuth_deg: float, elevation_deg: float) -> Vec3:
    """Unit vector for an (azimuth, elevation) pointing direction.

    Elevation is measured from the horizontal plane (negative looks down),
    azimuth from +x toward +y.
    """
    if not -90.0 <= elevation_deg <= 90.0:
        raise DomainError(f"elevation {elevation_deg} outside [-90, 90] degrees")
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return Vec3(math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))


def normal_to_az_el(v) -> tuple[float, float]:
    """Inverse of :func:`az_el_to_normal`; azimuth is returned in [0, 360)."""
    x, y, z = (float(c) for c in v)
    horiz = math.hypot(x, y)
    el = math.degrees(math.atan2(z, horiz))
    az = math.degrees(math.atan2(y, x)) % 360.0 if horiz > 0 else 0.0
    return az, el


@dataclass(frozen=True)
class Room:
    length_m: float = 8.0
    width_m: float = 4.0
    height_m: float = 3.0
    reflectivity_ceiling: float = 0.8
    reflectivity_walls: float = 0.8
    reflectivity_floor: float = 0.3
    reflector_order: float = 1.0
    element_size_first_m: float = 0.05
    element_size_second_m: float = 0.20
    comm_floor_height_m: float = 1.0

    def __post_init__(self):
        for name in ("length_m", "width_m", "height_m"):
            if not getattr(self, name) > 0:
                raise ScenarioError("room dimensions must be > 0", f"room.{name}")
        for name in ("reflectivity_ceiling", "reflectivity_walls", "reflectivity_floor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ScenarioError("reflectivity must lie in [0, 1]", f"room.{name}")
        if not self.reflector_order >= 0:
            raise ScenarioError("Lambertian order must be >= 0", "room.reflector_order")
        smallest = min(self.length_m, self.width_m, self.height_m)
        for name in ("element_size_first_m", "element_size_second_m"):
            size = getattr(self, name)
            if not 0 < size <= smallest:
                raise ScenarioError(
                    f"element size must be > 0 and <= smallest room dimension ({smallest} m)",
                    f"room.{name}",
                )
        if not 0 <= self.comm_floor_height_m < self.height_m:
            raise ScenarioError(
                "communication floor must satisfy 0 <= height < room height",
                "room.comm_floor_height_m",
            )

    def contains(self, p: Vec3, tol: float = 1e-9) -> bool:
        return (
            -tol <= p.x <= self.width_m + tol
            and -tol <= p.y <= self.length_m + tol
            and -tol <= p.z <= self.height_m + tol
        )

    @property
    def center(self) -> Vec3:
        return Vec3(self.width_m / 2, self.length_m / 2, self.height_m / 2)


@dataclass(frozen=True)
class SurfaceElement:
    center: Vec3
    normal: Vec3
    area_m2: float
    reflectivity: float
    order: float


@dataclass(frozen=True)
class Transmitter:
    position: Vec3 = Vec3(2.0, 4.0, 1.0)
    orientation: Vec3 = Vec3(0.0, 0.0, 1.0)
    power_w: float = 0.150
    semi_angle_deg: float = 40.0
    # None -> half-power match to semi_angle_deg
    lambertian_order_wide: float | None = None

    def __post_init__(self):
        _check_unit(self.orientation, "transmitter.orientation")
        if not self.power_w > 0:
            raise ScenarioError("power must be > 0", "transmitter.power_w")
        if not 0 < self.semi_angle_deg < 90:
            raise ScenarioError("semi-angle must lie in (0, 90) degrees", "transmitter.semi_angle_deg")
        if self.lambertian_order_wide is None:
            object.__setattr__(
                self, "lambertian_order_wide", half_power_order(self.semi_angle_deg)
            )
        if not self.lambertian_order_wide >= 0:
            raise ScenarioError("Lambertian order must be >= 0", "transmitter.lambertian_order_wide")


def half_power_order(semi_angle_deg: float) -> float:
    """Lambertian order whose intensity halves at ``semi_angle_deg``."""
    if not 0 < semi_angle_deg < 90:
        raise DomainError(f"half-power angle {semi_angle_deg} outside (0, 90) degrees")
    return -math.log(2.0) / math.log(math.cos(math.radians(semi_angle_deg)))


ADR_AZIMUTHS = (45.0, 135.0, 225.0, 315.0)
ADR_ELEVATION = -70.0


@dataclass(frozen=True)
class DetectorBranch:
    position: Vec3
    azimuth_deg: float
    elevation_deg: float = ADR_ELEVATION
    area_m2: float = 4e-6
    fov_deg: float = 21.0
    responsivity_a_per_w: float = 0.4
    normal: Vec3 = field(init=False)

    def __post_init__(self):
        try:
            n = az_el_to_normal(self.azimuth_deg, self.elevation_deg)
        except DomainError as exc:
            raise ScenarioError(str(exc), "branch.elevation_deg") from None
        object.__setattr__(self, "normal", n)
        if not self.area_m2 > 0:
            raise ScenarioError("detector area must be > 0", "branch.area_m2")
        if not 0 < self.fov_deg <= 90:
            raise ScenarioError("FOV must lie in (0, 90] degrees", "branch.fov_deg")
        if not self.responsivity_a_per_w > 0:
            raise ScenarioError("responsivity must be > 0", "branch.responsivity_a_per_w")


def adr_branches(center: Vec3, **kwargs) -> tuple[DetectorBranch, ...]:
    """The four-branch angle-diversity receiver at ``center``."""
    return tuple(DetectorBranch(center, az, **kwargs) for az in ADR_AZIMUTHS)


@dataclass(frozen=True)
class ReceiverUnit:
    center: Vec3
    branches: tuple[DetectorBranch, ...]

    def __post_init__(self):
        if len(self.branches) != 4:
            raise ScenarioError(
                f"a receiver unit needs exactly 4 branches, got {len(self.branches)}",
                "receivers.units.branches",
            )
        for b in self.branches:
            if b.position != self.center:
                raise ScenarioError("branch position must equal the unit center",
                                    "receivers.units.branches")


@dataclass(frozen=True)
class NoiseConfig:
    # Calibration constants, not measured values.
    background_current_a: float = 200e-6
    preamp_noise_density_a_per_sqrt_hz: float = 2.7e-12
    electron_charge_c: float = ELECTRON_CHARGE

    def __post_init__(self):
        if not self.background_current_a >= 0:
            raise ScenarioError("background current must be >= 0", "noise.background_current_a")
        if not self.preamp_noise_density_a_per_sqrt_hz >= 0:
            raise ScenarioError("preamplifier noise density must be >= 0",
                                "noise.preamp_noise_density_a_per_sqrt_hz")
        if not self.electron_charge_c > 0:
            raise ScenarioError("electron charge must be > 0", "noise.electron_charge_c")


@dataclass(frozen=True)
class SteeringConfig:
    stop_size_m: float = 0.1
    steered_divergence_deg: float = 2.0
    probe_fills_subquadrant: bool = True

    def __post_init__(self):
        if not self.stop_size_m > 0:
            raise ScenarioError("stop size must be > 0", "steering.stop_size_m")
        if not 0 < self.steered_divergence_deg < 90:
            raise ScenarioError("divergence must lie in (0, 90) degrees",
                                "steering.steered_divergence_deg")


@dataclass(frozen=True)
class Scenario:
    room: Room = Room()
    transmitter: Transmitter = Transmitter()
    receiver_units: tuple[ReceiverUnit, ...] = ()
    noise: NoiseConfig = NoiseConfig()
    bit_rate_bps: float = 3.57e9
    steering: SteeringConfig = SteeringConfig()

    def __post_init__(self):
        object.__setattr__(self, "receiver_units", tuple(self.receiver_units))
        room = self.room
        for i, unit in enumerate(self.receiver_units):
            c = unit.center
            if abs(c.z - room.height_m) > 1e-9:
                raise ScenarioError(f"unit center z={c.z} is not on the ceiling (z={room.height_m})",
                                    f"receivers.units[{i}].center")
            if not (0 <= c.x <= room.width_m and 0 <= c.y <= room.length_m):
                raise ScenarioError("unit center lies outside the room footprint",
                                    f"receivers.units[{i}].center")
        p = self.transmitter.position
        if not (0 <= p.x <= room.width_m and 0 <= p.y <= room.length_m):
            raise ScenarioError("transmitter lies outside the room footprint", "transmitter.position")
        if abs(p.z - room.comm_floor_height_m) > 1e-9:
            raise ScenarioError("transmitter must sit on the communication floor",
                                "transmitter.position")
        if not self.bit_rate_bps > 0:
            raise ScenarioError("bit rate must be > 0", "signaling.bit_rate_bps")
        if self.steering.stop_size_m >= max(room.width_m, room.length_m):
            raise ScenarioError("stop size must be smaller than the coverage area",
                                "steering.stop_size_m")

    def branches(self) -> list[DetectorBranch]:
        """All detector branches in canonical order (unit index, branch index)."""
        return [b for unit in self.receiver_units for b in unit.branches]

    @property
    def n_branches(self) -> int:
        return sum(len(u.branches) for u in self.receiver_units)


UNIT_CENTERS = tuple(
    Vec3(x, y, 3.0) for x in (1.0, 3.0) for y in (1.0, 3.0, 5.0, 7.0)
)


def default_paper_scenario() -> Scenario:
    """The 4 m x 8 m x 3 m room with eight ceiling ADR units."""
    units = tuple(ReceiverUnit(c, adr_branches(c)) for c in UNIT_CENTERS)
    return Scenario(receiver_units=units)


# --------------------------------------------------------------------------
# surface tiling

def _n_cells(side: float, size: float) -> int:
    # rounding guards against 8/0.05 == 160.00000000000003
    return max(1, math.ceil(round(side / size, 9)))


def _edges(side: float, size: float) -> np.ndarray:
    n = _n_cells(side, size)
    edges = np.minimum(np.arange(n + 1) * size, side)
    edges[-1] = side
    return edges


@dataclass(frozen=True)
class ElementGrid:
    """Array form of a list of surface elements (one row per element)."""

    centers: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    reflectivity: np.ndarray
    order: np.ndarray
    surface: np.ndarray

    def __len__(self) -> int:
        return len(self.areas)

    def elements(self) -> list[SurfaceElement]:
        return [
            SurfaceElement(Vec3.of(c), Vec3.of(n), float(a), float(r), float(o))
            for c, n, a, r, o in zip(self.centers, self.normals, self.areas,
                                     self.reflectivity, self.order)
        ]


SURFACES = ("ceiling", "floor", "wall_x0", "wall_x1", "wall_y0", "wall_y1")


def surface_areas(room: Room) -> dict[str, float]:
    W, L, H = room.width_m, room.length_m, room.height_m
    return {
        "ceiling": W * L, "floor": W * L,
        "wall_x0": L * H, "wall_x1": L * H,
        "wall_y0": W * H, "wall_y1": W * H,
    }


def tile_surfaces(room: Room, size: float) -> ElementGrid:
    """Tile all six room surfaces with square patches of side ``size``.

    Patches on the far edges are shrunk so each surface area is exact.
    Rows are ordered by surface (see ``SURFACES``), then row-major in-plane.
    """
    W, L, H = room.width_m, room.length_m, room.height_m
    # (surface, in-plane axes, fixed axis, fixed value, normal, rho)
    layout = [
        ((0, 1), 2, H, (0, 0, -1), room.reflectivity_ceiling),
        ((0, 1), 2, 0.0, (0, 0, 1), room.reflectivity_floor),
        ((1, 2), 0, 0.0, (1, 0, 0), room.reflectivity_walls),
        ((1, 2), 0, W, (-1, 0, 0), room.reflectivity_walls),
        ((0, 2), 1, 0.0, (0, 1, 0), room.reflectivity_walls),
        ((0, 2), 1, L, (0, -1, 0), room.reflectivity_walls),
    ]
    extent = (W, L, H)
    parts = []
    for s, (axes, fixed, value, normal, rho) in enumerate(layout):
        ea = _edges(extent[axes[0]], size)
        eb = _edges(extent[axes[1]], size)
        ca = 0.5 * (ea[:-1] + ea[1:])
        cb = 0.5 * (eb[:-1] + eb[1:])
        A, B = np.meshgrid(ca, cb, indexing="ij")
        DA, DB = np.meshgrid(np.diff(ea), np.diff(eb), indexing="ij")
        n = A.size
        centers = np.empty((n, 3))
        centers[:, axes[0]] = A.ravel()
        centers[:, axes[1]] = B.ravel()
        centers[:, fixed] = value
        parts.append((centers, np.tile(np.asarray(normal, float), (n, 1)),
                      (DA * DB).ravel(), np.full(n, rho), np.full(n, s)))
    return ElementGrid(
        centers=np.concatenate([p[0] for p in parts]),
        normals=np.concatenate([p[1] for p in parts]),
        areas=np.concatenate([p[2] for p in parts]),
        reflectivity=np.concatenate([p[3] for p in parts]),
        order=np.full(sum(len(p[2]) for p in parts), float(room.reflector_order)),
        surface=np.concatenate([p[4] for p in parts]).astype(np.int64),
    )


def build_room(room: Room) -> tuple[list[SurfaceElement], list[SurfaceElement]]:
    """First-order and second-order reflector element lists."""
    return (tile_surfaces(room, room.element_size_first_m).elements(),
            tile_surfaces(room, room.element_size_second_m).elements())


# --------------------------------------------------------------------------
# scenario documents

def _vec_list(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    r, t, n, s = sc.room, sc.transmitter, sc.noise, sc.steering
    return {
        "room": {k: getattr(r, k) for k in Room.__dataclass_fields__},
        "transmitter": {
            "position": _vec_list(t.position),
            "orientation": _vec_list(t.orientation),
            "power_w": t.power_w,
            "semi_angle_deg": t.semi_angle_deg,
            "lambertian_order_wide": t.lambertian_order_wide,
        },
        "receivers": {
            "units": [
                {
                    "center": _vec_list(u.center),
                    "branches": [
                        {
                            "azimuth_deg": b.azimuth_deg,
                            "elevation_deg": b.elevation_deg,
                            "area_m2": b.area_m2,
                            "fov_deg": b.fov_deg,
                            "responsivity_a_per_w": b.responsivity_a_per_w,
                        }
                        for b in u.branches
                    ],
                }
                for u in sc.receiver_units
            ]
        },
        "noise": {k: getattr(n, k) for k in NoiseConfig.__dataclass_fields__},
        "signaling": {"bit_rate_bps": sc.bit_rate_bps},
        "steering": {k: getattr(s, k) for k in SteeringConfig.__dataclass_fields__},
    }


_BRANCH_KEYS = {"azimuth_deg", "elevation_deg", "area_m2", "fov_deg", "responsivity_a_per_w"}
_UNIT_KEYS = {"center", "branches"}


def _merge(base: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ScenarioError("unknown key", where)
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ScenarioError("expected an object", where)
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", where)
    return float(value)


def _vec(value, where: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ScenarioError("expected a 3-element [x, y, z] list", where)
    return Vec3(*(_number(v, where) for v in value))


def _units(raw, where: str) -> tuple[ReceiverUnit, ...]:
    if not isinstance(raw, list):
        raise ScenarioError("expected a list of units", where)
    units = []
    for i, u in enumerate(raw):
        uw = f"{where}[{i}]"
        if not isinstance(u, dict):
            raise ScenarioError("expected an object", uw)
        for key in u:
            if key not in _UNIT_KEYS:
                raise ScenarioError("unknown key", f"{uw}.{key}")
        if "center" not in u:
            raise ScenarioError("missing unit center", f"{uw}.center")
        center = _vec(u["center"], f"{uw}.center")
        raw_branches = u.get("branches")
        if raw_branches is None:
            branches = adr_branches(center)
        else:
            if not isinstance(raw_branches, list):
                raise ScenarioError("expected a list of branches", f"{uw}.branches")
            branches = []
            for j, b in enumerate(raw_branches):
                bw = f"{uw}.branches[{j}]"
                if not isinstance(b, dict):
                    raise ScenarioError("expected an object", bw)
                for key in b:
                    if key not in _BRANCH_KEYS:
                        raise ScenarioError("unknown key", f"{bw}.{key}")
                if "azimuth_deg" not in b:
                    raise ScenarioError("missing azimuth", f"{bw}.azimuth_deg")
                kw = {k: _number(v, f"{bw}.{k}") for k, v in b.items()}
                try:
                    branches.append(DetectorBranch(center, **kw))
                except ScenarioError as exc:
                    raise ScenarioError(str(exc), bw) from None
            branches = tuple(branches)
        try:
            units.append(ReceiverUnit(center, branches))
        except ScenarioError as exc:
            raise ScenarioError(str(exc), uw) from None
    return tuple(units)


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    """Build a validated scenario; missing fields fall back to the defaults."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be an object")
    base = scenario_to_dict(default_paper_scenario())
    units_override = None
    doc = dict(doc)
    if "receivers" in doc:
        rec = doc.pop("receivers")
        if not isinstance(rec, dict):
            raise ScenarioError("expected an object", "receivers")
        for key in rec:
            if key != "units":
                raise ScenarioError("unknown key", f"receivers.{key}")
        units_override = rec.get("units")
    merged = _merge(base, doc, "")

    def section(name: str, cls, convert=None):
        kw = {}
        for k, v in merged[name].items():
            where = f"{name}.{k}"
            if convert and k in convert:
                kw[k] = convert[k](v, where)
            elif isinstance(cls.__dataclass_fields__[k].default, bool):
                if not isinstance(v, bool):
                    raise ScenarioError("expected true or false", where)
                kw[k] = v
            else:
                kw[k] = _number(v, where)
        return cls(**kw)

    room = section("room", Room)
    tx_doc = doc.get("transmitter", {})
    if "semi_angle_deg" in tx_doc and "lambertian_order_wide" not in tx_doc:
        # a new semi-angle re-derives the half-power order unless given explicitly
        merged["transmitter"]["lambertian_order_wide"] = None
    transmitter = section(
        "transmitter", Transmitter,
        {"position": _vec, "orientation": _vec,
         "lambertian_order_wide": lambda v, w: None if v is None else _number(v, w)},
    )
    units = (_units(units_override, "receivers.units") if units_override is not None
             else default_paper_scenario().receiver_units)
    noise = section("noise", NoiseConfig)
    steering = section("steering", SteeringConfig)
    return Scenario(
        room=room,
        transmitter=transmitter,
        receiver_units=units,
        noise=noise,
        bit_rate_bps=_number(merged["signaling"]["bit_rate_bps"], "signaling.bit_rate_bps"),
        steering=steering,
    )


def load_scenario(text: str) -> Scenario:
    """Parse a JSON scenario document.  Blank text yields the default scenario."""
    if not text.strip():
        return default_paper_scenario()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2)
