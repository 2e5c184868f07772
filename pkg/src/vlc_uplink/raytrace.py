"""Lambertian ray tracing of the room channel up to two reflections.

Every reflector patch is treated as a point at its center: it collects power
with a cosine response and re-emits ``reflectivity`` times that power with a
Lambertian profile of the room's reflector order.  Detectors collect with a
cosine response inside their field of view, using ``area / d**2`` as the
subtended solid angle.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .scene import (
    DetectorBranch,
    ElementGrid,
    Room,
    Scenario,
    Vec3,
    half_power_order,
    tile_surfaces,
)

SPEED_OF_LIGHT = 2.99792458e8


@dataclass(frozen=True)
class PathContribution:
    branch_id: int
    power_w: float
    delay_s: float
    bounce_order: int


def lambertian_intensity(power_w: float, order: float, angle_rad: float) -> float:
    """Radiant intensity (W/sr) of a Lambertian emitter ``angle_rad`` off axis."""
    if angle_rad >= math.pi / 2:
        return 0.0
    return (order + 1.0) / (2.0 * math.pi) * power_w * math.cos(angle_rad) ** order


def _cos_between(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


def los_contribution(
    source_pos: Vec3,
    source_normal: Vec3,
    source_power_w: float,
    source_order: float,
    branch: DetectorBranch,
    branch_id: int = 0,
    bounce_order: int = 0,
) -> PathContribution | None:
    """Direct-path power from a point Lambertian source to one detector.

    Returns ``None`` when the detector lies behind the source or the ray
    arrives outside the detector field of view.
    """
    s = source_pos.as_array()
    r = branch.position.as_array()
    to_det = r - s
    d = float(np.linalg.norm(to_det))
    if d == 0.0:
        raise DomainError("source and detector coincide")
    cos_phi = _cos_between(source_normal.as_array(), to_det)
    cos_theta = _cos_between(branch.normal.as_array(), -to_det)
    # cosines go straight into the gain; angles are only used for the cuts
    if cos_phi <= 0.0 or cos_theta <= 0.0:
        return None
    if math.acos(min(1.0, cos_theta)) > math.radians(branch.fov_deg):
        return None
    intensity = (source_order + 1.0) / (2.0 * math.pi) * source_power_w * cos_phi**source_order
    power = intensity * cos_theta * branch.area_m2 / d**2
    return PathContribution(branch_id, power, d / SPEED_OF_LIGHT, bounce_order)


# --------------------------------------------------------------------------
# vectorised kernels

def transfer_matrix(
    src_pos: np.ndarray,
    src_axis: np.ndarray,
    src_order,
    rcv_pos: np.ndarray,
    rcv_normal: np.ndarray,
    rcv_area,
    rcv_cos_fov=0.0,
    src_cos_cutoff=0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of each source's power reaching each receiver, and distances.

    Shapes: sources ``(S, 3)``, receivers ``(R, 3)``; returns two ``(S, R)``
    arrays.  A pair contributes only when the emission angle is strictly
    inside the source's cutoff cone (``cos > src_cos_cutoff``, or ``>=`` for a
    truncated cone with positive cutoff) and the arrival angle is within the
    receiver's acceptance cone.  Coincident points contribute zero.
    """
    src_pos = np.atleast_2d(src_pos)
    rcv_pos = np.atleast_2d(rcv_pos)
    diff = rcv_pos[None, :, :] - src_pos[:, None, :]
    d2 = np.einsum("srk,srk->sr", diff, diff)
    d = np.sqrt(d2)
    safe = np.where(d > 0, d, 1.0)
    cos_src = np.einsum("srk,sk->sr", diff, np.atleast_2d(src_axis)) / safe
    cos_rcv = -np.einsum("srk,rk->sr", diff, np.atleast_2d(rcv_normal)) / safe

    order = np.broadcast_to(np.asarray(src_order, float), (src_pos.shape[0],))[:, None]
    cutoff = np.broadcast_to(np.asarray(src_cos_cutoff, float), (src_pos.shape[0],))[:, None]
    cos_fov = np.broadcast_to(np.asarray(rcv_cos_fov, float), (rcv_pos.shape[0],))[None, :]
    area = np.broadcast_to(np.asarray(rcv_area, float), (rcv_pos.shape[0],))[None, :]

    ok = (d > 0) & (cos_src > 0) & (cos_src >= cutoff) & (cos_rcv > 0) & (cos_rcv >= cos_fov)
    cs = np.where(ok, cos_src, 0.0)
    gain = np.where(
        ok,
        (order + 1.0) / (2.0 * np.pi) * np.power(cs, order) * cos_rcv * area / np.where(ok, d2, 1.0),
        0.0,
    )
    return gain, d


@dataclass(frozen=True)
class Source:
    """A point emitter: Lambertian profile about ``axis``, optionally truncated."""

    position: np.ndarray
    axis: np.ndarray
    power_w: float
    order: float
    cutoff_deg: float = 90.0
    # (x0, x1, y0, y1, z): rays crossing plane z outside the rectangle carry no power
    footprint: tuple[float, float, float, float, float] | None = None

    @property
    def cos_cutoff(self) -> float:
        return 0.0 if self.cutoff_deg >= 90.0 else math.cos(math.radians(self.cutoff_deg))

    def footprint_mask(self, points: np.ndarray) -> np.ndarray:
        """True where the ray toward each point passes through the footprint."""
        points = np.atleast_2d(points)
        if self.footprint is None:
            return np.ones(len(points), bool)
        x0, x1, y0, y1, z = self.footprint
        d = points - self.position
        dz = d[:, 2]
        up = (z - self.position[2]) * dz > 0
        t = np.where(up, (z - self.position[2]) / np.where(dz != 0, dz, 1.0), 0.0)
        px = self.position[0] + t * d[:, 0]
        py = self.position[1] + t * d[:, 1]
        tol = 1e-12
        return up & (px >= x0 - tol) & (px <= x1 + tol) & (py >= y0 - tol) & (py <= y1 + tol)


@lru_cache(maxsize=8)
def element_grid(room: Room, size: float) -> ElementGrid:
    return tile_surfaces(room, size)


def _branch_arrays(branches: tuple[DetectorBranch, ...]):
    pos = np.array([b.position.as_array() for b in branches]).reshape(-1, 3)
    nrm = np.array([b.normal.as_array() for b in branches]).reshape(-1, 3)
    area = np.array([b.area_m2 for b in branches])
    cos_fov = np.cos(np.radians([b.fov_deg for b in branches]))
    return pos, nrm, area, cos_fov


@lru_cache(maxsize=8)
def _element_to_branch(room: Room, size: float, branches: tuple[DetectorBranch, ...]):
    grid = element_grid(room, size)
    pos, nrm, area, cos_fov = _branch_arrays(branches)
    return transfer_matrix(grid.centers, grid.normals, grid.order, pos, nrm, area, cos_fov)


def _source_to_grid(source: Source, grid: ElementGrid):
    gain, d = transfer_matrix(
        source.position, source.axis, source.order,
        grid.centers, grid.normals, grid.areas,
        src_cos_cutoff=source.cos_cutoff,
    )
    return source.power_w * gain[0] * source.footprint_mask(grid.centers), d[0]


def incident_element_power(source: Source, grid: ElementGrid) -> np.ndarray:
    """Power (W) each element intercepts directly from ``source``."""
    return _source_to_grid(source, grid)[0]


# --------------------------------------------------------------------------
# impulse responses

@dataclass(frozen=True)
class BranchResponse:
    delay_s: np.ndarray
    power_w: np.ndarray
    bounce_order: np.ndarray

    def __len__(self) -> int:
        return len(self.delay_s)


class ImpulseResponse:
    """Per-branch path lists, each sorted by arrival delay.

    Ties in delay keep the canonical generation order (bounce order, then
    element index), so the layout is reproducible bit for bit.
    """

    def __init__(self, branches: list[BranchResponse]):
        self.branches = list(branches)

    @classmethod
    def from_parts(cls, parts: list[list[tuple[np.ndarray, np.ndarray, int]]]) -> "ImpulseResponse":
        out = []
        for chunks in parts:
            if chunks:
                delay = np.concatenate([c[0] for c in chunks])
                power = np.concatenate([c[1] for c in chunks])
                bounce = np.concatenate([np.full(len(c[0]), c[2], np.int8) for c in chunks])
                keep = power > 0
                delay, power, bounce = delay[keep], power[keep], bounce[keep]
                order = np.argsort(delay, kind="stable")
                out.append(BranchResponse(delay[order], power[order], bounce[order]))
            else:
                out.append(BranchResponse(np.empty(0), np.empty(0), np.empty(0, np.int8)))
        return cls(out)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def branch(self, branch_id: int) -> BranchResponse:
        if not 0 <= branch_id < len(self.branches):
            raise DomainError(f"unknown branch {branch_id}")
        return self.branches[branch_id]

    def contributions(self, branch_id: int) -> list[PathContribution]:
        b = self.branch(branch_id)
        return [PathContribution(branch_id, float(p), float(t), int(o))
                for t, p, o in zip(b.delay_s, b.power_w, b.bounce_order)]

    def select(self, bounce_orders) -> "ImpulseResponse":
        wanted = np.asarray(sorted(bounce_orders))
        out = []
        for b in self.branches:
            m = np.isin(b.bounce_order, wanted)
            out.append(BranchResponse(b.delay_s[m], b.power_w[m], b.bounce_order[m]))
        return ImpulseResponse(out)

    def scaled(self, k: float) -> "ImpulseResponse":
        return ImpulseResponse([BranchResponse(b.delay_s, b.power_w * k, b.bounce_order)
                                for b in self.branches])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("branch_id,bounce_order,delay_s,power_w\n")
        for k, b in enumerate(self.branches):
            for t, p, o in zip(b.delay_s.tolist(), b.power_w.tolist(), b.bounce_order.tolist()):
                buf.write(f"{k},{o},{t:.17g},{p:.17g}\n")
        return buf.getvalue()


def trace(scenario: Scenario, source: Source, max_order: int) -> ImpulseResponse:
    """Propagate ``source`` through the room up to ``max_order`` reflections."""
    if max_order not in (0, 1, 2):
        raise DomainError(f"max_order must be 0, 1 or 2, got {max_order}")
    room = scenario.room
    if not room.contains(Vec3.of(source.position)):
        raise DomainError(f"transmitter at {tuple(source.position)} lies outside the room")
    branches = tuple(scenario.branches())
    nb = len(branches)
    parts: list[list] = [[] for _ in range(nb)]
    if nb == 0:
        return ImpulseResponse.from_parts(parts)
    pos, nrm, area, cos_fov = _branch_arrays(branches)

    gain, d = transfer_matrix(source.position, source.axis, source.order,
                              pos, nrm, area, cos_fov, src_cos_cutoff=source.cos_cutoff)
    gain = gain * source.footprint_mask(pos)[None, :]
    for k in range(nb):
        if gain[0, k] > 0:
            parts[k].append((np.array([d[0, k] / SPEED_OF_LIGHT]),
                             np.array([source.power_w * gain[0, k]]), 0))

    if max_order >= 1:
        size = room.element_size_first_m
        grid = element_grid(room, size)
        p_in, d_in = _source_to_grid(source, grid)
        active = np.flatnonzero(p_in * grid.reflectivity > 0)
        if active.size:
            g_out, d_out = _element_to_branch(room, size, branches)
            emitted = p_in[active] * grid.reflectivity[active]
            for k in range(nb):
                g = g_out[active, k]
                hit = g > 0
                if hit.any():
                    parts[k].append((
                        (d_in[active][hit] + d_out[active, k][hit]) / SPEED_OF_LIGHT,
                        emitted[hit] * g[hit],
                        1,
                    ))

    if max_order >= 2:
        size = room.element_size_second_m
        grid = element_grid(room, size)
        p_in, d_in = _source_to_grid(source, grid)
        active = np.flatnonzero(p_in * grid.reflectivity > 0)
        if active.size:
            g_out, d_out = _element_to_branch(room, size, branches)
            emitted_a = p_in[active] * grid.reflectivity[active]
            t_ab, d_ab = transfer_matrix(
                grid.centers[active], grid.normals[active], grid.order[active],
                grid.centers, grid.normals, grid.areas,
            )
            for k in range(nb):
                seen = np.flatnonzero(g_out[:, k] * grid.reflectivity > 0)
                if seen.size == 0:
                    continue
                emitted_b = grid.reflectivity[seen] * g_out[seen, k]
                power = emitted_a[:, None] * t_ab[:, seen] * emitted_b[None, :]
                delay = d_in[active][:, None] + d_ab[:, seen] + d_out[seen, k][None, :]
                power = power.ravel()
                hit = power > 0
                if hit.any():
                    parts[k].append((delay.ravel()[hit] / SPEED_OF_LIGHT, power[hit], 2))

    return ImpulseResponse.from_parts(parts)


def _check_tx(scenario: Scenario, tx_pos: Vec3) -> None:
    if not scenario.room.contains(tx_pos):
        raise DomainError(f"transmitter at {tuple(tx_pos)} lies outside the room")


def unsteered_source(scenario: Scenario, tx_pos: Vec3) -> Source:
    t = scenario.transmitter
    return Source(tx_pos.as_array(), t.orientation.as_array(), t.power_w,
                  t.lambertian_order_wide, t.semi_angle_deg)


def trace_unsteered(scenario: Scenario, tx_pos: Vec3, max_order: int = 2) -> ImpulseResponse:
    """Impulse response of the wide, unsteered transmitter at ``tx_pos``."""
    _check_tx(scenario, tx_pos)
    return trace(scenario, unsteered_source(scenario, tx_pos), max_order)


def steered_source(scenario: Scenario, tx_pos: Vec3, target: Vec3, divergence_deg: float) -> Source:
    if not divergence_deg > 0:
        raise DomainError(f"beam divergence must be > 0, got {divergence_deg}")
    axis = target.as_array() - tx_pos.as_array()
    n = np.linalg.norm(axis)
    if n == 0:
        raise DomainError("steering target coincides with the transmitter")
    return Source(tx_pos.as_array(), axis / n, scenario.transmitter.power_w,
                  half_power_order(divergence_deg))
