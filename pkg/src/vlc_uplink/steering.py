"""Quadrant-search beam acquisition and the steered-beam channel.

The transmitter coverage footprint on the ceiling is quartered repeatedly.
Each quarter is probed with a beam just wide enough to cover it, the
receivers report their best-branch SNR over an ideal feedback channel, and
the best quarter becomes the next search area.  Once the area is no larger
than ``stop_size_m`` the full power is steered at its center.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AcquisitionError, DomainError
from .metrics import LinkMetrics, link_metrics, select_best_branch
from .raytrace import ImpulseResponse, Source, steered_source, trace
from .scene import Scenario, SteeringConfig, Vec3, half_power_order, normal_to_az_el

__all__ = [
    "AcquisitionEvent",
    "Region",
    "SteeringConfig",
    "SteeringResult",
    "coverage_region",
    "probe_snr",
    "run_acquisition",
    "steered_trace",
    "subdivide",
]

NO_SIGNAL = -math.inf


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle on the ceiling plane.

    Unclipped regions are squares; ``side_m`` is the larger side.
    """

    center: Vec3
    size_x: float
    size_y: float

    def __post_init__(self):
        if not (self.size_x > 0 and self.size_y > 0):
            raise DomainError(f"region sides must be > 0, got {self.size_x} x {self.size_y}")

    @property
    def side_m(self) -> float:
        return max(self.size_x, self.size_y)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        c = self.center
        return (c.x - self.size_x / 2, c.x + self.size_x / 2,
                c.y - self.size_y / 2, c.y + self.size_y / 2)

    def contains(self, p: Vec3, tol: float = 1e-12) -> bool:
        x0, x1, y0, y1 = self.bounds
        return x0 - tol <= p.x <= x1 + tol and y0 - tol <= p.y <= y1 + tol


def coverage_region(tx_pos: Vec3, semi_angle_deg: float, ceiling_z: float,
                    footprint: tuple[float, float] | None = None,
                    min_side_m: float = 0.0) -> Region:
    """Ceiling footprint of the transmitter cone, clipped to ``footprint``.

    ``footprint`` is ``(width_m, length_m)`` of the room (x and y extents).
    """
    h = ceiling_z - tx_pos.z
    if h <= 0:
        raise DomainError("transmitter must sit below the ceiling")
    side = 2.0 * h * math.tan(math.radians(semi_angle_deg))
    if not side > min_side_m:
        raise DomainError(f"coverage side {side:.6g} m is not above the minimum probe size {min_side_m} m")
    x0, x1 = tx_pos.x - side / 2, tx_pos.x + side / 2
    y0, y1 = tx_pos.y - side / 2, tx_pos.y + side / 2
    if footprint is not None:
        width, length = footprint
        x0, x1 = max(x0, 0.0), min(x1, width)
        y0, y1 = max(y0, 0.0), min(y1, length)
    return Region(Vec3((x0 + x1) / 2, (y0 + y1) / 2, ceiling_z), x1 - x0, y1 - y0)


def subdivide(region: Region) -> tuple[Region, Region, Region, Region]:
    """Quarters ordered (-x-y, +x-y, -x+y, +x+y)."""
    c = region.center
    hx, hy = region.size_x / 2, region.size_y / 2
    return tuple(
        Region(Vec3(c.x + sx * hx / 2, c.y + sy * hy / 2, c.z), hx, hy)
        for sy in (-1, 1) for sx in (-1, 1)
    )


def probe_divergence_deg(tx_pos: Vec3, region: Region) -> float:
    """Half-power angle whose footprint reaches the corners of ``region``."""
    h = region.center.z - tx_pos.z
    return math.degrees(math.atan(region.side_m / 2 * math.sqrt(2.0) / h))


def _best_snr_db(scenario: Scenario, ir: ImpulseResponse) -> float:
    if not any(len(b) for b in ir.branches):
        return NO_SIGNAL
    return link_metrics(scenario, ir).best_snr_db


def probe_snr(scenario: Scenario, tx_pos: Vec3, region: Region) -> float:
    """Best-branch SNR (dB) reported for a line-of-sight probe of ``region``.

    With ``probe_fills_subquadrant`` the hologram confines the probe to the
    region, so receivers outside it see nothing.  Returns ``-inf`` when no
    branch receives any power.
    """
    delta = probe_divergence_deg(tx_pos, region)
    axis = region.center.as_array() - tx_pos.as_array()
    footprint = (*region.bounds, region.center.z) if scenario.steering.probe_fills_subquadrant else None
    source = Source(tx_pos.as_array(), axis / np.linalg.norm(axis),
                    scenario.transmitter.power_w, half_power_order(delta), footprint=footprint)
    return _best_snr_db(scenario, trace(scenario, source, 0))


def steered_trace(scenario: Scenario, tx_pos: Vec3, target: Vec3, divergence_deg: float,
                  max_order: int = 2) -> ImpulseResponse:
    """Channel of the full-power narrow beam aimed from ``tx_pos`` at ``target``."""
    if abs(target.z - scenario.room.height_m) > 1e-9:
        raise DomainError("steering target must lie on the ceiling plane")
    return trace(scenario, steered_source(scenario, tx_pos, target, divergence_deg), max_order)


@dataclass(frozen=True)
class AcquisitionEvent:
    iteration: int
    probed_region: Region
    hologram_angles: tuple[float, float]
    measured_best_snr_db: float
    chosen: bool

    def to_record(self) -> dict:
        c = self.probed_region.center
        return {
            "iteration": self.iteration,
            "region_center_x": c.x,
            "region_center_y": c.y,
            "region_side_m": self.probed_region.side_m,
            "az_deg": self.hologram_angles[0],
            "el_deg": self.hologram_angles[1],
            "snr_db": self.measured_best_snr_db if math.isfinite(self.measured_best_snr_db) else None,
            "chosen": self.chosen,
        }


@dataclass(frozen=True)
class SteeringResult:
    target: Vec3
    iterations: int
    events: tuple[AcquisitionEvent, ...]
    final_metrics: LinkMetrics
    initial_region: Region
    regions: tuple[Region, ...] = field(default=())
    degraded: bool = False

    def log_text(self) -> str:
        """The event log as JSON lines, one probe per line."""
        buf = io.StringIO()
        for ev in self.events:
            buf.write(json.dumps(ev.to_record()) + "\n")
        return buf.getvalue()


def hologram_angles(tx_pos: Vec3, point: Vec3) -> tuple[float, float]:
    return normal_to_az_el(point.as_array() - tx_pos.as_array())


def run_acquisition(scenario: Scenario, tx_pos: Vec3) -> SteeringResult:
    """Quadrant search for the best aim point, then the steered link metrics."""
    cfg = scenario.steering
    room = scenario.room
    if not room.contains(tx_pos):
        raise DomainError(f"transmitter at {tuple(tx_pos)} lies outside the room")
    root = coverage_region(tx_pos, scenario.transmitter.semi_angle_deg, room.height_m,
                           (room.width_m, room.length_m), min_side_m=cfg.stop_size_m)
    current = root
    events: list[AcquisitionEvent] = []
    chosen: list[Region] = []
    degraded = False
    iteration = 0
    while current.side_m > cfg.stop_size_m:
        quarters = subdivide(current)
        snrs = [probe_snr(scenario, tx_pos, q) for q in quarters]
        if all(s == NO_SIGNAL for s in snrs):
            if iteration == 0:
                raise AcquisitionError("no receiver answered any probe in the coverage area")
            for q, s in zip(quarters, snrs):
                events.append(AcquisitionEvent(iteration, q, hologram_angles(tx_pos, q.center), s, False))
            degraded = True
            break
        win, _ = select_best_branch(snrs)
        for i, (q, s) in enumerate(zip(quarters, snrs)):
            events.append(AcquisitionEvent(iteration, q, hologram_angles(tx_pos, q.center), s, i == win))
        current = quarters[win]
        chosen.append(current)
        iteration += 1
    target = current.center
    ir = steered_trace(scenario, tx_pos, target, cfg.steered_divergence_deg)
    return SteeringResult(
        target=target,
        iterations=iteration,
        events=tuple(events),
        final_metrics=link_metrics(scenario, ir),
        initial_region=root,
        regions=tuple(chosen),
        degraded=degraded,
    )


def expected_iterations(initial_side_m: float, stop_size_m: float) -> int:
    return max(0, math.ceil(math.log2(initial_side_m / stop_size_m)))
