"""Link quality figures from impulse responses: power, delay spread, OOK SNR/BER."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UndefinedMetricError
from .raytrace import ImpulseResponse
from .scene import NoiseConfig, Scenario


def total_power(ir: ImpulseResponse, branch_id: int) -> float:
    return float(np.sum(ir.branch(branch_id).power_w))


DELAY_BIN_S = 1e-11


def rms_delay_spread(ir: ImpulseResponse, branch_id: int, bin_width_s: float | None = None) -> float:
    """RMS delay spread with power-squared weights.

    With ``bin_width_s=None`` the exact path list is used.  Otherwise paths
    are first accumulated into time bins anchored at the first arrival; with
    squared weights this is what makes the figure independent of the
    reflector grid size (many tiny paths would otherwise be suppressed).
    """
    b = ir.branch(branch_id)
    if bin_width_s is None:
        return delay_spread(b.delay_s, b.power_w)
    t, p = bin_response(b.delay_s, b.power_w, bin_width_s)
    return delay_spread(t, p)


def bin_response(delay_s, power_w, bin_width_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Histogram a path list into bins; returns bin centers and summed power of non-empty bins."""
    if not bin_width_s > 0:
        raise DomainError(f"bin width must be > 0, got {bin_width_s}")
    t = np.asarray(delay_s, float)
    p = np.asarray(power_w, float)
    if t.size == 0:
        return t, p
    t0 = t.min()
    idx = np.floor((t - t0) / bin_width_s).astype(np.int64)
    summed = np.bincount(idx, weights=p)
    centers = t0 + (np.arange(summed.size) + 0.5) * bin_width_s
    keep = summed > 0
    return centers[keep], summed[keep]


def delay_spread(delay_s, power_w) -> float:
    t = np.asarray(delay_s, float)
    p = np.asarray(power_w, float)
    if t.size == 0 or not np.any(p > 0):
        raise UndefinedMetricError("delay spread needs at least one path with positive power")
    # normalise before squaring so tiny powers do not underflow
    w = (p / p.max()) ** 2
    t0 = t.min()
    x = t - t0
    wsum = np.sum(w)
    mu = np.sum(x * w) / wsum
    var = np.sum((x - mu) ** 2 * w) / wsum
    return float(np.sqrt(var))


def bit_slot_powers(ir: ImpulseResponse, branch_id: int, bit_rate_bps: float) -> tuple[float, float]:
    """Power inside the first bit slot and the power spilling past it.

    The slot starts at the earliest arrival.  ``ps0`` is taken as the
    complement of ``ps1`` in the total, so ``ps1 + ps0 == total_power``
    holds exactly in floating point (``ps1`` may shift by one ulp to allow it).
    """
    if not bit_rate_bps > 0:
        raise DomainError(f"bit rate must be > 0, got {bit_rate_bps}")
    b = ir.branch(branch_id)
    if len(b) == 0:
        raise UndefinedMetricError(f"branch {branch_id} received no power")
    slot = 1.0 / bit_rate_bps
    t0 = b.delay_s[0]
    n_in = int(np.searchsorted(b.delay_s, t0 + slot, side="left"))
    total = float(np.sum(b.power_w))
    ps1 = float(np.sum(b.power_w[:n_in]))
    return _complement(total, ps1)


def _complement(total: float, part: float) -> tuple[float, float]:
    """Split ``total`` as ``(part', rest)`` with ``part' + rest == total`` exactly.

    ``part'`` is ``part`` unless no ``rest`` can absorb the rounding tie, in
    which case it moves by one ulp.
    """
    for p in (part, math.nextafter(part, math.inf), math.nextafter(part, -math.inf)):
        rest = total - p
        up = down = rest
        for _ in range(8):
            for c in (up, down):
                if p + c == total:
                    return p, c
            up = math.nextafter(up, math.inf)
            down = math.nextafter(down, -math.inf)
    return part, total - part


def noise_std(noise: NoiseConfig, responsivity: float, received_power_w: float,
              bandwidth_hz: float) -> float:
    """Shot plus preamplifier noise current (A rms)."""
    if not bandwidth_hz > 0:
        raise DomainError(f"bandwidth must be > 0, got {bandwidth_hz}")
    q = noise.electron_charge_c
    shot = 2.0 * q * (noise.background_current_a + responsivity * received_power_w) * bandwidth_hz
    amp = noise.preamp_noise_density_a_per_sqrt_hz ** 2 * bandwidth_hz
    return math.sqrt(shot + amp)


def snr_ook(ps1_w: float, ps0_w: float, responsivity: float, sigma1: float, sigma0: float) -> float:
    if not sigma1 + sigma0 > 0:
        raise DomainError("total noise is zero; SNR is unbounded")
    if ps1_w < ps0_w:
        raise DomainError("eye is inverted: ps1 < ps0")
    return (responsivity * (ps1_w - ps0_w) / (sigma1 + sigma0)) ** 2


def ber_from_snr(snr_linear: float) -> float:
    if snr_linear < 0:
        raise DomainError("SNR must be >= 0")
    return 0.5 * math.erfc(math.sqrt(snr_linear) / math.sqrt(2.0))


def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def select_best_branch(snrs) -> tuple[int, float]:
    """Index and value of the largest SNR; ties go to the lowest index."""
    snrs = list(snrs)
    if not snrs:
        raise DomainError("no branches to select from")
    best = 0
    for i, s in enumerate(snrs):
        if s > snrs[best]:
            best = i
    return best, snrs[best]


@dataclass(frozen=True)
class LinkMetrics:
    power_w: np.ndarray
    delay_spread_s: np.ndarray
    ps1_w: np.ndarray
    ps0_w: np.ndarray
    snr_linear: np.ndarray
    snr_db: np.ndarray
    ber: np.ndarray
    best_branch_id: int
    best_snr_db: float
    branches_per_unit: int = 4

    @property
    def best_delay_spread_s(self) -> float:
        return float(self.delay_spread_s[self.best_branch_id])

    @property
    def best_power_w(self) -> float:
        return float(self.power_w[self.best_branch_id])

    @property
    def best_ber(self) -> float:
        return float(self.ber[self.best_branch_id])

    def to_csv(self) -> str:
        """Per-branch rows followed by one best-branch summary row per unit."""
        buf = io.StringIO()
        buf.write("unit_id,branch_id,power_w,delay_spread_s,ps1_w,ps0_w,snr_db,ber\n")
        per = self.branches_per_unit
        n = len(self.power_w)

        def row(unit, label, k):
            buf.write(
                f"{unit},{label},{self.power_w[k]:.17g},{self.delay_spread_s[k]:.17g},"
                f"{self.ps1_w[k]:.17g},{self.ps0_w[k]:.17g},{self.snr_db[k]:.17g},{self.ber[k]:.17g}\n"
            )

        for k in range(n):
            row(k // per, k, k)
        for u in range(n // per):
            k, _ = select_best_branch(self.snr_linear[u * per:(u + 1) * per])
            row(u, f"best:{u * per + k}", u * per + k)
        return buf.getvalue()


def link_metrics(scenario: Scenario, ir: ImpulseResponse,
                 bin_width_s: float | None = DELAY_BIN_S) -> LinkMetrics:
    """Evaluate every branch of ``ir`` at the scenario bit rate.

    Delay spread is taken over the response binned at ``bin_width_s``
    (``None`` for the exact path list).  Branches that received nothing
    report zero power, NaN delay spread, zero SNR and BER 0.5.
    """
    branches = scenario.branches()
    if len(branches) != ir.n_branches:
        raise DomainError("impulse response does not match the scenario receivers")
    rate = scenario.bit_rate_bps
    n = len(branches)
    cols = {k: np.zeros(n) for k in ("power", "ds", "ps1", "ps0", "snr")}
    cols["ds"][:] = np.nan
    for k, br in enumerate(branches):
        if len(ir.branch(k)) == 0:
            continue
        cols["power"][k] = total_power(ir, k)
        cols["ds"][k] = rms_delay_spread(ir, k, bin_width_s)
        ps1, ps0 = bit_slot_powers(ir, k, rate)
        cols["ps1"][k], cols["ps0"][k] = ps1, ps0
        r = br.responsivity_a_per_w
        s1 = noise_std(scenario.noise, r, ps1, rate)
        s0 = noise_std(scenario.noise, r, ps0, rate)
        cols["snr"][k] = snr_ook(ps1, ps0, r, s1, s0) if ps1 >= ps0 else 0.0
    snr = cols["snr"]
    if n:
        best, best_snr = select_best_branch(snr.tolist())
    else:
        best, best_snr = -1, 0.0
    return LinkMetrics(
        power_w=cols["power"],
        delay_spread_s=cols["ds"],
        ps1_w=cols["ps1"],
        ps0_w=cols["ps0"],
        snr_linear=snr,
        snr_db=np.array([to_db(s) for s in snr]),
        ber=np.array([ber_from_snr(s) for s in snr]),
        best_branch_id=best,
        best_snr_db=to_db(best_snr),
    )
