"""Independent reference computations used by the tests.

Nothing here calls into the package's physics; only plain scenario data is
read, so agreement is a genuine cross-check.
"""

import math

import numpy as np

C = 299_792_458.0


def branch_table(scenario):
    """Positions, normals, areas, cos(FOV) and responsivities of every branch."""
    pos, nrm, area, cfov, resp = [], [], [], [], []
    for unit in scenario.receiver_units:
        for b in unit.branches:
            az, el = math.radians(b.azimuth_deg), math.radians(b.elevation_deg)
            pos.append((b.position.x, b.position.y, b.position.z))
            nrm.append((math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)))
            area.append(b.area_m2)
            cfov.append(math.cos(math.radians(b.fov_deg)))
            resp.append(b.responsivity_a_per_w)
    return tuple(np.array(v, float) for v in (pos, nrm, area, cfov, resp))


def closed_form_los(src, axis, power, order, det_pos, det_normal, area, fov_deg):
    """Scalar Lambertian LOS power written straight from the textbook gain."""
    dx, dy, dz = (det_pos[i] - src[i] for i in range(3))
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    an = math.sqrt(sum(a * a for a in axis))
    nn = math.sqrt(sum(a * a for a in det_normal))
    cos_phi = (dx * axis[0] + dy * axis[1] + dz * axis[2]) / (d * an)
    cos_theta = -(dx * det_normal[0] + dy * det_normal[1] + dz * det_normal[2]) / (d * nn)
    if cos_phi <= 0 or cos_theta <= 0:
        return 0.0, d / C
    if math.acos(min(1.0, cos_theta)) > math.radians(fov_deg):
        return 0.0, d / C
    gain = (order + 1) / (2 * math.pi) * cos_phi**order * cos_theta * area / d**2
    return power * gain, d / C


def ook_snr(power, responsivity, noise, rate):
    """SNR of a single-path link (no ISI), vectorised over ``power``."""
    q = noise.electron_charge_c
    def sigma(p):
        return np.sqrt(2 * q * (noise.background_current_a + responsivity * p) * rate
                       + noise.preamp_noise_density_a_per_sqrt_hz**2 * rate)
    return (responsivity * power / (sigma(power) + sigma(0.0))) ** 2


def aim_grid(tx, bounds, pitch=0.05):
    """Aim points on a ``pitch`` lattice through the transmitter, inside ``bounds``."""
    x0, x1, y0, y1 = bounds
    def axis(c, lo, hi):
        k0 = math.ceil((lo - c) / pitch - 1e-9)
        k1 = math.floor((hi - c) / pitch + 1e-9)
        return c + pitch * np.arange(k0, k1 + 1)
    xs, ys = axis(tx[0], x0, x1), axis(tx[1], y0, y1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def best_aim_snr_db(scenario, tx, bounds, divergence_deg, pitch=0.05):
    """Exhaustive search of the LOS best-branch SNR over a lattice of aim points.

    Returns (best SNR in dB, best aim point (x, y)).
    """
    pos, nrm, area, cfov, resp = branch_table(scenario)
    h = scenario.room.height_m
    tx = np.asarray(tx, float)
    aims = aim_grid(tx, bounds, pitch)
    axes = np.column_stack([aims, np.full(len(aims), h)]) - tx
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    m = math.log(0.5) / math.log(math.cos(math.radians(divergence_deg)))
    v = pos - tx
    d = np.linalg.norm(v, axis=1)
    cos_theta = -np.einsum("bk,bk->b", v, nrm) / d
    seen = (cos_theta > 0) & (cos_theta >= cfov)
    cos_phi = axes @ (v / d[:, None]).T
    p = scenario.transmitter.power_w * (m + 1) / (2 * math.pi) * np.clip(cos_phi, 0, None) ** m
    p = p * np.where(seen, cos_theta * area / d**2, 0.0)
    snr = ook_snr(p, resp, scenario.noise, scenario.bit_rate_bps)
    flat = int(np.argmax(snr))
    i, _ = np.unravel_index(flat, snr.shape)
    return 10 * math.log10(snr.flat[flat]), tuple(aims[i])
