"""Command-line runner.

Exit codes: 0 success, 2 input or validation error, 3 acquisition failure.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import AcquisitionError, DomainError, ScenarioError
from .metrics import LinkMetrics, link_metrics
from .raytrace import ImpulseResponse, trace_unsteered
from .scene import Scenario, Vec3, default_paper_scenario, load_scenario
from .steering import run_acquisition, steered_trace

log = logging.getLogger("vlc_uplink")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ACQUISITION = 3

MODES = ("unsteered", "steered")
SWEEP_COLUMNS = ("tx_x_m", "tx_y_m", "mode", "best_unit", "best_branch",
                 "power_w", "delay_spread_s", "snr_db", "ber", "iterations")


@dataclass(frozen=True)
class SweepRow:
    tx_x_m: float
    tx_y_m: float
    mode: str
    best_unit: int
    best_branch: int
    power_w: float
    delay_spread_s: float
    snr_db: float
    ber: float
    iterations: int

    def csv(self) -> str:
        return (f"{self.tx_x_m:.17g},{self.tx_y_m:.17g},{self.mode},{self.best_unit},"
                f"{self.best_branch},{self.power_w:.17g},{self.delay_spread_s:.17g},"
                f"{self.snr_db:.17g},{self.ber:.17g},{self.iterations}")


def read_scenario(path: str | None) -> Scenario:
    if path is None:
        return default_paper_scenario()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc.strerror or exc}") from None
    return load_scenario(text)


def parse_tx(text: str) -> Vec3:
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z, got {text!r}")
    return Vec3(*parts)


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def simulate(scenario: Scenario, tx: Vec3, mode: str, max_order: int = 2):
    """Run one link; returns (impulse response, metrics, acquisition or None)."""
    if mode == "unsteered":
        ir = trace_unsteered(scenario, tx, max_order)
        return ir, link_metrics(scenario, ir), None
    result = run_acquisition(scenario, tx)
    if max_order == 2:
        ir = None
        metrics = result.final_metrics
    else:
        ir = steered_trace(scenario, tx, result.target,
                           scenario.steering.steered_divergence_deg, max_order)
        metrics = link_metrics(scenario, ir)
    return ir, metrics, result


def sweep_row(scenario: Scenario, tx: Vec3, mode: str) -> SweepRow:
    _, m, acq = simulate(scenario, tx, mode)
    per = m.branches_per_unit
    return SweepRow(tx.x, tx.y, mode, m.best_branch_id // per, m.best_branch_id % per,
                    m.best_power_w, m.best_delay_spread_s, m.best_snr_db, m.best_ber,
                    acq.iterations if acq else 0)


def _sweep_job(args):
    return sweep_row(*args)


def sweep(scenario: Scenario, x_m: float, y_list, modes=MODES, z_m: float | None = None,
          jobs: int = 1) -> list[SweepRow]:
    """One row per (y, mode), in that order regardless of completion order."""
    z = scenario.room.comm_floor_height_m if z_m is None else z_m
    tasks = [(scenario, Vec3(x_m, y, z), mode) for y in y_list for mode in modes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_job, tasks))
    return [_sweep_job(t) for t in tasks]


def sweep_csv(rows: list[SweepRow]) -> str:
    return ",".join(SWEEP_COLUMNS) + "\n" + "".join(r.csv() + "\n" for r in rows)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _default_tx(scenario: Scenario, tx: Vec3 | None) -> Vec3:
    return tx if tx is not None else scenario.transmitter.position


def cmd_simulate(args) -> int:
    sc = read_scenario(args.scenario)
    _, metrics, _ = simulate(sc, _default_tx(sc, args.tx), args.mode, args.max_order)
    _emit(metrics.to_csv(), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = read_scenario(args.scenario)
    rows = sweep(sc, args.x, args.y, args.modes, args.z, args.jobs)
    _emit(sweep_csv(rows), args.out)
    return EXIT_OK


def cmd_steer(args) -> int:
    sc = read_scenario(args.scenario)
    result = run_acquisition(sc, _default_tx(sc, args.tx))
    Path(args.log).write_text(result.log_text())
    if result.degraded:
        log.warning("acquisition degraded: no probe answered at iteration %d", result.iterations)
    _emit(result.final_metrics.to_csv(), args.out)
    return EXIT_OK


def cmd_ir(args) -> int:
    sc = read_scenario(args.scenario)
    tx = _default_tx(sc, args.tx)
    if args.mode == "unsteered":
        ir = trace_unsteered(sc, tx, args.max_order)
    else:
        result = run_acquisition(sc, tx)
        ir = steered_trace(sc, tx, result.target, sc.steering.steered_divergence_deg, args.max_order)
    _emit(ir.to_csv(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vlc-uplink", description="IR uplink channel and beam-steering simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mode=True, order=True):
        sp.add_argument("--scenario", metavar="PATH", help="JSON scenario (default: built-in room)")
        sp.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        sp.add_argument("--tx", type=parse_tx, metavar="X,Y,Z", help="transmitter position in m")
        if mode:
            sp.add_argument("--mode", choices=MODES, default="unsteered")
        if order:
            sp.add_argument("--max-order", type=int, choices=(0, 1, 2), default=2)

    sp = sub.add_parser("simulate", help="metrics CSV for one transmitter position")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="steered vs unsteered along a line of positions")
    sp.add_argument("--scenario", metavar="PATH")
    sp.add_argument("--out", metavar="PATH")
    sp.add_argument("--x", type=float, default=2.0, help="transmitter x in m")
    sp.add_argument("--y", type=parse_floats, default=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
                    help="comma-separated transmitter y values in m")
    sp.add_argument("--z", type=float, default=None, help="transmitter z (default: communication floor)")
    sp.add_argument("--modes", type=lambda s: [m for m in s.split(",") if m], default=list(MODES))
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("steer", help="run beam acquisition and write its event log")
    common(sp, mode=False, order=False)
    sp.add_argument("--log", metavar="PATH", required=True, help="acquisition log (JSON lines)")
    sp.set_defaults(func=cmd_steer)

    sp = sub.add_parser("ir", help="impulse-response CSV")
    common(sp)
    sp.set_defaults(func=cmd_ir)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "sweep":
        bad = [m for m in args.modes if m not in MODES]
        if bad:
            parser.error(f"unknown mode(s): {', '.join(bad)}")
    try:
        return args.func(args)
    except (ScenarioError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AcquisitionError as exc:
        print(f"acquisition failed: {exc}", file=sys.stderr)
        return EXIT_ACQUISITION


if __name__ == "__main__":
    sys.exit(main())
