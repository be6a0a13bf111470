"""Parameter scans, convergence studies and the ``floquet-tunnel`` command line.

Subcommands::

    floquet-tunnel solve            --config run.json [--energy MEV]
    floquet-tunnel scan             --config run.json [--output out.csv] [--format csv|jsonl] [--workers N]
    floquet-tunnel converge         --config run.json --axis staircase|n_max|time_samples
    floquet-tunnel diagnose-bessel  --xi 0.5 --omega 70 --mass 0.0667 --energy 100

Exit codes: 0 success, 1 configuration error, 2 every point failed, 3 some
points failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .floquet import (
    ChannelGrid,
    bessel_series_B,
    build_layer_bases,
    fourier_B,
    phase_integral,
)
from .model import ELECTRON_CHARGE, Device, UnitSystem, Waveform, vector_potential_samples
from .observables import ScatterResult, solve

__all__ = [
    "SCHEMA_VERSION",
    "PointResult",
    "solve_adaptive",
    "run_scan",
    "converge",
    "diagnose_bessel",
    "format_rows",
    "main",
]

log = logging.getLogger("floquet_tunnel")

SCHEMA_VERSION = 1

#: Adaptive truncation also requires total T to move less than this between levels.
T_CHANGE_TOL = 1e-8

#: Default refinement threshold for :func:`converge`.
CONVERGE_THRESHOLD = 1e-6

DEFAULT_LEVELS = {
    "staircase": (15, 29, 57, 85, 113, 141, 197, 281),
    "n_max": (0, 2, 4, 8, 16, 24, 32, 40),
    "time_samples": (256, 512, 1024, 2048, 4096),
}

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED, EXIT_PARTIAL = 0, 1, 2, 3


class TruncationError(RuntimeError):
    """The adaptive policy reached its cap without meeting the stopping rule."""


@dataclass(frozen=True)
class PointResult:
    """Outcome of one scan point; ``result`` is None when the solve failed."""

    result: ScatterResult | None
    n_max: int
    status: str
    message: str = ""
    wall_time: float = 0.0


def _n_levels(start: int, cap: int):
    n = start
    while True:
        yield min(n, cap)
        if n >= cap:
            return
        n *= 2


def solve_adaptive(device: Device, energy: float, tolerance: float = 1e-12, start: int = 4, cap: int = 40,
                   n_samples: int | None = None) -> tuple[ScatterResult, int]:
    """Solve with n_max = start, 2 start, ... until the deficit is below ``tolerance``
    and the total transmission moved by less than :data:`T_CHANGE_TOL` since the
    previous level.  Returns the result at the accepted level.

    A field-free device has no sideband coupling and is solved at n_max = 0.
    """
    if device.waveform.is_off:
        return solve(device, energy, 0, n_samples), 0
    prev = None
    last = None
    for n in _n_levels(start, cap):
        res = solve(device, energy, n, n_samples)
        if (prev is not None and res.unitarity_deficit <= tolerance
                and abs(res.total_transmission - prev.total_transmission) < T_CHANGE_TOL):
            return res, n
        prev, last = res, n
    raise TruncationError(
        f"no convergence up to n_max = {last} (deficit {prev.unitarity_deficit:.2e}); "
        "the field is too strong for the truncation cap"
    )


_device_cache: dict = {}


def _cached_device(cfg: RunConfig, static_field, xi, phase) -> Device:
    # keyed by content so that configs unpickled in worker processes share entries
    key = (cfg.cache_key, static_field, xi, phase)
    dev = _device_cache.get(key)
    if dev is None:
        if len(_device_cache) >= 64:
            _device_cache.clear()
        dev = _device_cache[key] = cfg.device(static_field, xi, phase)
    return dev


def solve_point(cfg: RunConfig, static_field: float, xi, phase, energy_mev: float) -> PointResult:
    """One scan point with the configured truncation policy; errors are caught and reported."""
    t0 = time.perf_counter()
    energy = float(UnitSystem.mev_to_au(energy_mev))
    n_used = cfg.n_max if cfg.policy == "fixed" else -1
    try:
        dev = _cached_device(cfg, static_field, xi, phase)
        if cfg.policy == "fixed":
            res = solve(dev, energy, cfg.n_max, cfg.time_samples)
        else:
            res, n_used = solve_adaptive(dev, energy, cfg.tolerance, cfg.n_start, cfg.n_cap, cfg.time_samples)
    except Exception as exc:  # per-point failures are recorded, not raised
        return PointResult(None, n_used, "error", f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)
    status, msg = "ok", ""
    if not res.unitarity_deficit <= cfg.tolerance:
        status, msg = "deficit", f"unitarity deficit {res.unitarity_deficit:.3e} exceeds {cfg.tolerance:.1e}"
    return PointResult(res, n_used, status, msg, time.perf_counter() - t0)


def _point_task(args):
    cfg, point = args
    return solve_point(cfg, *point)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "nan"
    return str(x)


def _row(cfg: RunConfig, index: int, point, pr: PointResult) -> dict:
    f, xi, ph, e = point
    wf = cfg.waveform(xi, ph)
    row = {
        "schema_version": SCHEMA_VERSION,
        "index": index,
        "energy_meV": float(e),
        "static_field": float(f),
        "xi": float(wf.xi),
        "phase": float(wf.phase),
        "n_points": cfg.n_points if cfg.n_points is not None else 0,
        "incidence": cfg.incidence,
    }
    res = pr.result
    nan = float("nan")
    row["T_total"] = res.total_transmission if res else nan
    row["R_total"] = res.total_reflection if res else nan
    for n in range(-cfg.report_width, cfg.report_width + 1):
        row[f"P_T[{n}]"] = res.p_transmit_at(n) if res else nan
    row["deficit"] = res.unitarity_deficit if res else nan
    row["n_max"] = pr.n_max
    row["status"] = pr.status
    row["message"] = pr.message
    row["wall_time"] = round(pr.wall_time, 6)
    return row


def run_scan(cfg: RunConfig, workers: int | None = None, progress: bool = False) -> list[dict]:
    """Evaluate every scan point and return the rows in scan order.

    Points are independent; with ``workers > 1`` they are spread over a
    process pool and reassembled in order, so the output does not depend on
    the worker count.
    """
    points = list(cfg.points())
    workers = (os.cpu_count() or 1) if workers is None else max(1, workers)
    results: list[PointResult] = []
    if workers == 1 or len(points) == 1:
        for k, p in enumerate(points):
            results.append(solve_point(cfg, *p))
            if progress:
                print(f"\r{k + 1}/{len(points)}", end="", file=sys.stderr, flush=True)
    else:
        chunk = max(1, len(points) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, pr in enumerate(pool.map(_point_task, [(cfg, p) for p in points], chunksize=chunk)):
                results.append(pr)
                if progress:
                    print(f"\r{k + 1}/{len(points)}", end="", file=sys.stderr, flush=True)
    if progress:
        print(file=sys.stderr)
    return [_row(cfg, i, p, pr) for i, (p, pr) in enumerate(zip(points, results))]


TIMING_COLUMNS = ("wall_time",)


def format_rows(rows: list[dict], fmt: str = "csv", drop: tuple[str, ...] = ()) -> str:
    """Serialise rows as CSV (one header line) or JSON lines, optionally dropping columns."""
    if not rows:
        return ""
    cols = [c for c in rows[0] if c not in drop]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()
    if fmt == "jsonl":
        clean = lambda v: None if isinstance(v, float) and not math.isfinite(v) else v
        return "".join(json.dumps({c: clean(r[c]) for c in cols}) + "\n" for r in rows)
    raise ValueError(f"unknown output format {fmt!r}")


def scan_exit_code(rows: list[dict]) -> int:
    bad = sum(r["status"] != "ok" for r in rows)
    if bad == 0:
        return EXIT_OK
    return EXIT_ALL_FAILED if bad == len(rows) else EXIT_PARTIAL


def converge(cfg: RunConfig, axis: str, levels=None, threshold: float | None = None) -> dict:
    """Refine one numerical parameter and report where total T settles.

    For each level the total transmission and deficit are evaluated on the
    configured energies (use a handful); ``change`` is the largest |T| change
    across energies since the previous level.  ``converged_at`` is the first
    level whose change is below ``threshold``.  The ``time_samples`` axis also
    reports the largest change of any retained B coefficient.
    """
    if axis not in DEFAULT_LEVELS:
        raise ValueError(f"axis must be one of {sorted(DEFAULT_LEVELS)}")
    levels = tuple(levels or cfg.convergence.get(axis) or DEFAULT_LEVELS[axis])
    threshold = threshold or cfg.convergence.get("threshold", CONVERGE_THRESHOLD)
    f, xi, ph = cfg.static_fields[0], cfg.xis[0], cfg.phases[0]
    energies = cfg.energies
    rows, prev_t, prev_b = [], None, None
    for lev in levels:
        n_max = cfg.n_max
        if axis == "staircase":
            dev = cfg.device(f, xi, ph, n_points=lev)
        else:
            dev = cfg.device(f, xi, ph)
        if axis == "n_max":
            n_max = lev
        ns = lev if axis == "time_samples" else cfg.time_samples
        ts, ds, status = [], [], "ok"
        for e in energies:
            try:
                r = solve(dev, float(e), n_max, ns)
                ts.append(r.total_transmission)
                ds.append(r.unitarity_deficit)
            except Exception as exc:
                ts.append(float("nan"))
                ds.append(float("nan"))
                status = f"{type(exc).__name__}: {exc}"
        ts = np.array(ts)
        row = {"level": lev, "T_total": ts.tolist(), "deficit_max": float(np.nanmax(ds)) if np.any(np.isfinite(ds)) else float("nan"),
               "change": float(np.max(np.abs(ts - prev_t))) if prev_t is not None else float("nan"),
               "status": status}
        if axis == "time_samples":
            grid = ChannelGrid(float(energies[0]), dev.waveform.floquet_frequency or 1.0, n_max)
            bases = build_layer_bases(grid, dev.regions, dev.waveform, lev)
            b = np.concatenate([np.concatenate([x.B_plus[:, x.open], x.B_minus[:, x.open]], axis=1).ravel()
                                for x in bases])
            row["coeff_change"] = float(np.max(np.abs(b - prev_b), initial=0.0)) if prev_b is not None else float("nan")
            prev_b = b
        rows.append(row)
        prev_t = ts
    changes = [r["change"] for r in rows[1:]]
    hit = next((r["level"] for r in rows[1:] if r["change"] < threshold), None)
    finite = [c for c in changes if math.isfinite(c)]
    monotone = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(finite, finite[1:]))
    flag = "" if hit is not None else ("not converged" if monotone else "not converged, non-monotone")
    return {"axis": axis, "threshold": threshold, "levels": rows, "converged_at": hit, "flag": flag}


def diagnose_bessel(waveform: Waveform, q: float, mass: float, n_samples: int = 2048, k_max: int | None = None) -> dict:
    """Compare quadrature B_K with the generalized Bessel series for a monochromatic drive.

    ``q`` is a real momentum and ``mass`` the effective mass (atomic units).
    """
    if waveform.kind not in ("monochromatic", "off"):
        raise ValueError("the Bessel series applies to a monochromatic drive only")
    vp = vector_potential_samples(waveform, 1.0, n_samples)
    phi = phase_integral(vp, mass, q)
    quad = fourier_B(phi)
    e = ELECTRON_CHARGE
    a0 = waveform.amplitude / waveform.omega if not waveform.is_off else 0.0
    w = waveform.omega or 1.0
    alpha = e * a0 * q / (mass * w)
    beta = -(e**2) * a0**2 / (8 * mass * w)
    if k_max is None:
        k_max = int(abs(alpha) + 2 * abs(beta) + 10 * (abs(alpha) + 2 * abs(beta)) ** (1 / 3) + 10)
        k_max = min(k_max, n_samples // 2 - 1)
    ks = np.arange(-k_max, k_max + 1)
    # the phase integral starts at t = 0, which leaves a constant phase when phase != 0
    series = bessel_series_B(ks, alpha, beta, waveform.phase)
    if waveform.phase:
        series = series * np.exp(-1j * (alpha * math.sin(waveform.phase) + beta * math.sin(2 * waveform.phase)))
    q_k = quad[ks % n_samples]
    diff = np.abs(q_k - series)
    return {
        "alpha": float(alpha),
        "beta": float(beta),
        "K": ks.tolist(),
        "quadrature": q_k,
        "series": series,
        "max_abs_diff": float(np.max(diff)),
        "parseval": float(np.sum(np.abs(quad) ** 2)),
    }


# ---------------------------------------------------------------- command line


def _add_common(p: argparse.ArgumentParser, need_config=True):
    p.add_argument("--config", required=need_config, help="JSON run configuration")
    p.add_argument("--output", help="output file (default: config output.path or stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), help="output format (default csv)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--tolerance", type=float, help="unitarity deficit tolerance (default 1e-12)")
    p.add_argument("--seed", type=int, help="accepted for interface stability; the solver is deterministic")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="floquet-tunnel",
                                 description="Floquet scattering-matrix solver for laser-driven tunnelling structures.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve a single energy point")
    _add_common(p)
    p.add_argument("--energy", type=float, help="energy in meV (default: first energy of the scan axis)")
    p = sub.add_parser("scan", help="run the configured scan")
    _add_common(p)
    p.add_argument("--progress", action="store_true", help="print a point counter on stderr")
    p = sub.add_parser("converge", help="convergence study along one numerical axis")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=sorted(DEFAULT_LEVELS))
    p.add_argument("--levels", type=lambda s: [int(x) for x in s.split(",")], help="comma-separated levels")
    p.add_argument("--threshold", type=float, help=f"refinement threshold (default {CONVERGE_THRESHOLD:g})")
    p = sub.add_parser("diagnose-bessel", help="quadrature vs Bessel-series B_K for a monochromatic drive")
    _add_common(p, need_config=False)
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--omega", type=float, default=70.0, help="meV")
    p.add_argument("--mass", type=float, default=0.0667, help="m_e")
    p.add_argument("--energy", type=float, default=100.0, help="kinetic energy for q, meV")
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=2048)
    return ap


def _write(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _apply_cli(cfg: RunConfig, args) -> RunConfig:
    kw = {}
    if args.tolerance is not None:
        kw["tolerance"] = args.tolerance
    if args.format:
        kw["output_format"] = args.format
    if args.output:
        kw["output_path"] = args.output
    return cfg.with_overrides(**kw) if kw else cfg


def _result_dict(res: ScatterResult, n_used: int) -> dict:
    open_r = res.open_incident
    return {
        "energy_meV": float(UnitSystem.au_to_mev(res.energy)),
        "n_max": n_used,
        "T_total": res.total_transmission,
        "R_total": res.total_reflection,
        "deficit": res.unitarity_deficit,
        "J_inc": res.j_inc,
        "J_ref": res.j_ref,
        "J_tr": res.j_tr,
        "channels": [
            {"N": int(n), "P_T": float(pt), "P_R": float(pr), "open_exit": bool(oe), "open_incident": bool(oi)}
            for n, pt, pr, oe, oi in zip(res.indices, res.p_transmit, res.p_reflect, res.open_exit, open_r)
        ],
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.seed is not None:
        log.debug("--seed %d ignored: the solver is deterministic", args.seed)

    if args.command == "diagnose-bessel":
        omega = float(UnitSystem.mev_to_au(args.omega))
        wf = Waveform.monochromatic(omega, args.xi, args.phase) if args.xi > 0 else Waveform()
        q = math.sqrt(2 * args.mass * float(UnitSystem.mev_to_au(args.energy)))
        rep = diagnose_bessel(wf, q, args.mass, args.samples)
        rows = [{"K": k, "quadrature_re": float(a.real), "quadrature_im": float(a.imag),
                 "series_re": float(b.real), "series_im": float(b.imag), "abs_diff": float(abs(a - b))}
                for k, a, b in zip(rep["K"], rep["quadrature"], rep["series"])]
        _write(format_rows(rows, args.format or "csv"), args.output)
        print(json.dumps({"max_abs_diff": rep["max_abs_diff"], "parseval": rep["parseval"],
                          "alpha": rep["alpha"], "beta": rep["beta"]}), file=sys.stderr)
        return EXIT_OK

    try:
        cfg = _apply_cli(load_config(args.config), args)
    except ConfigError as exc:
        for ptr, msg in exc.errors:
            print(f"config error at {ptr or '/'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "solve":
        energy = args.energy if args.energy is not None else cfg.energies_mev[0]
        pr = solve_point(cfg, cfg.static_fields[0], cfg.xis[0], cfg.phases[0], energy)
        if pr.result is None:
            print(f"solver error: {pr.message}", file=sys.stderr)
            return EXIT_ALL_FAILED
        out = _result_dict(pr.result, pr.n_max)
        out["status"] = pr.status
        _write(json.dumps(out, indent=2) + "\n", cfg.output_path)
        return EXIT_OK if pr.status == "ok" else EXIT_ALL_FAILED

    if args.command == "scan":
        rows = run_scan(cfg, args.workers, progress=args.progress)
        _write(format_rows(rows, cfg.output_format), cfg.output_path)
        code = scan_exit_code(rows)
        if code:
            bad = sum(r["status"] != "ok" for r in rows)
            print(f"{bad} of {len(rows)} points failed", file=sys.stderr)
        return code

    # converge
    rep = converge(cfg, args.axis, args.levels, args.threshold)
    rows = [{"axis": rep["axis"], "level": r["level"], "T_total_max": float(np.nanmax(r["T_total"])),
             "change": r["change"], "deficit_max": r["deficit_max"],
             **({"coeff_change": r["coeff_change"]} if "coeff_change" in r else {}), "status": r["status"]}
            for r in rep["levels"]]
    _write(format_rows(rows, cfg.output_format), cfg.output_path)
    print(json.dumps({"axis": rep["axis"], "converged_at": rep["converged_at"], "threshold": rep["threshold"],
                      "flag": rep["flag"]}), file=sys.stderr)
    if all(r["status"] != "ok" for r in rep["levels"]):
        return EXIT_ALL_FAILED
    return EXIT_OK if rep["converged_at"] is not None else EXIT_PARTIAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
