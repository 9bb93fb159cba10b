"""Command-line driver: ``fkvlab <command> --config file.ini [--out dir] [--override k=v]...``.

Commands: ``validate`` (parse only), ``spectrum``, ``evolve``, ``sweep``,
``run`` (all stages, restrict with ``--stage``) and ``report`` (plot data
and summary from existing artifacts).  Exit codes: 0 success, 2 config
error, 3 numerical failure, 4 target mismatch under ``--check``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import Model
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DomainError, FKVError
from .evolution import EnergyTrace, make_initial_data, simulate
from .frequency import (
    DecayFit,
    ResolventSweep,
    decay_fit,
    spectrum_check,
    sweep_and_fit,
    target_decay,
    target_ell,
    validity_window,
    EIG_LIMIT,
)
from .kernel import build_xi_grid, smallest_grid
from .operator import DiscreteOperator, build_operator

log = logging.getLogger("fkvlab")

STAGES = ("assemble", "spectrum", "simulate", "decay", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4
RESOLVENT_TOL = 0.2
DECAY_REL_TOL = 0.25
DECAY_FLOOR = 2.0
UNRESOLVED = "bound consistent, rate unresolved"

TRACE_FILE = "trace.csv"
SWEEP_FILE = "sweep.csv"
DECAY_FIT_FILE = "fit_decay.txt"
RESOLVENT_FIT_FILE = "fit_resolvent.txt"
SUMMARY_FILE = "summary.txt"
SPECTRUM_FILE = "spectrum.txt"


class StageError(FKVError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentResult:
    files: list[Path] = field(default_factory=list)
    summary: dict[str, str] = field(default_factory=dict)
    mismatch: bool = False


def _header(config: ExperimentConfig, extra: dict | None = None) -> dict:
    meta = {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "fkvlab_version": __version__}
    meta.update(config.echo())
    meta.update(extra or {})
    return meta


def _grid(config: ExperimentConfig):
    d = config.discretization
    if d.n_xi is None:
        return smallest_grid(config.fractional, d.quad_tol)
    return build_xi_grid(config.fractional, d.n_xi, xi_max=d.xi_max, quad_tol=d.quad_tol)


def build_from_config(config: ExperimentConfig, scale: int = 1) -> DiscreteOperator:
    d = config.discretization
    return build_operator(config.model, config.fractional, _grid(config), d.n_left * scale, d.n_right * scale)


def floor_exponent(model: Model, alpha: float) -> float:
    """Conservative decay floor: ``2`` or the target itself when that is smaller."""
    return min(DECAY_FLOOR, target_decay(model, alpha))


def classify_resolvent(target: float, coarse: DecayFit, fine: DecayFit, tol: float = RESOLVENT_TOL,
                       mesh_tol: float = RESOLVENT_TOL) -> str:
    if not (coarse.reliable and fine.reliable):
        return "fail (r_squared below threshold)"
    if abs(coarse.exponent - fine.exponent) > mesh_tol:
        return "fail (mesh disagreement)"
    return "pass" if abs(fine.exponent - target) <= tol else "fail"


def classify_decay(target: float, floor: float, fit: DecayFit, monotone: bool, resolvent_ok: bool) -> str:
    if not monotone:
        return "fail (energy increased)"
    if fit.reliable and abs(fit.exponent - target) <= DECAY_REL_TOL * target:
        return "pass"
    if fit.exponent >= floor and resolvent_ok:
        return UNRESOLVED
    return "fail"


def _write(path: Path, text: str, result: ExperimentResult) -> None:
    path.write_text(text, encoding="utf-8")
    result.files.append(path)


def run_experiment(config: ExperimentConfig, out: str | os.PathLike | None = None,
                   stages: tuple[str, ...] = STAGES) -> ExperimentResult:
    """Run the requested stages, writing each artifact as soon as it exists."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stage(s) {sorted(unknown)}; choose from {STAGES}")
    outdir = Path(out if out is not None else config.outputs.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    res = ExperimentResult()
    model, alpha = config.model.model, config.fractional.alpha
    ell, decay_target = target_ell(model, alpha), target_decay(model, alpha)
    summary = {"model": model.value, "alpha": f"{alpha:g}", "eta": f"{config.fractional.eta:g}",
               "target_ell": f"{ell:.6g}", "target_decay_exponent": f"{decay_target:.6g}"}
    res.summary = summary

    def stage(name, fn):
        log.info("stage %s", name)
        try:
            return fn()
        except FKVError as exc:
            if isinstance(exc, StageError):
                raise
            raise StageError(name, exc) from exc
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
            raise StageError(name, exc) from exc

    op = stage("assemble", lambda: build_from_config(config))
    summary["state_dim"] = str(op.dim)
    summary["n_xi"] = str(op.n_xi)

    if "spectrum" in stages:
        def spectrum():
            sop = op
            note = "configured mesh"
            if op.dim > EIG_LIMIT:
                sop = build_operator(config.model, config.fractional, build_xi_grid(config.fractional, 16, quad_tol=0.5), 16, 16)
                note = "reduced mesh n=16, n_xi=16 (configured mesh exceeds dense limit)"
            rep = spectrum_check(sop)
            return rep, note
        rep, note = stage("spectrum", spectrum)
        summary["spectrum_max_real"] = f"{rep.max_real:.6e}"
        summary["spectrum_status"] = "pass" if rep.stable else "fail"
        _write(outdir / SPECTRUM_FILE,
               "".join(f"{k}: {v}\n" for k, v in {"max_real": f"{rep.max_real:.17g}", "instance": note,
                                                   "stable": rep.stable}.items()), res)

    resolvent_ok = False
    if "sweep" in stages and config.outputs.sweep:
        def sweep():
            sc = config.sweep
            lo, hi = validity_window(op)
            lam = (sc.lambda_min or lo, sc.lambda_max or hi)
            s1, f1 = sweep_and_fit(op, lam, sc.n_points, envelope=sc.envelope)
            fine = build_from_config(config, sc.fine_factor)
            s2, f2 = sweep_and_fit(fine, lam, sc.n_points, envelope=sc.envelope)
            return s1, f1, s2, f2
        s1, f1, s2, f2 = stage("sweep", sweep)
        s1.meta.update(_header(config))
        _write(outdir / SWEEP_FILE, s1.to_csv(), res)
        status = classify_resolvent(ell, f1, f2, config.sweep.tolerance, config.sweep.tolerance)
        resolvent_ok = status == "pass"
        report = f1.report(target=f"{ell:.6g}", fine_exponent=f"{f2.exponent:.6g}",
                           fine_r_squared=f"{f2.r_squared:.6f}", fine_n_left=op.mesh.n_left * config.sweep.fine_factor,
                           status=status)
        _write(outdir / RESOLVENT_FIT_FILE, "".join(f"# {k}={v}\n" for k, v in _header(config).items()) + report, res)
        summary["resolvent_exponent"] = f"{f2.exponent:.6g}" if f2.reliable else "unresolved"
        summary["resolvent_raw_exponent"] = f"{f2.exponent:.6g}"
        summary["resolvent_status"] = status

    if "simulate" in stages and config.outputs.trace:
        ev = config.evolution
        x0 = make_initial_data(op, ev.profile, seed=ev.seed)
        trace = stage("simulate", lambda: simulate(op, x0, ev.T, ev.dt, ev.sample_every))
        trace.meta = _header(config, {"profile": ev.profile})
        _write(outdir / TRACE_FILE, trace.to_csv(), res)
        summary["energy_monotone"] = str(trace.monotone())
        if "decay" in stages:
            fit = stage("decay", lambda: decay_fit(trace, 0.5))
            floor = floor_exponent(model, alpha)
            status = classify_decay(decay_target, floor, fit, trace.monotone(), resolvent_ok)
            report = fit.report(target=f"{decay_target:.6g}", floor=f"{floor:.6g}", status=status)
            _write(outdir / DECAY_FIT_FILE, "".join(f"# {k}={v}\n" for k, v in _header(config).items()) + report, res)
            summary["decay_exponent"] = f"{fit.exponent:.6g}" if fit.reliable else "unresolved"
            summary["decay_raw_exponent"] = f"{fit.exponent:.6g}"
            summary["decay_status"] = status

    res.mismatch = any(k.endswith("_status") and v.startswith("fail") for k, v in summary.items())
    text = "".join(f"# {k}={v}\n" for k, v in _header(config).items())
    text += "".join(f"{k}: {v}\n" for k, v in summary.items())
    _write(outdir / SUMMARY_FILE, text, res)
    if config.outputs.plot and (outdir / TRACE_FILE).exists() and (outdir / SWEEP_FILE).exists():
        res.files += emit_plot_data(outdir)
    return res


# --------------------------------------------------------------------------
# plot data


def _meta_float(meta: dict, key: str) -> float:
    try:
        return float(meta[key])
    except (KeyError, ValueError):
        raise DomainError(f"artifact metadata lacks {key!r}") from None


def emit_plot_data(outdir: str | os.PathLike) -> list[Path]:
    """Log-log data files and a gnuplot script for the trace and the sweep in ``outdir``."""
    outdir = Path(outdir)
    trace_p, sweep_p = outdir / TRACE_FILE, outdir / SWEEP_FILE
    missing = [p.name for p in (trace_p, sweep_p) if not p.exists()]
    if missing:
        raise ConfigError(f"missing artifacts in {outdir}: {missing}")
    trace = EnergyTrace.from_csv(trace_p.read_text(encoding="utf-8"))
    sweep = ResolventSweep.from_csv(sweep_p.read_text(encoding="utf-8"))
    keep = (trace.times > 0) & (trace.energies > 0)
    if not keep.any():
        raise DomainError("energy trace is empty; nothing to plot")
    if sweep.lambdas.size == 0:
        raise DomainError("sweep is empty; nothing to plot")
    model = Model(trace.meta.get("model.model", sweep.meta.get("model.model", "WW")))
    alpha = _meta_float(trace.meta, "fractional.alpha")
    ell = target_ell(model, alpha)
    slope_e = -2.0 / ell

    lt, le = np.log(trace.times[keep]), np.log(trace.energies[keep])
    ref_e = le[0] + slope_e * (lt - lt[0])
    ll, ln = np.log(sweep.lambdas), np.log(sweep.norms)
    ref_r = ln[0] + ell * (ll - ll[0])

    files = []
    for name, cols, head in (
        ("energy_loglog.dat", (lt, le, ref_e), f"# log_t log_E reference_slope={slope_e:.6g}"),
        ("resolvent_loglog.dat", (ll, ln, ref_r), f"# log_lambda log_norm reference_slope={ell:.6g}"),
    ):
        body = "".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in zip(*cols))
        p = outdir / name
        p.write_text(head + "\n" + body, encoding="utf-8")
        files.append(p)
    script = f"""# gnuplot script: energy decay and resolvent growth with target power laws
set terminal pngcairo size 1200,500
set output 'fkvlab_{model.value}.png'
set multiplot layout 1,2
set xlabel 'log t'; set ylabel 'log E'
set title 'energy decay (reference slope {slope_e:.4g})'
plot 'energy_loglog.dat' using 1:2 with lines title 'E(t)', '' using 1:3 with lines dashtype 2 title 'target'
set xlabel 'log lambda'; set ylabel 'log ||R(i lambda)||'
set title 'resolvent growth (reference slope {ell:.4g})'
plot 'resolvent_loglog.dat' using 1:2 with linespoints title 'sweep', '' using 1:3 with lines dashtype 2 title 'target'
unset multiplot
"""
    p = outdir / "plot.gp"
    p.write_text(script, encoding="utf-8")
    files.append(p)
    return files


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fkvlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["validate", "spectrum", "evolve", "sweep", "run", "report"])
    ap.add_argument("--config", help="INI-style configuration file")
    ap.add_argument("--out", help="output directory (default: [outputs] directory)")
    ap.add_argument("--stage", action="append", default=[],
                    help=f"restrict 'run' to these stages (repeatable or comma-separated): {', '.join(STAGES)}")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration key (section.key=value); repeatable")
    ap.add_argument("--check", action="store_true", help="exit 4 when a fitted exponent misses its target")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


_COMMAND_STAGES = {
    "spectrum": ("assemble", "spectrum"),
    "evolve": ("assemble", "simulate", "decay"),
    "sweep": ("assemble", "sweep"),
    "run": STAGES,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            if not args.out:
                raise ConfigError("report needs --out pointing at an artifact directory")
            for p in emit_plot_data(args.out):
                print(p)
            summary = Path(args.out) / SUMMARY_FILE
            if summary.exists():
                sys.stdout.write("".join(l + "\n" for l in summary.read_text().splitlines() if not l.startswith("#")))
            return EXIT_OK
        if not args.config:
            raise ConfigError("--config is required")
        config = load_config(args.config, args.override)
        if args.command == "validate":
            sys.stdout.write(config.to_text())
            return EXIT_OK
        stages = _COMMAND_STAGES[args.command]
        if args.stage:
            wanted = tuple(s.strip() for item in args.stage for s in item.split(",") if s.strip())
            bad = set(wanted) - set(STAGES)
            if bad:
                raise ConfigError(f"unknown stage(s) {sorted(bad)}; choose from {STAGES}")
            stages = tuple(s for s in stages if s in wanted)
        result = run_experiment(config, args.out, stages)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FKVError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in result.files:
        print(p)
    for k, v in result.summary.items():
        print(f"{k}: {v}")
    if args.check and result.mismatch:
        return EXIT_MISMATCH
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
