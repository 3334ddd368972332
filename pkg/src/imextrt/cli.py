"""Command-line driver: scheme reports, stability regions, embedding search,
radiative-transfer runs and fixed-step convergence studies.

Run configuration is a flat ``key = value`` text file (``#`` starts a
comment).  Every key can also be given as a ``--key value`` flag, which
overrides the file.  Unknown keys are rejected.

Exit status: 0 on success, 2 for configuration errors, 3 for solver failures.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .integrator import (NonFiniteStateError, StageSolveError, StepControlError,
                         StepControllerConfig, integrate, write_history)
from .oracle import REFERENCE_SCHEME, observed_order, reference_solve, relative_errors
from .problems import make_problem
from .stability import (InfeasibleEmbeddingError, RegionSpec, embedding_objective,
                        is_A_stable_implicit, implicit_limit, optimize_embedding,
                        stability_region)
from .tableaux import SCHEME_NAMES, builtin_scheme, quality
from .transport.lo import LOSolveError
from .transport.system import TRTSystem

log = logging.getLogger("imextrt")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
SOLVER_ERRORS = (StageSolveError, StepControlError, NonFiniteStateError, LOSolveError,
                 FloatingPointError)

PRESETS = {
    "ci": {"cells": 64, "sn": 4, "groups": 16},
    "full": {"cells": 256, "sn": 8, "groups": 50},
}

# suggested adaptive tolerances; the study values are not known exactly
TOLERANCE_PRESETS = (1e-1, 1e-2, 1e-3, 1e-4)


def _floats(s):
    return tuple(float(v) for v in str(s).replace(";", ",").split(",") if v.strip())


def _strs(s):
    return tuple(v.strip() for v in str(s).split(",") if v.strip())


def _opt_float(s):
    return None if str(s).lower() in ("", "none") else float(s)


# key -> (parser, default)
SCHEMA = {
    "problem": (str, "larsen"),
    "preset": (str, "ci"),
    "cells": (int, None),
    "sn": (int, None),
    "groups": (int, None),
    "scheme": (str, "IMEX-NPRK2[42]b"),
    "formulation": (str, "imex"),
    "mode": (str, "adaptive"),
    "dt": (_opt_float, None),
    "atol": (float, 1e-2),
    "rtol": (float, 1e-2),
    "mask": (str, "Er"),
    "dt0": (float, 1e-13),
    "dt_min": (float, 1e-18),
    "dt_max": (_opt_float, None),
    "t_final": (float, 1e-7),
    "output_times": (_floats, ()),
    "output_dir": (str, "out"),
    "seed": (int, 0),
    "holo_tol": (float, 1e-8),
    "max_outer": (int, 25),
    "lo_tol": (float, 1e-10),
    "T0": (_opt_float, None),
    # convergence study
    "schemes": (_strs, SCHEME_NAMES),
    "formulations": (_strs, ("imex", "semi")),
    "conv_dt0": (float, 3.2e-11),
    "levels": (int, 6),
    "dt_ref": (_opt_float, None),
    "reference_scheme": (str, REFERENCE_SCHEME),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def canonical(self) -> str:
        return "\n".join(f"{k}={self.values[k]!r}" for k in sorted(self.values))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def header(self) -> list:
        return [f"imextrt {__version__}", f"config {self.digest()}"]


def parse_config_text(text: str) -> dict:
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in SCHEMA:
            raise ConfigError(f"line {n}: unknown key {k!r}")
        raw[k] = v
    return raw


def build_config(raw: dict) -> RunConfig:
    vals = {}
    for k, (conv, default) in SCHEMA.items():
        if k in raw and raw[k] is not None:
            try:
                vals[k] = conv(raw[k])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {k}: {raw[k]!r} ({exc})") from None
        else:
            vals[k] = default
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    if vals["preset"] not in PRESETS:
        raise ConfigError(f"preset must be one of {', '.join(PRESETS)}")
    for k, v in PRESETS[vals["preset"]].items():
        if vals[k] is None:
            vals[k] = v
    if vals["formulation"] not in ("semi", "imex"):
        raise ConfigError("formulation must be semi or imex")
    if vals["mode"] not in ("adaptive", "fixed"):
        raise ConfigError("mode must be adaptive or fixed")
    if vals["mode"] == "fixed" and not vals["dt"]:
        raise ConfigError("fixed mode needs dt")
    if vals["mask"] not in ("T", "Er", "both"):
        raise ConfigError("mask must be T, Er or both")
    for name in (vals["scheme"], vals["reference_scheme"], *vals["schemes"]):
        try:
            builtin_scheme(name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    for f in vals["formulations"]:
        if f not in ("semi", "imex"):
            raise ConfigError("formulations must be semi and/or imex")
    return RunConfig(vals)


def make_system(cfg: RunConfig, formulation=None) -> TRTSystem:
    kw = {}
    if cfg.problem == "larsen":
        kw = {"cells": cfg.cells, "sn": cfg.sn, "groups": cfg.groups}
    elif cfg.problem == "gray_slab":
        kw = {"cells": cfg.cells, "sn": cfg.sn}
    elif cfg.problem == "equilibrium":
        kw = {"sn": cfg.sn}
    if cfg.T0 is not None:
        kw["T0"] = cfg.T0
    try:
        prob = make_problem(cfg.problem, **kw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return TRTSystem(prob, formulation or cfg.formulation, holo_tol=cfg.holo_tol,
                     max_outer=cfg.max_outer, lo_tol=cfg.lo_tol)


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name).strip("_")


def write_snapshot(path, system: TRTSystem, y, t, header):
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"# t = {t!r}\n")
        fh.write("x_cm,T_eV,Er_erg_cc,Fr\n")
        for row in system.snapshot(y):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_schemes(args) -> int:
    print("scheme, A3, B3, C3, E3, implicit, embedded implicit")
    for name in SCHEME_NAMES:
        p = builtin_scheme(name)
        q = quality(p)
        lim = abs(implicit_limit(p.A_implicit, p.b))
        l_stable = lim <= 1e-10 and is_A_stable_implicit(p.A_implicit, p.b)[0]
        a_emb = is_A_stable_implicit(p.A_implicit, p.b_hat)[0]
        print(f"{name}, {q.A3:.4g}, {q.B3:.4g}, {q.C3:.4g}, {q.E3:.4g}, "
              f"{'L-stable' if l_stable else 'not L-stable'}, "
              f"{'A-stable' if a_emb else 'not A-stable'}")
    return EXIT_OK


def cmd_stability(args) -> int:
    pair = builtin_scheme(args.scheme)
    spec = RegionSpec(alpha=math.radians(args.alpha), n=args.n, dense=args.dense)
    region = stability_region(pair, spec, use_embedded=args.embedded)
    grid = spec.grid()
    print(f"{pair.name}: alpha={args.alpha} deg, {int(region.sum())} of {region.size} "
          f"sample points stable")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(f"# imextrt {__version__}\n# scheme {pair.name} alpha_deg {args.alpha} "
                     f"embedded {int(args.embedded)}\n")
            fh.write("re,im,stable\n")
            for z, ok in zip(grid.ravel(), region.ravel()):
                fh.write(f"{z.real!r},{z.imag!r},{int(ok)}\n")
    return EXIT_OK


def cmd_embed(args) -> int:
    pair = builtin_scheme(args.scheme)
    pub = embedding_objective(pair, pair.b_hat)
    res = optimize_embedding(pair, seeds=args.seeds, rng_seed=args.seed)
    print(f"scheme: {pair.name}")
    print(f"published b_hat: {np.array2string(pair.b_hat, precision=8)}  objective {pub:.8f}")
    print(f"optimized b_hat: {np.array2string(res.b_hat, precision=8)}  "
          f"objective {res.objective:.8f}  max|R| on imaginary axis {res.margin:.12f}")
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    system = make_system(cfg)
    pair = builtin_scheme(cfg.scheme)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.header()
    y0 = system.initial_state()
    history: list = []
    outs = set(cfg.output_times)

    def on_step(t, y, rec):
        for to in outs:
            if abs(t - to) <= 1e-12 * max(abs(to), 1e-300):
                write_snapshot(out / f"snapshot_t{to:.4e}.csv", system, y, to, header)

    ctl = StepControllerConfig(atol=cfg.atol, rtol=cfg.rtol, dt0=cfg.dt0, dt_min=cfg.dt_min,
                               dt_max=cfg.dt_max, error_mask=system.mask(cfg.mask))
    t_start = time.perf_counter()
    status, message = EXIT_OK, "completed"
    res = None
    try:
        res = integrate(system, pair, y0, 0.0, cfg.t_final, ctl, mode=cfg.mode, dt=cfg.dt,
                        output_times=cfg.output_times, on_step=on_step, history=history)
    except SOLVER_ERRORS as exc:
        status, message = EXIT_SOLVER, f"solver failure: {exc}"
    wall = time.perf_counter() - t_start
    write_history(out / "history.csv", history, header)
    acc = [r for r in history if r.accepted]
    lines = header + [
        f"status {message}",
        f"problem {cfg.problem} scheme {pair.name} formulation {cfg.formulation} mask {cfg.mask}",
        f"accepted_steps {len(acc)}",
        f"rejected_steps {len(history) - len(acc)}",
        f"sweeps {sum(r.ho_solves for r in history)}",
        f"lo_iterations {sum(r.lo_iters for r in history)}",
        f"clipped_energy {system.clipped_total!r}",
        f"wall_seconds {wall:.3f}",
    ]
    if acc:
        dts = [r.dt for r in acc]
        lines.append(f"dt_min {min(dts)!r} dt_max {max(dts)!r}")
    if res is not None:
        write_snapshot(out / "final.csv", system, res.y, res.t, header)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines[2:]))
    if status != EXIT_OK:
        print(message, file=sys.stderr)
    return status


RATE_COLUMNS = ["dt", "L1_T", "rate", "L2_T", "rate", "Linf_T", "rate",
                "L1_Er", "rate", "L2_Er", "rate", "Linf_Er", "rate"]


def convergence_table(dts, errs_T, errs_E):
    """Rows of the rate table; ``errs_*`` are lists of dicts with L1/L2/Linf."""
    rows = []
    rates = {}
    for tag, errs in (("T", errs_T), ("Er", errs_E)):
        for norm in ("L1", "L2", "Linf"):
            e = [d[norm] for d in errs]
            r = observed_order(e, dts) if all(v > 0 for v in e) else [math.nan] * (len(e) - 1)
            rates[(norm, tag)] = [math.nan, *r]
    for i, h in enumerate(dts):
        row = [h]
        for tag, errs in (("T", errs_T), ("Er", errs_E)):
            for norm in ("L1", "L2", "Linf"):
                row += [errs[i][norm], rates[(norm, tag)][i]]
        rows.append(row)
    return rows


def cmd_converge(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.header()
    dts = [cfg.conv_dt0 / 2**k for k in range(cfg.levels)]
    dt_ref = cfg.dt_ref or dts[-1] / 10
    ref_sys = make_system(cfg, "semi")
    y0 = ref_sys.initial_state()
    t0 = time.perf_counter()
    try:
        y_ref = reference_solve(ref_sys, y0, 0.0, cfg.t_final, dt_ref, cfg.reference_scheme)
    except SOLVER_ERRORS as exc:
        print(f"reference solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_snapshot(out / "reference.csv", ref_sys, y_ref, cfg.t_final,
                   header + [f"reference {cfg.reference_scheme} semi dt {dt_ref!r}"])
    print(f"reference ({cfg.reference_scheme}, dt={dt_ref:.3e}) in "
          f"{time.perf_counter() - t0:.1f}s")
    T_ref, E_ref = y_ref[ref_sys.labels["T"]], y_ref[ref_sys.labels["E"]]
    status = EXIT_OK
    for form in cfg.formulations:
        system = make_system(cfg, form)
        for name in cfg.schemes:
            pair = builtin_scheme(name)
            eT, eE = [], []
            try:
                for h in dts:
                    y = integrate(system, pair, y0, 0.0, cfg.t_final, mode="fixed", dt=h).y
                    eT.append(relative_errors(y[system.labels["T"]], T_ref))
                    eE.append(relative_errors(y[system.labels["E"]], E_ref))
            except SOLVER_ERRORS as exc:
                print(f"{name} {form}: solver failure: {exc}", file=sys.stderr)
                status = EXIT_SOLVER
                continue
            rows = convergence_table(dts, eT, eE)
            path = out / f"rates_{_slug(name)}_{form}.csv"
            with open(path, "w") as fh:
                for line in header + [f"scheme {name} formulation {form}"]:
                    fh.write(f"# {line}\n")
                fh.write(",".join(RATE_COLUMNS) + "\n")
                for row in rows:
                    fh.write(",".join(f"{v:.6e}" if not math.isnan(v) else "" for v in row)
                             + "\n")
            print(f"\n{name} ({form})")
            print(f"{'dt':>9} {'L1_T':>16} {'L2_T':>16} {'Linf_T':>16}")
            for row in rows:
                cells = []
                for j in (1, 3, 5):
                    r = "" if math.isnan(row[j + 1]) else f" ({row[j + 1]:.1f})"
                    cells.append(f"{row[j]:.2e}{r}")
                print(f"{row[0]:9.2e} " + " ".join(f"{c:>16}" for c in cells))
    return status


# ---------------------------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="key = value configuration file")
    for key in SCHEMA:
        p.add_argument(f"--{key}", dest=f"cfg_{key}", default=None, metavar="VALUE")


def _resolve_config(args) -> RunConfig:
    raw = {}
    if args.config:
        try:
            raw = parse_config_text(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for key in SCHEMA:
        v = getattr(args, f"cfg_{key}")
        if v is not None:
            raw[key] = v
    return build_config(raw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imextrt", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"imextrt {__version__}")
    ap.add_argument("--threads", type=int, default=None,
                    help="numba worker threads (default: library default)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("schemes", help="order and embedding quality table")
    st = sub.add_parser("stability", help="sector stability region on a grid")
    st.add_argument("--scheme", required=True)
    st.add_argument("--alpha", type=float, default=90.0, help="sector angle in degrees")
    st.add_argument("--n", type=int, default=121)
    st.add_argument("--embedded", action="store_true")
    st.add_argument("--dense", action="store_true", help="sample interior rays as well")
    st.add_argument("--out", help="region CSV path")
    em = sub.add_parser("embed", help="optimize the embedded weights")
    em.add_argument("--scheme", required=True)
    em.add_argument("--seeds", type=int, default=16)
    em.add_argument("--seed", type=int, default=0)
    _add_config_flags(sub.add_parser("run", help="integrate a transport problem"))
    _add_config_flags(sub.add_parser("converge", help="fixed-dt convergence study"))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        if args.command == "schemes":
            return cmd_schemes(args)
        if args.command in ("stability", "embed"):
            if not 0 <= getattr(args, "alpha", 0) <= 90:
                raise ConfigError("alpha must be in [0, 90] degrees")
            try:
                builtin_scheme(args.scheme)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
            try:
                return cmd_stability(args) if args.command == "stability" else cmd_embed(args)
            except InfeasibleEmbeddingError as exc:
                print(str(exc), file=sys.stderr)
                return EXIT_SOLVER
        cfg = _resolve_config(args)
        return cmd_run(cfg) if args.command == "run" else cmd_converge(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
