"""Command-line front end: ``prml {fit,curve,kl-limit,mtest,simulate,study}``.

Configuration is an INI file with sections ``[kernel]``, ``[grid]``,
``[weights]``, ``[optimizer]`` and ``[study]``; see the README for every
key.  Exit codes: 0 success, 1 input error, 2 boundary estimate or
non-convergence, 3 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys

import numpy as np

from . import io, simulate
from .fdr import classify, local_fdr, metrics, write_decisions_csv
from .grid import make_grid
from .inference import fit
from .kernels import make_kernel
from .kl_oracle import write_kstar_csv
from .likelihood import LikelihoodConfig, Objective, final_density, likelihood_curve, normalized_curve
from .recursion import WeightSequence
from .study import STUDIES, StudySpec, armix_grid, default_box_init, ri_support, run_study

log = logging.getLogger("prml")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 0, 1, 2, 3

DATA_LAYOUT = {"density": "scalar", "linear_ri": "replicated", "logistic_ri": "replicated", "ar1_mix": "series"}

# full-scale settings per study, enabled by --full-scale
FULL_SCALE = {
    "lmm": {"reps": 500},
    "glmm": {"reps": 100, "n": 500},
    "armix": {"reps": 100, "n": 5000, "M": 25},
    "kl_limit": {"reps": 100},
}


class ConfigError(io.InputError):
    pass


# --- configuration ------------------------------------------------------------------------


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is None:
        return cp
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return cp


def _get(cp, section, key, default=None, cast=str):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _box(text):
    """``lo,hi; lo,hi`` -> ``(k, 2)`` array."""
    rows = [_floats(part) for part in text.split(";") if part.strip()]
    if not rows or any(len(r) != 2 for r in rows):
        raise ValueError("box needs 'lo,hi' pairs separated by ';'")
    return np.array(rows)


def kernel_name(cp) -> str:
    name = _get(cp, "kernel", "name", "density")
    if name not in DATA_LAYOUT:
        raise ConfigError(f"[kernel] name must be one of {sorted(DATA_LAYOUT)}, got {name!r}")
    return name


def build_likelihood_config(cp, data) -> LikelihoodConfig:
    name = kernel_name(cp)
    if name == "density":
        kernel = make_kernel(name)
    elif name == "ar1_mix":
        kernel = make_kernel(name, T=data.T)
    else:
        kernel = make_kernel(name, d=data.d, r=data.r)

    if name == "ar1_mix":
        rule = _get(cp, "grid", "rule", "legendre")
        grid = armix_grid(_get(cp, "grid", "order", 21, int), rule)
    else:
        rule = _get(cp, "grid", "rule", "trapezoid")
        default = {"density": (0.0, 1.0), "logistic_ri": (-8.0, 8.0)}.get(name)
        if default is None:
            default = ri_support(data)
        lo = _get(cp, "grid", "lo", default[0], float)
        hi = _get(cp, "grid", "hi", default[1], float)
        grid = make_grid(rule, [(lo, hi)], _get(cp, "grid", "J", 201, int))

    order_default = "permuted" if name == "ar1_mix" else "given"
    return LikelihoodConfig(
        kernel,
        grid,
        weights=WeightSequence(_get(cp, "weights", "gamma", 2 / 3, float)),
        M=_get(cp, "weights", "M", 25 if name == "ar1_mix" else 1, int),
        seed=_get(cp, "weights", "seed", 0, int),
        order=_get(cp, "weights", "order", order_default),
    )


def box_and_init(cp, data):
    box, init = default_box_init(kernel_name(cp), data)
    box = _get(cp, "optimizer", "box", box, _box)
    given = _get(cp, "optimizer", "init", None, lambda s: np.array(_floats(s)))
    return box, np.clip(init, box[:, 0], box[:, 1]) if given is None else given


def _fit(cp, data, cfg):
    box, init = box_and_init(cp, data)
    which = _get(cp, "optimizer", "objective", "prml")
    return fit(
        Objective(data, cfg, which), box, init,
        n_starts=_get(cp, "optimizer", "n_starts", 3, int),
        max_iter=_get(cp, "optimizer", "max_iter", 200, int),
        alpha=_get(cp, "optimizer", "alpha", 0.05, float),
    )


def study_spec(cp, overrides=None) -> StudySpec:
    """Build a :class:`StudySpec` from ``[study]``, coercing by field type."""
    if not cp.has_section("study"):
        raise ConfigError("config has no [study] section")
    kw = {}
    # configparser lower-cases keys; match fields such as J, M and T case-insensitively
    fields = {f.name.lower(): f for f in dataclasses.fields(StudySpec)}
    for lkey, raw in cp.items("study"):
        if lkey not in fields:
            raise ConfigError(f"[study] unknown key {lkey!r}")
        key = fields[lkey].name
        default = fields[lkey].default
        try:
            if isinstance(default, tuple):
                parts = raw.replace(",", " ").split()
                kw[key] = tuple(float(p) for p in parts) if key == "sigmas" else tuple(parts)
            elif isinstance(default, bool):
                kw[key] = cp.getboolean("study", key)
            elif isinstance(default, int):
                kw[key] = int(raw)
            elif isinstance(default, float):
                kw[key] = float(raw)
            else:
                kw[key] = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"[study] {key} = {raw!r}: {exc}") from exc
    kw.update(overrides or {})
    if "study" not in kw:
        raise ConfigError("[study] needs a 'study' key")
    try:
        return StudySpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --- commands -----------------------------------------------------------------------------


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise io.InputError(f"cannot create output directory {path}: {exc.strerror}") from exc
    if not os.access(path, os.W_OK):
        raise io.InputError(f"output directory {path} is not writable")
    return path


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def cmd_fit(args) -> int:
    cp = load_config(args.config)
    data = io.read_data(args.data, DATA_LAYOUT[kernel_name(cp)])
    out = _outdir(args.out)
    res = _fit(cp, data, build_likelihood_config(cp, data))
    _write_text(os.path.join(out, "fit.txt"), res.to_text())
    with open(os.path.join(out, "fit.csv"), "w") as fh:
        fh.write("parameter,estimate,se,lo,hi\n")
        for k, name in enumerate(res.names()):
            lo, hi = res.intervals[k]
            vals = (res.theta_hat[k], res.se[k], lo, hi)
            fh.write(",".join([name, *(repr(float(v)) for v in vals)]) + "\n")
    print(res.to_text(), end="")
    return EXIT_OK if res.ok else EXIT_NUMERIC


def _theta_grid(spec, k):
    if os.path.exists(spec):
        _, rows = io._rows(spec)
        thetas = np.array([vals for _, vals in rows])
    elif spec.count(":") == 2:
        lo, hi, num = spec.split(":")
        thetas = np.linspace(float(lo), float(hi), int(num))[:, None]
    else:
        thetas = np.array(_floats(spec))[:, None]
    if thetas.shape[1] != k:
        raise io.InputError(f"theta grid has {thetas.shape[1]} columns, kernel needs {k}")
    return thetas


def cmd_curve(args) -> int:
    cp = load_config(args.config)
    data = io.read_data(args.data, DATA_LAYOUT[kernel_name(cp)])
    cfg = build_likelihood_config(cp, data)
    try:
        thetas = _theta_grid(args.theta, cfg.kernel.n_params)
    except ValueError as exc:
        raise io.InputError(f"bad --theta: {exc}") from exc
    out = _outdir(args.out)
    rows = likelihood_curve(thetas, data, cfg, averaged=True)
    k = thetas.shape[1]
    header = [f"theta_{j + 1}" for j in range(k)] + ["loglik_prml", "loglik_profile"]
    cols = [rows]
    if k == 1:
        header += ["norm_prml", "norm_profile"]
        cols += [normalized_curve(rows[:, 0], rows[:, 1])[:, None], normalized_curve(rows[:, 0], rows[:, 2])[:, None]]
    table = np.hstack(cols)
    with open(os.path.join(out, "curve.csv"), "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    best = rows[np.argmax(rows[:, k])]
    summary = f"points = {len(rows)}\nargmax_prml = {', '.join(repr(float(v)) for v in best[:k])}\n"
    _write_text(os.path.join(out, "summary.txt"), summary)
    print(summary, end="")
    return EXIT_OK


def cmd_kl_limit(args) -> int:
    cp = load_config(args.config)
    if not cp.has_section("study"):
        cp.add_section("study")
    cp.set("study", "study", "kl_limit")
    spec = study_spec(cp, _scale_overrides("kl_limit", args))
    out = _outdir(args.out)
    report = run_study(spec, args.workers)
    sigmas = spec.sigmas
    kstar = [report.aggregates[f"kstar[{s}]"] for s in sigmas]
    reps = sorted({r["rep"] for r in report.rows})
    kn = {(r["rep"], r["sigma"]): r["kn"] for r in report.rows}
    with open(os.path.join(out, "kl_limit.csv"), "w") as fh:
        fh.write(",".join(["sigma", *[f"kn_rep{r + 1}" for r in reps], "kn_mean", "kstar"]) + "\n")
        for s, ks in zip(sigmas, kstar):
            vals = [kn[(r, s)] for r in reps]
            fh.write(",".join(repr(float(v)) for v in [s, *vals, np.mean(vals), ks]) + "\n")
    write_kstar_csv(os.path.join(out, "kstar.csv"), list(zip(sigmas, kstar)), spec.kstar_J, spec.kstar_R, 1e-9,
                    "0.5 + 0.1 t_5")
    _write_text(os.path.join(out, "summary.txt"), report.summary())
    print(report.summary(), end="")
    return EXIT_NUMERIC if report.failures else EXIT_OK


def cmd_mtest(args) -> int:
    cp = load_config(args.config)
    if not cp.has_option("kernel", "name"):
        if not cp.has_section("kernel"):
            cp.add_section("kernel")
        cp.set("kernel", "name", "ar1_mix")
    if kernel_name(cp) != "ar1_mix":
        raise ConfigError("mtest needs [kernel] name = ar1_mix")
    data, truth = io.read_series(args.data)
    out = _outdir(args.out)
    cfg = build_likelihood_config(cp, data)
    res = _fit(cp, data, cfg)
    f_hat = final_density(res.theta_hat, data, cfg)
    lfdr = local_fdr(data, res.theta_hat[0], f_hat, cfg.kernel)
    cutoff = _get(cp, "study", "cutoff", 0.5, float) if args.cutoff is None else args.cutoff
    decisions = classify(lfdr, cutoff, truth)
    write_decisions_csv(os.path.join(out, "decisions.csv"), decisions)
    text = res.to_text() + f"cutoff = {cutoff!r}\ndiscoveries = {sum(d.flagged for d in decisions)}\n"
    if truth is not None:
        m = metrics(decisions)
        text += f"fdr = {m.fdr!r}\nmp = {m.mp!r}\n"
        with open(os.path.join(out, "metrics.csv"), "w") as fh:
            fh.write("fdr,mp,discoveries,n\n")
            fh.write(f"{m.fdr!r},{m.mp!r},{m.discoveries},{m.n}\n")
    _write_text(os.path.join(out, "summary.txt"), text)
    print(text, end="")
    return EXIT_OK if res.ok else EXIT_NUMERIC


def cmd_simulate(args) -> int:
    if args.study == "density":
        io.write_scalar(args.out, simulate.gen_density(args.mix, args.sigma, args.n, args.seed))
    elif args.study == "studentt":
        io.write_scalar(args.out, simulate.gen_studentt(args.n, args.seed))
    elif args.study in ("lmm", "glmm"):
        gen = simulate.gen_lmm if args.study == "lmm" else simulate.gen_glmm
        data, _ = gen(args.n, args.r, args.f_kind, args.seed)
        io.write_replicated(args.out, data)
    else:
        data, truth = simulate.gen_armix(args.n, args.T, args.theta, args.seed)
        io.write_series(args.out, data, truth["nonnull"])
    return EXIT_OK


def _scale_overrides(study, args):
    over = {}
    if getattr(args, "full_scale", False):
        over.update(FULL_SCALE.get(study, {}))
    if getattr(args, "reps", None):
        over["reps"] = args.reps
    return over


def cmd_study(args) -> int:
    cp = load_config(args.config)
    name = _get(cp, "study", "study")
    spec = study_spec(cp, _scale_overrides(name, args))
    out = _outdir(args.out)
    report = run_study(spec, args.workers)
    report.write(out)
    _write_text(os.path.join(out, "timing.txt"), f"wall_clock_seconds = {report.wall_clock!r}\n")
    if report.failures:
        _write_text(os.path.join(out, "failures.txt"), "".join(f"{r}: {e}\n" for r, e in report.failures))
    print(report.summary(), end="")
    return EXIT_NUMERIC if report.failures else EXIT_OK


# --- entry point --------------------------------------------------------------------------


def _workers(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prml", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit", help="maximise the PR marginal or profile likelihood")
    s.add_argument("--config", "-c")
    s.add_argument("--data", "-d", required=True)
    s.add_argument("--out", "-o", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("curve", help="log-likelihood over a theta grid")
    s.add_argument("--config", "-c")
    s.add_argument("--data", "-d", required=True)
    s.add_argument("--theta", "-t", required=True, help="lo:hi:num, a comma list, or a CSV file of theta rows")
    s.add_argument("--out", "-o", required=True)
    s.set_defaults(func=cmd_curve)

    s = sub.add_parser("kl-limit", help="K_n curves for t_5 data against the K* oracle")
    s.add_argument("--config", "-c")
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--reps", type=int)
    s.add_argument("--full-scale", action="store_true")
    s.add_argument("--workers", type=_workers)
    s.set_defaults(func=cmd_kl_limit)

    s = sub.add_parser("mtest", help="local-fdr classification of AR(1) series")
    s.add_argument("--config", "-c")
    s.add_argument("--data", "-d", required=True)
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--cutoff", type=float)
    s.set_defaults(func=cmd_mtest)

    s = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    s.add_argument("--study", required=True, choices=("density", "studentt", "lmm", "glmm", "armix"))
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mix", default="beta26", choices=simulate.DENSITY_MIXES)
    s.add_argument("--sigma", type=float, default=0.1)
    s.add_argument("--r", type=int, default=4)
    s.add_argument("--f-kind", default="gaussian", choices=simulate.RI_KINDS)
    s.add_argument("--theta", type=float, default=0.75)
    s.add_argument("--T", type=int, default=50)
    s.add_argument("--out", "-o", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("study", help=f"run a simulation study ({', '.join(STUDIES)})")
    s.add_argument("--config", "-c", required=True)
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--reps", type=int)
    s.add_argument("--full-scale", action="store_true")
    s.add_argument("--workers", type=_workers)
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (io.InputError, ValueError, TypeError) as exc:
        print(f"prml: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is a bug or a numerical breakdown
        log.debug("internal error", exc_info=True)
        print(f"prml: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
