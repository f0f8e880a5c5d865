"""Command-line front end: tables, figure curves, diagnostics, n1* traces.

Config files are INI-style (``key = value`` under ``[scenario]`` headers, one
scenario per section)::

    [table1]
    model = logistic_location
    x1 = 2
    a = 0.25
    b = 4
    theta = 1
    sigma = 0.5
    n = 100, 200, 400
    n1 = 30            ; or "optimal"
    reps = 10000
    seed = 20240101
    levels = 0.005, 0.025, 0.05, 0.10

``diagnose`` sections use ``n1`` plus an ``n2`` list instead of ``n``.
Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from .analysis import (
    NOMINAL_LEVELS,
    EmptyKindError,
    integrated_abs_cdf_diff,
    t60_reference,
    tail_probabilities,
)
from .design import DesignConfig, QuadratureError, n1_search_trace, optimal_n1
from .information import ALL_KINDS, TABLE_KINDS, InfoMeasureKind
from .models import FAMILIES, DoseInterval, get_model
from .montecarlo import RunManifest, run_experiment

MIN_DIAGNOSTIC_REPS = 100


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.6g}"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    model: str
    x1: float
    a: float
    b: float
    theta: float
    sigma: float
    n: tuple[int, ...]
    n1: int | str
    reps: int
    seed: int
    levels: tuple[float, ...] = NOMINAL_LEVELS
    n2: tuple[int, ...] = ()
    replicates: int = 1
    fisher_at: str = "true"
    out: str | None = None

    def canonical(self) -> str:
        fields = [
            ("model", self.model),
            ("x1", repr(self.x1)),
            ("a", repr(self.a)),
            ("b", repr(self.b)),
            ("theta", repr(self.theta)),
            ("sigma", repr(self.sigma)),
            ("n", ",".join(map(str, self.n))),
            ("n1", str(self.n1)),
            ("n2", ",".join(map(str, self.n2))),
            ("reps", str(self.reps)),
            ("seed", str(self.seed)),
            ("levels", ",".join(map(repr, self.levels))),
            ("replicates", str(self.replicates)),
            ("fisher_at", self.fisher_at),
        ]
        return "\n".join(f"{k}={v}" for k, v in fields)

    @property
    def spec_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @property
    def interval(self) -> DoseInterval:
        return DoseInterval(self.a, self.b)

    def design(self, n: int, n1: int | str | None = None) -> DesignConfig:
        return DesignConfig(
            self.x1, self.interval, self.n1 if n1 is None else n1, n, self.sigma, self.theta
        )


def _list(raw: str, conv, key: str) -> tuple:
    try:
        items = tuple(conv(v.strip()) for v in raw.replace(";", ",").split(",") if v.strip())
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None
    if not items:
        raise ConfigError(f"{key} must not be empty")
    return items


def _get(sec, key, conv, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"[{sec.name}] missing required key {key!r}")
        return default
    try:
        return conv(sec[key].strip())
    except ValueError as e:
        raise ConfigError(f"[{sec.name}] {key}: {e}") from None


def _int(s: str) -> int:
    f = float(s)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(f)


def parse_config(text: str, verb: str, sections=None) -> list[ExperimentSpec]:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"unreadable config: {e}") from None
    names = cp.sections()
    if sections:
        missing = set(sections) - set(names)
        if missing:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(missing))}")
        names = [s for s in names if s in sections]
    specs = []
    for name in names:
        sec = cp[name]
        model = _get(sec, "model", str)
        if model not in FAMILIES:
            raise ConfigError(f"[{name}] unknown model {model!r}; expected one of {FAMILIES}")
        n1_raw = _get(sec, "n1", str)
        n1 = n1_raw if n1_raw == "optimal" else _get(sec, "n1", _int)
        spec = ExperimentSpec(
            name=name,
            model=model,
            x1=_get(sec, "x1", float, 2.0),
            a=_get(sec, "a", float, 0.25),
            b=_get(sec, "b", float, 4.0),
            theta=_get(sec, "theta", float, 1.0),
            sigma=_get(sec, "sigma", float, 0.5),
            n=_list(sec["n"], _int, "n") if "n" in sec else (),
            n1=n1,
            reps=_get(sec, "reps", _int, 10000),
            seed=_get(sec, "seed", _int, 1),
            levels=_list(sec["levels"], float, "levels") if "levels" in sec else NOMINAL_LEVELS,
            n2=_list(sec["n2"], _int, "n2") if "n2" in sec else (),
            replicates=_get(sec, "replicates", _int, 1),
            fisher_at=_get(sec, "fisher_at", str, "true"),
            out=sec.get("out"),
        )
        validate(spec, verb)
        specs.append(spec)
    if not specs:
        raise ConfigError("config declares no scenarios")
    return specs


def validate(spec: ExperimentSpec, verb: str) -> None:
    try:
        interval = spec.interval
        get_model(spec.model, interval)
    except ValueError as e:
        raise ConfigError(f"[{spec.name}] {e}") from None
    if spec.reps < 1:
        raise ConfigError(f"[{spec.name}] reps must be >= 1")
    if not 0 <= spec.seed < 2**64:
        raise ConfigError(f"[{spec.name}] seed must be an unsigned 64-bit integer")
    if spec.replicates < 1:
        raise ConfigError(f"[{spec.name}] replicates must be >= 1")
    if spec.fisher_at not in ("true", "mle"):
        raise ConfigError(f"[{spec.name}] fisher_at must be 'true' or 'mle'")
    if any(not 0 < a < 0.5 for a in spec.levels):
        raise ConfigError(f"[{spec.name}] nominal levels must lie in (0, 0.5)")
    if verb == "diagnose":
        if spec.n1 == "optimal":
            raise ConfigError(f"[{spec.name}] diagnose needs an explicit n1")
        if not spec.n2:
            raise ConfigError(f"[{spec.name}] diagnose needs an n2 list")
        if any(v < 1 for v in spec.n2):
            raise ConfigError(f"[{spec.name}] n2 values must be >= 1")
        sizes = [spec.n1 + v for v in spec.n2]
    else:
        if not spec.n:
            raise ConfigError(f"[{spec.name}] n list must not be empty")
        sizes = list(spec.n)
    for n in sizes:
        try:
            spec.design(n)
        except ValueError as e:
            raise ConfigError(f"[{spec.name}] {e}") from None


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write all files or none: stage to temporaries, then rename."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".tmp-", suffix="-" + name)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, out_dir / name))
        for tmp, dest in staged:
            os.replace(tmp, dest)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _policy(spec: ExperimentSpec) -> str:
    return f"n1-{spec.n1}"


def _manifest(spec: ExperimentSpec, extra: list[str]) -> str:
    lines = [
        f"# {spec.name}",
        f"spec_hash = {spec.spec_hash}",
        f"version = {__version__}",
        *spec.canonical().replace("=", " = ").splitlines(),
        *extra,
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

TABLE_HEADER = [
    "measure",
    "nominal",
    "left_tail",
    "right_tail",
    "excluded_count",
    "n1_used",
    "R",
    "seed",
    "spec_hash",
    "version",
]

RAW_HEADER = ["rep", "theta1_hat", "x2_hat", "theta_hat", "boundary_mle"] + [
    f"{p}_{k.value}" for p in ("norm", "stat") for k in ALL_KINDS
]


def _raw_csv(res) -> str:
    rows = []
    for i in range(res.reps):
        rows.append(
            [i, res.theta1_hat[i], res.x2_hat[i], res.theta_hat[i], int(res.boundary[i])]
            + [res.norms[k][i] for k in ALL_KINDS]
            + [res.stats[k][i] for k in ALL_KINDS]
        )
    return _csv_text(RAW_HEADER, rows)


def run_table(spec: ExperimentSpec, threads=None, dump_raw=False) -> dict[str, str]:
    """Tail-probability CSVs (one per n) plus a manifest, keyed by file name."""
    model = get_model(spec.model, spec.interval)
    files: dict[str, str] = {}
    manifest_extra = []
    for n in spec.n:
        cfg = spec.design(n)
        res = run_experiment(
            model, cfg, spec.theta, spec.reps, spec.seed, threads=threads, fisher_at=spec.fisher_at
        )
        manifest = RunManifest(
            spec.model, cfg, spec.reps, spec.seed, res.n1 if spec.n1 == "optimal" else None
        )
        manifest_extra += [f"[n = {n}]", *manifest.lines(), f"n1_used = {res.n1}",
                           f"boundary_mle_count = {res.boundary_count}"]
        rows = []
        for kind in TABLE_KINDS:
            try:
                ts = tail_probabilities(res, kind, spec.levels)
            except EmptyKindError:
                rows += [[kind.value, a, math.nan, math.nan, spec.reps, res.n1, spec.reps,
                          spec.seed, spec.spec_hash, __version__] for a in spec.levels]
                continue
            for a, lt, rt in ts.rows():
                rows.append([kind.value, a, lt, rt, ts.excluded, res.n1, spec.reps, spec.seed,
                             spec.spec_hash, __version__])
        stem = f"{spec.name}_{_policy(spec)}_n-{n}"
        files[f"{stem}.csv"] = _csv_text(TABLE_HEADER, rows)
        if dump_raw:
            files[f"{stem}_raw.csv"] = _raw_csv(res)
    files[f"{spec.name}_{_policy(spec)}.manifest.txt"] = _manifest(spec, manifest_extra)
    return files


def figure_header() -> list[str]:
    return (
        ["n", "n1_star"]
        + [f"iad_{k.value}" for k in TABLE_KINDS]
        + [f"se_{k.value}" for k in TABLE_KINDS]
        + ["t60_reference", "R", "replicates", "seed", "spec_hash", "version"]
    )


def run_figure(spec: ExperimentSpec, threads=None) -> dict[str, str]:
    """Integrated absolute CDF distance per measure along the n grid.

    With ``replicates > 1`` each point is the mean over seeds
    ``seed, seed + 1, ...`` and ``se_*`` holds its standard error.
    """
    model = get_model(spec.model, spec.interval)
    ref = t60_reference()
    rows = []
    for n in spec.n:
        cfg = spec.design(n)
        vals = {k: [] for k in TABLE_KINDS}
        n1_used = None
        for j in range(spec.replicates):
            res = run_experiment(model, cfg, spec.theta, spec.reps, spec.seed + j,
                                 threads=threads, fisher_at=spec.fisher_at)
            n1_used = res.n1
            for k in TABLE_KINDS:
                try:
                    vals[k].append(integrated_abs_cdf_diff(res, k))
                except EmptyKindError:
                    vals[k].append(math.nan)
        means = [float(np.mean(vals[k])) for k in TABLE_KINDS]
        ses = [
            float(np.std(vals[k], ddof=1) / math.sqrt(spec.replicates))
            if spec.replicates > 1 else math.nan
            for k in TABLE_KINDS
        ]
        rows.append([n, n1_used, *means, *ses, ref, spec.reps, spec.replicates, spec.seed,
                     spec.spec_hash, __version__])
    return {
        f"{spec.name}_figure.csv": _csv_text(figure_header(), rows),
        f"{spec.name}_figure.manifest.txt": _manifest(spec, []),
    }


@dataclass(frozen=True)
class LadderRow:
    n2: int
    n: int
    mean_abs_dev: dict
    boundary: int


def convergence_ladder(spec: ExperimentSpec, threads=None):
    """Mean ``|norm(theta_hat) / n - U^-2|`` per ``n2`` and the last run.

    Returns ``(rows, last_result)``; the last result feeds the chi-square
    check of the stage-wise incremental observed information.
    """
    model = get_model(spec.model, spec.interval)
    rows = []
    res = None
    for n2 in spec.n2:
        n = spec.n1 + n2
        res = run_experiment(model, spec.design(n), spec.theta, spec.reps, spec.seed,
                             threads=threads)
        dev = {
            k: float(np.mean(np.abs(res.norms[k] / n - res.u_inv_sq)))
            for k in (InfoMeasureKind.OBSERVED, InfoMeasureKind.INCREMENTAL_OBSERVED_SUBJECT,
                      InfoMeasureKind.INCREMENTAL_EXPECTED)
        }
        rows.append(LadderRow(n2, n, dev, res.boundary_count))
    return rows, res


def stage_chi2_ks(res, at: str = "true") -> tuple[float, float]:
    """KS statistic and p-value of ``J^D / (n U^-2)`` against chi-square(1).

    ``at`` picks the evaluation point of the stage-wise norm: the true
    parameter or the MLE.
    """
    norms = res.norms_true if at == "true" else res.norms
    n = res.config.n
    ratio = norms[InfoMeasureKind.INCREMENTAL_OBSERVED_STAGE] / n / res.u_inv_sq
    ks = sps.kstest(ratio, sps.chi2(1).cdf)
    return float(ks.statistic), float(ks.pvalue)


def run_diagnostics(spec: ExperimentSpec, threads=None, alpha: float = 0.01) -> dict[str, str]:
    rows, last = convergence_ladder(spec, threads)
    lines = [
        f"# convergence diagnostics: {spec.name}",
        f"model = {spec.model}",
        f"n1 = {spec.n1}",
        f"reps = {spec.reps}",
        f"seed = {spec.seed}",
        f"spec_hash = {spec.spec_hash}",
        f"version = {__version__}",
    ]
    if spec.reps < MIN_DIAGNOSTIC_REPS:
        lines.append(
            f"WARNING: insufficient replications ({spec.reps} < {MIN_DIAGNOSTIC_REPS}); "
            "verdicts below are not meaningful"
        )
    lines.append("")
    lines.append("n2,n,mean_abs_dev_observed,mean_abs_dev_incremental_observed_subject,"
                 "mean_abs_dev_incremental_expected,boundary_mle_count")
    kinds = list(rows[0].mean_abs_dev)
    for r in rows:
        lines.append(",".join([str(r.n2), str(r.n)] + [fmt(r.mean_abs_dev[k]) for k in kinds]
                              + [str(r.boundary)]))
    lines.append("")
    for k in kinds:
        seq = [r.mean_abs_dev[k] for r in rows]
        ok = all(b < a for a, b in zip(seq, seq[1:]))
        lines.append(f"{'PASS' if ok else 'FAIL'} decreasing mean |norm/n - U^-2| for {k.value}")
    for at in ("true", "mle"):
        stat, p = stage_chi2_ks(last, at)
        verdict = "PASS" if p >= alpha else "FAIL"
        lines.append(
            f"{verdict} KS J^D/(n U^-2) vs chi2(1) at theta_{at} (n2={rows[-1].n2}): "
            f"D={fmt(stat)} p={fmt(p)} level={fmt(alpha)}"
        )
    return {f"{spec.name}_diagnostics.txt": "\n".join(lines) + "\n"}


def run_n1star(spec: ExperimentSpec, stream=None) -> None:
    stream = stream or sys.stdout
    model = get_model(spec.model, spec.interval)
    for n in spec.n:
        cfg = spec.design(n, n1=1)
        trace = n1_search_trace(model, cfg, spec.theta)
        best = optimal_n1(model, cfg, spec.theta)
        stream.write(f"# {spec.name} model={spec.model} n={n} n1_star={best}\n")
        stream.write("n1,fisher_information\n")
        for i, v in enumerate(trace, start=1):
            stream.write(f"{i},{fmt(v)}\n")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twostage", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in [
        ("table", "tail-probability tables"),
        ("figure", "integrated absolute CDF differences along an n grid"),
        ("diagnose", "random-norm convergence ladder and chi-square check"),
        ("n1star", "print the locally optimal stage-1 size search trace"),
    ]:
        s = sub.add_parser(verb, help=help_)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--section", action="append", help="run only these scenarios")
        if verb != "n1star":
            s.add_argument("--out", type=Path, default=None)
            s.add_argument("--seed", type=int, default=None, help="override master seed")
            s.add_argument("--reps", type=int, default=None, help="override replication count")
            s.add_argument("--threads", type=int, default=None)
        if verb == "table":
            s.add_argument("--dump-raw", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        specs = parse_config(text, args.verb, args.section)
        overrides = {}
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        if getattr(args, "reps", None) is not None:
            overrides["reps"] = args.reps
        if overrides:
            specs = [replace(s, **overrides) for s in specs]
            for s in specs:
                validate(s, args.verb)
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")

        if args.verb == "n1star":
            for s in specs:
                run_n1star(s)
            return 0

        outputs: dict[Path, dict[str, str]] = {}
        for s in specs:
            out_dir = args.out or Path(s.out or "out")
            if args.verb == "table":
                files = run_table(s, args.threads, args.dump_raw)
            elif args.verb == "figure":
                files = run_figure(s, args.threads)
            else:
                files = run_diagnostics(s, args.threads)
            outputs.setdefault(out_dir, {}).update(files)
        for out_dir, files in outputs.items():
            write_outputs(out_dir, files)
            for name in files:
                print(out_dir / name)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (QuadratureError, FloatingPointError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
