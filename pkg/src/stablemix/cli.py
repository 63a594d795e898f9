"""Command-line front end.

Every run is described by a JSON config (versioned, unknown keys rejected)
plus a handful of flags that override config entries.  A run writes CSV
outputs and a ``report.json`` that embeds the resolved config and a flat
dictionary of named statistics; ``replay`` re-executes the embedded config
and demands bit-identical statistics, which is the reproducibility contract
the whole package is built around.

Exit codes: 0 when every check passed, 1 when a check or a replay
comparison failed, 2 for configuration or hypothesis errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, laws, matalg, series, streams, verify
from .ecf import (
    DEFAULT_DELTA,
    default_grid,
    estimate_ecf,
    sup_distance,
    write_ecf_csv,
)
from .errors import (
    ConfigError,
    HypothesisViolationError,
    InsufficientDataError,
    InvalidInputError,
    RangeOverflowError,
    ReproducibilityError,
    StablemixError,
)
from .processes import (
    process_from_json,
    simulate_ensemble,
    simulate_path,
    write_paths_csv,
)

SCHEMA_VERSION = 1

# Allowed config keys per subcommand, beyond the common trio.
_COMMON_KEYS = {"schema_version", "seed", "workers"}
_GRID_KEYS = {"grid_directions", "grid_radii"}
_COMMAND_KEYS = {
    "sample-law": {"law", "count", "delta", "factor"} | _GRID_KEYS,
    "series": {"P", "law", "count", "tol", "r", "delta", "factor"} | _GRID_KEYS,
    "lemma": {"P", "law", "J", "n_paths", "detail_paths", "allow_diagnostic"},
    "simulate": {"process", "checkpoints", "n_paths", "trajectories"},
    "verify-mixing": {
        "process", "checkpoints", "n_paths", "r", "delta", "factor",
        "statistic_of", "family", "min_paths",
    } | _GRID_KEYS,
    "verify-stable": {
        "process", "checkpoints", "n_paths", "r", "delta", "factor",
        "family", "min_paths",
    } | _GRID_KEYS,
    "conditions": {
        "process", "checkpoints", "n_paths", "tol", "levels", "bound", "lags",
    },
}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def validate_config(command: str, cfg: dict) -> None:
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"config must declare schema_version {SCHEMA_VERSION}, "
            f"got {cfg.get('schema_version')!r}"
        )
    allowed = _COMMON_KEYS | _COMMAND_KEYS[command]
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown config keys for {command}: {', '.join(unknown)}"
        )
    if "seed" not in cfg:
        raise ConfigError("seed is required (set it in the config or pass --seed)")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer")


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _grid_for(cfg: dict, dim: int):
    kwargs = {}
    if "grid_directions" in cfg:
        kwargs["n_directions"] = int(cfg["grid_directions"])
    if "grid_radii" in cfg:
        kwargs["radii"] = tuple(float(x) for x in cfg["grid_radii"])
    return default_grid(dim, **kwargs)


def _law_samples(law, seed: int, count: int, workers: int) -> np.ndarray:
    """Stream-addressed iid draws from an increment law."""
    if count < 1:
        raise ConfigError("count must be positive")

    def chunk(start, n):
        u = streams.uniform_block(
            seed, streams.STREAM_LAW, start, n, law.uniforms_per_draw
        )
        return law.from_uniforms(u)

    return np.concatenate(streams.map_chunks(chunk, count, workers), axis=0)


def _write_samples_csv(path, samples: np.ndarray) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = samples.shape[1]
        writer.writerow([f"x_{i}" for i in range(dim)])
        for row in samples:
            writer.writerow([repr(float(x)) for x in row])


# Handlers return (statistics, verdicts, derived, outputs, passed).


def _run_sample_law(cfg, outdir, workers):
    law = laws.law_from_json(_need(cfg, "law"))
    count = int(_need(cfg, "count"))
    delta = float(cfg.get("delta", DEFAULT_DELTA))
    factor = float(cfg.get("factor", 3.0))
    samples = _law_samples(law, cfg["seed"], count, workers)
    grid = _grid_for(cfg, law.dim)
    est = estimate_ecf(samples, grid, delta, workers)
    ref = laws.cf_increment(law, grid.points)
    dist = sup_distance(est, ref)
    threshold = factor * est.radius
    _write_samples_csv(os.path.join(outdir, "samples.csv"), samples)
    write_ecf_csv(os.path.join(outdir, "ecf.csv"), est)
    stats = {
        "ecf_distance": dist,
        "radius": est.radius,
        "threshold": threshold,
    }
    return stats, [], {}, ["samples.csv", "ecf.csv"], dist <= threshold


def _run_series(cfg, outdir, workers):
    P = matalg.matrix_from_json(_need(cfg, "P"))
    law = laws.law_from_json(_need(cfg, "law"))
    count = int(_need(cfg, "count"))
    delta = float(cfg.get("delta", DEFAULT_DELTA))
    factor = float(cfg.get("factor", 3.0))
    if ("tol" in cfg) == ("r" in cfg):
        raise ConfigError("series needs exactly one of 'tol' or 'r'")
    if "tol" in cfg:
        plan = series.truncation_index(P, float(cfg["tol"]))
    else:
        r = int(cfg["r"])
        cert, norms = matalg.decay_certificate(P)
        plan = series.TruncationPlan(r, matalg.tail_bound(norms, cert, r), cert)
    samples = series.series_ensemble(P, law, plan.r, cfg["seed"], count, workers)
    grid = _grid_for(cfg, law.dim)
    est = estimate_ecf(samples, grid, delta, workers)
    ref = laws.series_cf_values(law, P, plan.r, grid.points)
    dist = sup_distance(est, ref)
    threshold = factor * est.radius
    _write_samples_csv(os.path.join(outdir, "series_samples.csv"), samples)
    write_ecf_csv(os.path.join(outdir, "ecf.csv"), est)
    stats = {
        "r": float(plan.r),
        "tail_norm_bound": plan.tail_norm_bound,
        "ecf_distance": dist,
        "radius": est.radius,
        "threshold": threshold,
    }
    derived = {"truncation_plan": plan.to_json()}
    return stats, [], derived, ["series_samples.csv", "ecf.csv"], dist <= threshold


def _run_lemma(cfg, outdir, workers):
    P = matalg.matrix_from_json(_need(cfg, "P"))
    law = laws.law_from_json(
        _need(cfg, "law"), allow_diagnostic=bool(cfg.get("allow_diagnostic", False))
    )
    diag = series.lemma_diagnostics(
        P,
        law,
        int(_need(cfg, "J")),
        int(_need(cfg, "n_paths")),
        cfg["seed"],
        workers=workers,
        detail_paths=int(cfg.get("detail_paths", 8)),
    )
    series.write_lemma_csv(os.path.join(outdir, "lemma.csv"), diag)
    # Median rather than mean: heavy-tailed samplers overflow some draws
    # to inf, and report.json must stay strict JSON (finite numbers only).
    stats = {
        "late_exceedance_fraction": diag.late_exceedance_fraction,
        "exceedance_freq_at_J": float(diag.per_index_exceedance_freq[-1]),
        "mean_exceedance_count": float(diag.exceedance_count.mean()),
        "median_log_moment": float(np.median(diag.log_moment)),
        "infinite_log_moment_fraction": float(np.isinf(diag.log_moment).mean()),
    }
    derived = {"J": diag.J, "n_paths": diag.n_paths}
    return stats, [], derived, ["lemma.csv"], True


def _run_simulate(cfg, outdir, workers):
    spec = process_from_json(_need(cfg, "process"))
    ens = simulate_ensemble(
        spec, _need(cfg, "checkpoints"), int(_need(cfg, "n_paths")),
        cfg["seed"], workers,
    )
    import csv

    outputs = ["scaled.csv"]
    with open(os.path.join(outdir, "scaled.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        d = ens.dim
        writer.writerow(
            ["path_id", "checkpoint", "in_g"]
            + [f"bu_{i}" for i in range(d)]
            + [f"qu_{i}" for i in range(d)]
        )
        for n in ens.checkpoints:
            bu, qu = ens.bu[n], ens.qu[n]
            for pid in range(ens.n_paths):
                writer.writerow(
                    [pid, n, int(ens.in_g[pid])]
                    + [repr(float(x)) for x in bu[pid]]
                    + [repr(float(x)) for x in qu[pid]]
                )
    stats = {}
    for n in ens.checkpoints:
        stats[f"bu_norm_mean.n{n}"] = float(
            np.linalg.norm(ens.bu[n], axis=1).mean()
        )
        stats[f"qu_norm_mean.n{n}"] = float(
            np.linalg.norm(ens.qu[n], axis=1).mean()
        )
    trajectories = int(cfg.get("trajectories", 0))
    if trajectories > 0:
        # Illustrative full paths on a separate deterministic stream; the
        # ensemble statistics above never depend on these.
        rng = np.random.default_rng(cfg["seed"])
        paths = [
            simulate_path(spec, ens.checkpoints[-1], rng)
            for _ in range(trajectories)
        ]
        write_paths_csv(os.path.join(outdir, "paths.csv"), paths)
        outputs.append("paths.csv")
    return stats, [], {}, outputs, True


def _family_for(cfg, ens):
    choice = cfg.get("family", "default")
    if choice == "omega":
        return verify.omega_family()
    if choice == "default":
        return verify.default_family(ens)
    raise ConfigError(f"unknown event family {choice!r}")


def _verdict_stats(verdict) -> dict:
    out = {}
    for n, v in zip(verdict.checkpoints, verdict.statistics):
        out[f"{verdict.condition}.n{n}"] = float(v)
    out[f"{verdict.condition}.threshold"] = float(verdict.thresholds[-1])
    return out


def _run_verify(cfg, outdir, workers, stable: bool):
    spec = process_from_json(_need(cfg, "process"))
    ens = simulate_ensemble(
        spec, _need(cfg, "checkpoints"), int(_need(cfg, "n_paths")),
        cfg["seed"], workers,
    )
    family = _family_for(cfg, ens)
    grid = _grid_for(cfg, spec.dim)
    kwargs = dict(
        family=family,
        grid=grid,
        r=cfg.get("r"),
        delta=float(cfg.get("delta", DEFAULT_DELTA)),
        factor=float(cfg.get("factor", 3.0)),
        min_paths=int(cfg.get("min_paths", verify.MIN_FILTERED_PATHS)),
        workers=workers,
    )
    if stable:
        verdict = verify.verify_stable(ens, **kwargs)
        which = "qu"
    else:
        which = cfg.get("statistic_of", "bu")
        if which not in ("bu", "qu"):
            raise ConfigError("statistic_of must be 'bu' or 'qu'")
        verdict = verify.verify_mixing(ens, which=which, **kwargs)
    mask = ens.in_g & ens.eta_invertible
    final = ens.checkpoints[-1]
    values = (ens.bu if which == "bu" else ens.qu)[final][mask]
    est = estimate_ecf(values, grid, kwargs["delta"], workers)
    write_ecf_csv(os.path.join(outdir, "ecf.csv"), est)
    return _verdict_stats(verdict), [verdict], {}, ["ecf.csv"], verdict.passed


def _run_conditions(cfg, outdir, workers):
    spec = process_from_json(_need(cfg, "process"))
    ens = simulate_ensemble(
        spec, _need(cfg, "checkpoints"), int(_need(cfg, "n_paths")),
        cfg["seed"], workers,
    )
    tol = float(cfg.get("tol", verify.DEFAULT_TOLERANCE))
    verdicts = [
        verify.check_condition_i(ens, tol=tol),
        verify.check_condition_ii(
            ens,
            levels=tuple(cfg.get("levels", (2.0, 4.0, 8.0, 16.0))),
            bound=float(cfg.get("bound", 0.05)),
        ),
        verify.check_condition_iii(
            ens, r_list=tuple(cfg.get("lags", (1, 2, 4))), tol=tol
        ),
    ]
    stats = {}
    for v in verdicts:
        stats.update(_verdict_stats(v))
    passed = all(v.passed for v in verdicts)
    return stats, verdicts, {}, [], passed


_RUNNERS = {
    "sample-law": _run_sample_law,
    "series": _run_series,
    "lemma": _run_lemma,
    "simulate": _run_simulate,
    "verify-mixing": lambda c, o, w: _run_verify(c, o, w, stable=False),
    "verify-stable": lambda c, o, w: _run_verify(c, o, w, stable=True),
    "conditions": _run_conditions,
}


def run_command(command: str, cfg: dict, outdir: str) -> dict:
    """Validate, execute, and write ``report.json``; returns the report."""
    validate_config(command, cfg)
    workers = int(cfg.get("workers", 1))
    os.makedirs(outdir, exist_ok=True)
    started = time.perf_counter()
    stats, verdicts, derived, outputs, passed = _RUNNERS[command](
        cfg, outdir, workers
    )
    report = {
        "version": __version__,
        "command": command,
        "config": cfg,
        "statistics": stats,
        "verdicts": [v.to_json() for v in verdicts],
        "derived": derived,
        "outputs": outputs,
        "pass": bool(passed),
        "wall_clock_s": time.perf_counter() - started,
        "streams": {
            "chunk_paths": streams.CHUNK_PATHS,
            "process": streams.STREAM_PROCESS,
            "series": streams.STREAM_SERIES,
            "lemma": streams.STREAM_LEMMA,
            "law": streams.STREAM_LAW,
        },
    }
    # allow_nan=False keeps the report strict JSON; a non-finite statistic
    # is a bug and should fail loudly here, not poison downstream parsers.
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")
    return report


def replay_report(report_path: str, outdir: str | None = None,
                  seed: int | None = None, workers: int | None = None) -> dict:
    """Re-execute a report's embedded config and compare statistics bitwise.

    Raises :class:`ReproducibilityError` naming the first statistic that
    diverged.  Overriding the seed is the intended negative test: any
    honest statistic must move.
    """
    try:
        with open(report_path) as fh:
            stored = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read report {report_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report is not valid JSON: {exc}") from exc
    for key in ("command", "config", "statistics"):
        if key not in stored:
            raise ConfigError(f"report is missing {key!r}; not a run report")
    command = stored["command"]
    if command not in _RUNNERS:
        raise ConfigError(f"report names unknown command {command!r}")
    cfg = dict(stored["config"])
    if seed is not None:
        cfg["seed"] = seed
    if workers is not None:
        cfg["workers"] = workers
    if outdir is None:
        outdir = os.path.join(os.path.dirname(report_path) or ".", "replay")
    fresh = run_command(command, cfg, outdir)
    old, new = stored["statistics"], fresh["statistics"]
    if sorted(old) != sorted(new):
        raise ReproducibilityError(
            "replay produced a different set of statistics: "
            f"{sorted(set(old) ^ set(new))}"
        )
    for key in old:
        a, b = float(old[key]), float(new[key])
        if a == b or (math.isnan(a) and math.isnan(b)):
            continue
        raise ReproducibilityError(
            f"statistic {key!r} diverged: stored {a!r}, replayed {b!r}"
        )
    return fresh


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stablemix",
        description="Simulate normalized explosive processes and verify "
        "their stable and mixing limits.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the JSON run config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument(
            "--workers", type=int, help="worker threads (never affects values)"
        )
        p.add_argument("--out", help="output directory (default: stablemix-out)")
        return p

    add("sample-law", "draw iid increments and check their ecf against the cf")
    add("series", "sample the truncated limit series and check its ecf")
    add("lemma", "term-wise exceedance diagnostics for the limit series")
    add("simulate", "simulate process paths and dump scaled checkpoints")
    add("verify-mixing", "event-based mixing-convergence check")
    add("verify-stable", "event-based stable-convergence check")
    add("conditions", "check the structural hypotheses on an ensemble")

    rp = sub.add_parser("replay", help="re-run a report and compare bitwise")
    rp.add_argument("report", help="path to a report.json from a previous run")
    rp.add_argument("--seed", type=int, help="override the embedded seed")
    rp.add_argument("--workers", type=int, help="override the worker count")
    rp.add_argument("--out", help="output directory (default: <report dir>/replay)")
    return parser


def _print_outcome(report: dict) -> None:
    for v in report["verdicts"]:
        tag = "PASS" if v["pass"] else "FAIL"
        print(
            f"[{tag}] {v['condition']}: final={v['statistics'][-1]:.6g} "
            f"threshold={v['thresholds'][-1]:.6g}"
        )
    if not report["verdicts"]:
        stats = report["statistics"]
        if "ecf_distance" in stats:
            tag = "PASS" if report["pass"] else "FAIL"
            print(
                f"[{tag}] ecf distance {stats['ecf_distance']:.6g} "
                f"(threshold {stats['threshold']:.6g})"
            )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            report = replay_report(
                args.report, outdir=args.out, seed=args.seed, workers=args.workers
            )
            n = len(report["statistics"])
            print(f"replay ok: {n} statistics identical")
            return 0
        if args.config is None:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers is not None:
            cfg["workers"] = args.workers
        outdir = args.out or "stablemix-out"
        report = run_command(args.command, cfg, outdir)
        _print_outcome(report)
        print(f"report: {os.path.join(outdir, 'report.json')}")
        return 0 if report["pass"] else 1
    except ReproducibilityError as exc:
        print(f"reproducibility failure: {exc}", file=sys.stderr)
        return 1
    except (
        ConfigError,
        InvalidInputError,
        HypothesisViolationError,
        InsufficientDataError,
        RangeOverflowError,
        StablemixError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
