"""Reproducible experiment runner.

Every study is driven by a ``RunConfig``: a command name plus strictly
validated parameters.  Configs come from command-line flags or from a JSON
file given with ``--config`` (file values take precedence over flags).
Seeds are mandatory for every stochastic command; there is no wall-clock
default, so identical configs replay byte-identically, also under
``--threads N`` (replicas use split streams and are aggregated in index
order).

Outputs are written atomically (temp file in the same directory, then rename)
and accompanied by a ``<out>.meta.json`` sidecar carrying the fully resolved
config, its hash and the package version.  CSV uses '.' decimals and 17
significant digits.  Invalid configs exit nonzero with one machine-parsable
JSON error line on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import __version__
from .book import simulate
from .coupling import coupled_run, skeleton_transition_tally
from .displacement import DiscreteDist, DisplacementDist, dist_from_config, prob_positive
from .phase import classify, drift_estimate, survival_curve, truncation_study
from .streams import RandomStream

__all__ = ["RunConfig", "parse_config", "run", "main"]

_COMMANDS = (
    "classify",
    "simulate",
    "couple-test",
    "y-chain-test",
    "phase-sweep",
    "survival",
    "truncation-study",
)

# keys every command accepts on top of its own table entry
_COMMON_KEYS = {"command", "out", "format", "threads"}

_ALLOWED = {
    "classify": {"p", "dist"},
    "simulate": {"p", "dist", "horizon", "seed", "events"},
    "couple-test": {"p", "dist", "horizon", "seed", "seeds", "check_every"},
    "y-chain-test": {"p", "dist", "samples", "seed"},
    "phase-sweep": {"p", "p_grid", "dist", "horizon", "replicas", "seed"},
    "survival": {"p", "dist", "depth", "depths", "replicas", "seed", "clip", "node_budget"},
    "truncation-study": {"p", "dist", "clips", "depth", "replicas", "seed", "node_budget"},
}

_REQUIRED = {
    "classify": {"p", "dist"},
    "simulate": {"p", "dist", "horizon", "seed"},
    "couple-test": {"p", "dist", "horizon", "seed"},
    "y-chain-test": {"p", "dist", "samples", "seed"},
    "phase-sweep": {"dist", "horizon", "replicas", "seed"},
    "survival": {"p", "dist", "replicas", "seed"},
    "truncation-study": {"p", "dist", "clips", "depth", "replicas", "seed"},
}


@dataclass(frozen=True)
class RunConfig:
    """Fully validated parameters of one study."""

    command: str
    dist: DisplacementDist
    p: Optional[float] = None
    p_grid: tuple[float, ...] = ()
    horizon: Optional[int] = None
    depth: Optional[int] = None
    depths: tuple[int, ...] = ()
    replicas: Optional[int] = None
    samples: Optional[int] = None
    seeds: int = 10
    seed: Optional[int] = None
    clip: Optional[float] = None
    clips: tuple[float, ...] = ()
    node_budget: int = 10_000_000
    check_every: int = 512
    events: bool = False
    threads: int = 1
    out: Optional[str] = None
    format: Optional[str] = None
    resolved: dict = field(default_factory=dict, compare=False)


class ConfigError(ValueError):
    pass


def _parse_p(raw, key: str) -> float:
    if isinstance(raw, str):
        try:
            value = float(Fraction(raw))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    elif isinstance(raw, (int, float)):
        value = float(raw)
    else:
        raise ConfigError(f"{key}: expected a number, got {raw!r}")
    return value


def _require_positive_int(raw, key: str) -> int:
    if not isinstance(raw, int) or isinstance(raw, bool) or raw <= 0:
        raise ConfigError(f"{key}: expected a positive integer, got {raw!r}")
    return raw


def config_from_dict(data: dict) -> RunConfig:
    """Strictly validate a raw mapping into a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    command = data.get("command")
    if command not in _COMMANDS:
        raise ConfigError(f"command: expected one of {list(_COMMANDS)}, got {command!r}")
    allowed = _ALLOWED[command] | _COMMON_KEYS
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {sorted(unknown)}")
    missing = _REQUIRED[command] - set(data)
    if command == "phase-sweep" and "p" in data and "p_grid" not in data:
        pass  # single p accepted in place of a grid
    elif command == "phase-sweep" and "p_grid" not in data and "p" not in data:
        missing = missing | {"p_grid"}
    if command == "survival" and "depth" not in data and "depths" not in data:
        missing = missing | {"depth"}
    if missing:
        raise ConfigError(f"missing keys for {command}: {sorted(missing)}")

    dist = dist_from_config(data["dist"])

    kwargs: dict = {"command": command, "dist": dist}
    if "p" in data:
        p = _parse_p(data["p"], "p")
        hi_ok = p == 1.0 and command == "simulate"
        if not (0.0 < p < 1.0 or hi_ok):
            raise ConfigError("p: p must lie in (0, 1)")
        kwargs["p"] = p
    if "p_grid" in data:
        grid = data["p_grid"]
        if not isinstance(grid, (list, tuple)) or not grid:
            raise ConfigError("p_grid: expected a nonempty list")
        parsed = tuple(_parse_p(v, "p_grid") for v in grid)
        if any(not 0.0 < v < 1.0 for v in parsed):
            raise ConfigError("p_grid: p must lie in (0, 1)")
        kwargs["p_grid"] = parsed
    for key in ("horizon", "depth", "replicas", "samples", "seeds", "threads",
                "node_budget", "check_every"):
        if key in data:
            kwargs[key] = _require_positive_int(data[key], key)
    if "seed" in data:
        if not isinstance(data["seed"], int) or isinstance(data["seed"], bool) or data["seed"] < 0:
            raise ConfigError("seed: expected a nonnegative integer")
        kwargs["seed"] = data["seed"]
    if "depths" in data:
        ds = data["depths"]
        if not isinstance(ds, (list, tuple)) or not ds:
            raise ConfigError("depths: expected a nonempty list")
        kwargs["depths"] = tuple(_require_positive_int(d, "depths") if d != 0 else 0 for d in ds)
    if "clip" in data:
        kwargs["clip"] = float(data["clip"])
    if "clips" in data:
        cs = data["clips"]
        if not isinstance(cs, (list, tuple)) or not cs:
            raise ConfigError("clips: expected a nonempty list")
        kwargs["clips"] = tuple(float(c) for c in cs)
    if "events" in data:
        if not isinstance(data["events"], bool):
            raise ConfigError("events: expected a boolean")
        kwargs["events"] = data["events"]
    if "out" in data:
        kwargs["out"] = str(data["out"])
    if "format" in data:
        if data["format"] not in ("csv", "json"):
            raise ConfigError("format: expected 'csv' or 'json'")
        kwargs["format"] = data["format"]

    resolved = dict(data)
    resolved["dist"] = data["dist"]
    cfg = RunConfig(**kwargs, resolved=resolved)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse a JSON config document; unknown keys are rejected."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return config_from_dict(data)


def _fmt_real(x) -> str:
    if isinstance(x, bool):
        raise TypeError("not a real")
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else _fmt_real(cell) for cell in row))
    return "\n".join(lines) + "\n"


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _resolved_config_json(cfg: RunConfig) -> dict:
    """Echo of the config with every default the run actually used."""
    full = {
        "command": cfg.command,
        "dist": cfg.resolved.get("dist"),
        "threads": cfg.threads,
        "format": cfg.format,
        "out": cfg.out,
    }
    simple = {
        "p": cfg.p,
        "horizon": cfg.horizon,
        "depth": cfg.depth,
        "replicas": cfg.replicas,
        "samples": cfg.samples,
        "seed": cfg.seed,
        "clip": cfg.clip,
    }
    relevant = _ALLOWED[cfg.command]
    for key, value in simple.items():
        if key in relevant and value is not None:
            full[key] = value
    if "p_grid" in relevant and cfg.p_grid:
        full["p_grid"] = list(cfg.p_grid)
    if "depths" in relevant and cfg.depths:
        full["depths"] = list(cfg.depths)
    if "clips" in relevant:
        full["clips"] = list(cfg.clips)
    if "node_budget" in relevant:
        full["node_budget"] = cfg.node_budget
    if "check_every" in relevant:
        full["check_every"] = cfg.check_every
    if "seeds" in relevant:
        full["seeds"] = cfg.seeds
    if "events" in relevant:
        full["events"] = cfg.events
    return full


def _run_classify(cfg: RunConfig) -> tuple[str, str]:
    report = classify(cfg.p, cfg.dist)
    return _json_text(report.to_json()), "json"


def _run_simulate(cfg: RunConfig) -> tuple[str, str]:
    traj = simulate(cfg.p, cfg.dist, cfg.horizon, RandomStream(cfg.seed),
                    record_events=cfg.events)
    header = ["step", "price", "mass"] + (["event"] if cfg.events else [])
    rows = []
    for n in range(len(traj.prices)):
        row: list = [n, traj.prices[n], traj.masses[n]]
        if cfg.events:
            row.append("start" if n == 0 else traj.events[n - 1])
        rows.append(row)
    if (cfg.format or "csv") == "json":
        payload = {
            "prices": [float(v) for v in traj.prices],
            "masses": traj.masses,
            "tau": traj.tau,
        }
        return _json_text(payload), "json"
    return _csv(header, rows), "csv"


def _run_couple_test(cfg: RunConfig) -> tuple[str, str]:
    runs = []
    for i in range(cfg.seeds):
        r = coupled_run(cfg.p, cfg.dist, cfg.horizon, cfg.seed, stream_id=i,
                        check_every=cfg.check_every)
        runs.append(
            {
                "stream": i,
                "equal": r.multisets_equal,
                "first_mismatch": r.first_mismatch,
                "regenerations": len(r.regeneration_steps),
                "tau": r.book_traj.tau,
            }
        )
    payload = {
        "p": cfg.p,
        "horizon": cfg.horizon,
        "seeds": cfg.seeds,
        "all_equal": all(r["equal"] for r in runs),
        "runs": runs,
    }
    return _json_text(payload), "json"


def _run_y_chain_test(cfg: RunConfig) -> tuple[str, str]:
    if not isinstance(cfg.dist, DiscreteDist):
        raise ConfigError("y-chain-test requires a discrete displacement law")
    tally = skeleton_transition_tally(cfg.p, cfg.dist, cfg.samples, cfg.seed)
    total = cfg.samples
    checks = []
    for value, prob in cfg.dist.atoms:
        expected = cfg.p * float(prob)
        observed = tally.get(("place", value), 0) / total
        sigma = (expected * (1 - expected) / total) ** 0.5
        checks.append(
            {
                "transition": f"place@{_fmt_real(value)}",
                "expected": expected,
                "observed": observed,
                "sigma": sigma,
                "within_3_sigma": abs(observed - expected) <= 3 * sigma,
            }
        )
    expected = 1 - cfg.p
    observed = tally["retire"] / total
    sigma = (expected * (1 - expected) / total) ** 0.5
    checks.append(
        {
            "transition": "retire",
            "expected": expected,
            "observed": observed,
            "sigma": sigma,
            "within_3_sigma": abs(observed - expected) <= 3 * sigma,
        }
    )
    payload = {
        "p": cfg.p,
        "samples": total,
        "all_within_3_sigma": all(c["within_3_sigma"] for c in checks),
        "checks": checks,
    }
    return _json_text(payload), "json"


def _run_phase_sweep(cfg: RunConfig) -> tuple[str, str]:
    grid = cfg.p_grid if cfg.p_grid else (cfg.p,)
    rows = []
    for p in grid:
        report = classify(p, cfg.dist)
        drift = drift_estimate(p, cfg.dist, cfg.horizon, cfg.replicas, cfg.seed,
                               threads=cfg.threads)
        rows.append(
            [
                p,
                report.mean_x,
                report.prob_positive,
                report.a,
                report.threshold,
                report.regime,
                drift.slope,
                drift.ci95,
                drift.fraction_positive,
            ]
        )
    header = ["p", "meanX", "probPositive", "a", "threshold", "regime", "slope",
              "ci95", "fractionPositive"]
    if (cfg.format or "csv") == "json":
        payload = [dict(zip(header, row)) for row in rows]
        return _json_text(payload), "json"
    return _csv(header, rows), "csv"


def _run_survival(cfg: RunConfig) -> tuple[str, str]:
    dist = cfg.dist
    k_label = "inf"
    if cfg.clip is not None:
        from .displacement import truncate

        dist = truncate(dist, cfg.clip)
        k_label = _fmt_real(cfg.clip)
    depths = cfg.depths if cfg.depths else (cfg.depth,)
    curve = survival_curve(cfg.p, dist, depths, cfg.replicas, cfg.seed,
                           node_budget=cfg.node_budget, threads=cfg.threads)
    rows = []
    for est in curve.estimates:
        rows.append(
            [
                cfg.p,
                k_label,
                est.depth,
                est.probability,
                (est.ci_high - est.ci_low) / 2.0,
                est.budget_fraction,
            ]
        )
    header = ["p", "K", "d", "q_d", "ci95", "budgetFraction"]
    if (cfg.format or "csv") == "json":
        payload = [dict(zip(header, row)) for row in rows]
        return _json_text(payload), "json"
    return _csv(header, rows), "csv"


def _run_truncation_study(cfg: RunConfig) -> tuple[str, str]:
    rows_out = []
    rows = truncation_study(cfg.p, cfg.dist, cfg.clips, cfg.depth, cfg.replicas,
                            cfg.seed, node_budget=cfg.node_budget, threads=cfg.threads)
    for row in rows:
        rows_out.append(
            [
                cfg.p,
                row.clip,
                row.a,
                row.threshold,
                row.depth,
                row.probability,
                (row.ci_high - row.ci_low) / 2.0,
                row.budget_fraction,
            ]
        )
    header = ["p", "K", "a_K", "threshold_K", "d", "q_d", "ci95", "budgetFraction"]
    if (cfg.format or "csv") == "json":
        payload = [dict(zip(header, row)) for row in rows_out]
        return _json_text(payload), "json"
    return _csv(header, rows_out), "csv"


_RUNNERS = {
    "classify": _run_classify,
    "simulate": _run_simulate,
    "couple-test": _run_couple_test,
    "y-chain-test": _run_y_chain_test,
    "phase-sweep": _run_phase_sweep,
    "survival": _run_survival,
    "truncation-study": _run_truncation_study,
}


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(text.encode("utf-8"))
    os.replace(tmp, path)


def run(cfg: RunConfig) -> int:
    """Execute one study; writes output and sidecar, or prints to stdout."""
    text, _fmt = _RUNNERS[cfg.command](cfg)
    if cfg.out is None:
        sys.stdout.write(text)
        return 0
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(out, text)
    resolved = _resolved_config_json(cfg)
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    meta = {
        "config": resolved,
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "seed": cfg.seed,
        "version": __version__,
    }
    _write_atomic(out.with_name(out.name + ".meta.json"), _json_text(meta))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bookwalk",
        description="Order-book chain, tree coupling, and drift-phase studies",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp, *, seed: bool = True) -> None:
        sp.add_argument("--dist", help="displacement law as JSON")
        sp.add_argument("--config", help="JSON config file; values override flags")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--threads", type=int)
        if seed:
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("classify", help="analytic regime classification")
    sp.add_argument("--p", type=str)
    common(sp, seed=False)

    sp = sub.add_parser("simulate", help="one seeded book trajectory to CSV")
    sp.add_argument("--p", type=str)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--events", action="store_true", default=None)
    common(sp)

    sp = sub.add_parser("couple-test", help="pathwise book-vs-tree equality check")
    sp.add_argument("--p", type=str)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--seeds", type=int, help="number of replica streams")
    sp.add_argument("--check-every", dest="check_every", type=int)
    common(sp)

    sp = sub.add_parser("y-chain-test", help="skeleton-chain transition frequencies")
    sp.add_argument("--p", type=str)
    sp.add_argument("--samples", type=int)
    common(sp)

    sp = sub.add_parser("phase-sweep", help="classification plus drift across p values")
    sp.add_argument("--p", type=str)
    sp.add_argument("--p-grid", dest="p_grid", type=str, help="comma-separated p values")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--replicas", type=int)
    common(sp)

    sp = sub.add_parser("survival", help="barrier-pruned tree depth-survival estimates")
    sp.add_argument("--p", type=str)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--depths", type=str, help="comma-separated depths")
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--clip", type=float)
    sp.add_argument("--node-budget", dest="node_budget", type=int)
    common(sp)

    sp = sub.add_parser("truncation-study", help="a_K, threshold_K and survival per clip level")
    sp.add_argument("--p", type=str)
    sp.add_argument("--clips", type=str, help="comma-separated increasing clip levels")
    sp.add_argument("--depth", type=int)
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--node-budget", dest="node_budget", type=int)
    common(sp)

    return parser


def _flags_to_dict(args: argparse.Namespace) -> dict:
    data: dict = {"command": args.command}
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        if key == "dist":
            try:
                data["dist"] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"dist: invalid JSON ({exc})") from None
        elif key == "p_grid":
            data["p_grid"] = [v.strip() for v in value.split(",") if v.strip()]
        elif key == "depths":
            data["depths"] = [int(v) for v in value.split(",") if v.strip()]
        elif key == "clips":
            data["clips"] = [float(v) for v in value.split(",") if v.strip()]
        elif key == "p":
            data["p"] = value if isinstance(value, str) else value
        else:
            data[key] = value
    return data


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        data = _flags_to_dict(args)
        if getattr(args, "config", None):
            try:
                file_data = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"config: cannot read {args.config} ({exc})") from None
            if not isinstance(file_data, dict):
                raise ConfigError("config: expected a JSON object")
            data.update(file_data)  # config file overrides flags
        cfg = config_from_dict(data)
        return run(cfg)
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(_json_text({"error": str(exc)}))
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
