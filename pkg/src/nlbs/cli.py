"""Command-line front end.

Configuration precedence, lowest to highest: built-in defaults, the JSON
config file, command-line flags. Caps additionally take ``NBS_CAPS_OVERRIDE``
on top of the file's ``caps`` object.

Exit codes: 0 success, 2 validation error, 3 cap exceeded, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import secrets
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .analysis import correlation_report, tv_distance
from .config import Caps, CapacityError
from .fock import UnitaryError, haar_unitary, permanent, permanents, save_unitary, unitary_from_json
from .protocol import (
    ConfigError,
    ProtocolConfig,
    classical_local_sampler,
    conditional_symmetry_check,
    empirical_distribution,
    exact_joint_distribution,
    run_protocol,
    total_photon_pmf,
    write_records,
    write_table_csv,
)
from .states import (
    StateError,
    default_cutoff,
    fdtsv_density,
    load_density,
    product_density,
    thermal_density,
    tmsv_density,
)

EXIT_OK, EXIT_VALIDATION, EXIT_CAPS, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_TV_THRESHOLD = 0.02
DEFAULT_MIN_SHOTS = 10_000


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _validation(msg: str) -> CliError:
    return CliError("validation", msg, EXIT_VALIDATION)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _draw_seed() -> int:
    return secrets.randbits(63)


def _dump(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is not None:
        path.write_text(text + "\n")
    return text


def _sha256_lines(lines) -> str:
    h = hashlib.sha256()
    for line in sorted(lines):
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _load_json(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise _validation(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _validation(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise _validation(f"{path} must hold a JSON object")
    return data


def _resolve_unitary(source, m: int, base: Path):
    if source is None or source == "identity":
        return None
    if isinstance(source, str):
        source = {"file": source}
    if not isinstance(source, dict):
        raise _validation("unitary must be 'identity', a file path, or an object")
    if "file" in source:
        path = Path(source["file"])
        if not path.is_absolute():
            path = base / path
        data = _load_json(str(path))
    elif "haar_seed" in source:
        return haar_unitary(m, int(source["haar_seed"]))
    else:
        data = source
    try:
        U = unitary_from_json(data)
    except UnitaryError as exc:
        raise _validation(f"unitary rejected: {exc}") from exc
    if U.shape[0] != m:
        raise _validation(f"unitary has m={U.shape[0]} but config has m={m}")
    return U


def load_config(args) -> tuple[ProtocolConfig, dict]:
    """Merge file and flags into a :class:`ProtocolConfig` plus the raw merged dict."""
    raw = _load_json(args.config)
    base = Path(args.config).resolve().parent
    for key in ("shots", "seed", "epsilon", "collision_policy"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if raw.get("seed") is None:
        raw["seed"] = _draw_seed()
    missing = [k for k in ("m", "epsilon") if k not in raw]
    if missing:
        raise _validation(f"config lacks required fields {missing}")
    try:
        caps = Caps.from_env(Caps.from_mapping(raw.get("caps")))
        m = int(raw["m"])
        cfg = ProtocolConfig(
            m=m,
            epsilon=float(raw["epsilon"]),
            unitary=_resolve_unitary(raw.get("unitary", "identity"), m, base),
            shots=int(raw.get("shots", 1000)),
            seed=int(raw["seed"]),
            collision_policy=raw.get("collision_policy", "retain"),
            caps=caps,
            epsilons=tuple(raw["epsilons"]) if raw.get("epsilons") is not None else None,
        )
    except (ConfigError, ValueError, TypeError) as exc:
        raise _validation(str(exc)) from exc
    return cfg, raw


def _config_echo(cfg: ProtocolConfig, raw: dict) -> dict:
    return {
        "m": cfg.m,
        "epsilon": cfg.epsilon,
        "epsilons": list(cfg.epsilons) if cfg.epsilons else None,
        "unitary": raw.get("unitary", "identity"),
        "shots": cfg.shots,
        "seed": cfg.seed,
        "collision_policy": cfg.collision_policy,
        "caps": cfg.caps.to_dict(),
    }


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


def _outdir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def herald_fit(records, cfg: ProtocolConfig) -> dict:
    """Chi-square fit of the empirical total-photon histogram to the source law."""
    totals = np.array([r.total_n for r in records], dtype=int)
    n_top = int(totals.max()) if totals.size else 0
    expected = total_photon_pmf(cfg.pair_epsilons, n_top) * totals.size
    observed = np.bincount(totals, minlength=n_top + 1).astype(float)
    # pool the upper tail until every bin expects at least 5 counts
    keep = np.nonzero(expected >= 5)[0]
    if keep.size < 2 or cfg.collision_policy == "filter":
        return {"applicable": False}
    last = keep[-1]
    obs = np.append(observed[:last], observed[last:].sum())
    exp = np.append(expected[:last], totals.size - expected[:last].sum())
    chi2, pval = stats.chisquare(obs, exp)
    return {"applicable": True, "bins": int(obs.size), "chi2": float(chi2), "p_value": float(pval)}


def cmd_run(args) -> int:
    cfg, raw = load_config(args)
    out = _outdir(args, "nlbs_run")
    threads = _threads(args)
    started, t0 = _now(), time.perf_counter()
    records = run_protocol(cfg, threads=threads)
    wall = time.perf_counter() - t0
    lines = [r.to_json() for r in records]
    rec_path = out / "records.jsonl"
    write_records(rec_path, records)
    collisions = sum(r.collision for r in records)
    summary = {
        "shots": cfg.shots,
        "records": len(records),
        "collisions": collisions,
        "collision_rate": collisions / len(records) if records else 0.0,
        "post_selection_rate": len(records) / cfg.shots,
        "unsampled": sum(r.unsampled for r in records),
        "herald_fit": herald_fit(records, cfg),
        "records_sha256_sorted": _sha256_lines(lines),
    }
    _dump(summary, out / "summary.json")
    bundle = {
        "config": _config_echo(cfg, raw),
        "outputs": {"records": str(rec_path), "summary": str(out / "summary.json")},
        "provenance": {
            "seed": cfg.seed,
            "code_version": __version__,
            "python": platform.python_version(),
            "started": started,
            "finished": _now(),
            "wall_clock_s": wall,
            "threads": threads,
        },
    }
    _dump(bundle, out / "bundle.json")
    print(_dump({"summary": summary, "bundle": str(out / "bundle.json")}))
    return EXIT_OK


def _mode_histograms(patterns: np.ndarray, top: int = 2) -> list[list[int]]:
    clipped = np.minimum(patterns, top)
    return [np.bincount(clipped[:, i], minlength=top + 1).tolist() for i in range(patterns.shape[1])]


def cmd_compare_local(args) -> int:
    cfg, raw = load_config(args)
    threshold = float(raw.get("tv_threshold", DEFAULT_TV_THRESHOLD))
    min_shots = int(raw.get("min_shots", DEFAULT_MIN_SHOTS))
    threads = _threads(args)
    records = run_protocol(cfg, threads=threads)
    quantum = np.array([r.alice for r in records if r.alice is not None], dtype=int).reshape(-1, cfg.m)
    classical = classical_local_sampler(
        cfg.unitary, cfg.epsilon, cfg.m, cfg.shots, rng=cfg.seed, threads=threads
    )
    tv = tv_distance(empirical_distribution(quantum, top=2), empirical_distribution(classical, top=2))
    if cfg.shots < min_shots:
        status = "insufficient samples"
    else:
        status = "pass" if tv <= threshold else "fail"
    report = {
        "tv_distance": tv,
        "threshold": threshold,
        "status": status,
        "shots": cfg.shots,
        "min_shots": min_shots,
        "seed": cfg.seed,
        "buckets": "per-mode {0, 1, >=2}",
        "histograms": {"protocol": _mode_histograms(quantum), "classical": _mode_histograms(classical)},
        "config": _config_echo(cfg, raw),
        "code_version": __version__,
    }
    text = _dump(report)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_exact_table(args) -> int:
    cfg, raw = load_config(args)
    n_max = args.n_max if args.n_max is not None else raw.get("n_max")
    table = exact_joint_distribution(cfg, n_max)
    out = Path(args.out or "joint_table.csv")
    write_table_csv(out, table)
    print(
        _dump(
            {
                "table": str(out),
                "entries": len(table.entries),
                "n_max": table.n_max,
                "mass": table.mass,
                "deficit": table.deficit,
                "symmetry_discrepancy": conditional_symmetry_check(table),
                "seed": cfg.seed,
            }
        )
    )
    return EXIT_OK


def _build_state(args):
    if args.state == "file":
        if not args.file:
            raise _validation("--file is required for state 'file'")
        try:
            return load_density(args.file)
        except (StateError, FileNotFoundError, json.JSONDecodeError) as exc:
            raise _validation(f"cannot load state: {exc}") from exc
    if args.epsilon is None:
        raise _validation(f"--epsilon is required for state '{args.state}'")
    eps = args.epsilon
    try:
        cutoff = args.cutoff or max(40, default_cutoff(eps))
        if args.state == "tmsv":
            return tmsv_density(eps, cutoff)
        if args.state == "fdtsv":
            return fdtsv_density(eps, cutoff)
        th = thermal_density(eps, cutoff)
        return product_density(th, th)
    except ValueError as exc:
        raise _validation(str(exc)) from exc


def cmd_analyze(args) -> int:
    rho = _build_state(args)
    seed = args.seed if args.seed is not None else _draw_seed()
    caps = Caps.from_env()
    report = correlation_report(rho, seed=seed % 2**32, n_random=args.sweep, caps=caps)
    d = report.to_dict()
    if not args.full_basis:
        d["basis_found"] = {"label": report.basis_found.label}
    d["seed"] = seed
    d["state"] = args.state
    text = _dump(d)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_haar_gen(args) -> int:
    seed = args.seed if args.seed is not None else _draw_seed()
    U = haar_unitary(args.m, seed)
    out = Path(args.out or f"haar_m{args.m}_seed{seed}.json")
    save_unitary(out, U)
    print(_dump({"file": str(out), "m": args.m, "seed": seed}))
    return EXIT_OK


def cmd_perm_bench(args) -> int:
    seed = args.seed if args.seed is not None else _draw_seed()
    caps = Caps.from_env()
    threads = _threads(args)
    rng = np.random.default_rng(seed)
    mats = np.stack([haar_unitary(args.n, rng) for _ in range(args.batch)])
    permanent(mats[0][:2, :2])  # trigger JIT compile outside the timer
    t0 = time.perf_counter()
    single = permanent(mats[0], workers=1, caps=caps)
    t_single = time.perf_counter() - t0
    t0 = time.perf_counter()
    permanents(mats, workers=1, caps=caps)
    t_serial = time.perf_counter() - t0
    t0 = time.perf_counter()
    permanents(mats, workers=threads, caps=caps)
    t_par = time.perf_counter() - t0
    print(
        _dump(
            {
                "n": args.n,
                "batch": args.batch,
                "threads": threads,
                "seed": seed,
                "single_s": t_single,
                "batch_serial_s": t_serial,
                "batch_parallel_s": t_par,
                "speedup": t_serial / t_par,
                "efficiency": t_serial / t_par / threads,
                "first_permanent": [single.real, single.imag],
            }
        )
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlbs", description="Nonlocal boson-sampling simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def protocol_flags(sp):
        sp.add_argument("config", help="JSON protocol config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--shots", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--collision-policy", dest="collision_policy", choices=["retain", "filter"])
        sp.add_argument("--threads", type=int, help="worker threads (default: CPU count)")
        sp.add_argument("--out")

    sp = sub.add_parser("run", help="run the heralded protocol and write a bundle")
    protocol_flags(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare-local", help="protocol vs phase-space sampler on Alice's side")
    protocol_flags(sp)
    sp.set_defaults(func=cmd_compare_local)

    sp = sub.add_parser("exact-table", help="exact joint distribution as CSV")
    protocol_flags(sp)
    sp.add_argument("--n-max", dest="n_max", type=int)
    sp.set_defaults(func=cmd_exact_table)

    sp = sub.add_parser("analyze", help="correlation report for a state")
    sp.add_argument("--state", choices=["tmsv", "fdtsv", "product", "file"], required=True)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--cutoff", type=int)
    sp.add_argument("--file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sweep", type=int, default=2000, help="random bases tried when Fock basis is not optimal")
    sp.add_argument("--full-basis", action="store_true", help="include basis vectors in output")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("haar-gen", help="write a Haar-random unitary as JSON")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_haar_gen)

    sp = sub.add_parser("perm-bench", help="time the permanent kernel")
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--batch", type=int, default=8)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_perm_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc)}
        code = exc.code
    except CapacityError as exc:
        err = {"error": "caps", "message": str(exc)}
        code = EXIT_CAPS
    except (ConfigError, UnitaryError, StateError) as exc:
        err = {"error": "validation", "message": str(exc)}
        code = EXIT_VALIDATION
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        err = {"error": "numeric", "message": str(exc)}
        code = EXIT_NUMERIC
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
