"""Command-line pipeline driver.

Verbs: simulate -> library -> featurize -> regress -> select, plus the
benchmark/extrapolate pair for the walltime scaling study.  Stage wiring
lives in a TOML run file; every artifact gets a sibling manifest recording
the sha256 of each input it consumed, the config section, and the tool
version, and downstream stages refuse inputs whose bytes no longer match
their recorded manifest hash.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .kssim import NoiseSpec, SimConfig, add_noise, load_trajectory, save_trajectory, simulate
from .linalg import FeatureMatrix, qr_reduce
from .search import (
    EXHAUSTIVE,
    SPRINT_MINUS,
    SPRINT_PLUS,
    OptimizationCurve,
    SearchConfig,
    run_search,
    select_model,
)
from .symlib import Alphabet, Library, enumerate_words, time_derivative_term
from .weakform import WeightSpec, build_feature_matrix, sample_subdomains

_METHODS = (EXHAUSTIVE, SPRINT_MINUS, SPRINT_PLUS)


class ConfigError(Exception):
    """Bad run file, missing artifact, or stale manifest (exit code 2)."""


# ---------------------------------------------------------------------------
# run file and manifests
# ---------------------------------------------------------------------------


def _load_run_file(path) -> dict:
    if path is None:
        raise ConfigError("this command requires --config <run.toml>")
    if not os.path.exists(path):
        raise ConfigError(f"run file not found: {path}")
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"run file {path}: {exc}") from exc


def _section(doc: dict, name: str, required: set[str], optional: set[str]) -> dict:
    if name not in doc:
        raise ConfigError(f"run file missing [{name}] section")
    sec = dict(doc[name])
    missing = required - sec.keys()
    if missing:
        raise ConfigError(f"[{name}] missing keys: {sorted(missing)}")
    unknown = sec.keys() - required - optional
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
    return sec


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _resolve(out_dir: str | None, path: str) -> str:
    if out_dir and not os.path.isabs(path):
        return os.path.join(out_dir, path)
    return path


def _check_input(path) -> str:
    """Verify an input artifact exists and matches its manifest, if any."""
    if not os.path.exists(path):
        raise ConfigError(f"input artifact not found: {path}")
    manifest = path + ".manifest.json"
    digest = _sha256(path)
    if os.path.exists(manifest):
        with open(manifest) as fh:
            recorded = json.load(fh).get("output_sha256")
        if recorded is not None and recorded != digest:
            raise ConfigError(
                f"input {path} does not match its manifest hash "
                f"(expected {recorded[:12]}..., found {digest[:12]}...)"
            )
    return digest


def _write_manifest(output: str, inputs: dict[str, str], config: dict) -> None:
    doc = {
        "tool_version": __version__,
        "output_sha256": _sha256(output),
        "inputs": inputs,
        "config": config,
    }
    with open(output + ".manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1, default=str)


class _Outputs:
    """Track written files so a failing command leaves nothing behind."""

    def __init__(self):
        self.paths: list[str] = []

    def add(self, path: str) -> str:
        self.paths.append(path)
        return path

    def discard(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


# ---------------------------------------------------------------------------
# pipeline commands
# ---------------------------------------------------------------------------


def cmd_simulate(args, out: _Outputs) -> None:
    sec = _section(
        _load_run_file(args.config),
        "simulate",
        required={"output"},
        optional={
            "domain_length", "total_time", "nx", "nt", "epsilon",
            "newton_tol", "substeps", "dealias_factor",
            "noise_amplitude", "noise_mean", "noise_std", "noise_seed",
        },
    )
    sim_keys = (
        "domain_length", "total_time", "nx", "nt", "epsilon",
        "newton_tol", "substeps", "dealias_factor",
    )
    try:
        config = SimConfig(**{k: sec[k] for k in sim_keys if k in sec})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[simulate] {exc}") from exc
    traj = simulate(config)
    if sec.get("noise_amplitude", 0.0):
        spec = NoiseSpec(
            amplitude=sec["noise_amplitude"],
            mean=sec.get("noise_mean", 0.0),
            std=sec.get("noise_std", 0.218),
            seed=sec.get("noise_seed", args.seed or 0),
        )
        traj = add_noise(traj, spec)
    path = out.add(_resolve(args.out_dir, sec["output"]))
    save_trajectory(traj, path)
    _write_manifest(path, {}, sec)
    print(f"wrote {path} ({config.nt}x{config.nx} samples)")


def cmd_library(args, out: _Outputs) -> None:
    sec = _section(
        _load_run_file(args.config),
        "library",
        required={"output", "max_length"},
        optional={"fields", "derivatives", "pin_time_derivative"},
    )
    alphabet = Alphabet(
        tuple(sec.get("fields", ["u"])), tuple(sec.get("derivatives", ["dx"]))
    )
    lib = enumerate_words(alphabet, int(sec["max_length"]))
    if sec.get("pin_time_derivative", False):
        lib = lib.with_extra(time_derivative_term())
    path = out.add(_resolve(args.out_dir, sec["output"]))
    lib.to_json(path)
    _write_manifest(path, {}, sec)
    print(f"wrote {path} ({lib.size} terms)")


def cmd_featurize(args, out: _Outputs) -> None:
    sec = _section(
        _load_run_file(args.config),
        "featurize",
        required={"trajectory", "library", "output"},
        optional={
            "subdomain_count", "half_width_x", "half_width_t",
            "weight_exponent", "seed",
        },
    )
    tpath = _resolve(args.out_dir, sec["trajectory"])
    lpath = _resolve(args.out_dir, sec["library"])
    inputs = {tpath: _check_input(tpath), lpath: _check_input(lpath)}
    traj = load_trajectory(tpath)
    lib = Library.from_json(lpath)
    L = traj.config.domain_length
    T = traj.config.total_time
    half = (
        float(sec.get("half_width_x", L / 8)),
        float(sec.get("half_width_t", T / 100)),
    )
    subs = sample_subdomains(
        traj, half, int(sec.get("subdomain_count", 1024)),
        seed=int(sec.get("seed", args.seed or 0)),
    )
    G = build_feature_matrix(
        lib, traj, subs, weight=WeightSpec(int(sec.get("weight_exponent", 8)))
    )
    base = _resolve(args.out_dir, sec["output"])
    bin_path = out.add(base + ".bin")
    csv_path = out.add(base + ".csv")
    G.to_binary(bin_path)
    G.to_csv(csv_path)
    for p in (bin_path, csv_path):
        _write_manifest(p, inputs, sec)
    print(f"wrote {bin_path} / {csv_path} ({G.m}x{G.n})")


def _parse_seed_terms(sec, labels: tuple[str, ...]) -> tuple[int, ...] | None:
    spec = sec.get("seed_terms")
    if spec is None:
        return None
    idx = []
    for item in spec:
        if isinstance(item, int):
            idx.append(item)
        elif item in labels:
            idx.append(labels.index(item))
        else:
            raise ConfigError(f"[regress] seed term {item!r} not in library")
    return tuple(idx)


def cmd_regress(args, out: _Outputs) -> None:
    sec = _section(
        _load_run_file(args.config),
        "regress",
        required={"features", "method", "output"},
        optional={"qr_reduce", "gamma", "seed_terms", "max_terms"},
    )
    fpath = _resolve(args.out_dir, sec["features"])
    inputs = {fpath: _check_input(fpath)}
    G = FeatureMatrix.from_binary(fpath)
    method = sec["method"]
    if method not in _METHODS:
        raise ConfigError(f"[regress] method must be one of {_METHODS}")
    if sec.get("qr_reduce", True) and G.m >= G.n:
        G = qr_reduce(G)
    cfg = SearchConfig(
        gamma=float(sec.get("gamma", 1.25)),
        max_terms=int(sec["max_terms"]) if "max_terms" in sec else None,
        initial_support=_parse_seed_terms(sec, G.term_labels),
    )
    curve = run_search(G, method, cfg, metadata={"gamma": cfg.gamma})
    base = _resolve(args.out_dir, sec["output"])
    json_path = out.add(base if base.endswith(".json") else base + ".json")
    csv_path = out.add(json_path[: -len(".json")] + ".csv")
    curve.to_json(json_path)
    curve.to_csv(csv_path)
    for p in (json_path, csv_path):
        _write_manifest(p, inputs, sec)
    print(f"wrote {json_path} ({len(curve.entries)} curve entries)")


def cmd_select(args, out: _Outputs) -> None:
    sec = _section(
        _load_run_file(args.config),
        "select",
        required={"curve", "output"},
        optional={"gamma"},
    )
    cpath = _resolve(args.out_dir, sec["curve"])
    inputs = {cpath: _check_input(cpath)}
    curve = OptimizationCurve.from_json(cpath)
    gamma = float(args.gamma if args.gamma is not None else sec.get("gamma", 1.25))
    k_star, flags = select_model(curve, gamma)
    entry = curve.entry(k_star)
    doc = {
        "gamma": gamma,
        "k_star": k_star,
        "elbows": flags,
        "residual": entry.residual,
        "support": list(entry.coefficients.support),
        "terms": [curve.term_labels[j] for j in entry.coefficients.support],
        "coefficients": entry.coefficients.values.tolist(),
    }
    path = out.add(_resolve(args.out_dir, sec["output"]))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    _write_manifest(path, inputs, {**sec, "gamma": gamma})
    print(f"k* = {k_star} (elbows at {flags}); wrote {path}")


# ---------------------------------------------------------------------------
# benchmark / extrapolate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkReport:
    """Mean walltimes per (method, size) and log10-log10 power-law fits."""

    sizes: tuple[int, ...]
    trials: int
    seconds: dict = field(default_factory=dict)  # method -> list of means
    fits: dict = field(default_factory=dict)  # method -> (alpha, beta)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(
                {
                    "sizes": list(self.sizes),
                    "trials": self.trials,
                    "seconds": self.seconds,
                    "fits": self.fits,
                },
                fh,
                indent=1,
            )

    @classmethod
    def from_json(cls, path) -> "BenchmarkReport":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(
            tuple(doc["sizes"]),
            int(doc["trials"]),
            doc["seconds"],
            {k: tuple(v) for k, v in doc["fits"].items()},
        )

    def predict(self, method: str, n: int) -> float:
        alpha, beta = self.fits[method]
        return 10.0**beta * float(n) ** alpha


def run_benchmark(
    sizes, methods, trials: int = 8, seed: int = 0
) -> BenchmarkReport:
    """Time each method on square uniform[-1,1] matrices.

    Matrix generation and result handling are excluded from the timing;
    only the search call is measured.  Trials run serially.  A method
    failure on a trial is recorded and excluded from the fit.
    """
    if min(sizes) < 8:
        raise ValueError("benchmark sizes must be >= 8")
    seconds: dict[str, list] = {m: [] for m in methods}
    for n in sizes:
        for method in methods:
            times = []
            for trial in range(trials):
                rng = np.random.default_rng(seed + 7919 * trial + n)
                A = rng.uniform(-1.0, 1.0, size=(n, n))
                G = FeatureMatrix(A, tuple(f"c{j}" for j in range(n)))
                cfg = SearchConfig(max_terms=max(2, n // 4))
                t0 = time.perf_counter()
                try:
                    run_search(G, method, cfg)
                except Exception as exc:  # noqa: BLE001 — recorded per-cell
                    print(
                        f"warning: {method} failed at n={n} trial {trial}: {exc}",
                        file=sys.stderr,
                    )
                    times.append(None)
                    continue
                times.append(time.perf_counter() - t0)
            ok = [t for t in times if t is not None]
            seconds[method].append(float(np.mean(ok)) if ok else None)
    fits = {}
    for method in methods:
        pts = [
            (n, t) for n, t in zip(sizes, seconds[method]) if t is not None
        ]
        if len(pts) >= 3:
            ln = np.log10([p[0] for p in pts])
            lt = np.log10([p[1] for p in pts])
            alpha, beta = np.polyfit(ln, lt, 1)
            fits[method] = (float(alpha), float(beta))
    return BenchmarkReport(tuple(sizes), trials, seconds, fits)


def cmd_benchmark(args, out: _Outputs) -> None:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    methods = tuple(args.methods.split(","))
    for m in methods:
        if m not in _METHODS:
            raise ConfigError(f"unknown benchmark method {m!r}")
    report = run_benchmark(sizes, methods, trials=args.trials, seed=args.seed or 0)
    path = out.add(_resolve(args.out_dir, args.output))
    report.to_json(path)
    csv_path = out.add(path + ".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n"] + [f"t_{m}" for m in methods])
        for i, n in enumerate(sizes):
            writer.writerow([n] + [report.seconds[m][i] for m in methods])
    for m, (alpha, beta) in report.fits.items():
        print(f"{m:12s} alpha = {alpha:.2f}  beta = {beta:.2f}")
    print(f"wrote {path}")


def cmd_extrapolate(args, out: _Outputs) -> None:
    _check_input(args.report)
    report = BenchmarkReport.from_json(args.report)
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    for n in sizes:
        row = {"n": n}
        for m in report.fits:
            row[m] = report.predict(m, n)
        rows.append(row)
    methods = list(report.fits)
    header = ["n"] + methods
    print("  ".join(f"{h:>14s}" for h in header))
    for row in rows:
        print(
            "  ".join(
                [f"{row['n']:>14d}"] + [f"{row[m]:>14.4g}" for m in methods]
            )
        )
    if args.output:
        path = out.add(_resolve(args.out_dir, args.output))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([row["n"]] + [row[m] for m in methods])
        print(f"wrote {path}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sprintreg",
        description="sparse null-vector regression pipeline",
    )
    p.add_argument("--config", help="TOML run file")
    p.add_argument("--seed", type=int, default=None, help="fallback seed")
    p.add_argument("--out-dir", default=None, help="directory for artifacts")
    p.add_argument(
        "--threads",
        type=int,
        default=None,
        help="BLAS thread cap (best effort)",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "library", "featurize", "regress"):
        sub.add_parser(name)
    ps = sub.add_parser("select")
    ps.add_argument("--gamma", type=float, default=None)
    pb = sub.add_parser("benchmark")
    pb.add_argument("--sizes", default="32,64,128,256")
    pb.add_argument(
        "--methods", default=",".join(_METHODS)
    )
    pb.add_argument("--trials", type=int, default=8)
    pb.add_argument("--output", default="benchmark.json")
    pe = sub.add_parser("extrapolate")
    pe.add_argument("--report", required=True)
    pe.add_argument("--sizes", required=True)
    pe.add_argument("--output", default=None)
    return p


def _cap_threads(n: int | None) -> None:
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


_COMMANDS = {
    "simulate": cmd_simulate,
    "library": cmd_library,
    "featurize": cmd_featurize,
    "regress": cmd_regress,
    "select": cmd_select,
    "benchmark": cmd_benchmark,
    "extrapolate": cmd_extrapolate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _cap_threads(args.threads)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
    out = _Outputs()
    try:
        _COMMANDS[args.command](args, out)
    except ConfigError as exc:
        out.discard()
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        out.discard()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
