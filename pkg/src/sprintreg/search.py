"""Greedy sparse null-vector searches over a feature matrix.

Three search strategies produce the same kind of optimization curve: the
exhaustive baseline recomputes a singular value decomposition for every
candidate column removal, while the accelerated removal/addition variants
rank candidates by secular bisection against the current factorization and
only recompute the SVD once per committed step.  Model selection is a cheap
post-pass over the stored curve, so changing the selection ratio never
repeats any linear algebra.
"""

from __future__ import annotations

import bisect as _bisect
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    CoefficientVector,
    FeatureMatrix,
    SvdFactorization,
    economy_svd,
    unit_coefficients,
)
from .secular import ADD, REMOVE, BisectionConfig, batch_bisect

__all__ = [
    "EXHAUSTIVE",
    "SPRINT_MINUS",
    "SPRINT_PLUS",
    "CurveEntry",
    "OptimizationCurve",
    "SearchConfig",
    "Relation",
    "RelationSet",
    "exhaustive_search",
    "sprint_minus",
    "sprint_plus",
    "select_model",
    "find_relations",
]

EXHAUSTIVE = "exhaustive"
SPRINT_MINUS = "sprint-"
SPRINT_PLUS = "sprint+"

TIE_RTOL = 1e-12  # candidates this close in sigma' count as tied
_STACK_BYTES = 64 * 1024 * 1024  # chunk size cap for stacked candidate SVDs


@dataclass(frozen=True)
class CurveEntry:
    k: int
    residual: float
    coefficients: CoefficientVector


@dataclass(frozen=True)
class OptimizationCurve:
    """Sequence of (k, r_k, coefficients) tracing one greedy run.

    Removal methods record k = n down to 1; the addition method records k
    from the seed size up to the term cap.  All coefficient vectors are
    kept so re-selection with a different ratio is free.
    """

    entries: tuple[CurveEntry, ...]
    method: str
    term_labels: tuple[str, ...]
    metadata: dict = field(default_factory=dict)
    fallback_steps: int = 0

    def residuals(self) -> dict[int, float]:
        return {e.k: e.residual for e in self.entries}

    def entry(self, k: int) -> CurveEntry:
        for e in self.entries:
            if e.k == k:
                return e
        raise KeyError(f"no curve entry with k={k}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "r_k"])
            for e in self.entries:
                writer.writerow([e.k, f"{e.residual:.17g}"])

    def to_json(self, path) -> None:
        doc = {
            "method": self.method,
            "term_labels": list(self.term_labels),
            "metadata": self.metadata,
            "fallback_steps": self.fallback_steps,
            "entries": [
                {
                    "k": e.k,
                    "residual": e.residual,
                    "support": list(e.coefficients.support),
                    "values": e.coefficients.values.tolist(),
                }
                for e in self.entries
            ],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "OptimizationCurve":
        with open(path) as fh:
            doc = json.load(fh)
        entries = tuple(
            CurveEntry(
                int(e["k"]),
                float(e["residual"]),
                CoefficientVector(tuple(e["support"]), np.array(e["values"])),
            )
            for e in doc["entries"]
        )
        return cls(
            entries,
            doc["method"],
            tuple(doc["term_labels"]),
            doc.get("metadata", {}),
            int(doc.get("fallback_steps", 0)),
        )


@dataclass(frozen=True)
class SearchConfig:
    """Knobs shared by the greedy searches and relation extraction."""

    gamma: float = 1.25
    max_terms: int | None = None  # addition halt; None = no cap short of n
    initial_support: tuple[int, ...] | None = None
    degenerate_sigma_ratio: float = 1e-12
    relation_sigma_threshold: float = 1e-2

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1")


@dataclass(frozen=True)
class Relation:
    """One extracted sparse relation: support indexed into the parent matrix."""

    coefficients: CoefficientVector
    residual: float
    dominant_term: int


@dataclass(frozen=True)
class RelationSet:
    relations: tuple[Relation, ...]
    terminal_sigma_min: float


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _tie_argmin(values: np.ndarray) -> int:
    """Index of the smallest value; ties within TIE_RTOL go to the lowest index."""
    if not np.all(np.isfinite(values)):
        raise ArithmeticError("non-finite candidate ranking values")
    v = float(np.min(values))
    thr = v * (1.0 + TIE_RTOL) if v > 0 else v
    return int(np.nonzero(values <= thr)[0][0])


def _entry_from_svd(
    F: SvdFactorization, support: list[int], source_rows: int
) -> CurveEntry:
    c = unit_coefficients(support, F.V[:, -1])
    return CurveEntry(len(support), F.sigma_min / np.sqrt(source_rows), c)


def _removal_candidate_sigmas_direct(sub: np.ndarray) -> np.ndarray:
    """sigma_min of sub with each column removed, by stacked direct SVDs."""
    m, k = sub.shape
    out = np.empty(k)
    per = m * (k - 1) * 8
    chunk = max(1, min(k, _STACK_BYTES // max(per, 1)))
    for start in range(0, k, chunk):
        idx = list(range(start, min(start + chunk, k)))
        stack = np.stack([np.delete(sub, j, axis=1) for j in idx])
        out[idx] = np.linalg.svd(stack, compute_uv=False)[:, -1]
    return out


def _addition_candidate_sigmas_direct(
    sub: np.ndarray, cols: np.ndarray, which: np.ndarray
) -> np.ndarray:
    """sigma_min of [sub, cols[:, j]] for the flagged candidates j."""
    m, k = sub.shape
    out = np.full(cols.shape[1], np.nan)
    idx = list(np.nonzero(which)[0])
    per = m * (k + 1) * 8
    chunk = max(1, _STACK_BYTES // max(per, 1))
    for start in range(0, len(idx), chunk):
        sel = idx[start : start + chunk]
        stack = np.stack(
            [np.column_stack([sub, cols[:, j]]) for j in sel]
        )
        out[sel] = np.linalg.svd(stack, compute_uv=False)[:, -1]
    return out


def _seed_support(F: SvdFactorization) -> list[int]:
    """Default addition seed: the dominant entry of the dense null vector."""
    return [int(np.argmax(np.abs(F.V[:, -1])))]


# ---------------------------------------------------------------------------
# searches
# ---------------------------------------------------------------------------


def exhaustive_search(
    G: FeatureMatrix, metadata: dict | None = None
) -> OptimizationCurve:
    """Greedy removal ranking every candidate by a direct SVD.

    At each step the column whose removal increases the smallest singular
    value the least is dropped; the recorded coefficient vector is the exact
    trailing right singular vector of the active submatrix.
    """
    active = list(range(G.n))
    m0 = G.source_rows
    F = economy_svd(G.values)
    entries = [_entry_from_svd(F, active, m0)]
    while len(active) > 1:
        sub = G.values[:, active]
        sigmas = _removal_candidate_sigmas_direct(sub)
        del active[_tie_argmin(sigmas)]
        F = economy_svd(G.values[:, active])
        entries.append(_entry_from_svd(F, active, m0))
    return OptimizationCurve(
        tuple(entries), EXHAUSTIVE, G.term_labels, metadata or {}
    )


def sprint_minus(
    G: FeatureMatrix,
    cfg: SearchConfig = SearchConfig(),
    bisection: BisectionConfig = BisectionConfig(),
    metadata: dict | None = None,
) -> OptimizationCurve:
    """Greedy removal with candidates ranked by secular bisection.

    Candidate scans reuse the current economy SVD; only the committed step
    triggers a recomputation.  Candidates the secular evaluation flags as
    unreliable (and every stage where the active submatrix is wider than it
    is tall, where the removal bracket does not apply) are ranked by direct
    SVDs instead, and such steps are counted in ``fallback_steps``.
    """
    active = list(range(G.n))
    m0 = G.source_rows
    F = economy_svd(G.values)
    entries = [_entry_from_svd(F, active, m0)]
    fallback_steps = 0
    while len(active) > 1:
        sub = G.values[:, active]
        m, k = sub.shape
        if k > m:
            sigmas = _removal_candidate_sigmas_direct(sub)
            fallback_steps += 1
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                norms = np.linalg.norm(sub, axis=0)
                alphas = 1.0 / norms
                W = (F.U.T @ sub) * alphas
            sigmas, flagged = batch_bisect(
                F, W, alphas, REMOVE, bisection, cfg.degenerate_sigma_ratio
            )
            if np.any(flagged):
                fallback_steps += 1
                for j in np.nonzero(flagged)[0]:
                    vals = np.linalg.svd(
                        np.delete(sub, j, axis=1), compute_uv=False
                    )
                    sigmas[j] = vals[-1]
        del active[_tie_argmin(sigmas)]
        F = economy_svd(G.values[:, active])
        entries.append(_entry_from_svd(F, active, m0))
    return OptimizationCurve(
        tuple(entries), SPRINT_MINUS, G.term_labels, metadata or {}, fallback_steps
    )


def sprint_plus(
    G: FeatureMatrix,
    cfg: SearchConfig = SearchConfig(),
    bisection: BisectionConfig = BisectionConfig(),
    metadata: dict | None = None,
) -> OptimizationCurve:
    """Greedy addition from a sparse seed, ranked by secular bisection.

    Starts from ``cfg.initial_support`` (or, when that is None, from the
    dominant entry of the full library's dense null vector) and appends the
    column that lowers the smallest singular value the most, halting once
    ``cfg.max_terms`` columns are active.
    """
    m0 = G.source_rows
    if cfg.initial_support is None:
        seed = _seed_support(economy_svd(G.values))
    else:
        seed = sorted(int(j) for j in cfg.initial_support)
        if not seed:
            raise ValueError("initial support must be nonempty")
        if seed[0] < 0 or seed[-1] >= G.n or len(set(seed)) != len(seed):
            raise ValueError("initial support indices invalid")
    max_terms = G.n if cfg.max_terms is None else int(cfg.max_terms)
    if max_terms < len(seed):
        raise ValueError("max_terms smaller than the initial support")
    if max_terms > G.n:
        raise ValueError("max_terms exceeds the library size")

    active = list(seed)
    absent = sorted(set(range(G.n)) - set(active))
    F = economy_svd(G.values[:, active])
    entries = [_entry_from_svd(F, active, m0)]
    fallback_steps = 0
    while len(active) < max_terms and absent:
        sub = G.values[:, active]
        cols = G.values[:, absent]
        m, k = sub.shape
        if k >= m:
            sigmas = _addition_candidate_sigmas_direct(
                sub, cols, np.ones(len(absent), dtype=bool)
            )
            fallback_steps += 1
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                norms = np.linalg.norm(cols, axis=0)
                alphas = 1.0 / norms
                W = (F.U.T @ cols) * alphas
            sigmas, flagged = batch_bisect(
                F, W, alphas, ADD, bisection, cfg.degenerate_sigma_ratio
            )
            if np.any(flagged):
                fallback_steps += 1
                direct = _addition_candidate_sigmas_direct(sub, cols, flagged)
                sigmas[flagged] = direct[flagged]
        j = _tie_argmin(sigmas)
        _bisect.insort(active, absent[j])
        del absent[j]
        F = economy_svd(G.values[:, active])
        entries.append(_entry_from_svd(F, active, m0))
    return OptimizationCurve(
        tuple(entries), SPRINT_PLUS, G.term_labels, metadata or {}, fallback_steps
    )


def run_search(
    G: FeatureMatrix,
    method: str,
    cfg: SearchConfig = SearchConfig(),
    metadata: dict | None = None,
) -> OptimizationCurve:
    """Dispatch on the method name."""
    if method == EXHAUSTIVE:
        return exhaustive_search(G, metadata)
    if method == SPRINT_MINUS:
        return sprint_minus(G, cfg, metadata=metadata)
    if method == SPRINT_PLUS:
        return sprint_plus(G, cfg, metadata=metadata)
    raise ValueError(f"unknown search method {method!r}")


# ---------------------------------------------------------------------------
# model selection and multi-relation extraction
# ---------------------------------------------------------------------------


def select_model(
    curve: OptimizationCurve, gamma: float
) -> tuple[int, list[int]]:
    """Flag every k where dropping one more term inflates the residual by
    more than ``gamma``; the selected model is the largest flagged k.

    Returns (k_star, all_flagged_k).  A curve with a single entry (or with
    no flagged elbow at all) selects its sparsest entry with an empty flag
    list.
    """
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    if not curve.entries:
        raise ValueError("empty optimization curve")
    res = curve.residuals()
    flags = [k for k in sorted(res) if k - 1 in res and res[k - 1] > gamma * res[k]]
    k_star = max(flags) if flags else min(res)
    return k_star, flags


def _resolve_seed(cfg: SearchConfig, remaining: list[int]) -> tuple[int, ...] | None:
    """Map a user seed into the reduced library; None once any seed column
    has been consumed by an earlier relation."""
    if cfg.initial_support is None:
        return None
    pos = {col: i for i, col in enumerate(remaining)}
    if all(col in pos for col in cfg.initial_support):
        return tuple(pos[col] for col in cfg.initial_support)
    return None


def find_relations(
    G: FeatureMatrix, cfg: SearchConfig = SearchConfig(), method: str = SPRINT_MINUS
) -> RelationSet:
    """Extract sparse relations until the reduced library has none left.

    After each selected relation, the single support column with the
    largest contribution |c_j| * |g_j| is permanently removed and the
    search repeats on the reduced library.  Extraction stops as soon as
    the reduced library's smallest singular value exceeds
    ``cfg.relation_sigma_threshold``.
    """
    remaining = list(range(G.n))
    relations: list[Relation] = []
    terminal = 0.0
    while remaining:
        Gr = G.restrict(remaining)
        F = economy_svd(Gr)
        terminal = F.sigma_min
        if terminal > cfg.relation_sigma_threshold:
            break
        sub_cfg = SearchConfig(
            gamma=cfg.gamma,
            max_terms=(
                None
                if cfg.max_terms is None
                else min(cfg.max_terms, len(remaining))
            ),
            initial_support=_resolve_seed(cfg, remaining),
            degenerate_sigma_ratio=cfg.degenerate_sigma_ratio,
            relation_sigma_threshold=cfg.relation_sigma_threshold,
        )
        curve = run_search(Gr, method, sub_cfg)
        k_star, _ = select_model(curve, cfg.gamma)
        entry = curve.entry(k_star)
        support = tuple(remaining[j] for j in entry.coefficients.support)
        coeffs = CoefficientVector(support, entry.coefficients.values)
        norms = np.array(
            [np.linalg.norm(G.values[:, j]) for j in support]
        )
        dom = support[int(np.argmax(np.abs(coeffs.values) * norms))]
        relations.append(Relation(coeffs, entry.residual, dom))
        remaining.remove(dom)
    return RelationSet(tuple(relations), float(terminal))
