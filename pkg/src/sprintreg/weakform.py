"""Weak-form feature matrices from gridded trajectory data.

Each matrix entry is an envelope-weighted integral of one library word over
one randomly placed space-time subdomain, divided by the subdomain weight
volume and the word's characteristic scale so entries come out O(1):

    G[m, n] = (1 / (V_m S_n)) * integral_m( phi * f_n ) dxbar dtbar

Spatial derivatives are evaluated spectrally on the full periodic grid
before restriction to subdomains.  The only time derivative allowed is the
pinned dt(u) word, whose derivative is moved onto the envelope weight by
integration by parts, so the data itself is never differenced in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kssim import TrajectoryRecord
from .linalg import FeatureMatrix
from .symlib import Library, SymbolicWord

__all__ = [
    "WeightSpec",
    "Subdomain",
    "ScaleModel",
    "sample_subdomains",
    "evaluate_word",
    "scale_of",
    "build_feature_matrix",
]

_MIN_POINTS = 8  # fewest grid points per axis inside a subdomain


@dataclass(frozen=True)
class WeightSpec:
    """Envelope (1 - xbar^2)^exponent (1 - tbar^2)^exponent."""

    exponent: int = 8

    def __post_init__(self):
        if self.exponent < 2:
            raise ValueError(
                "exponent must be >= 2 so the weight and its derivative vanish"
            )

    def envelope(self, s: np.ndarray) -> np.ndarray:
        return (1.0 - s**2) ** self.exponent

    def envelope_dot(self, s: np.ndarray) -> np.ndarray:
        """d/ds of the envelope (used by the integrated-by-parts dt word)."""
        return -2.0 * self.exponent * s * (1.0 - s**2) ** (self.exponent - 1)


@dataclass(frozen=True)
class Subdomain:
    """Rectangular space-time window; x may wrap around the periodic seam.

    ``x_indices`` are the wrapped grid columns inside the window ordered by
    physical offset; ``t_slice`` indexes the rows.  ``xbar``/``tbar`` are the
    window coordinates of those grid points, inside [-1, 1].
    """

    center: tuple[float, float]
    half_widths: tuple[float, float]
    x_indices: np.ndarray
    t_slice: slice
    xbar: np.ndarray
    tbar: np.ndarray

    def __post_init__(self):
        if len(self.x_indices) < _MIN_POINTS or len(self.tbar) < _MIN_POINTS:
            raise ValueError("subdomain holds fewer than 8 grid points per axis")
        if np.max(np.abs(self.xbar)) > 1 or np.max(np.abs(self.tbar)) > 1:
            raise ValueError("window coordinates escape [-1, 1]")


def _window_indices(center, half, grid_step, n_grid, periodic_length=None):
    """Grid indices within [center-half, center+half] and their unit offsets."""
    lo = int(np.ceil((center - half) / grid_step))
    hi = int(np.floor((center + half) / grid_step))
    idx = np.arange(lo, hi + 1)
    sbar = (idx * grid_step - center) / half
    keep = np.abs(sbar) <= 1.0
    idx, sbar = idx[keep], sbar[keep]
    if periodic_length is not None:
        idx = np.mod(idx, n_grid)
    return idx, sbar


def sample_subdomains(
    traj: TrajectoryRecord,
    half_widths: tuple[float, float],
    count: int,
    seed: int = 0,
) -> list[Subdomain]:
    """Draw subdomain centers uniformly: x periodic, t inset by the window.

    Reproducible from the seed.  Raises when the window does not fit the
    domain or holds fewer than 8 grid points per axis.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    hx, ht = float(half_widths[0]), float(half_widths[1])
    L = traj.config.domain_length
    t0, t1 = float(traj.t_grid[0]), float(traj.t_grid[-1])
    if 2 * hx > L or 2 * ht > (t1 - t0):
        raise ValueError("subdomain window larger than the domain")
    dx = L / traj.config.nx
    dt = float(traj.t_grid[1] - traj.t_grid[0])
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        xc = float(rng.uniform(0.0, L))
        tc = float(rng.uniform(t0 + ht, t1 - ht))
        xi, xbar = _window_indices(xc, hx, dx, traj.config.nx, periodic_length=L)
        ti, tbar = _window_indices(tc, ht, dt, len(traj.t_grid))
        out.append(
            Subdomain(
                (xc, tc),
                (hx, ht),
                xi,
                slice(int(ti[0]), int(ti[-1]) + 1),
                xbar,
                tbar,
            )
        )
    return out


def _trapezoid_weights(sbar: np.ndarray) -> np.ndarray:
    """Trapezoid weights over [-1, 1] with implicit zero-valued endpoints.

    The integrand always carries the envelope, which vanishes at +-1, so
    extending the rule to the exact window edges costs nothing."""
    pts = np.concatenate(([-1.0], sbar, [1.0]))
    w = 0.5 * (pts[2:] - pts[:-2])
    return w


@dataclass(frozen=True)
class ScaleModel:
    """Characteristic scales: mu_u for bare fields, sigma_u / (T^a L^b) for
    a factor carrying a time and b space derivatives."""

    mu_u: float
    sigma_u: float
    length_scale: float
    time_scale: float

    def __post_init__(self):
        if min(self.mu_u, self.sigma_u, self.length_scale, self.time_scale) <= 0:
            raise ValueError("all scales must be positive")

    @classmethod
    def from_trajectory(cls, traj: TrajectoryRecord) -> "ScaleModel":
        """Parameter-free scales measured from the data.

        The amplitude scale is the mean magnitude (the raw mean of a
        zero-mean field is useless as a scale).  The length scale is the
        root-mean-square gradient length sqrt(2) sigma_u / sigma_{du/dx}
        (Taylor-microscale convention) and the time scale is its advective
        crossing time.  These two conventions were settled empirically:
        plain sigma ratios misbalance the high-derivative columns enough
        to derail greedy addition on chaotic test data.
        """
        u = traj.u
        mu = float(np.mean(np.abs(u)))
        sigma = float(np.std(u))
        ux = _spectral_derivative(traj, 1)
        length = np.sqrt(2.0) * sigma / float(np.std(ux))
        return cls(
            mu_u=mu,
            sigma_u=sigma,
            length_scale=length,
            time_scale=length / mu,
        )


def scale_of(word: SymbolicWord, scales: ScaleModel) -> float:
    """Product of per-factor scales for one library word."""
    total = 1.0
    for _, derivs in word.factors:
        counts = dict(derivs)
        a = counts.get("dt", 0)
        b = counts.get("dx", 0)
        if a + b == 0:
            total *= scales.mu_u
        else:
            total *= scales.sigma_u / (
                scales.time_scale**a * scales.length_scale**b
            )
    return total


def _spectral_derivative(traj: TrajectoryRecord, order: int) -> np.ndarray:
    """order-th x derivative of the whole field via the periodic transform."""
    nx = traj.config.nx
    q = 2.0 * np.pi * np.arange(nx // 2 + 1) / traj.config.domain_length
    return np.fft.irfft((1j * q) ** order * np.fft.rfft(traj.u, axis=1), n=nx, axis=1)


def _word_kind(word: SymbolicWord) -> tuple[str, tuple[int, ...]]:
    """Classify a word: ("dt", ()) for the pinned dt(u) term, else
    ("dx", per-factor x-derivative orders)."""
    dt_total = word.derivative_order("dt")
    if dt_total > 0:
        if (
            dt_total == 1
            and len(word.factors) == 1
            and word.derivative_order("dx") == 0
        ):
            return "dt", ()
        raise ValueError(
            f"word {word.display()!r} mixes time derivatives; only the "
            "pinned dt(u) term is evaluable"
        )
    orders = []
    for field_sym, derivs in word.factors:
        if field_sym != "u":
            raise ValueError(f"unknown field {field_sym!r} in word")
        orders.append(dict(derivs).get("dx", 0))
    return "dx", tuple(orders)


class _Evaluator:
    """Caches spectral derivative fields and per-subdomain weight stencils."""

    def __init__(self, traj: TrajectoryRecord, weight: WeightSpec):
        self.traj = traj
        self.weight = weight
        self._deriv: dict[int, np.ndarray] = {}

    def derivative_field(self, order: int) -> np.ndarray:
        if order not in self._deriv:
            self._deriv[order] = (
                self.traj.u if order == 0 else _spectral_derivative(self.traj, order)
            )
        return self._deriv[order]

    def word_field(self, word: SymbolicWord) -> tuple[str, np.ndarray]:
        kind, orders = _word_kind(word)
        if kind == "dt":
            return kind, self.traj.u
        fn = self.derivative_field(orders[0]).copy()
        for order in orders[1:]:
            fn *= self.derivative_field(order)
        return kind, fn

    def stencil(self, sd: Subdomain):
        """(plain weight matrix, dt-by-parts weight matrix, V_m)."""
        wx = _trapezoid_weights(sd.xbar) * self.weight.envelope(sd.xbar)
        wt_plain = _trapezoid_weights(sd.tbar) * self.weight.envelope(sd.tbar)
        wt_dt = _trapezoid_weights(sd.tbar) * self.weight.envelope_dot(sd.tbar)
        w_plain = np.outer(wt_plain, wx)
        w_dt = np.outer(wt_dt, wx) * (-1.0 / sd.half_widths[1])
        v_m = float(np.sum(w_plain))  # envelope is nonnegative
        return w_plain, w_dt, v_m

    def integrate(self, kind: str, fn: np.ndarray, sd: Subdomain, stencil) -> float:
        w_plain, w_dt, _ = stencil
        patch = fn[sd.t_slice][:, sd.x_indices]
        w = w_dt if kind == "dt" else w_plain
        return float(np.sum(w * patch))


def evaluate_word(
    word: SymbolicWord,
    traj: TrajectoryRecord,
    subdomain: Subdomain,
    weight: WeightSpec = WeightSpec(),
) -> float:
    """Raw weighted integral of one word over one subdomain (no V_m, S_n)."""
    ev = _Evaluator(traj, weight)
    kind, fn = ev.word_field(word)
    return ev.integrate(kind, fn, subdomain, ev.stencil(subdomain))


def weight_volume(
    subdomain: Subdomain, weight: WeightSpec = WeightSpec()
) -> float:
    """V_m: the integral of |phi| over the subdomain, same quadrature."""
    wx = _trapezoid_weights(subdomain.xbar) * weight.envelope(subdomain.xbar)
    wt = _trapezoid_weights(subdomain.tbar) * weight.envelope(subdomain.tbar)
    return float(np.sum(wt) * np.sum(wx))


def build_feature_matrix(
    library: Library,
    traj: TrajectoryRecord,
    subdomains: list[Subdomain],
    weight: WeightSpec = WeightSpec(),
    scales: ScaleModel | None = None,
) -> FeatureMatrix:
    """Assemble G[m, n] = integral_m(word_n) / (V_m * S_n).

    Rows follow the subdomain list order, columns the library term order
    (pinned extra terms first).  Raises on non-finite entries.
    """
    if library.size == 0:
        raise ValueError("empty library")
    if not subdomains:
        raise ValueError("no subdomains")
    if scales is None:
        scales = ScaleModel.from_trajectory(traj)
    ev = _Evaluator(traj, weight)
    stencils = [ev.stencil(sd) for sd in subdomains]
    volumes = np.array([st[2] for st in stencils])
    terms = library.terms
    G = np.empty((len(subdomains), len(terms)))
    for n, word in enumerate(terms):
        kind, fn = ev.word_field(word)
        s_n = scale_of(word, scales)
        for m, sd in enumerate(subdomains):
            G[m, n] = ev.integrate(kind, fn, sd, stencils[m])
        G[:, n] /= volumes * s_n
    if not np.all(np.isfinite(G)):
        raise ArithmeticError("non-finite feature-matrix entries")
    return FeatureMatrix(G, library.labels())
