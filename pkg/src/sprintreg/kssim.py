"""Pseudospectral generator for a modified Kuramoto-Sivashinsky equation.

The model is u_t + u u_x + u_xx + u_xxxx = eps * sum_{k=3..6} d/dx(u^k) on a
periodic domain, integrated with the 3-stage Gauss-Legendre implicit
Runge-Kutta method (order 6).  The tiny eps terms are the deliberately
planted signal the downstream regression has to dig out, so the integrator
and the dealiasing are engineered to keep numerical defects well below the
1e-6 coefficient scale.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "SimConfig",
    "NoiseSpec",
    "TrajectoryRecord",
    "rhs",
    "gl6_step",
    "simulate",
    "add_noise",
    "save_trajectory",
    "load_trajectory",
]

_SQ15 = np.sqrt(15.0)
# Butcher tableau of the order-6 Gauss-Legendre collocation method
_GL6_A = np.array(
    [
        [5 / 36, 2 / 9 - _SQ15 / 15, 5 / 36 - _SQ15 / 30],
        [5 / 36 + _SQ15 / 24, 2 / 9, 5 / 36 - _SQ15 / 24],
        [5 / 36 + _SQ15 / 30, 2 / 9 + _SQ15 / 15, 5 / 36],
    ]
)
_GL6_B = np.array([5 / 18, 4 / 9, 5 / 18])

_MAX_NEWTON = 100


@dataclass(frozen=True)
class SimConfig:
    domain_length: float = 22.0
    total_time: float = 400.0
    nx: int = 128
    nt: int = 5120
    epsilon: float = 1e-6
    newton_tol: float = 1e-9
    substeps: int = 1  # integration steps per stored sample interval
    dealias_factor: int = 4  # padded-grid multiple for nonlinear products

    def __post_init__(self):
        if self.nx < 4 or (self.nx & (self.nx - 1)) != 0:
            raise ValueError("nx must be a power of two")
        if self.nt < 2:
            raise ValueError("nt must be at least 2")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.dealias_factor < 4:
            # powers up to u^6 spread content to 6x the retained band
            raise ValueError("dealias_factor below 4 aliases the u^6 term")

    @property
    def x_grid(self) -> np.ndarray:
        return self.domain_length * np.arange(self.nx) / self.nx

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.total_time, self.nt)

    @property
    def sample_dt(self) -> float:
        return self.total_time / (self.nt - 1)


@dataclass(frozen=True)
class NoiseSpec:
    amplitude: float = 1e-7
    mean: float = 0.0
    std: float = 0.218
    seed: int = 0

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("noise std must be positive")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Space-time field samples u[t, x] with generating configuration."""

    u: np.ndarray
    x_grid: np.ndarray
    t_grid: np.ndarray
    config: SimConfig
    noise: NoiseSpec | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        if not np.all(np.isfinite(u)):
            raise ValueError("trajectory contains non-finite values")


def wavenumbers(config: SimConfig) -> np.ndarray:
    """Physical wavenumbers of the rfft modes, 2*pi*j/L."""
    return 2.0 * np.pi * np.arange(config.nx // 2 + 1) / config.domain_length


def _linear_symbol(config: SimConfig) -> np.ndarray:
    q = wavenumbers(config)
    return q**2 - q**4


def _pad_to_fine(u_hat: np.ndarray, nx: int, nfine: int) -> np.ndarray:
    """Spectrally interpolate onto the padded grid (last axis is modes)."""
    shape = u_hat.shape[:-1] + (nfine // 2 + 1,)
    padded = np.zeros(shape, dtype=complex)
    padded[..., : nx // 2 + 1] = u_hat
    return np.fft.irfft(padded, n=nfine, axis=-1) * (nfine / nx)


def _fine_to_hat(field: np.ndarray, nx: int, nfine: int) -> np.ndarray:
    return np.fft.rfft(field, axis=-1)[..., : nx // 2 + 1] * (nx / nfine)


def rhs(u_hat: np.ndarray, config: SimConfig) -> np.ndarray:
    """Tendency in spectral space; broadcasts over leading axes.

    Nonlinear powers are formed pointwise on a zero-padded grid so products
    up to u^6 stay alias-free on the retained band.
    """
    nx = config.nx
    q = wavenumbers(config)
    nfine = config.dealias_factor * nx
    u_fine = _pad_to_fine(u_hat, nx, nfine)
    out = _linear_symbol(config) * u_hat
    # advection u u_x written as (1/2) d/dx u^2
    u2 = u_fine * u_fine
    out = out - 0.5j * q * _fine_to_hat(u2, nx, nfine)
    if config.epsilon != 0.0:
        pk = u2
        mod = np.zeros_like(out)
        for _ in range(3, 7):
            pk = pk * u_fine
            mod = mod + _fine_to_hat(pk, nx, nfine)
        out = out + config.epsilon * 1j * q * mod
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("blowup")
    return out


def _phys_norm(h_hat: np.ndarray, nx: int) -> float:
    """l2 norm over grid points of the field(s) behind rfft coefficients."""
    mag2 = np.abs(h_hat) ** 2
    total = 2.0 * np.sum(mag2) - np.sum(mag2[..., 0])
    if nx % 2 == 0:
        total -= np.sum(mag2[..., -1])
    return np.sqrt(max(total, 0.0) / nx)


def _stage_solver(config: SimConfig, dt: float):
    """Per-mode 3x3 inverses of (I - dt * lambda_q * A) for the simplified
    Newton iteration that treats the stiff linear symbol exactly."""
    lam = _linear_symbol(config)
    eye = np.eye(3)
    mats = eye[None, :, :] - dt * lam[:, None, None] * _GL6_A[None, :, :]
    return np.linalg.inv(mats)  # (modes, 3, 3)


def gl6_step(
    u: np.ndarray,
    dt: float,
    config: SimConfig,
    _solver_cache: dict | None = None,
) -> np.ndarray:
    """Advance the field one step of the 3-stage Gauss-Legendre method.

    The implicit stage system K_i = F(u + dt sum_j A_ij K_j) is iterated
    with the linear part inverted exactly per mode and the nonlinear part
    refreshed each sweep, until the stacked stage residual's physical l2
    norm falls below ``config.newton_tol``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if _solver_cache is not None and _solver_cache.get("dt") == dt:
        minv = _solver_cache["minv"]
    else:
        minv = _stage_solver(config, dt)
        if _solver_cache is not None:
            _solver_cache.update(dt=dt, minv=minv)

    u_hat = np.fft.rfft(np.asarray(u, dtype=np.float64))
    K = np.broadcast_to(rhs(u_hat, config), (3, u_hat.shape[-1])).copy()
    for _ in range(_MAX_NEWTON):
        Y = u_hat[None, :] + dt * (_GL6_A @ K)
        R = K - rhs(Y, config)
        if _phys_norm(R, config.nx) < config.newton_tol:
            u_next = u_hat + dt * (_GL6_B @ K)
            return np.fft.irfft(u_next, n=config.nx)
        K = K - np.einsum("qij,jq->iq", minv, R)
    raise ArithmeticError("stage solve diverged")


def initial_condition(config: SimConfig) -> np.ndarray:
    """cos(3 xt) - sin(xt)/2 on the scaled coordinate xt = 2 pi x / L;
    breaks translation symmetry but keeps shift-reflection symmetry."""
    xt = 2.0 * np.pi * config.x_grid / config.domain_length
    return np.cos(3.0 * xt) - 0.5 * np.sin(xt)


def simulate(config: SimConfig = SimConfig()) -> TrajectoryRecord:
    """Integrate from the stock initial condition, storing nt samples."""
    dt = config.sample_dt / config.substeps
    cache: dict = {}
    u = initial_condition(config)
    samples = np.empty((config.nt, config.nx))
    samples[0] = u
    for i in range(1, config.nt):
        for _ in range(config.substeps):
            try:
                u = gl6_step(u, dt, config, cache)
            except ArithmeticError as exc:
                t_last = config.t_grid[i - 1]
                raise ArithmeticError(
                    f"{exc} (last good time t={t_last:.6g})"
                ) from exc
        samples[i] = u
    return TrajectoryRecord(samples, config.x_grid, config.t_grid, config)


def add_noise(traj: TrajectoryRecord, spec: NoiseSpec) -> TrajectoryRecord:
    """Additive i.i.d. Gaussian perturbation, reproducible from the seed."""
    rng = np.random.default_rng(spec.seed)
    eta = rng.normal(spec.mean, spec.std, size=traj.u.shape)
    return TrajectoryRecord(
        traj.u + spec.amplitude * eta,
        traj.x_grid,
        traj.t_grid,
        traj.config,
        noise=spec,
    )


# ---------------------------------------------------------------------------
# on-disk format: JSON header + little-endian f64 payload, row = time sample
# ---------------------------------------------------------------------------


def save_trajectory(traj: TrajectoryRecord, path) -> None:
    header = json.dumps(
        {
            "config": asdict(traj.config),
            "noise": asdict(traj.noise) if traj.noise else None,
            "shape": list(traj.u.shape),
        }
    ).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(traj.u).astype("<f8").tobytes())


def load_trajectory(path) -> TrajectoryRecord:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        doc = json.loads(fh.read(hlen).decode())
        nt, nx = doc["shape"]
        u = np.frombuffer(fh.read(8 * nt * nx), dtype="<f8").reshape(nt, nx)
    config = SimConfig(**doc["config"])
    noise = NoiseSpec(**doc["noise"]) if doc["noise"] else None
    return TrajectoryRecord(u, config.x_grid, config.t_grid, config, noise)
