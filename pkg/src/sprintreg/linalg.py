"""Dense feature-matrix container, homogeneous residual, and SVD/QR kernels.

Everything downstream (secular updates, greedy searches, weak-form assembly)
works in terms of the three types defined here.  All types are immutable after
construction and safe to share across threads; the operations are pure
functions.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FeatureMatrix",
    "SvdFactorization",
    "CoefficientVector",
    "residual",
    "economy_svd",
    "min_null_vector",
    "qr_reduce",
]

_ORTHO_TOL = 1e-12
_RECON_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureMatrix:
    """m x n matrix of observations with one symbolic label per column.

    ``source_rows`` records the row count of the matrix the data originally
    came from.  It equals ``m`` for freshly built matrices but is preserved
    under QR reduction so that residual values stay comparable before and
    after the reduction (the residual normalizer is 1/sqrt(source_rows)).
    """

    values: np.ndarray
    term_labels: tuple[str, ...]
    source_rows: int = 0

    def __post_init__(self):
        vals = np.asfortranarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError("feature matrix must be 2-D and nonempty")
        if not np.all(np.isfinite(vals)):
            raise ValueError("feature matrix contains non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        labels = tuple(str(t) for t in self.term_labels)
        if len(labels) != vals.shape[1]:
            raise ValueError(
                f"{len(labels)} labels for {vals.shape[1]} columns"
            )
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate term labels")
        object.__setattr__(self, "term_labels", labels)
        if self.source_rows <= 0:
            object.__setattr__(self, "source_rows", vals.shape[0])

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def submatrix(self, columns) -> np.ndarray:
        """Dense copy of the given columns (ascending order not required)."""
        return self.values[:, list(columns)]

    def restrict(self, columns) -> "FeatureMatrix":
        """New FeatureMatrix keeping only ``columns``, preserving source_rows."""
        cols = list(columns)
        return FeatureMatrix(
            self.values[:, cols],
            tuple(self.term_labels[j] for j in cols),
            source_rows=self.source_rows,
        )

    # ---- serialization ----------------------------------------------------

    def to_csv(self, path) -> None:
        """Header row of term labels, then one observation per row."""
        with open(path, "w") as fh:
            fh.write(",".join(self.term_labels) + "\n")
            np.savetxt(fh, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        with open(path) as fh:
            labels = fh.readline().rstrip("\n").split(",")
            vals = np.loadtxt(fh, delimiter=",", ndmin=2)
        return cls(vals, tuple(labels))

    def to_binary(self, path) -> None:
        """JSON header (shape, labels, source_rows) + row-major f64 payload."""
        header = json.dumps(
            {
                "shape": [self.m, self.n],
                "term_labels": list(self.term_labels),
                "source_rows": self.source_rows,
            }
        ).encode()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.values).astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "FeatureMatrix":
        with open(path, "rb") as fh:
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode())
            m, n = header["shape"]
            payload = fh.read(8 * m * n)
        vals = np.frombuffer(payload, dtype="<f8").reshape(m, n)
        return cls(
            vals,
            tuple(header["term_labels"]),
            source_rows=int(header.get("source_rows", m)),
        )


@dataclass(frozen=True)
class SvdFactorization:
    """Economy SVD U @ diag(sigma) @ V.T with sigma sorted nonincreasing."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "U", _readonly(self.U))
        object.__setattr__(self, "sigma", _readonly(self.sigma))
        object.__setattr__(self, "V", _readonly(self.V))

    @property
    def rank_dim(self) -> int:
        """Number of retained singular triplets, min(m, n)."""
        return self.sigma.shape[0]

    @property
    def sigma_min(self) -> float:
        return float(self.sigma[-1])

    def validate(self, G: np.ndarray | None = None) -> None:
        """Raise if orthonormality or reconstruction invariants fail."""
        r = self.rank_dim
        if np.max(np.abs(self.U.T @ self.U - np.eye(r))) > _ORTHO_TOL:
            raise ValueError("U columns not orthonormal")
        if np.max(np.abs(self.V.T @ self.V - np.eye(r))) > _ORTHO_TOL:
            raise ValueError("V columns not orthonormal")
        if np.any(np.diff(self.sigma) > 0) or np.any(self.sigma < 0):
            raise ValueError("sigma not sorted nonincreasing and nonnegative")
        if G is not None:
            recon = (self.U * self.sigma) @ self.V.T
            scale = np.linalg.norm(G)
            if np.linalg.norm(recon - G) > _RECON_TOL * max(scale, 1e-300):
                raise ValueError("U sigma V^T does not reconstruct G")


@dataclass(frozen=True)
class CoefficientVector:
    """Unit-norm coefficients on a sorted support of column indices."""

    support: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        supp = tuple(int(j) for j in self.support)
        if any(b <= a for a, b in zip(supp, supp[1:])):
            raise ValueError("support must be strictly increasing")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(supp),):
            raise ValueError("values must align with support")
        nrm = np.linalg.norm(vals)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"coefficients not unit norm (|c| = {nrm})")
        vals = _readonly(vals)
        object.__setattr__(self, "support", supp)
        object.__setattr__(self, "values", vals)

    @property
    def nnz(self) -> int:
        return len(self.support)

    def dense(self, n: int) -> np.ndarray:
        """Embed into length-n vector with zeros off the support."""
        out = np.zeros(n)
        out[list(self.support)] = self.values
        return out


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip sign so the largest-magnitude entry is positive (deterministic)."""
    j = int(np.argmax(np.abs(v)))
    return -v if v[j] < 0 else v


def unit_coefficients(support, values) -> CoefficientVector:
    """Normalize and sign-fix raw coefficients into a CoefficientVector."""
    vals = np.asarray(values, dtype=np.float64)
    nrm = np.linalg.norm(vals)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ValueError("degenerate coefficient vector")
    return CoefficientVector(tuple(support), _canonical_sign(vals / nrm))


def residual(G: FeatureMatrix, c: CoefficientVector) -> float:
    """Homogeneous residual (1/sqrt(m)) * |G c| / |c|.

    ``m`` is ``G.source_rows``: the original observation count, which keeps
    residuals comparable across QR-reduced and raw matrices.  Invariant under
    rescaling of c.
    """
    if c.nnz == 0:
        raise ValueError("degenerate coefficient vector")
    if c.support[-1] >= G.n:
        raise ValueError("support index out of range")
    nrm = np.linalg.norm(c.values)
    if nrm == 0.0:
        raise ValueError("degenerate coefficient vector")
    r = np.linalg.norm(G.submatrix(c.support) @ c.values) / nrm
    return float(r / np.sqrt(G.source_rows))


def economy_svd(G: FeatureMatrix | np.ndarray) -> SvdFactorization:
    """Economy SVD of the matrix; delegates to LAPACK via numpy."""
    A = G.values if isinstance(G, FeatureMatrix) else np.asarray(G, float)
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite input to SVD")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return SvdFactorization(U, s, Vt.T)


def min_null_vector(F: SvdFactorization) -> tuple[CoefficientVector, float]:
    """Exact unconstrained minimizer of |G c|/|c|: the trailing right
    singular vector, returned dense over all columns, with sigma_min."""
    n = F.V.shape[0]
    c = unit_coefficients(range(n), F.V[:, -1])
    return c, F.sigma_min


def qr_reduce(G: FeatureMatrix) -> FeatureMatrix:
    """Replace a tall matrix by its square upper-triangular QR factor R.

    Singular values (hence every downstream optimization curve) are
    preserved; ``source_rows`` is carried over so residual values match the
    unreduced matrix.
    """
    if G.m < G.n:
        raise ValueError("underdetermined; QR reduction skipped")
    R = np.linalg.qr(np.ascontiguousarray(G.values), mode="r")
    return FeatureMatrix(R, G.term_labels, source_rows=G.source_rows)
