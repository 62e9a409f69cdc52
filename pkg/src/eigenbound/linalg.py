"""Linear algebra on SO(p) and its Lie algebra so(p).

Generators, matrix exponentials, Haar and GOE sampling, eigenprojectors and
Hilbert-Schmidt geometry. Every sampler takes an explicit
``numpy.random.Generator``; use :func:`make_rng` to derive counter-based
(Philox) streams keyed by ``(seed, *key)`` so replicates are independent of
evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROTATION_ORTH_TOL = 1e-10
ROTATION_DET_TOL = 1e-8
TIE_GAP_TOL = 1e-12
EXPM_TOL = 1e-13


class TieSplitError(ValueError):
    """Raised when an index set splits a block of (numerically) equal eigenvalues."""


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox stream for ``seed`` and a spawn key; same inputs give the same stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    """Nonincreasing eigenvalue sequence with a profile tag.

    ``profile`` is one of ``"explicit"``, ``"spiked"``, ``"poly"``, ``"exp"``;
    ``params`` holds the profile parameters (``d, hi, lo`` or ``alpha``).
    """

    values: np.ndarray
    profile: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("spectrum needs at least two eigenvalues")
        if np.any(np.diff(vals) > 0):
            raise ValueError("eigenvalues must be nonincreasing")
        if np.any(vals < 0):
            raise ValueError("eigenvalues must be nonnegative")

    @property
    def p(self) -> int:
        return int(self.values.size)

    def require_positive(self) -> None:
        if np.any(self.values <= 0):
            raise ValueError("PCA model needs strictly positive eigenvalues")

    @classmethod
    def explicit(cls, values: Iterable[float]) -> "Spectrum":
        return cls(np.asarray(list(values), dtype=float))

    @classmethod
    def spiked(cls, p: int, d: int, hi: float, lo: float) -> "Spectrum":
        if not 1 <= d < p:
            raise ValueError("need 1 <= d < p")
        if not hi > lo:
            raise ValueError("need hi > lo")
        vals = np.r_[np.full(d, float(hi)), np.full(p - d, float(lo))]
        return cls(vals, "spiked", {"d": d, "hi": float(hi), "lo": float(lo)})

    @classmethod
    def poly(cls, alpha: float, p: int) -> "Spectrum":
        """``lambda_j = j^{-alpha-1}``, truncated at ``p``."""
        j = np.arange(1, p + 1, dtype=float)
        return cls(j ** (-alpha - 1.0), "poly", {"alpha": float(alpha), "truncation": p})

    @classmethod
    def exp(cls, alpha: float, p: int) -> "Spectrum":
        """``lambda_j = exp(-alpha j)``, truncated at ``p``."""
        j = np.arange(1, p + 1, dtype=float)
        return cls(np.exp(-alpha * j), "exp", {"alpha": float(alpha), "truncation": p})


def index_set(members: Iterable[int], p: int) -> tuple[int, ...]:
    """Validate and normalise a 1-based index set to a sorted tuple."""
    out = tuple(sorted({int(m) for m in members}))
    if not out:
        raise ValueError("index set must be nonempty")
    if out[0] < 1 or out[-1] > p:
        raise ValueError(f"index set {out} not contained in 1..{p}")
    return out


def complement(members: Sequence[int], p: int) -> tuple[int, ...]:
    s = set(members)
    return tuple(j for j in range(1, p + 1) if j not in s)


def is_rotation(U: np.ndarray) -> bool:
    U = np.asarray(U, dtype=float)
    p = U.shape[-1]
    orth = np.linalg.norm(U.T @ U - np.eye(p))
    return bool(orth <= ROTATION_ORTH_TOL * p and abs(np.linalg.det(U) - 1.0) <= ROTATION_DET_TOL)


def is_projector(P: np.ndarray, rank: int | None = None) -> bool:
    P = np.asarray(P, dtype=float)
    ok = np.allclose(P, P.T, atol=1e-10, rtol=0) and np.allclose(P @ P, P, atol=1e-8, rtol=0)
    if rank is not None:
        ok = ok and abs(np.trace(P) - rank) <= 1e-8
    return bool(ok)


# ---------------------------------------------------------------------------
# so(p)
# ---------------------------------------------------------------------------


def basis_generator(i: int, j: int, p: int) -> np.ndarray:
    """``L^(ij) = e_i e_j^T - e_j e_i^T`` with 1-based ``i < j``."""
    if not (1 <= i <= p and 1 <= j <= p):
        raise ValueError(f"indices ({i}, {j}) out of range for p={p}")
    if i >= j:
        raise ValueError("basis_generator needs i < j")
    L = np.zeros((p, p))
    L[i - 1, j - 1] = 1.0
    L[j - 1, i - 1] = -1.0
    return L


def generator_pairs(p: int) -> list[tuple[int, int]]:
    """1-based pairs ``(i, j)``, ``i < j``, in row-major order."""
    return [(i, j) for i in range(1, p + 1) for j in range(i + 1, p + 1)]


def skew_from_coords(coords: np.ndarray, p: int) -> np.ndarray:
    """Assemble ``sum_k coords[..., k] L_k`` over :func:`generator_pairs` order."""
    coords = np.asarray(coords, dtype=float)
    iu = np.triu_indices(p, 1)
    X = np.zeros(coords.shape[:-1] + (p, p))
    X[..., iu[0], iu[1]] = coords
    return X - np.swapaxes(X, -1, -2)


def skew_coords(xi: np.ndarray) -> np.ndarray:
    """Strict upper triangle of a skew matrix, i.e. coordinates in the ``L^(ij)`` basis."""
    xi = np.asarray(xi, dtype=float)
    iu = np.triu_indices(xi.shape[-1], 1)
    return xi[..., iu[0], iu[1]]


def random_skew(p: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Standard Gaussian element of so(p) scaled to unit Hilbert-Schmidt norm."""
    shape = (p * (p - 1) // 2,) if size is None else (size, p * (p - 1) // 2)
    X = skew_from_coords(rng.standard_normal(shape), p)
    return X / np.linalg.norm(X, axis=(-2, -1), keepdims=True)


def expm_skew(xi: np.ndarray, t: float = 1.0, tol: float = EXPM_TOL) -> np.ndarray:
    """``exp(t xi)`` by scaling and squaring a truncated power series.

    Works on a single matrix or a stack ``(..., p, p)``. The series is
    truncated once the largest entry of the current term drops below ``tol``
    after scaling ``t xi`` to infinity-norm at most 1/2.
    """
    A = t * np.asarray(xi, dtype=float)
    p = A.shape[-1]
    norm = float(np.abs(A).sum(axis=-1).max()) if A.size else 0.0
    s = int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0
    B = A / 2.0**s
    out = np.broadcast_to(np.eye(p), A.shape).copy()
    term = out.copy()
    k = 1
    while True:
        term = term @ B / k
        out += term
        if np.abs(term).max() < tol * 2.0 ** (-s) or k > 60:
            break
        k += 1
    for _ in range(s):
        out = out @ out
    return out


def expm_rank2(i: int, x: Sequence[float] | np.ndarray, t: float) -> np.ndarray:
    """Closed form of ``exp(t xi)`` for ``xi = sum_{j != i} x_j L^(ij)``, ``|x| = 1``.

    ``x`` has length p with ``x[i-1]`` ignored. Uses ``xi^3 = -xi`` so that
    ``exp(t xi) = I + sin(t) xi + (1 - cos t) xi^2``; in particular the i-th
    column is ``cos t`` on the diagonal and ``-x_j sin t`` elsewhere.
    """
    x = np.asarray(x, dtype=float).copy()
    p = x.size
    x[i - 1] = 0.0
    if not np.isclose(np.dot(x, x), 1.0, atol=1e-12):
        raise ValueError("closed form needs sum_j x_j^2 = 1")
    xi = rank2_generator(i, x)
    return np.eye(p) + np.sin(t) * xi + (1.0 - np.cos(t)) * (xi @ xi)


def rank2_generator(i: int, x: np.ndarray) -> np.ndarray:
    """``sum_{j != i} x_j L^(ij)`` (sign convention of ``L^(ij)`` kept for j < i too)."""
    x = np.asarray(x, dtype=float)
    p = x.size
    e_i = np.zeros(p)
    e_i[i - 1] = 1.0
    y = x.copy()
    y[i - 1] = 0.0
    return np.outer(e_i, y) - np.outer(y, e_i)


def rotation2(theta: float) -> np.ndarray:
    """``exp(theta L^(12))`` in SO(2)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def haar_sample(p: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed element(s) of SO(p).

    QR of a Gaussian matrix, columns rescaled by ``sign(diag R)`` (Haar on
    O(p)), then the last column negated where the determinant is -1.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    shape = (p, p) if size is None else (size, p, p)
    Z = rng.standard_normal(shape)
    Q, R = np.linalg.qr(Z)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    Q = Q * d[..., None, :]
    det = np.linalg.det(Q)
    Q[..., :, -1] *= np.where(det < 0, -1.0, 1.0)[..., None]
    return Q


def goe_sample(p: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """GOE matrix: ``E W_ij^2 = 1`` off the diagonal, ``E W_ii^2 = 2``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    shape = (p, p) if size is None else (size, p, p)
    G = rng.standard_normal(shape)
    return (G + np.swapaxes(G, -1, -2)) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Projectors and distances
# ---------------------------------------------------------------------------


def projector(U: np.ndarray, I: Iterable[int]) -> np.ndarray:
    """``sum_{i in I} u_i u_i^T`` for the columns ``u_i`` of ``U`` (1-based ``I``)."""
    U = np.asarray(U, dtype=float)
    cols = np.asarray(index_set(I, U.shape[-1])) - 1
    V = U[..., :, cols]
    return V @ np.swapaxes(V, -1, -2)


def hs_distance_sq(A: np.ndarray, B: np.ndarray) -> float:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.sum((A - B) ** 2))


def boundary_gap(eigvals_desc: np.ndarray, I: Sequence[int]) -> float:
    """``min |mu_i - mu_j|`` over ``i in I``, ``j not in I`` (inf if I is everything)."""
    mu = np.asarray(eigvals_desc, dtype=float)
    idx = np.asarray(I) - 1
    mask = np.zeros(mu.size, dtype=bool)
    mask[idx] = True
    if mask.all():
        return float("inf")
    return float(np.min(np.abs(mu[mask][:, None] - mu[~mask][None, :])))


def eigenprojector_hat(S: np.ndarray, I: Iterable[int]) -> np.ndarray:
    """Projector onto eigenvectors of symmetric ``S`` with descending ranks in ``I``.

    Raises :class:`TieSplitError` if ``I`` separates eigenvalues closer than
    ``1e-12``; within a tied block the solver's order is kept.
    """
    S = np.asarray(S, dtype=float)
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, np.abs(S).max()), rtol=0):
        raise ValueError("S must be symmetric")
    I = index_set(I, S.shape[0])
    w, V = np.linalg.eigh(S)
    w, V = w[::-1], V[:, ::-1]
    if boundary_gap(w, I) < TIE_GAP_TOL:
        raise TieSplitError(f"index set {I} splits a tied eigenvalue block")
    cols = np.asarray(I) - 1
    return V[:, cols] @ V[:, cols].T
