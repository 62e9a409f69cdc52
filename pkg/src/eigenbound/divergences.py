"""Chi-square divergences and Fisher information forms.

Covers the Gaussian PCA model ``N(0, U Lambda U^T)^{\\otimes n}`` and the matrix
denoising model ``X = U Lambda U^T + sigma W`` with ``W`` drawn from the GOE.
Both Fisher forms are diagonal in the ``L^(ij)`` basis of so(p).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import Spectrum, expm_skew, generator_pairs


@dataclass(frozen=True)
class PcaModel:
    spectrum: Spectrum
    n: int

    def __post_init__(self):
        self.spectrum.require_positive()
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def p(self) -> int:
        return self.spectrum.p

    def covariance(self, U: np.ndarray | None = None) -> np.ndarray:
        L = np.diag(self.spectrum.values)
        return L if U is None else U @ L @ U.T


@dataclass(frozen=True)
class DenoiseModel:
    spectrum: Spectrum
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @property
    def p(self) -> int:
        return self.spectrum.p

    def signal(self, U: np.ndarray | None = None) -> np.ndarray:
        L = np.diag(self.spectrum.values)
        return L if U is None else U @ L @ U.T


@dataclass(frozen=True)
class FisherForm:
    """Quadratic form on so(p) that is diagonal in the ``L^(ij)`` basis.

    ``weights[i, j]`` (0-based, symmetric) is the coefficient such that
    ``I(xi, eta) = 1/2 * sum_{i,j} weights[i,j] xi_ij eta_ij``; hence
    ``I(L^(ij), L^(ij)) = weights[i, j]``.
    """

    model: str
    weights: np.ndarray

    def __call__(self, xi: np.ndarray, eta: np.ndarray) -> float:
        return float(0.5 * np.sum(self.weights * np.asarray(xi) * np.asarray(eta)))

    @property
    def p(self) -> int:
        return self.weights.shape[0]

    def diagonal(self, i: int, j: int) -> float:
        """``I(L^(ij), L^(ij))`` with 1-based indices."""
        return float(self.weights[i - 1, j - 1])

    def gram(self) -> np.ndarray:
        """Dense Gram matrix in the ``L^(ij)`` basis (``generator_pairs`` order)."""
        pairs = generator_pairs(self.p)
        return np.diag([self.weights[i - 1, j - 1] for i, j in pairs])


class DivergentChiSquare(ArithmeticError):
    """The chi-square divergence is infinite at the requested parameter."""


# ---------------------------------------------------------------------------
# chi-square
# ---------------------------------------------------------------------------


def chi2_product(chi_a: float, chi_b: float) -> float:
    if chi_a < 0 or chi_b < 0:
        raise ValueError("chi-square values are nonnegative")
    return (1.0 + chi_a) * (1.0 + chi_b) - 1.0


def chi2_power(chi_single: float, n: int) -> float:
    """n-fold product of identical pairs, computed as ``expm1(n log1p(chi))``."""
    if math.isinf(chi_single):
        return math.inf
    try:
        return math.expm1(n * math.log1p(chi_single))
    except OverflowError:
        return math.inf


def _log1p_chi2_gauss_cov(S1: np.ndarray, S0: np.ndarray) -> float:
    """``log(1 + chi2(N(0,S1), N(0,S0)))``; inf when ``2 S1^{-1} - S0^{-1}`` is not PD."""
    w, V = np.linalg.eigh(S1)
    root = V @ np.diag(np.sqrt(w)) @ V.T
    mu = np.linalg.eigvalsh(root @ np.linalg.solve(S0, root))
    if np.any(mu >= 2.0):
        return math.inf
    # 1 + chi2 = det(2I - S1 S0^{-1})^{-1/2}
    return float(-0.5 * np.sum(np.log1p(1.0 - mu)))


def chi2_pca_exact(model: PcaModel, V: np.ndarray) -> float:
    """``(1 + chi2_1)^n - 1`` with ``1 + chi2_1 = det(2I - Lambda V Lambda^{-1} V^T)^{-1/2}``.

    Returns ``inf`` when ``2I - Lambda V Lambda^{-1} V^T`` has an eigenvalue ``<= 0``.
    """
    # S1 = Lambda, S0 = V Lambda V^T gives S1 S0^{-1} = Lambda V Lambda^{-1} V^T
    return chi2_pca_pair(model, np.eye(model.p), V)


def chi2_pca_pair(model: PcaModel, U1: np.ndarray, U0: np.ndarray) -> float:
    """chi-square between ``P_{U1}`` and ``P_{U0}`` for the n-sample PCA model."""
    S1 = model.covariance(U1)
    S0 = model.covariance(U0)
    log1p_single = _log1p_chi2_gauss_cov(S1, S0)
    if math.isinf(log1p_single):
        return math.inf
    try:
        return math.expm1(model.n * log1p_single)
    except OverflowError:
        return math.inf


def chi2_gauss_meanshift(mu1: np.ndarray, mu2: np.ndarray, Sigma: np.ndarray) -> float:
    """``exp(|Sigma^{-1/2}(mu1 - mu2)|^2) - 1`` for a common covariance."""
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    diff = np.asarray(mu1, dtype=float) - np.asarray(mu2, dtype=float)
    try:
        C = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Sigma must be positive definite") from exc
    z = np.linalg.solve(C, diff)
    q = float(z @ z)
    try:
        return math.expm1(q)
    except OverflowError:
        return math.inf


def vech(A: np.ndarray) -> np.ndarray:
    """Column-wise lower half-vectorisation ``(A_11, A_21, ..., A_p1, A_22, ...)``."""
    A = np.asarray(A)
    p = A.shape[0]
    return np.concatenate([A[j:, j] for j in range(p)])


def goe_vech_covariance(p: int) -> np.ndarray:
    """Covariance of ``vech(W)`` for a GOE matrix: 2 on diagonal slots, 1 elsewhere."""
    diag = np.concatenate([[2.0] + [1.0] * (p - j - 1) for j in range(p)])
    return np.diag(diag)


def chi2_denoise_exact(model: DenoiseModel, V: np.ndarray, *, via_vech: bool = False) -> float:
    """chi-square between ``P_V`` and ``P_I`` in the denoising model.

    Default path uses ``|Sigma_W^{-1/2} vech(A)|^2 = |A|_HS^2 / 2``; ``via_vech``
    forms the half-vectorised Gaussian explicitly (used as a cross-check).
    """
    A0 = model.signal()
    A1 = model.signal(V)
    if via_vech:
        Sigma = model.sigma**2 * goe_vech_covariance(model.p)
        return chi2_gauss_meanshift(vech(A1), vech(A0), Sigma)
    q = float(np.sum((A1 - A0) ** 2)) / (2.0 * model.sigma**2)
    try:
        return math.expm1(q)
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# Fisher forms
# ---------------------------------------------------------------------------


def fisher_pca(model: PcaModel) -> FisherForm:
    """``I(xi, eta) = (n/2) sum_ij xi_ij eta_ij (lam_i - lam_j)^2 / (lam_i lam_j)``."""
    lam = model.spectrum.values
    W = model.n * (lam[:, None] - lam[None, :]) ** 2 / (lam[:, None] * lam[None, :])
    return FisherForm("pca", W)


def fisher_denoise(model: DenoiseModel) -> FisherForm:
    """``I(xi, eta) = (1 / 2 sigma^2) sum_ij xi_ij eta_ij (lam_i - lam_j)^2``."""
    lam = model.spectrum.values
    W = (lam[:, None] - lam[None, :]) ** 2 / model.sigma**2
    return FisherForm("denoise", W)


def chi2_curve(model: PcaModel | DenoiseModel, base: np.ndarray | None = None) -> Callable:
    """``t, xi -> chi2(P_{base exp(t xi)}, P_base)`` for either model."""
    p = model.p
    U0 = np.eye(p) if base is None else np.asarray(base, dtype=float)

    if isinstance(model, PcaModel):

        def f(xi, t):
            return chi2_pca_pair(model, U0 @ expm_skew(xi, t), U0)

    else:

        def f(xi, t):
            A1 = U0 @ expm_skew(xi, t)
            q = float(np.sum((model.signal(A1) - model.signal(U0)) ** 2)) / (2.0 * model.sigma**2)
            return math.expm1(q)

    return f


def fisher_fd_check(form: FisherForm, chi2_fn: Callable, xi: np.ndarray, t: float = 1e-3) -> float:
    """Relative error of the Richardson-extrapolated ``chi2(t)/t^2`` against ``I(xi, xi)``.

    ``chi2_fn(xi, t)`` evaluates the divergence along ``exp(t xi)``.
    """
    target = form(xi, xi)
    if not target > 0:
        raise ValueError("Fisher form vanishes in this direction")
    c1 = chi2_fn(xi, t)
    c2 = chi2_fn(xi, t / 2)
    if math.isinf(c1) or math.isinf(c2):
        raise DivergentChiSquare(f"chi-square diverges at t={t}")
    r1 = c1 / t**2
    r2 = c2 / (t / 2) ** 2
    extrapolated = (4.0 * r2 - r1) / 3.0
    return abs(extrapolated - target) / target


def kl_spiked(P1: np.ndarray, P2: np.ndarray, lam_d: float, lam_d1: float, n: int) -> float:
    """KL divergence between spiked models built from equal-rank projectors."""
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    if round(np.trace(P1)) != round(np.trace(P2)):
        raise ValueError("projectors must have equal rank")
    if not lam_d > lam_d1 > 0:
        raise ValueError("need lam_d > lam_d1 > 0")
    return n * (lam_d - lam_d1) ** 2 / (4.0 * lam_d * lam_d1) * float(np.sum((P1 - P2) ** 2))


def kl_gauss_cov(S1: np.ndarray, S0: np.ndarray) -> float:
    """``KL(N(0,S1) || N(0,S0))`` (used to cross-check :func:`kl_spiked`)."""
    p = S1.shape[0]
    M = np.linalg.solve(S0, S1)
    sign, logdet = np.linalg.slogdet(M)
    return 0.5 * (np.trace(M) - p - logdet)
