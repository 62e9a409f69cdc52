"""Monte Carlo risk of the spectral plug-in estimator.

Replicate ``r`` always draws from the stream ``make_rng(seed, tag, r)``, so
results are bit-identical whatever the worker count or evaluation order.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .bounds import asymptotic_limit, capped_full_sum
from .divergences import DenoiseModel, PcaModel
from .linalg import (
    Spectrum,
    TieSplitError,
    boundary_gap,
    eigenprojector_hat,
    goe_sample,
    haar_sample,
    index_set,
    is_rotation,
    make_rng,
    projector,
)
from .prior import ChainConfig, ExpTracePrior, GeodesicMetropolis

TIE_WARN_FRACTION = 1e-3

# stream tags, the first spawn-key component
_TAG_PCA, _TAG_DENOISE, _TAG_BAYES_DATA, _TAG_BAYES_PRIOR, _TAG_HAAR = 0, 1, 2, 3, 4


class TieSplitWarning(RuntimeWarning):
    """More than 0.1% of replicates hit a numerically tied eigenvalue at the I-boundary."""


@dataclass(frozen=True)
class SimConfig:
    """``U_true`` is a rotation, ``"identity"``, ``"haar"`` or ``("prior", h)``."""

    model: PcaModel | DenoiseModel
    I: tuple[int, ...]
    U_true: object = "identity"
    replications: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        object.__setattr__(self, "I", index_set(self.I, self.model.p))

    def true_rotation(self) -> np.ndarray | None:
        """Fixed ``U`` for the run, or ``None`` when it is drawn per replicate."""
        U = self.U_true
        if isinstance(U, str):
            if U == "identity":
                return np.eye(self.model.p)
            if U == "haar":
                return None
            raise ValueError(f"unknown U_true {U!r}")
        if isinstance(U, tuple):
            return None
        U = np.asarray(U, dtype=float)
        if not is_rotation(U):
            raise ValueError("U_true must be a rotation")
        return U


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    std_error: float
    replications: int
    excluded: int = 0
    losses: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")

    def write_csv(self, path: str | os.PathLike) -> None:
        """Per-replicate losses; excluded replicates are absent."""
        if self.losses is None:
            raise ValueError("no per-replicate losses kept")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "loss"])
            for r, x in enumerate(self.losses):
                w.writerow([r, repr(float(x))])


def _summarise(losses: list[float], excluded: int, total: int) -> RiskEstimate:
    if excluded and excluded / total > TIE_WARN_FRACTION:
        warnings.warn(
            f"{excluded} of {total} replicates excluded (tie at the I-boundary)",
            TieSplitWarning,
            stacklevel=3,
        )
    if not losses:
        raise RuntimeError("every replicate was excluded")
    x = np.asarray(losses, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return RiskEstimate(float(x.mean()), se, int(x.size), excluded, x)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("EIGENBOUND_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, jobs):
    workers = _workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


def sample_covariance(lam: np.ndarray, U: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n^{-1} sum X_i X_i^T`` with ``X_i ~ N(0, U diag(lam) U^T)``.

    For ``n >= p`` the scatter matrix is drawn directly from the Wishart law
    (Bartlett decomposition); otherwise the ``n`` observations are drawn.
    """
    p = lam.size
    root = U * np.sqrt(lam)  # U diag(lam)^{1/2}
    if n >= p:
        W = stats.wishart.rvs(df=n, scale=np.eye(p), random_state=rng)
        W = np.atleast_2d(W)
        S = root @ W @ root.T / n
    else:
        Z = rng.standard_normal((n, p))
        X = Z @ root.T
        S = X.T @ X / n
    return 0.5 * (S + S.T)


def _pca_job(args):
    lam, U_fixed, I, n, seed, r = args
    rng = make_rng(seed, _TAG_PCA, r)
    U = haar_sample(lam.size, rng) if U_fixed is None else U_fixed
    S = sample_covariance(lam, U, n, rng)
    try:
        P_hat = eigenprojector_hat(S, I)
    except TieSplitError:
        return None
    return float(np.sum((P_hat - projector(U, I)) ** 2))


def simulate_pca_risk(cfg: SimConfig) -> RiskEstimate:
    """Mean of ``|P_I(Sigma_hat) - P_I(U)|_HS^2`` over replicates, with its SE."""
    model = cfg.model
    if not isinstance(model, PcaModel):
        raise TypeError("simulate_pca_risk needs a PcaModel")
    lam = model.spectrum.values
    if boundary_gap(lam, cfg.I) <= 0:
        raise ValueError(f"eigenvalue gap at the boundary of I={cfg.I} is zero")
    if isinstance(cfg.U_true, tuple):
        raise ValueError("use simulate_bayes_risk for prior-distributed U")
    U = cfg.true_rotation()
    jobs = [(lam, U, cfg.I, model.n, cfg.seed, r) for r in range(cfg.replications)]
    out = _map(_pca_job, jobs)
    losses = [x for x in out if x is not None]
    return _summarise(losses, len(out) - len(losses), len(out))


# ---------------------------------------------------------------------------
# Bayes risk under the exponential-trace prior
# ---------------------------------------------------------------------------


def prior_draws(p: int, h: float, n_draws: int, seed: int, config: ChainConfig | None = None) -> np.ndarray:
    """``n_draws`` thinned states from the geodesic Metropolis sampler for ``pi_h``.

    ``n_draws`` must be a multiple of the chain count (20 by default).
    """
    config = config or ChainConfig()
    K = config.n_chains
    if n_draws % K:
        raise ValueError(f"n_draws must be a multiple of n_chains={K}")
    from dataclasses import replace

    cfg = replace(config, n_samples=n_draws // K)
    sampler = GeodesicMetropolis(ExpTracePrior(p, h), cfg, make_rng(seed, _TAG_BAYES_PRIOR))
    return np.concatenate([U.copy() for U in sampler.samples()], axis=0)


def _bayes_job(args):
    lam, U, I, n, seed, o, inner = args
    losses, bad = [], 0
    P = projector(U, I)
    for k in range(inner):
        rng = make_rng(seed, _TAG_BAYES_DATA, o, k)
        S = sample_covariance(lam, U, n, rng)
        try:
            losses.append(float(np.sum((eigenprojector_hat(S, I) - P) ** 2)))
        except TieSplitError:
            bad += 1
    return losses, bad


def simulate_bayes_risk(
    cfg: SimConfig, outer: int = 200, inner: int = 10, chain: ChainConfig | None = None
) -> RiskEstimate:
    """Plug-in risk averaged over ``U ~ pi_h``: ``outer`` prior draws x ``inner`` data draws.

    ``cfg.U_true`` must be ``("prior", h)``. The SE treats each outer draw's
    inner average as one observation.
    """
    if not (isinstance(cfg.U_true, tuple) and cfg.U_true[0] == "prior"):
        raise ValueError("cfg.U_true must be ('prior', h)")
    model = cfg.model
    if not isinstance(model, PcaModel):
        raise TypeError("simulate_bayes_risk needs a PcaModel")
    h = float(cfg.U_true[1])
    lam = model.spectrum.values
    if boundary_gap(lam, cfg.I) <= 0:
        raise ValueError(f"eigenvalue gap at the boundary of I={cfg.I} is zero")
    Us = prior_draws(model.p, h, outer, cfg.seed, chain)
    jobs = [(lam, Us[o], cfg.I, model.n, cfg.seed, o, inner) for o in range(outer)]
    out = _map(_bayes_job, jobs)
    per_outer = [float(np.mean(ls)) for ls, _ in out if ls]
    excluded = sum(b for _, b in out)
    all_losses = [x for ls, _ in out for x in ls]
    if excluded and excluded / (outer * inner) > TIE_WARN_FRACTION:
        warnings.warn(f"{excluded} replicates excluded (tie at the I-boundary)", TieSplitWarning, stacklevel=2)
    x = np.asarray(per_outer)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return RiskEstimate(float(np.mean(all_losses)), se, len(all_losses), excluded, np.asarray(all_losses))


# ---------------------------------------------------------------------------
# Denoising
# ---------------------------------------------------------------------------


def _denoise_job(args):
    lam, U_fixed, I, sigma, seed, r = args
    rng = make_rng(seed, _TAG_DENOISE, r)
    p = lam.size
    U = haar_sample(p, rng) if U_fixed is None else U_fixed
    A = (U * lam) @ U.T
    X = A + sigma * goe_sample(p, rng) if sigma > 0 else A
    try:
        P_hat = eigenprojector_hat(0.5 * (X + X.T), I)
    except TieSplitError:
        return None
    return float(np.sum((P_hat - projector(U, I)) ** 2))


def simulate_denoise_risk(cfg: SimConfig) -> RiskEstimate:
    """Risk of ``P_I(X)`` for ``X = U Lambda U^T + sigma W``; ``sigma = 0`` is allowed here."""
    model = cfg.model
    if not isinstance(model, (DenoiseModel, _NoiselessDenoise)):
        raise TypeError("simulate_denoise_risk needs a DenoiseModel")
    lam = model.spectrum.values
    if boundary_gap(lam, cfg.I) <= 0:
        raise ValueError(f"eigenvalue gap at the boundary of I={cfg.I} is zero")
    U = cfg.true_rotation()
    jobs = [(lam, U, cfg.I, float(model.sigma), cfg.seed, r) for r in range(cfg.replications)]
    out = _map(_denoise_job, jobs)
    losses = [x for x in out if x is not None]
    return _summarise(losses, len(out) - len(losses), len(out))


@dataclass(frozen=True)
class _NoiselessDenoise:
    spectrum: Spectrum
    sigma: float = 0.0

    @property
    def p(self) -> int:
        return self.spectrum.p


def denoise_model(spectrum: Spectrum, sigma: float):
    """``DenoiseModel`` for ``sigma > 0``; a noiseless stand-in for ``sigma = 0``."""
    if sigma == 0:
        return _NoiselessDenoise(spectrum)
    return DenoiseModel(spectrum, sigma)


# ---------------------------------------------------------------------------
# Sandwich: structural lower curve vs simulated plug-in risk
# ---------------------------------------------------------------------------


@dataclass
class SandwichRow:
    n: int
    lower: float
    risk: RiskEstimate
    passed: bool

    @property
    def n_times_mean(self) -> float:
        return self.n * self.risk.mean


@dataclass
class SandwichReport:
    spectrum: Spectrum
    I: tuple[int, ...]
    rows: list[SandwichRow]
    asymptotic: float
    tol: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def sandwich_check(
    spectrum: Spectrum,
    I: Sequence[int],
    ns: Sequence[int] | int,
    replications: int = 2000,
    seed: int = 0,
    tol: float = 0.1,
    se_margin: float = 3.0,
) -> SandwichReport:
    """``lower = 2 sum_{i in I, j not in I} min(pair_term, 1/p)`` against the plug-in risk.

    A grid point passes when ``lower <= (1 + tol) * mean + se_margin * SE``.
    """
    ns = [int(ns)] if np.isscalar(ns) else [int(n) for n in ns]
    I = index_set(I, spectrum.p)
    rows = []
    for k, n in enumerate(ns):
        lower = 2.0 * capped_full_sum(spectrum, I, n)
        est = simulate_pca_risk(SimConfig(PcaModel(spectrum, n), I, "identity", replications, seed + k))
        ok = lower <= (1.0 + tol) * est.mean + se_margin * est.std_error
        rows.append(SandwichRow(n, lower, est, bool(ok)))
    return SandwichReport(spectrum, I, rows, asymptotic_limit(spectrum, I), tol)
