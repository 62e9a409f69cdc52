"""Exponential-trace prior ``pi_h(U) ∝ exp(h p tr U)`` on SO(p).

Sampling is geodesic random-walk Metropolis run as a batch of independent
chains (one stack of ``p x p`` matrices). Moments come with batch-means
standard errors; the log-normaliser ``psi(h) = log Z_h`` is obtained by
thermodynamic integration of ``psi'(s) = p * E_s[tr U]``. For ``p in {2, 3}``
conjugacy-class quadrature supplies exact reference values.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import integrate

from .linalg import expm_skew, haar_sample, make_rng, random_skew


class ConvergenceWarning(RuntimeWarning):
    """Post burn-in acceptance rate left the admissible band."""


@dataclass(frozen=True)
class ExpTracePrior:
    p: int
    h: float

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.h < 0:
            raise ValueError("h must be >= 0")

    def log_density_unnorm(self, U: np.ndarray) -> np.ndarray | float:
        return log_density_unnorm(self, U)


def log_density_unnorm(prior: ExpTracePrior, U: np.ndarray):
    """``h p tr(U)``; vectorised over leading axes."""
    U = np.asarray(U, dtype=float)
    if U.shape[-2:] != (prior.p, prior.p):
        raise ValueError(f"expected {prior.p}x{prior.p} matrices, got {U.shape[-2:]}")
    val = prior.h * prior.p * np.trace(U, axis1=-2, axis2=-1)
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class ChainConfig:
    """Sampler settings. ``thin=None`` picks thinning from a pilot run."""

    burn_in: int = 10_000
    n_samples: int = 2_000
    thin: int | None = None
    n_chains: int = 20
    step_size: float = 0.5
    max_step_size: float = 2.0 * math.pi
    adapt_every: int = 50
    target_acceptance: tuple[float, float] = (0.25, 0.40)
    flag_band: tuple[float, float] = (0.10, 0.70)
    n_batches: int = 50
    pilot_steps: int = 1_000
    init: str | None = None  # "identity" | "haar"; default depends on h

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin is not None and self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_samples < 1 or self.n_chains < 1:
            raise ValueError("need at least one chain and one sample")


@dataclass
class ChainState:
    current: np.ndarray  # (n_chains, p, p)
    step_size: float
    proposed: int = 0
    accepted: int = 0
    steps: int = 0

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    std_error: float
    n_samples: int
    effective_sample_size: float
    converged: bool = True

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")


class GeodesicMetropolis:
    """Random-walk Metropolis on SO(p) with proposals ``U exp(r xi)``.

    ``xi`` is a standard Gaussian element of so(p) normalised to unit
    Hilbert-Schmidt norm and ``r`` is uniform on ``[eps/2, 3 eps/2]``, so
    ``r xi`` and ``-r xi`` are equally likely and the proposal is symmetric
    with respect to Haar measure.
    """

    def __init__(self, prior: ExpTracePrior, config: ChainConfig, rng: np.random.Generator):
        self.prior = prior
        self.config = config
        self.rng = rng
        init = config.init or ("haar" if prior.h == 0 else "identity")
        K, p = config.n_chains, prior.p
        if init == "identity":
            U0 = np.broadcast_to(np.eye(p), (K, p, p)).copy()
        elif init == "haar":
            U0 = haar_sample(p, rng, size=K)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.state = ChainState(U0, float(min(config.step_size, config.max_step_size)))
        self.burned_in = False
        self.history: list[tuple[int, np.ndarray, np.ndarray]] = []
        self.record_history = False
        self.thin = config.thin

    def _step(self) -> np.ndarray:
        st = self.state
        K, p = st.current.shape[0], self.prior.p
        xi = random_skew(p, self.rng, size=K)
        # A fixed step length makes the SO(2) chain a lattice walk; a random
        # radius keeps the proposal symmetric and the chain irreducible.
        radius = st.step_size * self.rng.uniform(0.5, 1.5, size=K)
        prop = st.current @ expm_skew(xi * radius[:, None, None], 1.0)
        hp = self.prior.h * self.prior.p
        delta = hp * (np.trace(prop, axis1=1, axis2=2) - np.trace(st.current, axis1=1, axis2=2))
        u = self.rng.random(K)
        acc = np.log(u) < delta
        st.current[acc] = prop[acc]
        st.proposed += K
        st.accepted += int(acc.sum())
        st.steps += 1
        if self.record_history:
            self.history.append((st.steps, np.trace(st.current, axis1=1, axis2=2).copy(), acc))
        return acc

    def burn(self) -> None:
        cfg = self.config
        lo, hi = cfg.target_acceptance
        mid = 0.5 * (lo + hi)
        window = 0
        for k in range(cfg.burn_in):
            window += int(self._step().sum())
            if (k + 1) % cfg.adapt_every == 0:
                rate = window / (cfg.adapt_every * cfg.n_chains)
                window = 0
                if not lo <= rate <= hi:
                    eps = self.state.step_size * math.exp(2.0 * (rate - mid))
                    self.state.step_size = float(min(eps, cfg.max_step_size))
        self.state.proposed = 0
        self.state.accepted = 0
        if self.thin is None:
            self.thin = self._pilot_thin()
        self.burned_in = True

    def _pilot_thin(self) -> int:
        n = self.config.pilot_steps
        if n < 20:
            return 1
        tr = np.empty((n, self.config.n_chains))
        for k in range(n):
            self._step()
            tr[k] = np.trace(self.state.current, axis1=1, axis2=2)
        tau = integrated_autocorr_time(tr.T)
        self.pilot_tau = tau
        self.state.proposed = 0
        self.state.accepted = 0
        return max(1, int(math.ceil(tau / 10.0)))

    def samples(self) -> Iterator[np.ndarray]:
        """Yield ``n_samples`` thinned states, each of shape ``(n_chains, p, p)``."""
        if not self.burned_in:
            self.burn()
        for _ in range(self.config.n_samples):
            for _ in range(self.thin):
                self._step()
            yield self.state.current

    @property
    def converged(self) -> bool:
        cfg = self.config
        rate = self.state.acceptance
        if math.isnan(rate):
            return True
        lo, hi = cfg.flag_band
        if rate < lo:
            return False
        if rate > hi and self.state.step_size < cfg.max_step_size:
            return False
        return True

    def dump_history_csv(self, path: str | os.PathLike) -> None:
        """Write ``step, chain, trace, accepted`` rows for recorded steps."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "chain", "trace", "accepted"])
            for step, tr, acc in self.history:
                for c in range(tr.size):
                    w.writerow([step, c, repr(float(tr[c])), int(acc[c])])


def mcmc_sample(prior: ExpTracePrior, config: ChainConfig, rng) -> Iterator[np.ndarray]:
    """Stream of post-burn-in states, each a stack of ``n_chains`` rotations."""
    rng = rng if isinstance(rng, np.random.Generator) else make_rng(int(rng))
    yield from GeodesicMetropolis(prior, config, rng).samples()


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Chain-averaged integrated autocorrelation time with Sokal's window."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    f = np.zeros(n)
    for row in x:
        y = row - row.mean()
        m = 1 << (2 * n - 1).bit_length()
        spec = np.fft.rfft(y, m)
        acf = np.fft.irfft(spec * np.conj(spec), m)[:n]
        if acf[0] > 0:
            f += acf / acf[0]
    if not np.any(f):
        return 1.0
    f /= f[0]
    taus = 2.0 * np.cumsum(f) - 1.0
    ks = np.arange(n)
    window = ks < c * taus
    M = int(np.argmin(window)) if not window.all() else n - 1
    return float(max(taus[M], 1.0))


def batch_means(x: np.ndarray, n_batches: int = 50) -> tuple[float, float]:
    """Mean and batch-means standard error of samples ``x`` with shape ``(chains, n)``.

    Each chain is cut into ``ceil(n_batches / chains)`` contiguous batches.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    K, n = x.shape
    per_chain = max(1, min(n, math.ceil(n_batches / K)))
    size = n // per_chain
    trimmed = x[:, : size * per_chain].reshape(K * per_chain, size)
    means = trimmed.mean(axis=1)
    B = means.size
    mean = float(x.mean())
    if B < 2:
        return mean, float("nan")
    se = float(means.std(ddof=1) / math.sqrt(B))
    return mean, se


def moment_from_series(x: np.ndarray, n_batches: int, converged: bool) -> MomentEstimate:
    x = np.atleast_2d(x)
    mean, se = batch_means(x, n_batches)
    n = int(x.size)
    var = float(x.var(ddof=1)) if n > 1 else 0.0
    if se > 0:
        ess = min(float(n), var / se**2)
    else:
        ess = float(n)
    return MomentEstimate(mean, se, n, ess, converged)


def run_observables(
    prior: ExpTracePrior,
    observable: Callable[[np.ndarray], np.ndarray],
    config: ChainConfig | None = None,
    rng=0,
) -> tuple[np.ndarray, GeodesicMetropolis]:
    """Evaluate ``observable(U_stack) -> (n_chains, m)`` on every kept state.

    Returns an array of shape ``(m, n_chains, n_samples)`` and the sampler.
    """
    config = config or ChainConfig()
    rng = rng if isinstance(rng, np.random.Generator) else make_rng(int(rng))
    sampler = GeodesicMetropolis(prior, config, rng)
    rows = [np.atleast_2d(np.asarray(observable(U), dtype=float).T).T for U in sampler.samples()]
    out = np.stack(rows, axis=-1)  # (K, m, N)
    if not sampler.converged:
        warnings.warn(
            f"acceptance {sampler.state.acceptance:.3f} outside {config.flag_band} "
            f"(p={prior.p}, h={prior.h})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return np.transpose(out, (1, 0, 2)), sampler


def _trace_obs(U: np.ndarray) -> np.ndarray:
    return np.trace(U, axis1=1, axis2=2)[:, None]


def _pair_obs_first(U: np.ndarray) -> np.ndarray:
    return (U[:, 0, 0] * U[:, 1, 1] + U[:, 0, 1] * U[:, 1, 0])[:, None]


def _pair_obs_sym(U: np.ndarray) -> np.ndarray:
    d = np.diagonal(U, axis1=1, axis2=2)
    p = d.shape[1]
    s = d.sum(axis=1)
    diag_pairs = (s**2 - (d**2).sum(axis=1)) / 2.0  # sum_{i<j} U_ii U_jj
    prod = U * np.swapaxes(U, 1, 2)
    off_pairs = (prod.sum(axis=(1, 2)) - (d**2).sum(axis=1)) / 2.0  # sum_{i<j} U_ij U_ji
    return ((diag_pairs + off_pairs) / (p * (p - 1) / 2))[:, None]


def mean_trace(prior: ExpTracePrior, config: ChainConfig | None = None, rng=0) -> MomentEstimate:
    """``E_{pi_h} tr(U)`` (equal to ``psi'(h) / p``)."""
    config = config or ChainConfig()
    obs, sampler = run_observables(prior, _trace_obs, config, rng)
    return moment_from_series(obs[0], config.n_batches, sampler.converged)


def pair_moment(
    prior: ExpTracePrior, config: ChainConfig | None = None, rng=0, symmetrize: bool = True
) -> MomentEstimate:
    """``E_{pi_h}[U_11 U_22 + U_12 U_21]``.

    With ``symmetrize`` the estimator averages ``U_ii U_jj + U_ij U_ji`` over
    all ``i < j``; the index-permutation symmetry of ``pi_h`` makes every
    pair have the same expectation, so this only lowers the variance.
    """
    config = config or ChainConfig()
    obs_fn = _pair_obs_sym if symmetrize else _pair_obs_first
    obs, sampler = run_observables(prior, obs_fn, config, rng)
    return moment_from_series(obs[0], config.n_batches, sampler.converged)


@dataclass
class SymmetryReport:
    families: dict[str, dict[str, MomentEstimate]]
    max_discrepancy_se: dict[str, float]
    converged: bool

    @property
    def worst(self) -> float:
        return max(self.max_discrepancy_se.values())


def _symmetry_obs(p: int):
    iu = np.triu_indices(p, 1)
    labels = {
        "U_ii": [f"{i+1}" for i in range(p)],
        "U_ii U_jj": [f"{i+1},{j+1}" for i, j in zip(*iu)],
        "U_ij U_ji": [f"{i+1},{j+1}" for i, j in zip(*iu)],
        "(U_ij - U_ji)^2": [f"{i+1},{j+1}" for i, j in zip(*iu)],
    }

    def obs(U):
        d = np.diagonal(U, axis1=1, axis2=2)
        a = U[:, iu[0], iu[1]]
        b = U[:, iu[1], iu[0]]
        return np.concatenate([d, d[:, iu[0]] * d[:, iu[1]], a * b, (a - b) ** 2], axis=1)

    return obs, labels


def haar_symmetry_check(
    prior: ExpTracePrior, config: ChainConfig | None = None, rng=0
) -> SymmetryReport:
    """Index-constancy of four moment families under ``pi_h``.

    For every family, the discrepancy between two index choices is measured
    in units of the batch-means standard error of their difference series.
    """
    if prior.p < 3:
        raise ValueError("symmetry check needs p >= 3")
    config = config or ChainConfig()
    obs_fn, labels = _symmetry_obs(prior.p)
    obs, sampler = run_observables(prior, obs_fn, config, rng)
    families: dict[str, dict[str, MomentEstimate]] = {}
    worst: dict[str, float] = {}
    start = 0
    for name, labs in labels.items():
        block = obs[start : start + len(labs)]
        start += len(labs)
        families[name] = {
            lab: moment_from_series(block[k], config.n_batches, sampler.converged)
            for k, lab in enumerate(labs)
        }
        z = 0.0
        for a in range(len(labs)):
            for b in range(a + 1, len(labs)):
                diff = block[a] - block[b]
                m, se = batch_means(diff, config.n_batches)
                if se > 0:
                    z = max(z, abs(m) / se)
                elif abs(m) > 1e-12:
                    z = math.inf
        worst[name] = z
    return SymmetryReport(families, worst, sampler.converged)


# ---------------------------------------------------------------------------
# Free energy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreeEnergyEstimate:
    value: float
    std_error: float
    grid: np.ndarray
    derivative: np.ndarray  # p * mean_trace at each node
    derivative_se: np.ndarray
    converged: bool


def simpson_weights(x: np.ndarray) -> np.ndarray:
    """Weights ``w`` with ``simpson(y, x=x) == w @ y`` (the rule is linear in ``y``)."""
    x = np.asarray(x, dtype=float)
    eye = np.eye(x.size)
    return np.array([integrate.simpson(eye[k], x=x) for k in range(x.size)])


def _mean_trace_node(args):
    p, h, config, seed, key = args
    return mean_trace(ExpTracePrior(p, h), config, make_rng(seed, *key))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("EIGENBOUND_THREADS", "1")))
    except ValueError:
        return 1


def free_energy(
    prior: ExpTracePrior,
    grid: Sequence[float] | int = 11,
    config: ChainConfig | None = None,
    seed: int = 0,
) -> FreeEnergyEstimate:
    """``psi(h) = int_0^h p E_s[tr U] ds`` by Simpson's rule over MCMC node estimates.

    ``grid`` is either a node count (uniform on ``[0, h]``) or explicit nodes
    covering ``[0, h]``. Node ``k`` uses stream ``(seed, k)``; workers come
    from ``EIGENBOUND_THREADS`` and do not affect the result.
    """
    h, p = prior.h, prior.p
    if h == 0:
        return FreeEnergyEstimate(0.0, 0.0, np.zeros(1), np.zeros(1), np.zeros(1), True)
    nodes = np.linspace(0.0, h, int(grid)) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    if nodes.size < 11:
        raise ValueError("free energy grid needs at least 11 nodes")
    if abs(nodes[0]) > 1e-12 or abs(nodes[-1] - h) > 1e-12 or np.any(np.diff(nodes) <= 0):
        raise ValueError("grid must increase from 0 to h")
    config = config or ChainConfig()
    jobs = [(p, float(s), config, seed, (k,)) for k, s in enumerate(nodes)]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            ests = list(ex.map(_mean_trace_node, jobs))
    else:
        ests = [_mean_trace_node(j) for j in jobs]
    deriv = p * np.array([e.value for e in ests])
    dse = p * np.array([e.std_error for e in ests])
    w = simpson_weights(nodes)
    value = float(w @ deriv)
    se = float(np.sqrt(np.sum((w * dse) ** 2)))
    return FreeEnergyEstimate(value, se, nodes, deriv, dse, all(e.converged for e in ests))


def free_energy_limit(h: float) -> float:
    """Large-p limit of ``psi(h) / p^2``: ``h^2/2`` for ``2h <= 1``, else ``h - log(2h)/4 - 3/8``."""
    if h < 0:
        raise ValueError("h must be >= 0")
    if 2.0 * h <= 1.0:
        return 0.5 * h * h
    return h - 0.25 * math.log(2.0 * h) - 0.375


# ---------------------------------------------------------------------------
# Small-p quadrature oracles
# ---------------------------------------------------------------------------

_QUAD = dict(epsabs=1e-10, epsrel=1e-10, limit=200)


def prior_oracle_small_p(p: int, h: float, functional: str = "Z") -> float:
    """Exact (quadrature) values for SO(2) and SO(3).

    ``functional`` is ``"Z"``, ``"log_Z"``, ``"mean_trace"`` or, for ``p = 2``
    only, ``"pair_moment"`` (``U_11 U_22 + U_12 U_21 = cos 2 theta``).
    Class-function integrals use the Weyl densities ``1/(2 pi)`` on
    ``[0, 2 pi)`` for SO(2) and ``(1 - cos theta)/pi`` on ``[0, pi]`` for SO(3).
    Integrands are shifted by the maximum exponent for stability.
    """
    if p == 2:
        c = 4.0 * h  # h p tr U = 2h * 2 cos(theta)

        def weight(t):
            return math.exp(c * (math.cos(t) - 1.0)) / (2.0 * math.pi)

        a, b, shift = 0.0, 2.0 * math.pi, c
        trace = lambda t: 2.0 * math.cos(t)  # noqa: E731
        pair = lambda t: math.cos(2.0 * t)  # noqa: E731
    elif p == 3:
        c = 3.0 * h

        def weight(t):
            return math.exp(c * (2.0 * math.cos(t) - 2.0)) * (1.0 - math.cos(t)) / math.pi

        a, b, shift = 0.0, math.pi, 3.0 * c
        trace = lambda t: 1.0 + 2.0 * math.cos(t)  # noqa: E731
        pair = None
    else:
        raise ValueError("quadrature oracle only for p in {2, 3}")

    z_shifted = integrate.quad(weight, a, b, **_QUAD)[0]
    if functional == "Z":
        return math.exp(shift) * z_shifted
    if functional == "log_Z":
        return shift + math.log(z_shifted)
    if functional == "mean_trace":
        num = integrate.quad(lambda t: trace(t) * weight(t), a, b, **_QUAD)[0]
        return num / z_shifted
    if functional == "pair_moment":
        if pair is None:
            raise ValueError("pair_moment oracle only for p = 2")
        num = integrate.quad(lambda t: pair(t) * weight(t), a, b, **_QUAD)[0]
        return num / z_shifted
    raise ValueError(f"unknown functional {functional!r}")


# ---------------------------------------------------------------------------
# Calibration of delta / h_delta
# ---------------------------------------------------------------------------

# Pre-run output of ``calibration_table`` (ChainConfig defaults, seed 2024):
# mean_trace / p at each (p, h). Used to pick h values where
# mean_trace >= (1 - delta) p holds empirically.
CALIBRATION: dict[tuple[int, float], float] = {
    (2, 0.5): 0.693472,
    (2, 1.0): 0.867903,
    (2, 2.0): 0.935872,
    (2, 5.0): 0.974765,
    (2, 10.0): 0.987235,
    (2, 20.0): 0.993880,
    (3, 0.5): 0.607913,
    (3, 1.0): 0.824769,
    (3, 2.0): 0.914103,
    (3, 5.0): 0.966532,
    (3, 10.0): 0.983352,
    (3, 20.0): 0.991673,
    (4, 0.5): 0.578327,
    (4, 1.0): 0.803911,
    (4, 2.0): 0.907233,
    (4, 5.0): 0.962275,
    (4, 10.0): 0.981141,
    (4, 20.0): 0.990519,
    (5, 0.5): 0.555516,
    (5, 1.0): 0.792140,
    (5, 2.0): 0.898181,
    (5, 5.0): 0.959773,
    (5, 10.0): 0.980148,
    (5, 20.0): 0.990040,
    (6, 0.5): 0.544128,
    (6, 1.0): 0.787457,
    (6, 2.0): 0.893489,
    (6, 5.0): 0.958272,
    (6, 10.0): 0.978987,
    (6, 20.0): 0.989501,
    (10, 0.5): 0.524793,
    (10, 1.0): 0.768024,
    (10, 2.0): 0.887483,
    (10, 5.0): 0.954370,
    (10, 10.0): 0.977632,
    (10, 20.0): 0.988633,
}


def calibration_table(
    ps: Sequence[int], hs: Sequence[float], config: ChainConfig | None = None, seed: int = 2024
) -> dict[tuple[int, float], MomentEstimate]:
    """``mean_trace / p`` over a ``(p, h)`` grid, one stream per cell."""
    out = {}
    for a, p in enumerate(ps):
        for b, h in enumerate(hs):
            est = mean_trace(ExpTracePrior(p, h), config, make_rng(seed, a, b))
            out[(p, float(h))] = replace(
                est, value=est.value / p, std_error=est.std_error / p
            )
    return out


def calibrated_h(delta: float, p: int) -> float:
    """Smallest tabulated h with ``mean_trace / p >= 1 - delta`` at this ``p``."""
    cands = sorted(h for (pp, h), v in CALIBRATION.items() if pp == p and v >= 1.0 - delta)
    if not cands:
        raise KeyError(f"no calibrated h for delta={delta}, p={p}")
    return cands[0]
