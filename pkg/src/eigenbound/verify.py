"""Named verification suites shared by the CLI and the acceptance tests.

Each suite returns a :class:`SuiteResult` whose checks carry the measured
value and the threshold it was compared against.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds, divergences, prior, risk
from .linalg import Spectrum, make_rng, random_skew


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)


@dataclass
class SuiteResult:
    suite: str
    checks: list[Check]
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "seconds": self.seconds,
            "checks": [_clean(asdict(c)) for c in self.checks],
        }


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _timed(name, fn):
    t0 = time.perf_counter()
    checks = fn()
    return SuiteResult(name, checks, time.perf_counter() - t0)


# ---------------------------------------------------------------------------


FISHER_TOL = 1e-2


def random_fisher_case(rng: np.random.Generator, p: int):
    """Distinct eigenvalues in ``[0.5, 5]`` (gaps >= 0.05), ``n`` in ``[1, 500]``, unit ``xi``."""
    while True:
        lam = np.sort(rng.uniform(0.5, 5.0, size=p))[::-1]
        if np.all(-np.diff(lam) >= 0.05):
            break
    n = int(rng.integers(1, 501))
    xi = random_skew(p, rng)
    xi /= np.linalg.norm(xi)
    sigma = float(rng.uniform(0.5, 2.0))
    return Spectrum.explicit(lam), n, xi, sigma


def fisher_suite(cases: int = 50, seed: int = 0, t: float = 1e-3) -> SuiteResult:
    def run():
        checks = []
        for k in range(cases):
            p = (2, 3, 5)[k % 3]
            spec, n, xi, sigma = random_fisher_case(make_rng(seed, k), p)
            pm = divergences.PcaModel(spec, n)
            err = divergences.fisher_fd_check(divergences.fisher_pca(pm), divergences.chi2_curve(pm), xi, t)
            checks.append(Check(f"pca[{k}] p={p} n={n}", err <= FISHER_TOL, err, FISHER_TOL))
            dm = divergences.DenoiseModel(spec, sigma)
            err = divergences.fisher_fd_check(divergences.fisher_denoise(dm), divergences.chi2_curve(dm), xi, t)
            checks.append(Check(f"denoise[{k}] p={p} sigma={sigma:.3g}", err <= FISHER_TOL, err, FISHER_TOL))
        return checks

    return _timed("fisher", run)


PRIOR_CASES = ((2, 0.5), (2, 1.0), (2, 2.0), (3, 0.5), (3, 1.0), (3, 2.0))


def prior_suite(seed: int = 0, n_se: float = 3.0, config: prior.ChainConfig | None = None) -> SuiteResult:
    def run():
        checks = []
        for k, (p, h) in enumerate(PRIOR_CASES):
            est = prior.mean_trace(prior.ExpTracePrior(p, h), config, make_rng(seed, k))
            exact = prior.prior_oracle_small_p(p, h, "mean_trace")
            z = abs(est.value - exact) / est.std_error
            checks.append(
                Check(
                    f"mean_trace p={p} h={h}",
                    z <= n_se,
                    z,
                    n_se,
                    {"mcmc": est.value, "se": est.std_error, "oracle": exact, "converged": est.converged},
                )
            )
        return checks

    return _timed("prior", run)


SANDWICH_CASES = (
    ("explicit(3,2,1) I={1}", lambda: Spectrum.explicit([3, 2, 1]), (1,)),
    ("spiked(6,2,2,1) I={1,2}", lambda: Spectrum.spiked(6, 2, 2.0, 1.0), (1, 2)),
    ("poly(1) p=32 I={1..4}", lambda: Spectrum.poly(1.0, 32), (1, 2, 3, 4)),
)


def sandwich_suite(seed: int = 0, n: int = 5000, replications: int = 2000, tol: float = 0.1) -> SuiteResult:
    """Twice the capped full-J structural sum against ``(1 + tol)`` times the plug-in risk,
    plus the Bayes bound against the simulated Bayes risk at ``h = 2``, ``n = 50``, ``p = 2``.
    """

    def run():
        checks = []
        for k, (name, make, I) in enumerate(SANDWICH_CASES):
            spec = make()
            lower = 2.0 * bounds.theorem_main_bound(spec, I, n, strategy="full").value
            est = risk.simulate_pca_risk(
                risk.SimConfig(divergences.PcaModel(spec, n), I, "identity", replications, seed + k)
            )
            upper = (1.0 + tol) * est.mean
            checks.append(
                Check(f"plug-in {name} n={n}", lower <= upper, lower, upper, {"risk": est.mean, "se": est.std_error})
            )
        spec = Spectrum.explicit([2.0, 1.0])
        bb = bounds.bayes_bound(spec, (1,), 50, 2.0).value
        est = risk.simulate_bayes_risk(
            risk.SimConfig(divergences.PcaModel(spec, 50), (1,), ("prior", 2.0), 1, seed + 100)
        )
        checks.append(Check("bayes h=2 n=50 p=2", bb <= est.mean, bb, est.mean, {"se": est.std_error}))
        return checks

    return _timed("sandwich", run)


LEMMA_A1_FLOOR = 1.0 / 8.0


def lemma_a1_suite() -> SuiteResult:
    def run():
        ratio, m, x = bounds.lemma_a1_grid_min()
        return [Check("grid min lhs/rhs", ratio >= LEMMA_A1_FLOOR, ratio, LEMMA_A1_FLOOR, {"m": m, "x": x})]

    return _timed("lemma-a1", run)


DENSITY_NS = (10**3, 10**4, 10**5, 10**6)
DENSITY_SLOPE = -2.0 / 3.0
DENSITY_SLOPE_TOL = 0.05


def density_slope(beta: float = 1.0, q: float = 0.75, ns=DENSITY_NS) -> float:
    vals = [bounds.density_toy_bound(bounds.DensityToyConfig(beta=beta, n=n, q=q)).value for n in ns]
    return float(np.polyfit(np.log(ns), np.log(vals), 1)[0])


def density_toy_suite() -> SuiteResult:
    def run():
        slope = density_slope()
        checks = [
            Check("log-log slope", abs(slope - DENSITY_SLOPE) <= DENSITY_SLOPE_TOL, slope, DENSITY_SLOPE,
                  {"tol": DENSITY_SLOPE_TOL}),
        ]
        flat = bounds.density_toy_bound(bounds.DensityToyConfig(n=10**4, q=0.5)).value
        checks.append(Check("uniform prior q=1/2 gives 0", flat == 0.0, flat, 0.0))
        for n in DENSITY_NS:
            cfg = bounds.DensityToyConfig(n=n)
            exact = divergences.chi2_power(bounds.density_toy_chi2_exact(cfg), n)
            model_bound = bounds.density_toy_bound(cfg).extras["chi2_model_bound"]
            checks.append(Check(f"exact chi2 <= model bound n={n}", exact <= model_bound, exact, model_bound))
        return checks

    return _timed("density-toy", run)


SUITES = {
    "fisher": fisher_suite,
    "prior": prior_suite,
    "sandwich": sandwich_suite,
    "lemma-a1": lemma_a1_suite,
    "density-toy": density_toy_suite,
}
