"""Lower-bound formulas for eigenspace estimation.

Every PCA/denoising bound is reported with its *structural* value, i.e. the
constant ``c`` in front set to one. The underlying results only guarantee
some absolute ``c`` in ``(0, 2)``; that range travels with each report as
metadata and is never asserted numerically.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .divergences import FisherForm, PcaModel, fisher_pca
from .linalg import Spectrum, complement, generator_pairs, index_set, skew_from_coords

CONSTANT_RANGE = (0.0, 2.0)
EXHAUSTIVE_MAX_P = 12


@dataclass
class BoundReport:
    value: float
    witness: dict | None = None
    per_pair_terms: dict[tuple[int, int], float] = field(default_factory=dict)
    constant_mode: str = "structural"
    truncation: int | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"bound value must be >= 0, got {self.value}")

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "witness": self.witness,
            "per_pair_terms": [
                {"i": int(i), "j": int(j), "term": _finite_or_none(t)}
                for (i, j), t in sorted(self.per_pair_terms.items())
            ],
            "constant_mode": self.constant_mode,
            "constant_range": list(CONSTANT_RANGE),
            "truncation": self.truncation,
            "extras": {k: _jsonable(v) for k, v in self.extras.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return _finite_or_none(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


# ---------------------------------------------------------------------------
# Minimax bound with J-search
# ---------------------------------------------------------------------------


def pair_term(lam_i: float, lam_j: float, n: float) -> float:
    """``lam_i lam_j / (n (lam_i - lam_j)^2)``; ``inf`` for equal eigenvalues."""
    if lam_i <= 0 or lam_j <= 0:
        raise ValueError("eigenvalues must be > 0")
    if lam_i == lam_j:
        return math.inf
    return lam_i * lam_j / (n * (lam_i - lam_j) ** 2)


def _pair_matrix(lam: np.ndarray, n: float) -> np.ndarray:
    li, lj = lam[:, None], lam[None, :]
    with np.errstate(divide="ignore"):
        T = li * lj / (n * (li - lj) ** 2)
    T[li == lj] = np.inf
    return T


def subset_value(T: np.ndarray, in_I: np.ndarray, J: Sequence[int]) -> float:
    """``sum_{i in I∩J} sum_{j in J\\I} min(T_ij, 1/|J|)`` (0-based ``J``)."""
    J = np.asarray(J)
    a = J[in_I[J]]
    b = J[~in_I[J]]
    if a.size == 0 or b.size == 0:
        return 0.0
    return float(np.minimum(T[np.ix_(a, b)], 1.0 / J.size).sum())


def candidate_subsets(p: int, I: Sequence[int], exhaustive: bool = False) -> Iterable[tuple[int, ...]]:
    """0-based candidate index sets: windows, ``{i, j}`` pairs, the full set."""
    if exhaustive:
        for r in range(2, p + 1):
            yield from itertools.combinations(range(p), r)
        return
    for a in range(p):
        for b in range(a + 1, p):
            yield tuple(range(a, b + 1))
    Iz = [i - 1 for i in I]
    for i in Iz:
        for j in range(p):
            if j not in Iz:
                yield tuple(sorted((i, j)))


def theorem_main_bound(
    spectrum: Spectrum, I: Iterable[int], n: float, strategy: str = "heuristic"
) -> BoundReport:
    """``max_J sum_{i in I∩J} sum_{j in J\\I} min(pair_term, 1/|J|)`` with the maximising J.

    ``strategy`` is ``"heuristic"`` (windows, pairs and the full set),
    ``"exhaustive"`` (all subsets, ``p <= 12``) or ``"full"`` (J = everything).
    """
    spectrum.require_positive()
    lam = spectrum.values
    p = spectrum.p
    I = index_set(I, p)
    in_I = np.zeros(p, dtype=bool)
    in_I[np.asarray(I) - 1] = True
    T = _pair_matrix(lam, n)
    if strategy == "full":
        cands: Iterable = [tuple(range(p))]
    elif strategy == "exhaustive":
        if p > EXHAUSTIVE_MAX_P:
            raise ValueError(f"exhaustive search limited to p <= {EXHAUSTIVE_MAX_P}")
        cands = candidate_subsets(p, I, exhaustive=True)
    elif strategy == "heuristic":
        cands = candidate_subsets(p, I)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    best, best_J, seen = -1.0, None, False
    for J in cands:
        seen = True
        v = subset_value(T, in_I, J)
        if v > best + 1e-15 or (abs(v - best) <= 1e-15 and best_J is not None and len(J) > len(best_J)):
            best, best_J = v, J
    if not seen:
        raise ValueError("empty candidate family")
    Jw = tuple(j + 1 for j in best_J)
    cap = 1.0 / len(Jw)
    terms = {
        (i, j): min(float(T[i - 1, j - 1]), cap)
        for i in I if i in Jw for j in Jw if j not in I
    }
    return BoundReport(
        best,
        witness={"J": list(Jw)},
        per_pair_terms=terms,
        truncation=spectrum.params.get("truncation"),
        extras={"strategy": strategy, "n": n, "I": list(I)},
    )


def capped_full_sum(spectrum: Spectrum, I: Iterable[int], n: float, cap: float | None = None) -> float:
    """``sum_{i in I, j not in I} min(pair_term, cap)`` with ``cap = 1/p`` by default."""
    lam = spectrum.values
    p = spectrum.p
    I = index_set(I, p)
    cap = 1.0 / p if cap is None else cap
    T = _pair_matrix(lam, n)
    a = np.asarray(I) - 1
    b = np.asarray(complement(I, p), dtype=int) - 1
    if b.size == 0:
        return 0.0
    return float(np.minimum(T[np.ix_(a, b)], cap).sum())


def asymptotic_limit(spectrum: Spectrum, I: Iterable[int]) -> float:
    """``2 sum_{i in I, j not in I} lam_i lam_j / (lam_i - lam_j)^2``: limit of ``n * risk``."""
    return 2.0 * capped_full_sum(spectrum, I, 1.0, cap=math.inf)


def bayes_bound(spectrum: Spectrum, I: Iterable[int], n: float, h: float, h_min: float | None = None) -> BoundReport:
    """``sum_{i in I} sum_{j not in I} min(pair_term, 1/(h^2 p))`` for the Gibbs prior."""
    spectrum.require_positive()
    p = spectrum.p
    I = index_set(I, p)
    if h <= 0:
        raise ValueError("h must be > 0")
    cap = 1.0 / (h * h * p)
    T = _pair_matrix(spectrum.values, n)
    terms = {(i, j): min(float(T[i - 1, j - 1]), cap) for i in I for j in complement(I, p)}
    extras = {"h": h, "n": n, "cap": cap}
    if h_min is not None and h < h_min:
        extras["flag"] = f"h={h} below calibrated threshold {h_min}"
    return BoundReport(sum(terms.values()), witness={"h": h}, per_pair_terms=terms, extras=extras)


def spiked_bound(p: int, d: int, lam_hi: float, lam_lo: float, n: float) -> BoundReport:
    """``min(d (p-d)/n * lam_d lam_{d+1} / (lam_d - lam_{d+1})^2, d, p - d)``."""
    if not lam_hi > lam_lo > 0:
        raise ValueError("need lam_hi > lam_lo > 0")
    if not 1 <= d < p:
        raise ValueError("need 1 <= d < p")
    first = d * (p - d) / n * lam_hi * lam_lo / (lam_hi - lam_lo) ** 2
    return BoundReport(
        min(first, d, p - d),
        witness={"J": list(range(1, p + 1))},
        extras={"rate_term": first, "d": d, "p": p},
    )


def spiked_general_bound(spectrum: Spectrum, d: int, n: float) -> BoundReport:
    """``sum_{i <= d} min((p/n) lam_i lam_{d+1} / (lam_i - lam_{d+1})^2, 1)``."""
    lam = spectrum.values
    p = spectrum.p
    if not 1 <= d <= p - d:
        raise ValueError("need 1 <= d <= p - d")
    if not np.allclose(lam[d:], lam[d]):
        raise ValueError("tail eigenvalues lam_{d+1..p} must be equal")
    if np.any(lam[:d] <= lam[d]):
        raise ValueError("leading eigenvalues must exceed lam_{d+1}")
    tail = lam[d]
    terms = {
        (i + 1, d + 1): min(p / n * lam[i] * tail / (lam[i] - tail) ** 2, 1.0) for i in range(d)
    }
    return BoundReport(sum(terms.values()), witness={"J": list(range(1, p + 1))}, per_pair_terms=terms)


def log_plus(x: float) -> float:
    return max(0.0, math.log(x)) if x > 0 else 0.0


def decay_bounds(
    alpha: float, d: int, n: float, kind: str = "poly", single: bool = False, p_max: int | None = None
) -> BoundReport:
    """Rates for polynomially or exponentially decaying spectra.

    ``poly`` (``lam_j = j^{-alpha-1}``): ``min(1, d^2/n)`` for the single
    projector, ``min(d, (d^2/n)(1 + log_+(d ∧ sqrt(n/d))))`` for the leading
    ``d``-space. ``exp`` (``lam_j = e^{-alpha j}``): ``1/n`` for both. The
    report also evaluates the J-sum at the witness window on a truncated
    spectrum (``p_max = max(4d, 64)`` by default).
    """
    if alpha <= 0 or d < 1:
        raise ValueError("need alpha > 0 and d >= 1")
    if kind == "poly":
        if single:
            value = min(1.0, d * d / n)
        else:
            value = min(float(d), d * d / n * (1.0 + log_plus(min(d, math.sqrt(n / d)))))
    elif kind == "exp":
        value = 1.0 / n
    else:
        raise ValueError(f"unknown kind {kind!r}")
    p_max = p_max or max(4 * d, 64)
    spec = Spectrum.poly(alpha, p_max) if kind == "poly" else Spectrum.exp(alpha, p_max)
    if single:
        J = [d, d + 1]
        I = [d]
    else:
        J = [j for j in range(1, p_max + 1) if d / 2 < j <= 1.5 * d]
        I = list(range(1, d + 1))
    if len(J) < 2:
        J = [d, d + 1]
    witness_sum = _window_sum(spec, I, J, n)
    return BoundReport(
        value,
        witness={"J": J, "I": I},
        truncation=p_max,
        extras={"kind": kind, "alpha": alpha, "single": single, "witness_sum": witness_sum},
    )


def _window_sum(spectrum: Spectrum, I: Sequence[int], J: Sequence[int], n: float) -> float:
    in_I = np.zeros(spectrum.p, dtype=bool)
    in_I[np.asarray(I) - 1] = True
    return subset_value(_pair_matrix(spectrum.values, n), in_I, np.asarray(J) - 1)


def lemma_a1(m: int, x: float) -> tuple[float, float]:
    """Exact ``sum_{k=1}^m min(x/k, k/m)`` and ``min(m, x + x log_+(m ∧ sqrt(m/x)))``."""
    if m < 1 or x < 0:
        raise ValueError("need m >= 1 and x >= 0")
    k = np.arange(1, m + 1, dtype=float)
    lhs = float(np.minimum(x / k, k / m).sum())
    if x == 0:
        return lhs, 0.0
    rhs = min(float(m), x + x * log_plus(min(m, math.sqrt(m / x))))
    return lhs, rhs


def lemma_a1_grid_min(ms: Iterable[int] = range(1, 201), xs: Iterable[float] | None = None):
    """Minimum of ``lhs / rhs`` over a grid, with its location."""
    xs = np.logspace(-3, 3, 25) if xs is None else xs
    best = (math.inf, None, None)
    for m in ms:
        for x in xs:
            lhs, rhs = lemma_a1(m, float(x))
            if rhs > 0 and lhs / rhs < best[0]:
                best = (lhs / rhs, m, float(x))
    return best


# ---------------------------------------------------------------------------
# Chapman-Robbins and the density toy
# ---------------------------------------------------------------------------


def chapman_robbins_eval(
    shift_gain: float | Sequence[float],
    chi2_model: float | Sequence[float],
    chi2_prior: float | Sequence[float],
) -> float:
    """``(sum gain_j)^2 / sum_j (chi2_m + chi2_pi + chi2_m chi2_pi)``.

    Scalars give the single-shift bound; sequences give the multi-shift form.
    """
    g = np.atleast_1d(np.asarray(shift_gain, dtype=float))
    cm = np.atleast_1d(np.asarray(chi2_model, dtype=float))
    cp = np.atleast_1d(np.asarray(chi2_prior, dtype=float))
    num = float(g.sum()) ** 2
    den = float(np.sum(cm + cp + cm * cp))
    if num == 0:
        return 0.0
    if den <= 0:
        return math.inf
    return num / den


def chi2_two_point_prior(q: float) -> float:
    """``chi2(Pi o R_{-1}, Pi) = (1 - 2q)^2 / (q (1 - q))`` for ``Pi(1) = q``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    return (1.0 - 2.0 * q) ** 2 / (q * (1.0 - q))


def triangular_kernel(u):
    """``K(u) = 2 (1 - 2|u|)_+`` on ``[-1/2, 1/2]``: ``K(0) = 2``, ``|K|_2^2 = 4/3``."""
    u = np.asarray(u, dtype=float)
    return 2.0 * np.clip(1.0 - 2.0 * np.abs(u), 0.0, None)


@dataclass(frozen=True)
class DensityToyConfig:
    beta: float = 1.0
    n: int = 10**6
    h: float | None = None  # None -> n^{-1/(2 beta + 1)}
    c0: float = 0.1
    q: float = 0.75
    K_norm_sq: float = 4.0 / 3.0
    K_at_0: float = 2.0

    def __post_init__(self):
        if self.beta <= 0 or self.n < 1:
            raise ValueError("need beta > 0 and n >= 1")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.h is not None and not 0 < self.h <= 1:
            raise ValueError("bandwidth h must lie in (0, 1]")

    @property
    def bandwidth(self) -> float:
        return self.n ** (-1.0 / (2.0 * self.beta + 1.0)) if self.h is None else self.h

    @property
    def density_floor_ok(self) -> bool:
        """``f_g >= 1/4`` holds when ``c0 * K(0) <= 1/4`` (kernel peaked at 0, ``h <= 1``)."""
        return self.c0 * self.K_at_0 <= 0.25


def density_toy_bound(cfg: DensityToyConfig) -> BoundReport:
    """Two-point Chapman-Robbins bound for the density at 1/2 (sign-flip group)."""
    h = cfg.bandwidth
    gain = abs(1.0 - 2.0 * cfg.q) * 2.0 * h**cfg.beta * cfg.c0 * cfg.K_at_0
    exponent = 32.0 * cfg.c0**2 * h ** (2.0 * cfg.beta + 1.0) * cfg.n * cfg.K_norm_sq
    chi_m = math.expm1(exponent)
    chi_p = chi2_two_point_prior(cfg.q)
    value = chapman_robbins_eval(gain, chi_m, chi_p)
    extras = {"gain": gain, "chi2_model_bound": chi_m, "chi2_prior": chi_p, "h": h}
    if not cfg.density_floor_ok:
        extras["flag"] = "c0 * K(0) > 1/4: f_g >= 1/4 not guaranteed"
    return BoundReport(value, witness={"h": h, "q": cfg.q}, constant_mode="custom", extras=extras)


def density_toy_chi2_exact(cfg: DensityToyConfig, kernel: Callable = triangular_kernel) -> float:
    """Single-observation ``chi2(P_{-1}, P_1)`` by quadrature, for checking the bound."""
    from scipy import integrate

    h = cfg.bandwidth

    def f(x, g):
        bump = kernel((x - 0.5) / h) - kernel((x + 0.5) / h)
        return 0.5 + cfg.c0 * h**cfg.beta * g * bump

    pts = [-0.5 - h / 2, -0.5, -0.5 + h / 2, 0.5 - h / 2, 0.5, 0.5 + h / 2]
    pts = [t for t in pts if -1 < t < 1]
    val, _ = integrate.quad(
        lambda x: (f(x, -1) - f(x, 1)) ** 2 / f(x, 1), -1, 1, points=pts, limit=200, epsabs=1e-14
    )
    return float(val)


# ---------------------------------------------------------------------------
# Linear functionals of principal components
# ---------------------------------------------------------------------------


def linear_functional_bound(
    spectrum: Spectrum, i: int, alpha: Sequence[float], n: float, k: float
) -> float:
    """``cos^2(pi/(2k)) sum_{j != i} alpha_j^2 (n (lam_i - lam_j)^2/(lam_i lam_j) + k^2)^{-1}``."""
    lam = spectrum.values
    p = spectrum.p
    if not 1 <= i <= p:
        raise ValueError("index out of range")
    if k < 1:
        raise ValueError("k must be >= 1")
    if (i > 1 and not lam[i - 2] > lam[i - 1]) or (i < p and not lam[i - 1] > lam[i]):
        raise ValueError("lam_i must be separated from its neighbours")
    alpha = np.asarray(alpha, dtype=float)
    mask = np.arange(p) != i - 1
    li = lam[i - 1]
    fisher = n * (li - lam[mask]) ** 2 / (li * lam[mask])
    return float(math.cos(math.pi / (2 * k)) ** 2 * np.sum(alpha[mask] ** 2 / (fisher + k * k)))


def linear_functional_limit(spectrum: Spectrum, i: int, alpha: Sequence[float], c: float) -> float:
    """``sum_{j != i} alpha_j^2 ((lam_i - lam_j)^2/(lam_i lam_j) + pi^2/(4 c^2))^{-1}``."""
    lam = spectrum.values
    alpha = np.asarray(alpha, dtype=float)
    mask = np.arange(spectrum.p) != i - 1
    li = lam[i - 1]
    return float(np.sum(alpha[mask] ** 2 / ((li - lam[mask]) ** 2 / (li * lam[mask]) + math.pi**2 / (4 * c * c))))


def linear_functional_k(n: float, c: float) -> float:
    """Tuning ``k_n = (pi/2) sqrt(n) / c``."""
    return 0.5 * math.pi * math.sqrt(n) / c


# ---------------------------------------------------------------------------
# van Trees: matrix form and the eigenspace corollary
# ---------------------------------------------------------------------------


def van_trees_matrix_bound(
    samples: np.ndarray,
    dpsi: Callable[[np.ndarray, np.ndarray], np.ndarray],
    fisher_gram: np.ndarray,
    prior_score: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    ridge: float = 1e-10,
) -> tuple[float, dict]:
    """``tr(M_dpsi (M_I + M_Ipi)^{-1} M_dpsi^T)`` with prior moments from samples.

    ``samples`` are draws ``U ~ pi`` of shape ``(N, p, p)``. ``dpsi(U, L)``
    returns the derivative of the parameter at ``U`` in direction ``U L``
    (shape ``(N, m)`` for a stack ``U``). ``prior_score(U)`` returns
    ``d log pi(U) U L_k`` for every basis element, shape ``(N, d)``; for an
    exponential-trace prior this is ``h p tr(U L_k)``.
    """
    U = np.asarray(samples, dtype=float)
    N, p, _ = U.shape
    pairs = generator_pairs(p)
    d = len(pairs)
    basis = skew_from_coords(np.eye(d), p)
    cols = [np.asarray(dpsi(U, basis[k]), dtype=float).reshape(N, -1) for k in range(d)]
    M = np.stack([c.mean(axis=0) for c in cols], axis=1)  # (m, d)
    if prior_score is None:
        M_pi = np.zeros((d, d))
    else:
        S = np.asarray(prior_score(U), dtype=float)
        M_pi = S.T @ S / N
    A = np.asarray(fisher_gram, dtype=float) + M_pi
    info = {"regularized": False, "M_dpsi": M, "M_Ipi": M_pi}
    if not np.any(M):
        return 0.0, info
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        A = A + ridge * np.eye(d)
        info["regularized"] = True
        np.linalg.cholesky(A)
    X = np.linalg.solve(A, M.T)
    return float(np.trace(M @ X)), info


def exp_trace_score(h: float) -> Callable[[np.ndarray], np.ndarray]:
    """``U -> h p tr(U L^(ij))`` over all ``i < j`` (``tr(U L^(ij)) = U_ji - U_ij``)."""

    def score(U):
        p = U.shape[-1]
        iu = np.triu_indices(p, 1)
        return h * p * (U[:, iu[1], iu[0]] - U[:, iu[0], iu[1]])

    return score


def projector_derivative(I: Iterable[int]) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Derivative of ``U -> P_I(U)`` in direction ``U xi``: ``U (xi P0 - P0 xi) U^T``."""
    I = tuple(I)

    def dpsi(U, xi):
        p = U.shape[-1]
        P0 = np.zeros((p, p))
        idx = np.asarray(I) - 1
        P0[idx, idx] = 1.0
        C = xi @ P0 - P0 @ xi
        return U @ C @ np.swapaxes(U, -1, -2)

    return dpsi


def van_trees_directional(
    samples: np.ndarray,
    dpsi: Callable[[np.ndarray, np.ndarray], np.ndarray],
    form: FisherForm,
    directions: Sequence[np.ndarray],
    prior_score_dir: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> float:
    """Ratio bound for explicit directions ``xi_j``, one per parameter coordinate.

    ``(E sum_j [dpsi(U) U xi_j]_j)^2 / sum_j (I(xi_j, xi_j) + E (d log pi U xi_j)^2)``.
    """
    U = np.asarray(samples, dtype=float)
    N = U.shape[0]
    num = 0.0
    den = 0.0
    for j, xi in enumerate(directions):
        if not np.any(xi):
            continue
        num += float(np.asarray(dpsi(U, xi)).reshape(N, -1)[:, j].mean())
        den += form(xi, xi)
        if prior_score_dir is not None:
            den += float(np.mean(prior_score_dir(U, xi) ** 2))
    if num == 0:
        return 0.0
    return num * num / den


def corollary_directions(I: Sequence[int], p: int, form: FisherForm, prior_fisher: float) -> list[np.ndarray]:
    """Directions ``c_jk L^(jk)`` on coordinates ``(j,k)`` and ``(k,j)`` of the flattened projector."""
    dirs = [np.zeros((p, p)) for _ in range(p * p)]
    Ic = complement(I, p)
    for j in I:
        for k in Ic:
            a, b = min(j, k), max(j, k)
            L = np.zeros((p, p))
            L[j - 1, k - 1] = 1.0
            L[k - 1, j - 1] = -1.0
            c = 1.0 / (form.diagonal(a, b) + prior_fisher)
            dirs[(j - 1) * p + (k - 1)] = c * L
            dirs[(k - 1) * p + (j - 1)] = c * L
    return dirs


def eigenspace_van_trees(
    spectrum: Spectrum,
    I: Iterable[int],
    n: float,
    h: float,
    pair_moment_value: float,
    delta: float = 0.5,
    prior_fisher: float | None = None,
) -> BoundReport:
    """``2 m^2 sum_{i in I, j not in I} (I(L^(ij), L^(ij)) + 8 h^2 p)^{-1}``.

    ``m`` is the prior moment ``E[U_11 U_22 + U_12 U_21]``. ``prior_fisher``
    overrides the ``8 h^2 p`` bound on the prior information term. The
    min-form ``2 m^2 sum min((1-delta)/I, delta/(8 h^2 p))`` is stored in
    ``extras``.
    """
    p = spectrum.p
    I = index_set(I, p)
    form = fisher_pca(PcaModel(spectrum, int(n)))
    y = 8.0 * h * h * p if prior_fisher is None else prior_fisher
    pref = 2.0 * pair_moment_value**2
    terms, min_terms = {}, {}
    for i in I:
        for j in complement(I, p):
            x = form.weights[i - 1, j - 1]
            terms[(i, j)] = pref / (x + y)
            min_terms[(i, j)] = pref * min((1 - delta) / x if x > 0 else math.inf, delta / y if y > 0 else math.inf)
    return BoundReport(
        sum(terms.values()),
        witness={"h": h},
        per_pair_terms=terms,
        constant_mode="custom",
        extras={
            "prefactor": pref,
            "prior_information": y,
            "delta": delta,
            "min_form": sum(min_terms.values()),
        },
    )


def denoise_bound(
    spectrum: Spectrum, I: Iterable[int], sigma: float, h: float, delta: float = 0.5
) -> BoundReport:
    """``2 (1-delta)^2 sum_{i in I, j not in I} min(sigma^2/(lam_i - lam_j)^2, delta/(8 h^2 p))``."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    lam = spectrum.values
    p = spectrum.p
    I = index_set(I, p)
    cap = delta / (8.0 * h * h * p)
    pref = 2.0 * (1.0 - delta) ** 2
    terms = {}
    for i in I:
        for j in complement(I, p):
            gap = lam[i - 1] - lam[j - 1]
            raw = sigma**2 / gap**2 if gap != 0 else math.inf
            terms[(i, j)] = pref * min(raw, cap)
    return BoundReport(
        sum(terms.values()),
        witness={"h": h},
        per_pair_terms=terms,
        constant_mode="custom",
        extras={"delta": delta, "prefactor": pref, "cap": cap},
    )
