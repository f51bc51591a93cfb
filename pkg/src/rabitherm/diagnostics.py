"""Thermalization diagnostics: participation, ensembles, level statistics, sweeps."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .eigensolver import EigenDecomposition, decompose_params, ground_state
from .errors import ResourceCapError
from .hamiltonian import ModelParams, ObservableKind, build_hamiltonian, build_observable
from .quench import (
    DEFAULT_N_SAMPLES,
    DEFAULT_T_BURN,
    DEFAULT_T_MAX,
    ObservableInEigenbasis,
    QuenchState,
    expectation_series,
    long_time_average,
    long_time_variance,
    sample_times,
    to_eigenbasis,
)

NORM_TOL = 1e-8
MC_WINDOW_SPACINGS = 5.0


def ipr(coeffs) -> float:
    """Inverse participation ratio ``(sum |C|^4)^-1`` of normalized coefficients."""
    w = np.abs(np.asarray(coeffs)) ** 2
    total = w.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise ValueError(f"coefficients are not normalized (sum |C|^2 = {total:.12g})")
    return float(1.0 / np.sum(w * w))


def eigenstate_population(state: QuenchState) -> np.ndarray:
    """Occupation ``|C_l|^2`` of each eigenstate, time independent."""
    return state.weights


def local_mean_spacing(energies: np.ndarray, E: float, neighbours: int = 10) -> float:
    """Mean level spacing of the ``2 * neighbours`` levels closest to ``E``."""
    e = np.sort(np.asarray(energies))
    k = int(np.searchsorted(e, E))
    lo, hi = max(0, k - neighbours), min(e.size, k + neighbours)
    if hi - lo < 2:
        raise ValueError("not enough levels to estimate the local spacing")
    return float((e[hi - 1] - e[lo]) / (hi - lo - 1))


def microcanonical_average(
    dec: EigenDecomposition, obs: ObservableInEigenbasis, E: float, delta: float | None = None
) -> float:
    """Mean of ``A_{gamma gamma}`` over eigenstates with ``|E_gamma - E| <= delta``.

    ``delta`` defaults to five local mean level spacings at ``E``.
    """
    if delta is None:
        delta = MC_WINDOW_SPACINGS * local_mean_spacing(dec.energies, E)
    sel = np.abs(dec.energies - E) <= delta
    if not sel.any():
        raise ValueError(f"no eigenvalue within [{E - delta}, {E + delta}]")
    return float(obs.diagonal[sel].mean())


def level_spacings(dec_or_energies, window: tuple[float, float]) -> np.ndarray:
    """Consecutive gaps of the levels inside ``window`` divided by their mean."""
    e = dec_or_energies.energies if isinstance(dec_or_energies, EigenDecomposition) else dec_or_energies
    e = np.sort(np.asarray(e, dtype=np.float64))
    lo, hi = window
    sel = e[(e > lo) & (e < hi)]
    if sel.size < 3:
        raise ValueError(f"only {sel.size} levels in window {window}; need at least 3")
    s = np.diff(sel)
    mean = s.mean()
    if mean <= 0:
        raise ValueError("all levels in the window are degenerate")
    return s / mean


@dataclass(frozen=True)
class SpacingHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    mean_spacing: float
    window: tuple[float, float]
    n_spacings: int


def spacing_histogram(dec_or_energies, window: tuple[float, float], bins="fd") -> SpacingHistogram:
    """Normalized histogram of mean-1 spacings; Freedman-Diaconis bins by default."""
    e = dec_or_energies.energies if isinstance(dec_or_energies, EigenDecomposition) else dec_or_energies
    e = np.sort(np.asarray(e, dtype=np.float64))
    sel = e[(e > window[0]) & (e < window[1])]
    s = level_spacings(sel, (-np.inf, np.inf))
    counts, edges = np.histogram(s, bins=bins, density=True)
    return SpacingHistogram(edges, counts, float(np.diff(sel).mean()), tuple(window), int(s.size))


def poisson_density(S):
    return np.exp(-np.asarray(S, dtype=np.float64))


def wigner_dyson_density(S):
    S = np.asarray(S, dtype=np.float64)
    return 0.5 * np.pi * S * np.exp(-0.25 * np.pi * S * S)


def poisson_cdf(S):
    return -np.expm1(-np.asarray(S, dtype=np.float64))


def wigner_dyson_cdf(S):
    S = np.asarray(S, dtype=np.float64)
    return -np.expm1(-0.25 * np.pi * S * S)


def reference_distributions(S) -> tuple[np.ndarray, np.ndarray]:
    """Poisson ``exp(-S)`` and Wigner-Dyson ``(pi S / 2) exp(-pi S^2 / 4)`` densities."""
    S = np.asarray(S, dtype=np.float64)
    if np.any(S < 0):
        raise ValueError("spacings must be non-negative")
    return poisson_density(S), wigner_dyson_density(S)


def ks_critical_value(n: int, alpha: float) -> float:
    """Exact two-sided one-sample KS critical value at level ``alpha``."""
    return float(stats.kstwo.ppf(1.0 - alpha, n))


@dataclass(frozen=True)
class SpacingTest:
    ks_poisson: float
    ks_wigner_dyson: float
    critical: float
    alpha: float
    n_spacings: int

    @property
    def rejects_poisson(self) -> bool:
        return self.ks_poisson > self.critical

    @property
    def rejects_wigner_dyson(self) -> bool:
        return self.ks_wigner_dyson > self.critical


def spacing_ks_test(spacings, alpha: float = 0.01) -> SpacingTest:
    s = np.asarray(spacings)
    return SpacingTest(
        float(stats.kstest(s, poisson_cdf).statistic),
        float(stats.kstest(s, wigner_dyson_cdf).statistic),
        ks_critical_value(s.size, alpha),
        alpha,
        int(s.size),
    )


def pair_splittings(energies, upper: float = 0.0) -> tuple[np.ndarray, float]:
    """Intra-pair gaps of consecutive levels below ``upper``, paired from the bottom.

    Returns the gaps and the mean level spacing below ``upper``.  An odd
    trailing level is ignored.
    """
    e = np.sort(np.asarray(energies))
    e = e[e < upper]
    if e.size < 4:
        raise ValueError("need at least two pairs below the threshold")
    e = e[: e.size - e.size % 2]
    return e[1::2] - e[0::2], float(np.diff(e).mean())


@dataclass(frozen=True)
class GaussianityReport:
    samples: np.ndarray = field(repr=False)
    ks_statistic: float
    reference_mean: float
    reference_sigma: float
    critical_value: float
    alpha: float

    @property
    def passed(self) -> bool:
        return self.ks_statistic <= self.critical_value


def gaussianity_test(
    state: QuenchState,
    obs: ObservableInEigenbasis,
    n_samples: int = DEFAULT_N_SAMPLES,
    t_max: float = DEFAULT_T_MAX,
    seed: int = 0,
    t_burn: float = DEFAULT_T_BURN,
    alpha: float = 0.05,
) -> GaussianityReport:
    """KS distance between random-time samples of ``<A(t)>`` and ``Normal(<A>_T, delta_A^2)``."""
    if n_samples < 100:
        raise ValueError(f"n_samples must be >= 100, got {n_samples}")
    mean = long_time_average(state, obs)
    sigma = long_time_variance(state, obs, "spectral", n_samples=n_samples, window=(t_burn, t_max), seed=seed)
    if sigma <= 1e-12 * max(1.0, abs(mean)):
        raise ValueError("reference distribution is degenerate (delta = 0)")
    x = expectation_series(state, obs, sample_times(n_samples, t_burn, t_max, seed))
    ks = float(stats.kstest(x, stats.norm(loc=mean, scale=sigma).cdf).statistic)
    return GaussianityReport(x, ks, mean, sigma, ks_critical_value(x.size, alpha), alpha)


class Quantity(str, enum.Enum):
    GROUND_ENERGY = "ground_energy"
    LOW_SPECTRUM = "low_spectrum"
    QUENCH_MEAN_N = "quench_mean_n"
    QUENCH_DELTA_N = "quench_delta_n"
    QUENCH_IPR = "quench_ipr"
    WINDOW_SPECTRUM = "window_spectrum"
    TRACE = "trace"


#: Quantities that grow with the cutoff by construction and can never converge.
NON_CONVERGENT = {Quantity.TRACE}

DEFAULT_QUENCH_INITIAL = ModelParams(omega=1.0, g=0.1, lam=0.0)


@dataclass(frozen=True)
class ConvergenceResult:
    n_tr: int
    quantity: Quantity
    history: tuple  # ((n_tr, value), ...)
    change: float


def _quench_pair(params: ModelParams, initial: ModelParams) -> tuple[QuenchState, ObservableInEigenbasis]:
    init = initial.with_(n_tr=params.n_tr)
    psi0 = ground_state(init)
    dec = decompose_params(params)
    state = QuenchState.from_vector(psi0, dec)
    return state, to_eigenbasis(build_observable(ObservableKind.N, params.n_tr), dec)


def evaluate_quantity(
    params: ModelParams,
    quantity,
    initial: ModelParams = DEFAULT_QUENCH_INITIAL,
    n_low: int = 50,
    window: tuple[float, float] = (0.0, 250.0),
):
    quantity = Quantity(quantity)
    if quantity is Quantity.TRACE:
        return float(np.trace(build_hamiltonian(params).sym))
    if quantity is Quantity.GROUND_ENERGY:
        return float(decompose_params(params).energies[0])
    if quantity is Quantity.LOW_SPECTRUM:
        return np.array(decompose_params(params).energies[:n_low])
    if quantity is Quantity.WINDOW_SPECTRUM:
        e = decompose_params(params).energies
        return np.array(e[(e > window[0]) & (e < window[1])])
    state, n_eig = _quench_pair(params, initial)
    if quantity is Quantity.QUENCH_MEAN_N:
        return long_time_average(state, n_eig)
    if quantity is Quantity.QUENCH_DELTA_N:
        return long_time_variance(state, n_eig, "spectral")
    return ipr(state.coeffs)


def _change(a, b) -> float:
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    if a.shape != b.shape:
        return math.inf
    return float(np.max(np.abs(a - b)))


def convergence_sweep(
    params: ModelParams,
    quantity,
    tol: float,
    *,
    start: int = 8,
    max_n_tr: int = 4096,
    **kwargs,
) -> ConvergenceResult:
    """Smallest ``n_tr`` in the schedule ``start * 2^k`` whose quantity changes by
    less than ``tol`` when ``n_tr`` doubles.

    Raises :class:`ResourceCapError` once doubling would exceed ``max_n_tr``.
    """
    quantity = Quantity(quantity)
    if quantity in NON_CONVERGENT:
        raise ValueError(f"{quantity.value!r} depends on n_tr by construction; not a convergence target")
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    n = max(int(start), 1)
    prev = evaluate_quantity(params.with_(n_tr=n), quantity, **kwargs)
    history = [(n, prev)]
    while 2 * n <= max_n_tr:
        cur = evaluate_quantity(params.with_(n_tr=2 * n), quantity, **kwargs)
        history.append((2 * n, cur))
        change = _change(prev, cur)
        if change < tol:
            return ConvergenceResult(n, quantity, tuple(history), change)
        n *= 2
        prev = cur
    raise ResourceCapError(f"{quantity.value} not converged to {tol} below n_tr = {max_n_tr}")


@dataclass(frozen=True)
class SweepRow:
    g: float
    delta_n: float
    mean_n: float
    ratio: float
    ipr: float
    n_tr: int
    energy: float

    COLUMNS = ("g", "delta_n", "mean_n", "ratio", "ipr", "n_tr", "energy")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in self.COLUMNS)


def _sweep_point(args) -> SweepRow:
    g, template, initial, tol, start, max_n_tr = args
    params = template.with_(g=float(g))
    if template.n_tr > 0:
        n_tr = template.n_tr
    else:
        n_tr = convergence_sweep(
            params, Quantity.QUENCH_MEAN_N, tol, start=start, max_n_tr=max_n_tr, initial=initial
        ).n_tr
    params = params.with_(n_tr=n_tr)
    state, n_eig = _quench_pair(params, initial)
    mean = long_time_average(state, n_eig)
    delta = long_time_variance(state, n_eig, "spectral")
    return SweepRow(float(g), delta, mean, delta / mean if mean else math.nan, ipr(state.coeffs), n_tr, state.energy)


def variance_sweep(
    g_values,
    template: ModelParams,
    initial: ModelParams = DEFAULT_QUENCH_INITIAL,
    *,
    tol: float = 1e-6,
    start: int = 16,
    max_n_tr: int = 4096,
    workers: int = 1,
    initializer=None,
    initargs=(),
) -> list[SweepRow]:
    """One row ``(g, delta_n, <n>_T, ratio, ipr)`` per coupling.

    ``template.n_tr == 0`` selects the truncation per point by
    :func:`convergence_sweep` on ``<n>_T``; otherwise the given cutoff is used.
    With ``workers > 1`` points run in separate processes, each set up by
    ``initializer(*initargs)``; rows keep the order of ``g_values``.
    """
    tasks = [(float(g), template, initial, tol, start, max_n_tr) for g in g_values]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)[0])


def is_strictly_decreasing(values) -> bool:
    return bool(np.all(np.diff(np.asarray(values)) < 0))
