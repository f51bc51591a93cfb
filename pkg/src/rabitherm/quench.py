"""Quench protocol and time evolution in the spectral representation.

With ``|Psi(0)> = sum_nu C_nu |psi_nu>`` every expectation is

    <A(t)> = sum_{nu, mu} C_nu^* C_mu exp(i (E_nu - E_mu) t) A_{nu mu}

and the infinite-time average keeps only the diagonal terms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .eigensolver import EigenDecomposition, decompose_params, ground_state
from .hamiltonian import HermitianObservable, ModelParams, ObservableKind

#: |C_nu|^2 below this weight is dropped from double sums.
WEIGHT_CUTOFF = 1e-16
GAP_TOLERANCE = 1e-10
GAP_COLLISION_THRESHOLD = 0.01

DEFAULT_T_BURN = 1e3
DEFAULT_T_MAX = 1e6
DEFAULT_N_SAMPLES = 10_000


@dataclass(frozen=True, eq=False)
class QuenchState:
    """Expansion coefficients of the initial state in the quenched eigenbasis."""

    coeffs: np.ndarray
    energy: float
    decomposition: EigenDecomposition

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=np.complex128)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2

    @classmethod
    def from_vector(cls, psi: np.ndarray, dec: EigenDecomposition) -> "QuenchState":
        """Project a product-basis state on ``dec``; ``psi`` is normalized first."""
        psi = np.asarray(psi, dtype=np.complex128)
        if psi.shape != (dec.dim,):
            raise ValueError(f"state has shape {psi.shape}, expected ({dec.dim},)")
        psi = psi / np.linalg.norm(psi)
        coeffs = dec.vectors.T @ psi
        energy = float(np.abs(coeffs) ** 2 @ dec.energies)
        return cls(coeffs, energy, dec)

    @classmethod
    def eigenstate(cls, dec: EigenDecomposition, index: int) -> "QuenchState":
        coeffs = np.zeros(dec.dim, dtype=np.complex128)
        coeffs[index] = 1.0
        return cls(coeffs, float(dec.energies[index]), dec)


@dataclass(frozen=True, eq=False)
class ObservableInEigenbasis:
    """``A_{nu mu} = <psi_nu|A|psi_mu>``."""

    elements: np.ndarray
    kind: ObservableKind = ObservableKind.CUSTOM

    def __post_init__(self):
        el = np.ascontiguousarray(self.elements, dtype=np.complex128)
        el.setflags(write=False)
        object.__setattr__(self, "elements", el)

    @property
    def diagonal(self) -> np.ndarray:
        return self.elements.diagonal().real


def quench(initial_params: ModelParams, final_params: ModelParams) -> QuenchState:
    """Ground state of ``initial_params`` expanded in the eigenbasis of ``final_params``."""
    if initial_params.n_tr != final_params.n_tr:
        raise ValueError(
            f"truncations differ: {initial_params.n_tr} (initial) vs {final_params.n_tr} (final)"
        )
    psi0 = ground_state(initial_params)
    return QuenchState.from_vector(psi0, decompose_params(final_params))


def to_eigenbasis(obs: HermitianObservable, dec: EigenDecomposition) -> ObservableInEigenbasis:
    if obs.dim != dec.dim:
        raise ValueError(f"observable dimension {obs.dim} does not match decomposition {dec.dim}")
    v = dec.vectors
    re = v.T @ obs.sym @ v if obs.sym is not None else np.zeros((dec.dim, dec.dim))
    if obs.antisym is not None:
        el = re + 1j * (v.T @ obs.antisym @ v)
    else:
        el = re.astype(np.complex128)
    # restore exact Hermiticity lost to rounding
    el = 0.5 * (el + el.conj().T)
    return ObservableInEigenbasis(el, obs.kind)


@dataclass(frozen=True)
class _Window:
    index: np.ndarray
    coeffs: np.ndarray
    energies: np.ndarray
    elements: np.ndarray
    discarded_weight: float


def _window(state: QuenchState, obs: ObservableInEigenbasis) -> _Window:
    w = state.weights
    keep = np.flatnonzero(w >= WEIGHT_CUTOFF)
    return _Window(
        keep,
        state.coeffs[keep],
        state.decomposition.energies[keep],
        obs.elements[np.ix_(keep, keep)],
        float(w.sum() - w[keep].sum()),
    )


def discarded_weight(state: QuenchState) -> float:
    """Weight of coefficients below :data:`WEIGHT_CUTOFF`."""
    w = state.weights
    return float(w[w < WEIGHT_CUTOFF].sum())


def _series(win: _Window, times: np.ndarray, batch: int = 512) -> tuple[np.ndarray, np.ndarray]:
    out = np.empty(times.shape[0], dtype=np.complex128)
    for start in range(0, times.shape[0], batch):
        t = times[start : start + batch]
        c_t = win.coeffs[:, None] * np.exp(-1j * np.outer(win.energies, t))
        out[start : start + batch] = np.einsum("it,it->t", c_t.conj(), win.elements @ c_t)
    return out.real, out.imag


def expectation_at(state: QuenchState, obs: ObservableInEigenbasis, t: float) -> float:
    """``<Psi(t)|A|Psi(t)>``; warns if the imaginary residue exceeds 1e-10."""
    return float(expectation_series(state, obs, np.array([float(t)]))[0])


def expectation_series(state: QuenchState, obs: ObservableInEigenbasis, times) -> np.ndarray:
    """Vectorized :func:`expectation_at` over an array of times."""
    times = np.asarray(times, dtype=np.float64).ravel()
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")
    re, im = _series(_window(state, obs), times)
    residue = float(np.max(np.abs(im))) if im.size else 0.0
    if residue > 1e-10 * max(1.0, float(np.max(np.abs(re)))):
        warnings.warn(f"imaginary residue {residue:.3e} in expectation", RuntimeWarning, stacklevel=2)
    return re


def long_time_average(state: QuenchState, obs: ObservableInEigenbasis) -> float:
    """Diagonal-ensemble value ``sum_nu |C_nu|^2 A_{nu nu}``."""
    return float(state.weights @ obs.diagonal)


def gap_collision_fraction(energies: np.ndarray, tol: float = GAP_TOLERANCE) -> float:
    """Fraction of level pairs whose gap coincides with another pair's gap.

    Degenerate levels count as colliding (their gap 0 matches the diagonal).
    """
    e = np.sort(np.asarray(energies, dtype=np.float64))
    if e.size < 2:
        return 0.0
    i, j = np.triu_indices(e.size, k=1)
    gaps = np.sort(e[j] - e[i])
    close = np.diff(gaps) < tol
    hit = np.zeros(gaps.size, dtype=bool)
    hit[:-1] |= close
    hit[1:] |= close
    hit |= gaps < tol
    return float(hit.mean())


@dataclass(frozen=True)
class SampledStatistics:
    mean: float
    std: float
    mean_stderr: float
    std_stderr: float
    samples: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)


def sample_times(n_samples: int, t_min: float, t_max: float, seed: int) -> np.ndarray:
    if not t_max > t_min:
        raise ValueError(f"empty time window [{t_min}, {t_max}]")
    return np.random.default_rng(seed).uniform(t_min, t_max, size=int(n_samples))


def sampled_statistics(
    state: QuenchState,
    obs: ObservableInEigenbasis,
    n_samples: int = DEFAULT_N_SAMPLES,
    window: tuple[float, float] = (DEFAULT_T_BURN, DEFAULT_T_MAX),
    seed: int = 0,
) -> SampledStatistics:
    """Mean and standard deviation of ``<A(t)>`` over uniformly random times."""
    times = sample_times(n_samples, window[0], window[1], seed)
    x = expectation_series(state, obs, times)
    n = x.size
    mean = float(x.mean())
    std = float(x.std())
    m4 = float(np.mean((x - mean) ** 4))
    var = std * std
    std_se = float(np.sqrt(max(m4 - var * var, 0.0) / n) / (2 * std)) if std > 0 else 0.0
    return SampledStatistics(mean, std, std / np.sqrt(n), std_se, x, times)


def spectral_deviation(state: QuenchState, obs: ObservableInEigenbasis) -> float:
    """``sqrt(sum_{nu != mu} |C_nu|^2 |C_mu|^2 |A_{nu mu}|^2)``."""
    win = _window(state, obs)
    w = np.abs(win.coeffs) ** 2
    a2 = np.abs(win.elements) ** 2
    total = float(w @ a2 @ w - np.sum(w * w * np.diag(a2)))
    return float(np.sqrt(max(total, 0.0)))


def long_time_variance(
    state: QuenchState,
    obs: ObservableInEigenbasis,
    mode: str = "spectral",
    *,
    n_samples: int = DEFAULT_N_SAMPLES,
    window: tuple[float, float] = (DEFAULT_T_BURN, DEFAULT_T_MAX),
    seed: int = 0,
    collision_threshold: float = GAP_COLLISION_THRESHOLD,
) -> float:
    """Infinite-time standard deviation of ``<A(t)>`` (not its square).

    ``mode="spectral"`` uses the off-diagonal double sum, valid when no two
    energy gaps coincide; if the fraction of colliding gaps exceeds
    ``collision_threshold`` a warning is emitted and the sampled estimate
    over ``n_samples`` random times in ``window`` is returned instead.
    """
    if mode == "spectral":
        win = _window(state, obs)
        frac = gap_collision_fraction(win.energies)
        if frac > collision_threshold:
            warnings.warn(
                f"gap collision fraction {frac:.3g} exceeds {collision_threshold}; "
                "falling back to sampled variance",
                RuntimeWarning,
                stacklevel=2,
            )
            mode = "sampled"
        else:
            return spectral_deviation(state, obs)
    if mode == "sampled":
        return sampled_statistics(state, obs, n_samples, window, seed).std
    raise ValueError(f"unknown mode {mode!r}; expected 'spectral' or 'sampled'")
