"""Reduced boson state and its Wigner distribution.

The Wigner function is evaluated in position representation,

    W(x, p) = (1/(2 pi)) int dy <x - y/2|rho|x + y/2> exp(i p y)
            = (1/pi) int du <x - u|rho|x + u> exp(2 i p u),

normalized to unit integral (the vacuum gives ``exp(-x^2 - p^2) / pi``),

with oscillator eigenfunctions from the three-term recurrence of
normalized Hermite functions and the y-integral discretized on a grid
fine enough to resolve both the state and ``exp(i p y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, NumericalError
from .quench import QuenchState

_RESCALE = 1e150
_LOG_RESCALE = math.log(_RESCALE)


def reduce_field(state) -> np.ndarray:
    """Boson density matrix ``rho[n, m] = sum_s psi(n, s) psi(m, s)^*``."""
    psi = np.asarray(state, dtype=np.complex128)
    if psi.ndim != 1 or psi.size % 2:
        raise ValueError("state must be a flat product-basis vector of even length")
    amp = psi.reshape(-1, 2)
    return amp @ amp.conj().T


def state_at_time(state: QuenchState, t: float) -> np.ndarray:
    """Product-basis vector ``sum_nu C_nu exp(-i E_nu t) |psi_nu>``."""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    dec = state.decomposition
    c_t = state.coeffs * np.exp(-1j * dec.energies * t)
    return dec.vectors @ c_t


def hermite_functions(n_max: int, x) -> np.ndarray:
    """Oscillator eigenfunctions ``phi_n(x)``, n = 0..n_max, shape ``(n_max + 1, len(x))``.

    Upward recurrence of normalized functions carried with a separate
    logarithmic scale so that large ``n`` and ``|x|`` neither overflow nor
    underflow prematurely.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((n_max + 1, x.size))
    log_scale = -0.5 * x * x - 0.25 * math.log(math.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    out[0] = np.exp(log_scale)
    for n in range(n_max):
        nxt = math.sqrt(2.0 / (n + 1)) * x * cur - math.sqrt(n / (n + 1.0)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if big.any():
            cur[big] /= _RESCALE
            prev[big] /= _RESCALE
            log_scale[big] += _LOG_RESCALE
        with np.errstate(under="ignore"):
            out[n + 1] = cur * np.exp(log_scale)
    return out


@dataclass(frozen=True)
class GridSpec:
    """Symmetric square grid ``[-x_max, x_max] x [-p_max, p_max]``."""

    x_max: float
    p_max: float
    points: int = 512

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.linspace(-self.x_max, self.x_max, self.points),
            np.linspace(-self.p_max, self.p_max, self.points),
        )


def support_radius(rho_f: np.ndarray, tail: float = 1e-12) -> float:
    """Classical turning point of the highest Fock level with non-negligible weight."""
    pop = np.real(np.diag(rho_f))
    tail_weight = np.cumsum(pop[::-1])[::-1]
    n_max = int(np.flatnonzero(tail_weight > tail)[-1]) if np.any(tail_weight > tail) else 0
    return math.sqrt(2.0 * n_max + 1.0)


def default_grid(g: float, rho_f: np.ndarray | None = None, points: int = 512) -> GridSpec:
    """``[-2g - 5, 2g + 5]`` per axis, widened to cover the state's support.

    With ``rho_f`` given, ``points`` is a minimum: it is raised until the
    spacing is below ``pi / (R + 2)``, ``R`` the support radius, which keeps
    the fastest phase-space oscillation of the state unaliased.
    """
    extent = 2.0 * g + 5.0
    if rho_f is not None:
        radius = support_radius(rho_f)
        extent = max(extent, radius + 4.0)
        points = max(points, math.ceil(2.0 * extent * (radius + 2.0) / math.pi) + 1)
    return GridSpec(extent, extent, points)


@dataclass(frozen=True)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # indexed [i_x, i_p]
    time: float | None = None
    source: str = "evolved_state"
    imag_residue: float = 0.0
    origin_check: float = 0.0
    support_fraction: float = 1.0
    position_density: np.ndarray = field(default=None, repr=False)

    @property
    def dx(self) -> float:
        return float(self.x_axis[1] - self.x_axis[0])

    @property
    def dp(self) -> float:
        return float(self.p_axis[1] - self.p_axis[0])

    def normalization(self) -> float:
        return float(self.values.sum() * self.dx * self.dp)

    def negativity_volume(self) -> float:
        """``int |W| dx dp - 1``."""
        return float(np.abs(self.values).sum() * self.dx * self.dp - 1.0)

    def position_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dp

    def momentum_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dx


def _low_rank(rho_f: np.ndarray, rel_tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    w, u = np.linalg.eigh(rho_f)
    keep = w > rel_tol * max(float(w.max()), 0.0)
    return w[keep], u[:, keep]


def boson_parity_expectation(rho_f: np.ndarray) -> float:
    sign = np.where(np.arange(rho_f.shape[0]) % 2 == 0, 1.0, -1.0)
    return float(np.real(np.sum(sign * np.diag(rho_f))))


def wigner_transform(
    rho_f,
    grid: GridSpec,
    *,
    time: float | None = None,
    source: str = "evolved_state",
    min_support: float = 1.0 - 1e-8,
    origin_tol: float = 1e-8,
) -> WignerGrid:
    """Wigner distribution of the boson density matrix ``rho_f`` on ``grid``.

    Raises :class:`GridError` when less than ``min_support`` of the position
    density lies inside the x range, and :class:`NumericalError` when the
    quadrature value at the origin disagrees with ``tr(rho (-1)^n) / pi``.
    """
    rho_f = np.asarray(rho_f, dtype=np.complex128)
    if rho_f.ndim != 2 or rho_f.shape[0] != rho_f.shape[1]:
        raise ValueError("rho_f must be square")
    if np.max(np.abs(rho_f - rho_f.conj().T)) > 1e-10:
        raise ValueError("rho_f is not Hermitian")
    tr = float(np.real(np.trace(rho_f)))
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"rho_f has trace {tr}, expected 1")
    n_max = rho_f.shape[0] - 1
    x_axis, p_axis = grid.axes()
    n_out = grid.points
    dx = x_axis[1] - x_axis[0]

    radius = support_radius(rho_f)
    # integrand bandwidth in y is at most radius + p_max; sample well below Nyquist
    h_max = 0.9 * math.pi / (radius + grid.p_max)
    refine = max(2, 2 * math.ceil(dx / h_max / 2))
    h = dx / refine
    u_extent = max(grid.x_max, radius + 8.0)
    pad = math.ceil((u_extent - grid.x_max) / h)
    n_u = (n_out - 1) * refine + 1 + 2 * pad
    u = x_axis[0] + (np.arange(n_u) - pad) * h
    centres = pad + refine * np.arange(n_out)

    weights, vecs = _low_rank(rho_f)
    chi = vecs.T @ hermite_functions(n_max, u)  # (rank, n_u)

    density = np.einsum("k,ku->u", weights, np.abs(chi) ** 2)
    total = density.sum() * h
    inside = density[pad : pad + (n_out - 1) * refine + 1].sum() * h
    support = inside / total if total > 0 else 0.0
    if support < min_support:
        raise GridError(f"grid covers only {support:.10f} of the position density", support)

    m_max = min(n_u - 1, int(np.max(np.minimum(centres, n_u - 1 - centres))))
    m = np.arange(-m_max, m_max + 1)
    lo = centres[:, None] - m[None, :]
    hi = centres[:, None] + m[None, :]
    valid = (lo >= 0) & (hi < n_u)
    lo = np.clip(lo, 0, n_u - 1)
    hi = np.clip(hi, 0, n_u - 1)
    kernel = np.zeros((n_out, m.size), dtype=np.complex128)
    for wk, ck in zip(weights, chi):
        kernel += wk * ck[lo] * np.conj(ck[hi])
    kernel[~valid] = 0.0
    phase = np.exp(2j * h * np.outer(m, p_axis))
    w = (h / math.pi) * (kernel @ phase)

    # origin cross-check against the parity identity
    c0 = pad + round((0.0 - x_axis[0]) / h)
    mm = np.arange(-min(c0, n_u - 1 - c0), min(c0, n_u - 1 - c0) + 1)
    w00 = (h / math.pi) * np.real(
        np.sum(sum(wk * ck[c0 - mm] * np.conj(ck[c0 + mm]) for wk, ck in zip(weights, chi)))
    )
    expected = boson_parity_expectation(rho_f) / math.pi
    origin_err = abs(w00 - expected)
    if origin_err > origin_tol:
        raise NumericalError(f"W(0,0) = {w00:.12g} disagrees with parity value {expected:.12g}")

    return WignerGrid(
        x_axis,
        p_axis,
        np.ascontiguousarray(w.real),
        time,
        source,
        float(np.max(np.abs(w.imag))),
        origin_err,
        float(support),
        density[centres].copy(),
    )
