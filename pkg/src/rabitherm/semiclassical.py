"""Mean-field limit: coherent boson amplitude coupled to a spin on the Bloch sphere.

Classical energy

    H_cl = p^2/2 + x^2/2 + (omega/2) Z + (g sqrt(2) x + lam) sqrt(1 - Z^2) cos(dphi)

with canonical pairs ``(x, p)`` and ``(dphi, Z)``.  The ``(Z, dphi)`` chart is
singular at the poles ``|Z| = 1``; the same flow is also available in
Cartesian spin variables ``s = (sqrt(1-Z^2) cos dphi, sqrt(1-Z^2) sin dphi, Z)``
where it reads ``s' = B x s`` with ``B = (g sqrt(2) x + lam, 0, omega/2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _dop853 as _rk
from .errors import ConvergenceWarning, IntegrationError, PoleError
from .hamiltonian import ModelParams

SQRT2 = math.sqrt(2.0)
RTOL = 1e-14
ATOL = 1e-14
POLE_EPS = 1e-9
MAX_STEPS = 50_000_000

_COORDS = {"chart": _rk.CHART, "cartesian": _rk.CARTESIAN}


@dataclass(frozen=True)
class ClassicalState:
    x: float
    p: float
    Z: float
    dphi: float

    def __post_init__(self):
        if abs(self.Z) > 1.0:
            raise ValueError(f"|Z| must be <= 1, got {self.Z}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.p, self.Z, self.dphi], dtype=np.float64)

    def to_cartesian(self) -> np.ndarray:
        r = math.sqrt(max(1.0 - self.Z * self.Z, 0.0))
        return np.array([self.x, self.p, r * math.cos(self.dphi), r * math.sin(self.dphi), self.Z])

    @classmethod
    def from_cartesian(cls, y) -> "ClassicalState":
        x, p, sx, sy, sz = (float(v) for v in y[:5])
        norm = math.sqrt(sx * sx + sy * sy + sz * sz)
        return cls(x, p, max(-1.0, min(1.0, sz / norm)), math.atan2(sy, sx))


def _par(params: ModelParams) -> np.ndarray:
    return np.array([params.omega, params.g, params.lam], dtype=np.float64)


def classical_energy(s: ClassicalState, params: ModelParams) -> float:
    if abs(s.Z) > 1.0:
        raise ValueError(f"|Z| must be <= 1, got {s.Z}")
    return float(_rk.energy(_rk.CHART, s.as_array(), _par(params)))


def eom_rhs(s: ClassicalState, params: ModelParams) -> np.ndarray:
    """Time derivatives ``(x', p', Z', dphi')`` in the ``(Z, dphi)`` chart.

    ``Z' = -dH/d(dphi)`` carries the full prefactor ``g sqrt(2) x + lam``.
    """
    if 1.0 - abs(s.Z) < POLE_EPS:
        raise PoleError(f"Z = {s.Z} is at a pole of the (Z, dphi) chart")
    out = np.empty(4)
    _rk.rhs(_rk.CHART, s.as_array(), _par(params), out)
    return out


def eom_rhs_cartesian(y, params: ModelParams) -> np.ndarray:
    """Time derivatives of ``(x, p, s_x, s_y, s_z)``."""
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    _rk.rhs(_rk.CARTESIAN, y, _par(params), out)
    return out


def state_on_shell(E: float, params: ModelParams, x: float, Z: float, dphi: float, sign: float = 1.0) -> ClassicalState:
    """Solve ``H_cl = E`` for the momentum at fixed ``(x, Z, dphi)``."""
    rest = classical_energy(ClassicalState(x, 0.0, Z, dphi), params)
    if rest > E:
        raise ValueError(f"energy {E} is below the potential {rest} at this point")
    return ClassicalState(x, math.copysign(math.sqrt(2.0 * (E - rest)), sign), Z, dphi)


@dataclass(frozen=True)
class Trajectory:
    """Sampled trajectory; ``states`` rows are ``(x, p, Z, dphi)`` with unwrapped phase."""

    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    params: ModelParams
    coords: str = "cartesian"
    raw: np.ndarray = field(default=None, repr=False)
    steps: int = 0
    rtol: float = RTOL
    atol: float = ATOL

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0])))

    @property
    def relative_energy_drift(self) -> float:
        return self.energy_drift / max(1.0, abs(float(self.energies[0])))

    def state(self, i: int) -> ClassicalState:
        return ClassicalState(*(float(v) for v in self.states[i]))


def _raise_status(status: int, where: str):
    if status == _rk.POLE:
        raise PoleError(f"{where}: reached |Z| > 1 - {POLE_EPS}; integrate with coords='cartesian'")
    if status == _rk.UNDERFLOW:
        raise IntegrationError(f"{where}: step size underflow")
    if status == _rk.MAX_STEPS:
        raise IntegrationError(f"{where}: exceeded {MAX_STEPS} steps")


def _initial(s0: ClassicalState, kind: int) -> np.ndarray:
    return s0.as_array() if kind == _rk.CHART else s0.to_cartesian()


def _to_chart(raw: np.ndarray, kind: int) -> np.ndarray:
    if kind == _rk.CHART:
        return raw.copy()
    norm = np.linalg.norm(raw[:, 2:5], axis=1)
    out = np.empty((raw.shape[0], 4))
    out[:, 0:2] = raw[:, 0:2]
    out[:, 2] = np.clip(raw[:, 4] / norm, -1.0, 1.0)
    out[:, 3] = np.unwrap(np.arctan2(raw[:, 3], raw[:, 2]))
    return out


def integrate(
    s0: ClassicalState,
    params: ModelParams,
    t_end: float,
    dt: float,
    *,
    coords: str = "cartesian",
    rtol: float = RTOL,
    atol: float = ATOL,
    max_drift: float | None = None,
) -> Trajectory:
    """Adaptive DOP853 integration sampled every ``dt`` up to ``t_end``.

    Negative ``t_end`` integrates backwards.  With ``max_drift`` set, an
    :class:`IntegrationError` is raised if the relative energy drift exceeds it.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    kind = _COORDS[coords]
    n = int(math.floor(abs(t_end) / dt + 1e-9))
    times = math.copysign(1.0, t_end) * dt * np.arange(n + 1)
    if abs(times[-1]) < abs(t_end):
        times = np.append(times, t_end)
    par = _par(params)
    raw, status, reached, steps = _rk.trajectory(
        kind, _initial(s0, kind), par, times, min(1e-3, abs(t_end) or 1e-3), rtol, atol, MAX_STEPS, POLE_EPS
    )
    _raise_status(status, f"integration stopped at t = {times[reached - 1] if reached else 0.0}")
    energies = np.array([_rk.energy(kind, row, par) for row in raw])
    traj = Trajectory(times, _to_chart(raw, kind), energies, params, coords, raw, int(steps), rtol, atol)
    if max_drift is not None and traj.relative_energy_drift > max_drift:
        raise IntegrationError(f"relative energy drift {traj.relative_energy_drift:.3e} exceeds {max_drift:.1e}")
    return traj


@dataclass(frozen=True)
class SurfaceSpec:
    """Surface ``variable = level`` crossed in ``direction``; records ``record`` pair."""

    variable: str = "Z"
    level: float = 0.0
    direction: int = 1
    record: tuple[str, str] = ("x", "p")

    def __post_init__(self):
        if self.variable not in ("x", "p", "Z"):
            raise ValueError(f"surface variable must be x, p or Z, got {self.variable!r}")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        for r in self.record:
            if r not in ("x", "p", "Z", "dphi"):
                raise ValueError(f"cannot record {r!r}")


_CHART_INDEX = {"x": 0, "p": 1, "Z": 2, "dphi": 3}
_CART_INDEX = {"x": 0, "p": 1, "Z": 4}


@dataclass(frozen=True)
class Section:
    points: np.ndarray  # (k, 2) recorded coordinate pairs
    times: np.ndarray
    energies: np.ndarray
    surface: SurfaceSpec


def poincare_section(traj: Trajectory, surface: SurfaceSpec = SurfaceSpec(), max_points: int = 1_000_000) -> Section:
    """Intersections of ``traj`` with ``surface``.

    Each sampling interval is re-integrated from its stored start state with
    the trajectory's settings; crossings are refined to the integrator's
    accuracy, so every point lies on the trajectory's energy shell.
    """
    kind = _COORDS[traj.coords]
    comp = (_CHART_INDEX if kind == _rk.CHART else _CART_INDEX)[surface.variable]
    par = _par(traj.params)
    pts, ts = [], []
    for k in range(traj.times.size - 1):
        t0, t1 = traj.times[k], traj.times[k + 1]
        if t1 <= t0:
            raise ValueError("poincare_section needs a forward-time trajectory")
        found, tc, status = _rk.section(
            kind, traj.raw[k].copy(), par, t1 - t0, comp, surface.level, float(surface.direction),
            min(1e-3, t1 - t0), traj.rtol, traj.atol, MAX_STEPS, POLE_EPS, max_points,
        )
        _raise_status(status, f"section segment starting at t = {t0}")
        if found.shape[0]:
            pts.append(found)
            ts.append(tc + t0)
    if not pts:
        raise ValueError("trajectory never crosses the surface")
    raw = np.concatenate(pts)
    times = np.concatenate(ts)
    energies = np.array([_rk.energy(kind, row, par) for row in raw])
    chart = _to_chart(raw, kind) if kind == _rk.CARTESIAN else raw
    cols = [_CHART_INDEX[r] for r in surface.record]
    return Section(chart[:, cols], times, energies, surface)


def fill_fraction(points: np.ndarray, extent: tuple[tuple[float, float], tuple[float, float]], bins: int = 40) -> float:
    """Fraction of ``bins x bins`` boxes over ``extent`` containing a section point."""
    h, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=bins, range=extent)
    return float(np.count_nonzero(h) / h.size)


@dataclass(frozen=True)
class LyapunovResult:
    exponent: float
    times: np.ndarray
    history: np.ndarray
    converged: bool
    d0: float
    seed: int


def lyapunov_largest(
    s0: ClassicalState,
    params: ModelParams,
    t_total: float = 1e4,
    *,
    interval: float = 1.0,
    d0: float = 1e-8,
    seed: int = 0,
    trend_tol: float = 0.05,
) -> LyapunovResult:
    """Benettin estimate from a reference and a perturbed trajectory.

    The perturbation has random direction (drawn from ``seed``), tangent to
    the Bloch sphere, and norm ``d0``; it is rescaled to ``d0`` after every
    ``interval``.  ``converged`` is False (with a :class:`ConvergenceWarning`)
    if the running estimate still moves by more than
    ``max(trend_tol * |exponent|, 1e-3)`` over the last fifth of the run.
    """
    if not t_total > 5 * interval:
        raise ValueError("t_total must be much larger than the renormalization interval")
    y = s0.to_cartesian()
    rng = np.random.default_rng(seed)
    delta = rng.standard_normal(5)
    spin = y[2:5]
    delta[2:5] -= spin * (delta[2:5] @ spin)
    delta *= d0 / np.linalg.norm(delta)
    y2 = y + delta
    n = int(round(t_total / interval))
    history, status = _rk.benettin(np.concatenate([y, y2]), _par(params), d0, interval, n, 1e-3, RTOL, ATOL, MAX_STEPS)
    _raise_status(status, "Lyapunov integration")
    times = interval * np.arange(1, n + 1)
    exponent = float(history[-1])
    tail = history[int(0.8 * n) :]
    converged = bool(np.ptp(tail) <= max(trend_tol * abs(exponent), 1e-3))
    if not converged:
        warnings.warn(f"Lyapunov estimate still trending at t = {t_total}", ConvergenceWarning, stacklevel=2)
    return LyapunovResult(exponent, times, history, converged, d0, seed)


def adiabatic_potentials(x, params: ModelParams):
    """Born-Oppenheimer curves ``x^2/2 -+ sqrt(omega^2/4 + (sqrt(2) g x + lam)^2)``."""
    x = np.asarray(x, dtype=np.float64)
    root = np.sqrt(0.25 * params.omega**2 + (SQRT2 * params.g * x + params.lam) ** 2)
    base = 0.5 * x * x
    if x.ndim == 0:
        return float(base - root), float(base + root)
    return base - root, base + root
