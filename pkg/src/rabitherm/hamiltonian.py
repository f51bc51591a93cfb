"""Truncated driven Rabi Hamiltonian and observables in the product basis.

The basis is ``{|n, s>}`` with boson number ``n = 0..n_tr`` and spin label
``s in {1, 2}``, flattened as ``i = 2 n + (s - 1)``.  Spin label 1 is the
lower spin state (sigma_z = -1), label 2 the upper one (sigma_z = +1).

Units: the boson energy is 1, so

    H = a^dag a + (omega / 2) sigma_z + g (a^dag + a) sigma_x + lambda sigma_x.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

#: Bumped whenever matrix construction changes; part of every cache key.
MATRIX_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters ``(omega, g, lam)`` and the boson cutoff ``n_tr``."""

    omega: float = 1.0
    g: float = 0.0
    lam: float = 0.0
    n_tr: int = 0

    def __post_init__(self):
        for name in ("omega", "g", "lam"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite real number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")
        if isinstance(self.n_tr, bool) or int(self.n_tr) != self.n_tr or self.n_tr < 0:
            raise ValueError(f"n_tr must be a non-negative integer, got {self.n_tr!r}")
        object.__setattr__(self, "n_tr", int(self.n_tr))

    @property
    def dim(self) -> int:
        return 2 * (self.n_tr + 1)

    def with_(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


def flat_index(n: int, s: int) -> int:
    """Flat index of ``|n, s>``; ``s`` is 1 or 2."""
    if s not in (1, 2):
        raise ValueError(f"spin label must be 1 or 2, got {s}")
    if n < 0:
        raise ValueError(f"boson number must be >= 0, got {n}")
    return 2 * n + (s - 1)


def basis_label(i: int) -> tuple[int, int]:
    """Inverse of :func:`flat_index`."""
    if i < 0:
        raise ValueError(f"flat index must be >= 0, got {i}")
    return i // 2, i % 2 + 1


class ObservableKind(str, enum.Enum):
    N = "N"
    X = "X"
    P = "P"
    SIGMA_X = "SigmaX"
    SIGMA_Y = "SigmaY"
    SIGMA_Z = "SigmaZ"
    X_SIGMA_X = "XSigmaX"
    HAMILTONIAN = "Hamiltonian"
    PARITY = "Parity"
    CUSTOM = "Custom"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HermitianObservable:
    """Hermitian matrix ``A = sym + 1j * antisym`` stored as two real parts.

    ``antisym`` is ``None`` for real symmetric observables.
    """

    sym: np.ndarray | None
    antisym: np.ndarray | None
    kind: ObservableKind = ObservableKind.CUSTOM

    def __post_init__(self):
        if self.sym is None and self.antisym is None:
            raise ValueError("observable needs at least one of sym / antisym")
        shape = None
        if self.sym is not None:
            sym = _frozen(self.sym)
            if sym.ndim != 2 or sym.shape[0] != sym.shape[1]:
                raise ValueError(f"sym must be square, got shape {sym.shape}")
            if not np.array_equal(sym, sym.T):
                raise ValueError("sym part is not exactly symmetric")
            object.__setattr__(self, "sym", sym)
            shape = sym.shape
        if self.antisym is not None:
            anti = _frozen(self.antisym)
            if shape is not None and anti.shape != shape:
                raise ValueError("sym and antisym shapes differ")
            if anti.ndim != 2 or anti.shape[0] != anti.shape[1]:
                raise ValueError(f"antisym must be square, got shape {anti.shape}")
            if not np.array_equal(anti, -anti.T):
                raise ValueError("antisym part is not exactly antisymmetric")
            object.__setattr__(self, "antisym", anti)
        object.__setattr__(self, "kind", ObservableKind(self.kind))

    @property
    def dim(self) -> int:
        part = self.sym if self.sym is not None else self.antisym
        return part.shape[0]

    @property
    def is_real(self) -> bool:
        return self.antisym is None

    def real_part(self) -> np.ndarray:
        return self.sym if self.sym is not None else np.zeros((self.dim, self.dim))

    def imag_part(self) -> np.ndarray:
        return self.antisym if self.antisym is not None else np.zeros((self.dim, self.dim))

    def dense(self) -> np.ndarray:
        """Full complex matrix."""
        return self.real_part() + 1j * self.imag_part()

    def expectation(self, psi: np.ndarray) -> complex:
        psi = np.asarray(psi)
        return complex(np.vdot(psi, self.dense() @ psi))


def _check_ntr(n_tr) -> int:
    if isinstance(n_tr, bool) or int(n_tr) != n_tr or n_tr < 0:
        raise ValueError(f"n_tr must be a non-negative integer, got {n_tr!r}")
    return int(n_tr)


def _boson_ladder(n_tr: int) -> np.ndarray:
    """``sqrt(n + 1)`` for n = 0..n_tr-1, i.e. <n+1|a^dag|n>."""
    return np.sqrt(np.arange(1, n_tr + 1, dtype=np.float64))


def _spin_diag(n_tr: int) -> np.ndarray:
    return np.tile([-1.0, 1.0], n_tr + 1)


def build_hamiltonian(params: ModelParams) -> HermitianObservable:
    """Dense driven Rabi Hamiltonian with hard truncation at ``n_tr`` bosons."""
    n_tr = params.n_tr
    dim = params.dim
    h = np.zeros((dim, dim))
    n = np.repeat(np.arange(n_tr + 1, dtype=np.float64), 2)
    idx = np.arange(dim)
    h[idx, idx] = n + 0.5 * params.omega * _spin_diag(n_tr)
    # lambda sigma_x: |n,1> <-> |n,2>
    lo = idx[0::2]
    h[lo, lo + 1] = params.lam
    h[lo + 1, lo] = params.lam
    # g (a^dag + a) sigma_x: |n,s> <-> |n+1,s'>, s' != s
    if n_tr > 0:
        amp = params.g * _boson_ladder(n_tr)
        base = 2 * np.arange(n_tr)
        for src, dst in ((base, base + 3), (base + 1, base + 2)):
            h[src, dst] = amp
            h[dst, src] = amp
    return HermitianObservable(h, None, ObservableKind.HAMILTONIAN)


def _position(n_tr: int) -> np.ndarray:
    x = np.zeros((n_tr + 1, n_tr + 1))
    if n_tr > 0:
        off = np.sqrt(np.arange(1, n_tr + 1) / 2.0)
        x[np.arange(1, n_tr + 1), np.arange(n_tr)] = off
        x[np.arange(n_tr), np.arange(1, n_tr + 1)] = off
    return x


def _momentum_imag(n_tr: int) -> np.ndarray:
    """Coefficient of 1j in p = i (a^dag - a) / sqrt(2)."""
    k = np.zeros((n_tr + 1, n_tr + 1))
    if n_tr > 0:
        off = np.sqrt(np.arange(1, n_tr + 1) / 2.0)
        k[np.arange(1, n_tr + 1), np.arange(n_tr)] = off
        k[np.arange(n_tr), np.arange(1, n_tr + 1)] = -off
    return k


_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
# sigma_y = 1j * _SIGMA_Y_IMAG in the (s=1, s=2) ordering
_SIGMA_Y_IMAG = np.array([[0.0, 1.0], [-1.0, 0.0]])
_SIGMA_Z = np.diag([-1.0, 1.0])


def build_observable(kind, n_tr: int) -> HermitianObservable:
    """Matrix of a local observable; ``kind`` is an :class:`ObservableKind` or its value."""
    n_tr = _check_ntr(n_tr)
    try:
        kind = ObservableKind(kind)
    except ValueError:
        raise ValueError(f"unknown observable kind {kind!r}") from None
    eye_b = np.eye(n_tr + 1)
    eye_s = np.eye(2)
    if kind is ObservableKind.N:
        return HermitianObservable(np.kron(np.diag(np.arange(n_tr + 1.0)), eye_s), None, kind)
    if kind is ObservableKind.X:
        return HermitianObservable(np.kron(_position(n_tr), eye_s), None, kind)
    if kind is ObservableKind.P:
        return HermitianObservable(None, np.kron(_momentum_imag(n_tr), eye_s), kind)
    if kind is ObservableKind.SIGMA_X:
        return HermitianObservable(np.kron(eye_b, _SIGMA_X), None, kind)
    if kind is ObservableKind.SIGMA_Y:
        return HermitianObservable(None, np.kron(eye_b, _SIGMA_Y_IMAG), kind)
    if kind is ObservableKind.SIGMA_Z:
        return HermitianObservable(np.kron(eye_b, _SIGMA_Z), None, kind)
    if kind is ObservableKind.X_SIGMA_X:
        return HermitianObservable(np.kron(_position(n_tr), _SIGMA_X), None, kind)
    raise ValueError(f"observable kind {kind.value!r} is not a local observable")


def build_parity(n_tr: int) -> HermitianObservable:
    """Parity ``sigma_z (-1)^(a^dag a)`` as a diagonal +-1 matrix."""
    n_tr = _check_ntr(n_tr)
    n = np.repeat(np.arange(n_tr + 1), 2)
    diag = np.where(n % 2 == 0, 1.0, -1.0) * _spin_diag(n_tr)
    return HermitianObservable(np.diag(diag), None, ObservableKind.PARITY)


def build_displaced_hamiltonian(params: ModelParams) -> HermitianObservable:
    """Hamiltonian after displacing the boson to absorb the spin drive.

    With ``a -> a + alpha`` and ``alpha = -lam / (2 g)`` the spin drive cancels
    and the boson acquires the drive ``-(lam / 2g)(a^dag + a)`` plus the
    constant ``lam^2 / (4 g^2)``; the untruncated spectrum is unchanged.
    """
    if params.g == 0:
        raise ValueError("displacement is undefined for g = 0")
    if params.lam == 0:
        return build_hamiltonian(params)
    h = np.array(build_hamiltonian(params.with_(lam=0.0)).sym)
    alpha = -params.lam / (2.0 * params.g)
    dim = params.dim
    h[np.arange(dim), np.arange(dim)] += alpha * alpha
    n_tr = params.n_tr
    if n_tr > 0:
        amp = alpha * _boson_ladder(n_tr)
        base = 2 * np.arange(n_tr)
        for src, dst in ((base, base + 2), (base + 1, base + 3)):
            h[src, dst] = amp
            h[dst, src] = amp
    return HermitianObservable(h, None, ObservableKind.HAMILTONIAN)


def commutator_max(a: HermitianObservable, b: HermitianObservable) -> float:
    """``max |[A, B]_ij|`` over all matrix elements."""
    ad, bd = a.dense(), b.dense()
    return float(np.max(np.abs(ad @ bd - bd @ ad)))
