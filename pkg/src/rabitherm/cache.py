"""On-disk cache of eigendecompositions keyed by parameter hash.

Entries are ``.npz`` files written atomically and guarded by an advisory
file lock, so concurrent processes sharing a cache directory never read
or produce a partial entry.
"""

from __future__ import annotations

import os
import tempfile
import warnings
from pathlib import Path

import numpy as np
from filelock import FileLock

from .eigensolver import EigenDecomposition, params_hash
from .errors import EigensolverError
from .hamiltonian import MATRIX_VERSION, ModelParams


class CacheCorruptionWarning(UserWarning):
    pass


class DecompositionCache:
    """Directory of cached decompositions.

    Parameters
    ----------
    directory : path
        Created on first use.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.directory / f"eig-{key}.npz"

    def load(self, key: str) -> EigenDecomposition | None:
        """Cached entry for ``key``; ``None`` if absent or unreadable."""
        path = self.path(key)
        if not path.exists():
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                if str(data["params_hash"]) != key or int(data["matrix_version"]) != MATRIX_VERSION:
                    raise ValueError("key mismatch")
                dec = EigenDecomposition(data["energies"], data["vectors"], key)
            if dec.vectors.shape != (dec.dim, dec.dim):
                raise ValueError("inconsistent shapes")
            dec.check()
        except (OSError, ValueError, KeyError, EigensolverError) as exc:
            warnings.warn(f"discarding corrupt cache entry {path.name}: {exc}", CacheCorruptionWarning, stacklevel=3)
            return None
        return dec

    def store(self, dec: EigenDecomposition) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path(dec.params_hash)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".npz")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(
                    fh,
                    energies=dec.energies,
                    vectors=dec.vectors,
                    params_hash=np.str_(dec.params_hash),
                    matrix_version=np.int64(MATRIX_VERSION),
                )
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path

    def get_or_compute(self, params: ModelParams, compute) -> EigenDecomposition:
        """Cached decomposition of ``params``, computing and storing it on a miss."""
        key = params_hash(params)
        self.directory.mkdir(parents=True, exist_ok=True)
        with FileLock(str(self.path(key)) + ".lock"):
            dec = self.load(key)
            if dec is not None:
                self.hits += 1
                return dec
            self.misses += 1
            dec = compute(params)
            self.store(dec)
            return dec
