"""Expected singular values of weighted Gaussian noise matrices.

The trajectory prefilter compares the singular values of a weighted
trajectory matrix with those of pure noise of the same shape and weights.
For a weight vector ``w`` and an ``n_rows x n_cols`` matrix ``N`` of i.i.d.
unit normals, we need ``E[s_i(diag(sqrt(w)) N)]``. There is no closed form
for arbitrary weights, so we average over a fixed Monte Carlo sample. The
sample is drawn once per matrix shape; each weight vector then only needs the
eigenvalues of the small ``n_rows x n_rows`` Gram matrices.
"""

from __future__ import annotations

import threading

import numpy as np

QUANTUM = 100  # weights are cached at a resolution of 1/QUANTUM


class SingularValueTable:
    def __init__(self, n_rows: int, n_cols: int, trials: int = 1000, seed: int = 0):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.trials = trials
        rng = np.random.default_rng(np.random.SeedSequence([seed, n_rows, n_cols, trials]))
        noise = rng.standard_normal((trials, n_rows, n_cols))
        if n_rows <= n_cols:
            self._gram = noise @ noise.transpose(0, 2, 1)
        else:
            self._gram = None
            self._noise = noise
        self._cache: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def n_values(self) -> int:
        return min(self.n_rows, self.n_cols)

    def _evaluate(self, qweights: np.ndarray) -> np.ndarray:
        """Expected singular values for each row of quantised weights."""
        w = qweights.astype(np.float64) / QUANTUM
        if self._gram is not None:
            sw = np.sqrt(w)
            g = self._gram[None] * sw[:, None, :, None] * sw[:, None, None, :]
            ev = np.linalg.eigvalsh(g)
            s = np.sqrt(np.clip(ev, 0.0, None))[..., ::-1]
        else:
            m = np.sqrt(w)[:, None, :, None] * self._noise[None]
            s = np.linalg.svd(m, compute_uv=False)
        return s.mean(axis=1)

    def lookup(self, weights: np.ndarray) -> np.ndarray:
        """Unit-variance expected singular values for each row of ``weights``.

        Rows are weight vectors of length ``n_rows``; the result has
        ``n_values`` columns in descending order.
        """
        weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        q = np.sort(np.rint(np.clip(weights, 0.0, 1.0) * QUANTUM).astype(np.int16), axis=1)
        keys, inverse = np.unique(q, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        with self._lock:
            missing = [i for i, k in enumerate(keys) if k.tobytes() not in self._cache]
            if missing:
                for start in range(0, len(missing), 256):
                    chunk = missing[start : start + 256]
                    values = self._evaluate(keys[chunk])
                    for i, v in zip(chunk, values):
                        self._cache[keys[i].tobytes()] = v
            table = np.stack([self._cache[k.tobytes()] for k in keys])
        return table[inverse]


_TABLES: dict[tuple, SingularValueTable] = {}
_TABLES_LOCK = threading.Lock()


def get_table(n_rows: int, n_cols: int, trials: int = 1000, seed: int = 0) -> SingularValueTable:
    key = (n_rows, n_cols, trials, seed)
    with _TABLES_LOCK:
        if key not in _TABLES:
            _TABLES[key] = SingularValueTable(n_rows, n_cols, trials, seed)
        return _TABLES[key]


def mp_expected_singular_values(n_rows, n_cols, sigma, weights=None, trials=1000, seed=0):
    """Expected ordered singular values of ``diag(sqrt(weights)) @ N``, ``N ~ Normal(0, sigma^2)``."""
    if weights is None:
        weights = np.ones(n_rows)
    table = get_table(n_rows, n_cols, trials, seed)
    return sigma * table.lookup(np.asarray(weights)[None])[0]
