"""Hot numeric kernels: numba-compiled by default, pure-numpy fallback.

Set VISTA_PURE_NUMPY=1 to force the fallback path (also taken automatically
when numba is not importable). Both variants are exported so tests and
benchmarks can compare them directly; the module-level names without a
suffix are the selected implementations.
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("VISTA_PURE_NUMPY", "") not in ("", "0")

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USING_NUMBA = HAS_NUMBA and not _FORCE_NUMPY


# --- pure numpy/python variants ---

def kl_sum_numpy(p: np.ndarray, q: np.ndarray, eps: float) -> float:
    """Sum_i p_i * log((p_i + eps) / (q_i + eps)), unclamped."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    return float(np.sum(p * np.log((p + eps) / (q + eps))))


def kl_consecutive_numpy(stack: np.ndarray, eps: float) -> np.ndarray:
    """KL of row i against row i+1 for a (N, bins) stack; returns N-1 values."""
    stack = np.asarray(stack, dtype=np.float64)
    p = stack[:-1]
    q = stack[1:]
    return np.sum(p * np.log((p + eps) / (q + eps)), axis=1)


def lcs_len_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """Longest-common-subsequence length via a rolling DP row."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = [0] * (m + 1)
    for i in range(n):
        cur = [0] * (m + 1)
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                pj = prev[j + 1]
                cj = cur[j]
                cur[j + 1] = pj if pj >= cj else cj
        prev = cur
    return int(prev[m])


def lcs_batch_numpy(seqs_a: np.ndarray, lens_a: np.ndarray,
                    seqs_b: np.ndarray, lens_b: np.ndarray) -> np.ndarray:
    """LCS lengths for every (row of seqs_a) x (row of seqs_b) pair.

    Sequences are padded rows; lens_* carry the true lengths.
    """
    out = np.zeros((len(lens_a), len(lens_b)), dtype=np.int64)
    for i in range(len(lens_a)):
        a = seqs_a[i, : lens_a[i]]
        for j in range(len(lens_b)):
            out[i, j] = lcs_len_numpy(a, seqs_b[j, : lens_b[j]])
    return out


if HAS_NUMBA:

    @njit(cache=True)
    def _kl_sum_jit(p, q, eps):
        total = 0.0
        for i in range(p.shape[0]):
            total += p[i] * np.log((p[i] + eps) / (q[i] + eps))
        return total

    @njit(cache=True)
    def _kl_consecutive_jit(stack, eps):
        n = stack.shape[0]
        bins = stack.shape[1]
        out = np.empty(n - 1, dtype=np.float64)
        for r in range(n - 1):
            total = 0.0
            for i in range(bins):
                p = stack[r, i]
                q = stack[r + 1, i]
                total += p * np.log((p + eps) / (q + eps))
            out[r] = total
        return out

    @njit(cache=True)
    def _lcs_len_jit(a, b):
        n = a.shape[0]
        m = b.shape[0]
        if n == 0 or m == 0:
            return 0
        prev = np.zeros(m + 1, dtype=np.int64)
        cur = np.zeros(m + 1, dtype=np.int64)
        for i in range(n):
            for j in range(m):
                if a[i] == b[j]:
                    cur[j + 1] = prev[j] + 1
                elif prev[j + 1] >= cur[j]:
                    cur[j + 1] = prev[j + 1]
                else:
                    cur[j + 1] = cur[j]
            prev, cur = cur, prev
        return prev[m]

    @njit(cache=True)
    def _lcs_batch_jit(seqs_a, lens_a, seqs_b, lens_b):
        na = lens_a.shape[0]
        nb = lens_b.shape[0]
        out = np.zeros((na, nb), dtype=np.int64)
        for i in range(na):
            a = seqs_a[i, : lens_a[i]]
            for j in range(nb):
                out[i, j] = _lcs_len_jit(a, seqs_b[j, : lens_b[j]])
        return out

    def kl_sum_numba(p, q, eps):
        p = np.ascontiguousarray(np.asarray(p, dtype=np.float64).ravel())
        q = np.ascontiguousarray(np.asarray(q, dtype=np.float64).ravel())
        return float(_kl_sum_jit(p, q, eps))

    def kl_consecutive_numba(stack, eps):
        stack = np.ascontiguousarray(np.asarray(stack, dtype=np.float64))
        return _kl_consecutive_jit(stack, eps)

    def lcs_len_numba(a, b):
        a = np.ascontiguousarray(np.asarray(a, dtype=np.int64))
        b = np.ascontiguousarray(np.asarray(b, dtype=np.int64))
        return int(_lcs_len_jit(a, b))

    def lcs_batch_numba(seqs_a, lens_a, seqs_b, lens_b):
        return _lcs_batch_jit(
            np.ascontiguousarray(seqs_a.astype(np.int64)),
            np.ascontiguousarray(lens_a.astype(np.int64)),
            np.ascontiguousarray(seqs_b.astype(np.int64)),
            np.ascontiguousarray(lens_b.astype(np.int64)),
        )


if USING_NUMBA:
    kl_sum = kl_sum_numba
    kl_consecutive = kl_consecutive_numba
    lcs_len = lcs_len_numba
    lcs_batch = lcs_batch_numba
else:
    kl_sum = kl_sum_numpy
    kl_consecutive = kl_consecutive_numpy
    lcs_len = lcs_len_numpy
    lcs_batch = lcs_batch_numpy


def warmup() -> None:
    """Trigger JIT compilation so timed code paths do not pay it."""
    if not USING_NUMBA:
        return
    p = np.array([0.5, 0.5])
    kl_sum(p, p, 1e-10)
    kl_consecutive(np.vstack([p, p]), 1e-10)
    lcs_len(np.array([1, 2]), np.array([2, 1]))
    lcs_batch(np.array([[1, 2]]), np.array([2]), np.array([[2, 1]]), np.array([2]))
