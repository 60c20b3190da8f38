"""Hot inner loops: threshold selection, Top-k selection, scatter.

Every kernel exists twice, as a numba ``@njit`` loop and as a vectorized
numpy expression.  Both produce bit-identical results.  The active pair is
chosen once at import time from the ``FEDHT_BACKEND`` environment variable
(``numba`` or ``numpy``); ``numba`` is the default when it is importable.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_requested = os.environ.get("FEDHT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"FEDHT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and numba is not None) else "numpy"


# ---------------------------------------------------------------- numpy path


def threshold_select_numpy(x, lam):
    return np.flatnonzero(np.abs(x) > lam).astype(np.int64)


def topk_select_numpy(x, m):
    d = x.shape[0]
    mag = np.abs(x)
    # primary key: larger magnitude; secondary: lower index
    order = np.lexsort((np.arange(d), -mag))
    return np.sort(order[:m]).astype(np.int64)


def scatter_numpy(dim, indices, values):
    out = np.zeros(dim, dtype=np.float64)
    out[indices] = values
    return out


def scatter_add_numpy(out, indices, values, weight):
    # indices are unique within one message
    out[indices] += weight * values


# ---------------------------------------------------------------- numba path


def _threshold_select_loop(x, lam):
    d = x.shape[0]
    count = 0
    for i in range(d):
        if abs(x[i]) > lam:
            count += 1
    out = np.empty(count, dtype=np.int64)
    j = 0
    for i in range(d):
        if abs(x[i]) > lam:
            out[j] = i
            j += 1
    return out


def _worse(mag, a, b):
    # True when coordinate a ranks below coordinate b
    if mag[a] < mag[b]:
        return True
    if mag[a] > mag[b]:
        return False
    return a > b


def _topk_select_loop(x, m):
    d = x.shape[0]
    mag = np.abs(x)
    heap = np.empty(m, dtype=np.int64)
    size = 0
    # min-heap on rank: heap[0] is the weakest kept coordinate
    for i in range(d):
        if size < m:
            pos = size
            heap[pos] = i
            size += 1
            while pos > 0:
                parent = (pos - 1) // 2
                if _worse(mag, heap[pos], heap[parent]):
                    tmp = heap[pos]
                    heap[pos] = heap[parent]
                    heap[parent] = tmp
                    pos = parent
                else:
                    break
        elif _worse(mag, heap[0], i):
            heap[0] = i
            pos = 0
            while True:
                left = 2 * pos + 1
                right = left + 1
                low = pos
                if left < size and _worse(mag, heap[left], heap[low]):
                    low = left
                if right < size and _worse(mag, heap[right], heap[low]):
                    low = right
                if low == pos:
                    break
                tmp = heap[pos]
                heap[pos] = heap[low]
                heap[low] = tmp
                pos = low
    return np.sort(heap[:size])


def _scatter_loop(dim, indices, values):
    out = np.zeros(dim, dtype=np.float64)
    for j in range(indices.shape[0]):
        out[indices[j]] = values[j]
    return out


def _scatter_add_loop(out, indices, values, weight):
    for j in range(indices.shape[0]):
        out[indices[j]] += weight * values[j]


if numba is not None:
    _njit = numba.njit(cache=True, nogil=True)
    _worse = _njit(_worse)
    threshold_select_numba = _njit(_threshold_select_loop)
    topk_select_numba = _njit(_topk_select_loop)
    scatter_numba = _njit(_scatter_loop)
    scatter_add_numba = _njit(_scatter_add_loop)
else:  # pragma: no cover
    threshold_select_numba = threshold_select_numpy
    topk_select_numba = topk_select_numpy
    scatter_numba = scatter_numpy
    scatter_add_numba = scatter_add_numpy


IMPLEMENTATIONS = {
    "numpy": {
        "threshold_select": threshold_select_numpy,
        "topk_select": topk_select_numpy,
        "scatter": scatter_numpy,
        "scatter_add": scatter_add_numpy,
    },
    "numba": {
        "threshold_select": threshold_select_numba,
        "topk_select": topk_select_numba,
        "scatter": scatter_numba,
        "scatter_add": scatter_add_numba,
    },
}

_active = IMPLEMENTATIONS[BACKEND]
threshold_select = _active["threshold_select"]
topk_select = _active["topk_select"]
scatter = _active["scatter"]
scatter_add = _active["scatter_add"]
