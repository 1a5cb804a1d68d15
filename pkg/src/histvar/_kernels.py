"""Hot inner loops.

Every kernel is written once in numba-compatible Python.  When numba is
importable and ``HISTVAR_DISABLE_NUMBA`` is unset, the active implementations
are ``@njit`` compiled; otherwise the plain-Python/numpy versions run.  Both
sets stay reachable as ``PY`` and ``NB`` so the test-suite and the benchmark
can compare them directly.

Scan kernels mutate their first argument in place and record which indices
they touched in ``mark``; callers pass copies.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("HISTVAR_DISABLE_NUMBA", "").lower() not in (
    "1", "true", "yes")


def _trim_ratio(d, n_remove):
    # SD(all) / SD(after dropping the n_remove largest |d|), population SDs.
    # Kept set matches a stable ascending sort on |d|: everything below the
    # cut value, then ties at the cut in index order.
    n = d.shape[0]
    m = n - n_remove
    a = np.abs(d)
    cut = np.partition(a, m - 1)[m - 1]
    below = 0
    for i in range(n):
        if a[i] < cut:
            below += 1
    ties = m - below
    keep = np.empty(n, dtype=np.bool_)
    for i in range(n):
        if a[i] < cut:
            keep[i] = True
        elif a[i] == cut and ties > 0:
            keep[i] = True
            ties -= 1
        else:
            keep[i] = False
    s_all = 0.0
    s_some = 0.0
    for i in range(n):
        s_all += d[i]
        if keep[i]:
            s_some += d[i]
    mean_all = s_all / n
    mean_some = s_some / m
    v_all = 0.0
    v_some = 0.0
    for i in range(n):
        v_all += (d[i] - mean_all) ** 2
        if keep[i]:
            v_some += (d[i] - mean_some) ** 2
    if v_some == 0.0:
        return np.inf
    return np.sqrt(v_all / n) / np.sqrt(v_some / m)


def _trim_ratios(mat, n_remove):
    out = np.empty(mat.shape[0])
    for r in range(mat.shape[0]):
        out[r] = _trim_ratio_inner(mat[r], n_remove)
    return out


def _trim_ratios_numpy(mat, n_remove):
    n = mat.shape[1]
    m = n - n_remove
    order = np.argsort(np.abs(mat), axis=1, kind="mergesort")
    kept = np.take_along_axis(mat, order[:, :m], axis=1)
    v_all = np.var(mat, axis=1)
    v_some = np.var(kept, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(v_all) / np.sqrt(v_some)
    out[v_some == 0.0] = np.inf
    return out


def _outlier_pass(x, q, tol, mark):
    """One left-to-right pass of the isolated-point and one-step-plateau rules.

    Returns the number of points replaced.
    """
    n = x.shape[0]
    changed = 0
    i = 1
    while i < n - 1:
        left = x[i] - x[i - 1]
        right = x[i + 1] - x[i]
        if abs(left) > q and abs(right) > q and left * right < 0.0:
            x[i] = 0.5 * (x[i - 1] + x[i + 1])
            mark[i] = True
            changed += 1
            i += 1
            continue
        if i < n - 2:
            stay = x[i + 1] - x[i]
            back = x[i + 2] - x[i + 1]
            jump = min(abs(left), abs(back))
            if (abs(left) > q and abs(back) > q and left * back < 0.0
                    and abs(stay) <= tol * jump
                    and abs(x[i + 2] - x[i - 1]) <= tol * jump):
                v = 0.5 * (x[i - 1] + x[i + 2])
                x[i] = v
                x[i + 1] = v
                mark[i] = True
                mark[i + 1] = True
                changed += 2
                i += 2
                continue
        i += 1
    return changed


def _spike_pass(x, width, tol, floor, mark):
    """Replace runs of ``width`` points that leave and return to their left
    neighbour's level (within tolerance) by linear interpolation."""
    n = x.shape[0]
    changed = 0
    i = 1
    while i + width < n:
        p = x[i - 1]
        after = x[i + width]
        thr = tol * abs(p)
        if abs(p) < floor:
            thr = floor
        if abs(after - p) <= thr:
            up = True
            down = True
            for k in range(width):
                dev = x[i + k] - p
                if not dev > thr:
                    up = False
                if not -dev > thr:
                    down = False
            if up or down:
                for k in range(width):
                    x[i + k] = p + (after - p) * (k + 1) / (width + 1)
                    mark[i + k] = True
                changed += width
                i += width
                continue
        i += 1
    return changed


def _trailing_counts(missing, span):
    # missing: (T, N) bool; out[t, j] = missing[max(0, t-span+1):t+1, j].sum()
    t_len, n = missing.shape
    out = np.zeros((t_len, n), dtype=np.int64)
    for j in range(n):
        run = 0
        for t in range(t_len):
            if missing[t, j]:
                run += 1
            if t >= span and missing[t - span, j]:
                run -= 1
            out[t, j] = run
    return out


def _trailing_counts_numpy(missing, span):
    c = np.cumsum(missing.astype(np.int64), axis=0)
    out = c.copy()
    out[span:] -= c[:-span]
    return out


def _ever_before(present):
    # seen[t, j]: name j quoted on some date strictly before t
    t_len, n = present.shape
    out = np.zeros((t_len, n), dtype=np.bool_)
    for j in range(n):
        seen = False
        for t in range(t_len):
            out[t, j] = seen
            if present[t, j]:
                seen = True
    return out


def _ever_before_numpy(present):
    seen = np.logical_or.accumulate(present, axis=0)
    out = np.zeros_like(seen)
    out[1:] = seen[:-1]
    return out


def _trim_ratio_numpy(d, n_remove):
    return _trim_ratios_numpy(d[None, :], n_remove)[0]


_trim_ratio_inner = _trim_ratio

PY = SimpleNamespace(
    trim_ratio=_trim_ratio_numpy,
    trim_ratios=_trim_ratios_numpy,
    outlier_pass=_outlier_pass,
    spike_pass=_spike_pass,
    trailing_counts=_trailing_counts_numpy,
    ever_before=_ever_before_numpy,
)

if HAVE_NUMBA:
    _nb_trim_ratio = numba.njit(cache=True)(_trim_ratio)
    _trim_ratio_inner = _nb_trim_ratio
    NB = SimpleNamespace(
        trim_ratio=_nb_trim_ratio,
        trim_ratios=numba.njit(cache=True)(_trim_ratios),
        outlier_pass=numba.njit(cache=True)(_outlier_pass),
        spike_pass=numba.njit(cache=True)(_spike_pass),
        trailing_counts=numba.njit(cache=True)(_trailing_counts),
        ever_before=numba.njit(cache=True)(_ever_before),
    )
else:  # pragma: no cover
    NB = None

ACTIVE = NB if NUMBA_ENABLED else PY


def trim_ratio(d, n_remove):
    return ACTIVE.trim_ratio(np.ascontiguousarray(d, dtype=np.float64), int(n_remove))


def trim_ratios(mat, n_remove):
    return ACTIVE.trim_ratios(np.ascontiguousarray(mat, dtype=np.float64), int(n_remove))


def outlier_pass(x, q, tol, mark):
    return ACTIVE.outlier_pass(x, float(q), float(tol), mark)


def spike_pass(x, width, tol, floor, mark):
    return ACTIVE.spike_pass(x, int(width), float(tol), float(floor), mark)


def trailing_counts(missing, span):
    return ACTIVE.trailing_counts(np.ascontiguousarray(missing, dtype=np.bool_), int(span))


def ever_before(present):
    return ACTIVE.ever_before(np.ascontiguousarray(present, dtype=np.bool_))
