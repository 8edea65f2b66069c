"""Per-iteration Monte Carlo kernels over flattened batches of iterations.

Iteration i owns entries ``offsets[i]:offsets[i+1]`` of every per-BS array. Random
draws are made in numpy beforehand, so the numba and numpy paths see identical
inputs. Set ``MMWAVE_CS_DISABLE_NUMBA=1`` to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("MMWAVE_CS_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes")


# ------------------------------------------------------------------ numpy


def mark_within_np(dist, los, sensor_main, cont_main, valid, table):
    """Valid entries with dist <= table[link, sensor lobe, contender lobe] (index 0 = LoS / mainlobe)."""
    radius = table[(~los).astype(np.intp), (~sensor_main).astype(np.intp), (~cont_main).astype(np.intp)]
    return valid & (dist <= radius)


def count_within_np(offsets, dist, los, sensor_main, cont_main, valid, table):
    """Per-iteration number of entries flagged by :func:`mark_within_np`."""
    hit = mark_within_np(dist, los, sensor_main, cont_main, valid, table).astype(np.int64)
    return _segment_sum(hit, offsets)


def sinr_np(offsets, power, contender, active_u, p_t, deaf, suppressed, valid, signal, sigma2):
    """Per-iteration SINR; 0 when any contender is active.

    ``power`` is the normalised received interference power of each entry if it transmits.
    """
    active = active_u < p_t
    blocked = _segment_sum((valid & contender & active).astype(np.int64), offsets) > 0
    interferes = valid & ~contender & active & ~(deaf & suppressed)
    interf = _segment_sum(np.where(interferes, power, 0.0), offsets)
    out = signal / (sigma2 + interf)
    out[blocked] = 0.0
    return out


def _segment_sum(x, offsets):
    out = np.zeros(offsets.size - 1, dtype=x.dtype)
    nonempty = offsets[1:] > offsets[:-1]
    if nonempty.any():
        # dropping empty segments keeps every remaining segment's end intact
        out[nonempty] = np.add.reduceat(x, offsets[:-1][nonempty])
    return out


# ------------------------------------------------------------------ numba

if _HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def mark_within_nb(dist, los, sensor_main, cont_main, valid, table):
        out = np.zeros(dist.size, dtype=np.bool_)
        for j in range(dist.size):
            if valid[j]:
                a = 0 if los[j] else 1
                b = 0 if sensor_main[j] else 1
                k = 0 if cont_main[j] else 1
                out[j] = dist[j] <= table[a, b, k]
        return out

    @njit(cache=True, nogil=True)
    def count_within_nb(offsets, dist, los, sensor_main, cont_main, valid, table):
        n = offsets.size - 1
        out = np.zeros(n, dtype=np.int64)
        for i in range(n):
            c = 0
            for j in range(offsets[i], offsets[i + 1]):
                if not valid[j]:
                    continue
                a = 0 if los[j] else 1
                b = 0 if sensor_main[j] else 1
                k = 0 if cont_main[j] else 1
                if dist[j] <= table[a, b, k]:
                    c += 1
            out[i] = c
        return out

    @njit(cache=True, nogil=True)
    def sinr_nb(offsets, power, contender, active_u, p_t, deaf, suppressed, valid, signal, sigma2):
        n = offsets.size - 1
        out = np.empty(n)
        for i in range(n):
            blocked = False
            interf = 0.0
            for j in range(offsets[i], offsets[i + 1]):
                if not valid[j] or active_u[j] >= p_t:
                    continue
                if contender[j]:
                    blocked = True
                    break
                if deaf[j] and suppressed[j]:
                    continue
                interf += power[j]
            out[i] = 0.0 if blocked else signal[i] / (sigma2 + interf)
        return out


def mark_within(*args):
    return mark_within_nb(*args) if USE_NUMBA else mark_within_np(*args)


def count_within(*args):
    return count_within_nb(*args) if USE_NUMBA else count_within_np(*args)


def sinr(*args):
    return sinr_nb(*args) if USE_NUMBA else sinr_np(*args)
