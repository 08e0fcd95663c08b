# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels; semantics are defined by ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, log1p, INFINITY
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t BLOCK_GAMMA = 0xD1B54A32D192ED03ULL
cdef int64_t BLOCK_SIZE = 1 << 24
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t i) noexcept nogil:
    return <double>(_mix64(key + (i + 1) * GAMMA) >> 11) * INV_2_53


def pulse_patterns(uint64_t key, int64_t start, int64_t count, double[::1] cdf):
    out = np.empty(count, dtype=np.uint8)
    cdef uint8_t[::1] res = out
    cdef int64_t k
    cdef int n = cdf.shape[0]
    cdef int i
    cdef double u
    with nogil:
        for k in range(count):
            u = _uniform(key, <uint64_t>(start + k))
            i = 0
            while i < n - 1 and u >= cdf[i]:
                i += 1
            res[k] = <uint8_t>i
    return out


def sparse_coincidences(
    uint64_t key,
    int64_t n_pulses,
    double p_rel,
    uint8_t[::1] rel_patterns,
    double[::1] rel_cdf,
    uint8_t[::1] start_mask,
    uint8_t[::1] stop_mask,
    int max_n,
):
    hist_arr = np.zeros(2 * max_n + 1, dtype=np.int64)
    cdef int64_t[::1] hist = hist_arr
    ring_arr = np.full(2 * (max_n + 1), -(1 << 62), dtype=np.int64)
    cdef int64_t[::1] ring = ring_arr
    cdef int ring_len = max_n + 1
    cdef int start_head = 0
    cdef int stop_head = 0
    cdef int64_t fourfold = 0
    cdef int64_t n_events = 0
    cdef int64_t n_blocks = (n_pulses + BLOCK_SIZE - 1) // BLOCK_SIZE
    cdef int64_t b, length, k, d
    cdef uint64_t bkey, j
    cdef double log_q, ug, up, g, end, pos
    cdef int r, nrel = rel_cdf.shape[0]
    cdef int i, slot
    cdef uint8_t pat
    cdef bint is_start, is_stop
    if p_rel <= 0.0:
        return 0, hist_arr, 0
    log_q = log1p(-p_rel) if p_rel < 1.0 else -INFINITY
    with nogil:
        for b in range(n_blocks):
            length = n_pulses - b * BLOCK_SIZE
            if length > BLOCK_SIZE:
                length = BLOCK_SIZE
            bkey = _mix64(key + <uint64_t>(b + 1) * BLOCK_GAMMA)
            pos = -1.0
            j = 0
            while True:
                ug = _uniform(bkey, 2 * j)
                up = _uniform(bkey, 2 * j + 1)
                j += 1
                if p_rel < 1.0:
                    g = floor(log1p(-ug) / log_q)
                else:
                    g = 0.0
                end = pos + (g + 1.0)
                if end >= length:
                    break
                pos = end
                r = 0
                while r < nrel - 1 and up >= rel_cdf[r]:
                    r += 1
                pat = rel_patterns[r]
                k = b * BLOCK_SIZE + <int64_t>pos
                n_events += 1
                if pat == 15:
                    fourfold += 1
                is_start = start_mask[pat] != 0
                is_stop = stop_mask[pat] != 0
                if is_start and is_stop:
                    hist[max_n] += 1
                if is_stop:
                    for i in range(ring_len):
                        d = k - ring[i]
                        if 0 < d <= max_n:
                            hist[max_n + d] += 1
                if is_start:
                    for i in range(ring_len):
                        d = k - ring[ring_len + i]
                        if 0 < d <= max_n:
                            hist[max_n - d] += 1
                if is_start:
                    ring[start_head] = k
                    start_head = (start_head + 1) % ring_len
                if is_stop:
                    ring[ring_len + stop_head] = k
                    stop_head = (stop_head + 1) % ring_len
    return fourfold, hist_arr, n_events
