# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loss-propagation kernels. Mirrors ``_kernel_py`` exactly."""

import numpy as np




cdef void _propagate(const signed char[:] kind, const int[:] stream_ptr, const double[:] stream_rate,
                     const int[:] sub_ptr, const int[:] sub_src, const double[:] sub_rate,
                     const unsigned char[:] alive, double[:] il) noexcept nogil:
    cdef Py_ssize_t n = kind.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc, w, ws, sil, tot, keep
    for i in range(n):
        if not alive[i]:
            il[i] = 1.0
            continue
        if kind[i] == 0:
            il[i] = 0.0
            continue
        if kind[i] == 2:
            keep = 1.0
            for j in range(stream_ptr[i], stream_ptr[i + 1]):
                w = stream_rate[j]
                if w > 0.0:
                    # divide by the rate summed alongside acc so all-lost inputs give exactly 1
                    acc = 0.0
                    ws = 0.0
                    for k in range(sub_ptr[j], sub_ptr[j + 1]):
                        acc += sub_rate[k] * il[sub_src[k]]
                        ws += sub_rate[k]
                    sil = acc / ws
                else:
                    sil = 1.0
                keep *= 1.0 - sil
            il[i] = min(1.0, max(0.0, 1.0 - keep))
        else:
            acc = 0.0
            tot = 0.0
            for j in range(stream_ptr[i], stream_ptr[i + 1]):
                if stream_rate[j] > 0.0:
                    for k in range(sub_ptr[j], sub_ptr[j + 1]):
                        acc += sub_rate[k] * il[sub_src[k]]
                        tot += sub_rate[k]
            il[i] = min(1.0, max(0.0, acc / tot)) if tot > 0.0 else 1.0


cdef double _fidelity(const int[:] sink_idx, const double[:] sink_rate, const double[:] il) noexcept nogil:
    cdef Py_ssize_t m = sink_idx.shape[0]
    cdef Py_ssize_t i
    cdef double acc = 0.0, tot = 0.0
    for i in range(m):
        acc += sink_rate[i] * il[sink_idx[i]]
        tot += sink_rate[i]
    if tot > 0.0:
        acc = 1.0 - acc / tot
    else:
        acc = 0.0
        for i in range(m):
            acc += il[sink_idx[i]]
        acc = 1.0 - acc / m
    return min(1.0, max(0.0, acc))


def propagate(const signed char[:] kind, const int[:] stream_ptr, const double[:] stream_rate,
              const int[:] sub_ptr, const int[:] sub_src, const double[:] sub_rate,
              const unsigned char[:] alive):
    il = np.empty(kind.shape[0], dtype=np.float64)
    cdef double[:] ilv = il
    with nogil:
        _propagate(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, alive, ilv)
    return il


def fidelity(const signed char[:] kind, const int[:] stream_ptr, const double[:] stream_rate,
             const int[:] sub_ptr, const int[:] sub_src, const double[:] sub_rate,
             const int[:] sink_idx, const double[:] sink_rate, const unsigned char[:] alive):
    cdef double[:] il = np.empty(kind.shape[0], dtype=np.float64)
    cdef double res
    with nogil:
        _propagate(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, alive, il)
        res = _fidelity(sink_idx, sink_rate, il)
    return res


def fidelity_many(const signed char[:] kind, const int[:] stream_ptr, const double[:] stream_rate,
                  const int[:] sub_ptr, const int[:] sub_src, const double[:] sub_rate,
                  const int[:] sink_idx, const double[:] sink_rate, const unsigned char[:, :] alive):
    cdef Py_ssize_t rows = alive.shape[0]
    cdef Py_ssize_t r
    out = np.empty(rows, dtype=np.float64)
    cdef double[:] outv = out
    cdef double[:] il = np.empty(kind.shape[0], dtype=np.float64)
    with nogil:
        for r in range(rows):
            _propagate(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, alive[r], il)
            outv[r] = _fidelity(sink_idx, sink_rate, il)
    return out
