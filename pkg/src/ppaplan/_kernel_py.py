"""Pure-Python loss-propagation kernels (fallback when the extension is not built)."""

import numpy as np


def _propagate(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, alive):
    n = len(kind)
    il = [0.0] * n
    for i in range(n):
        if not alive[i]:
            il[i] = 1.0
            continue
        k = kind[i]
        if k == 0:
            continue
        if k == 2:
            keep = 1.0
            for j in range(stream_ptr[i], stream_ptr[i + 1]):
                w = stream_rate[j]
                if w > 0.0:
                    # divide by the rate summed alongside acc so all-lost inputs give exactly 1
                    acc = 0.0
                    ws = 0.0
                    for s in range(sub_ptr[j], sub_ptr[j + 1]):
                        acc += sub_rate[s] * il[sub_src[s]]
                        ws += sub_rate[s]
                    keep *= 1.0 - acc / ws
                else:
                    keep = 0.0
            il[i] = min(1.0, max(0.0, 1.0 - keep))
        else:
            acc = 0.0
            tot = 0.0
            for j in range(stream_ptr[i], stream_ptr[i + 1]):
                if stream_rate[j] > 0.0:
                    for s in range(sub_ptr[j], sub_ptr[j + 1]):
                        acc += sub_rate[s] * il[sub_src[s]]
                        tot += sub_rate[s]
            il[i] = min(1.0, max(0.0, acc / tot)) if tot > 0.0 else 1.0
    return il


def _fidelity(sink_idx, sink_rate, il):
    acc = 0.0
    tot = 0.0
    for i, r in zip(sink_idx, sink_rate):
        acc += r * il[i]
        tot += r
    if tot > 0.0:
        of = 1.0 - acc / tot
    else:
        of = 1.0 - sum(il[i] for i in sink_idx) / len(sink_idx)
    return min(1.0, max(0.0, of))


def _lists(*arrays):
    return [a.tolist() if hasattr(a, "tolist") else list(a) for a in arrays]


def propagate(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, alive):
    args = _lists(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, alive)
    return np.asarray(_propagate(*args), dtype=np.float64)


def fidelity(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, sink_idx, sink_rate, alive):
    k, sp, sr, bp, bs, br, si, sk, al = _lists(
        kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, sink_idx, sink_rate, alive
    )
    return _fidelity(si, sk, _propagate(k, sp, sr, bp, bs, br, al))


def fidelity_many(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, sink_idx, sink_rate, alive):
    k, sp, sr, bp, bs, br, si, sk = _lists(kind, stream_ptr, stream_rate, sub_ptr, sub_src, sub_rate, sink_idx, sink_rate)
    rows = alive.tolist() if hasattr(alive, "tolist") else alive
    return np.asarray([_fidelity(si, sk, _propagate(k, sp, sr, bp, bs, br, row)) for row in rows], dtype=np.float64)
