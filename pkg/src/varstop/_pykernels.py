"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np

_CHUNK = 128


def envelope_argmax(a, b, cs):
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    cs = np.ascontiguousarray(cs, dtype=float)
    values = np.empty(cs.size)
    index = np.empty(cs.size, dtype=np.intp)
    last = a.size - 1
    for start in range(0, cs.size, _CHUNK):
        block = a[None, :] - cs[start:start + _CHUNK, None] * b[None, :]
        # greatest index among exact ties
        rev = np.argmax(block[:, ::-1], axis=1)
        index[start:start + _CHUNK] = last - rev
        values[start:start + _CHUNK] = block[np.arange(block.shape[0]), last - rev]
    return values, index


def upper_hull(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    stack = []
    for i in range(xs.size):
        while len(stack) >= 2:
            o, p = stack[-2], stack[-1]
            cross = (xs[p] - xs[o]) * (ys[i] - ys[o]) - (ys[p] - ys[o]) * (xs[i] - xs[o])
            if cross >= 0.0:
                stack.pop()
            else:
                break
        stack.append(i)
    return np.array(stack, dtype=np.intp)


def best_pair_variance(mean, second):
    mean = np.asarray(mean, dtype=float)
    second = np.asarray(second, dtype=float)
    single = second - mean**2
    k = int(np.argmax(single))
    best, bi, bj, bp = float(single[k]), k, k, 1.0
    n = mean.size
    for i in range(n - 1):
        mj = mean[i + 1:]
        qj = second[i + 1:]
        d = mean[i] - mj
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            p = ((second[i] - qj) / (2.0 * d) - mj) / d
        ok = (d != 0.0) & (p > 0.0) & (p < 1.0)
        if not ok.any():
            continue
        p = np.where(ok, p, 0.5)
        m = p * mean[i] + (1.0 - p) * mj
        v = np.where(ok, p * second[i] + (1.0 - p) * qj - m * m, -np.inf)
        j = int(np.argmax(v))
        if v[j] > best:
            best, bi, bj, bp = float(v[j]), i, i + 1 + j, float(p[j])
    return best, bi, bj, bp
