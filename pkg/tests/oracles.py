"""Independent reference computations used by the tests.

Everything here works on plain dense numpy arrays or Python scalars and never
calls into the autodiff tape, so agreement with the package is meaningful.
"""

import math

import numpy as np


def central_difference(f, x, eps=1e-6):
    """Gradient of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        down = f()
        x[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


def rel_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


def random_edges(n, m, rng):
    """Up to ``m`` distinct undirected non-loop pairs on ``n`` nodes."""
    pairs = set()
    while len(pairs) < m:
        u, v = rng.integers(0, n, size=2)
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    return np.array(sorted(pairs), dtype=np.int64)


def dense_adjacency(n, edges):
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    return a


def dense_gcn(a):
    at = a + np.eye(a.shape[0])
    d = at.sum(axis=1)
    out = np.zeros_like(at)
    for i in range(at.shape[0]):
        for j in range(at.shape[0]):
            out[i, j] = at[i, j] / math.sqrt(d[i] * d[j])
    return out


def dense_sage(a):
    at = a + np.eye(a.shape[0])
    return at / at.sum(axis=1, keepdims=True)


def dense_gat(a, h, att_src, att_dst, slope):
    """Loop-form single-head attention over N(i) and i itself."""
    n = a.shape[0]
    at = a + np.eye(n)
    out = np.zeros_like(h)
    for i in range(n):
        nbrs = [j for j in range(n) if at[i, j]]
        scores = []
        for j in nbrs:
            z = float(h[i] @ att_src.ravel() + h[j] @ att_dst.ravel())
            scores.append(z if z > 0 else slope * z)
        top = max(scores)
        w = [math.exp(s - top) for s in scores]
        total = sum(w)
        for j, wj in zip(nbrs, w):
            out[i] += (wj / total) * h[j]
    return out


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def gelu_tanh(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def layernorm(x, gain, bias, eps):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


GLU_ACT = {"SwishGLU": lambda x: x * sigmoid(x), "GEGLU": gelu_tanh, "REGLU": relu}


def glu(kind, h, w3, w4, w5):
    return (GLU_ACT[kind](h @ w3) * (h @ w4)) @ w5


def ce_loop(logits, labels, index):
    """-(1/N) sum log p_true, one node at a time."""
    total = 0.0
    for i in index:
        row = [float(v) for v in logits[i]]
        top = max(row)
        lse = top + math.log(sum(math.exp(v - top) for v in row))
        total += lse - row[int(labels[i])]
    return total / len(index)


def ce_trace(logits, labels, index, num_classes):
    """-tr(Y_train^T log softmax(Z_train)) / |train| as a matrix product."""
    y = np.eye(num_classes)[labels[index]]
    logp = np.log(softmax(logits[index]))
    return -np.trace(y.T @ logp) / len(index)


def gumbel_argmax_frequencies(logits, draws, rng):
    """Monte-Carlo selection frequencies of argmax(logits + Gumbel)."""
    logits = np.asarray(logits, dtype=np.float64)
    u = rng.random((draws, logits.size))
    picks = np.argmax(logits - np.log(-np.log(u)), axis=1)
    return np.bincount(picks, minlength=logits.size) / draws


def max_row_spread(h):
    """Largest Euclidean distance between any two rows."""
    diff = h[:, None, :] - h[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2)).max())
