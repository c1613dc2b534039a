"""Optional numba acceleration for the splitmix64/Box-Muller stream.

The jitted kernels implement bit-for-bit the same algorithm as the numpy
path in ndcore (verified by tests when numba is importable); they exist only
because the mixing chain costs several memory passes per word in pure numpy.
Everything degrades gracefully to the numpy path when numba is missing.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

try:
    import numba

    # pin the threading layer: the sandbox TBB is too old and numba warns
    # noisily before falling back; workqueue is fine for the one
    # coarse-grained parallel kernel here.
    numba.config.THREADING_LAYER = "workqueue"
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        def deco(f):
            return f
        return deco


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def normals_kernel(seed, counter, n):
    out = np.empty(n)
    c = counter
    pairs = (n + 1) // 2
    for k in range(pairs):
        c += np.uint64(1)
        u1 = float((_mix(seed + _GOLDEN * c) >> np.uint64(11)) + np.uint64(1)) * _INV_2_53
        c += np.uint64(1)
        u2 = float(_mix(seed + _GOLDEN * c) >> np.uint64(11)) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        a = 2.0 * math.pi * u2
        i = 2 * k
        out[i] = r * math.cos(a)
        if i + 1 < n:
            out[i + 1] = r * math.sin(a)
    return out, c


@njit(cache=True)
def uniforms_kernel(seed, counter, n):
    out = np.empty(n)
    c = counter
    for k in range(n):
        c += np.uint64(1)
        out[k] = float(_mix(seed + _GOLDEN * c) >> np.uint64(11)) * _INV_2_53
    return out, c


@njit(cache=True, parallel=True)
def gauss_consistency_terms(seed, counter, n, m, t, w, mu):
    """Per-sample contrastive terms for N(0,1) data and quadratic energy
    (x-mu)^2/2, fused draw/energy/logsumexp loop.

    Draw layout matches the generic path exactly: n data draws, n outer
    noise draws, then n*m inner draws in sample-major order. Requires n and
    m even so every sample's inner block is Box-Muller pair aligned, which
    lets the samples run in parallel deterministically.
    """
    data, c = normals_kernel(seed, counter, n)
    xi, c = normals_kernel(seed, c, n)
    base = c
    rt = math.sqrt(t)
    lw = math.log(w) if w > 0.0 else -math.inf
    logm = math.log(m)
    terms = np.empty(n)
    for i in prange(n):
        blk, _ = normals_kernel(seed, base + np.uint64(i * m), m)
        e_x = 0.5 * (data[i] - mu) ** 2
        y0 = data[i] + rt * xi[i]
        mx = lw
        dbuf = np.empty(m)
        for j in range(m):
            y = y0 + rt * blk[j]
            d = e_x - 0.5 * (y - mu) ** 2
            dbuf[j] = d
            if d > mx:
                mx = d
        s = 0.0
        if lw > -math.inf:
            s += math.exp(lw - mx)
        for j in range(m):
            s += math.exp(dbuf[j] - mx)
        terms[i] = mx + math.log(s) - logm
    return terms, base + np.uint64(n * m)
