"""Seeded toy-data generators, Gray-code codec, Ising ground truth.

Every 2-D generator is confined to the box [-4.5, 4.5]^2; out-of-box draws
are resampled, so the box invariant holds for every sample. Constants below
are declared choices (the reference material leaves them open):

* gauss25     -- means on {-4,-2,0,2,4}^2, std 0.1, equal weights
* eightgauss  -- 8 equal components on a radius-3 circle, std 0.15
* pinwheel    -- 5 blades, radial std 0.3, tangential std 0.05, rate 0.25
* checkerboard-- 4x4 alternating cells on [-4,4]^2, uniform in active cells
* twospirals  -- sqrt-spaced angle up to 4 pi, radius up to 4, noise 0.05
* rings       -- radii 1,2,3,4 with radial noise 0.05
* moons       -- two half circles, scale 2.7, noise 0.1
* swissroll   -- t in [1.5 pi, 4.5 pi], radius t scaled to 4.2, noise 0.05

Exact log densities are available for gauss25 and eightgauss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ndcore import RngStream, logsumexp_rows

__all__ = [
    "TOY2D_NAMES",
    "BOX_HALF_WIDTH",
    "sample_toy2d",
    "exact_logp_fn",
    "sample_mixture1d",
    "mixture1d_logp",
    "GrayCodec",
    "gray_encode",
    "gray_decode",
    "ising_lattice_coupling",
]

BOX_HALF_WIDTH = 4.5

TOY2D_NAMES = ("gauss25", "pinwheel", "checkerboard", "twospirals",
               "rings", "moons", "swissroll", "eightgauss")

_G25_STD = 0.1
_G25_MEANS = np.array([(mx, my) for mx in (-4, -2, 0, 2, 4) for my in (-4, -2, 0, 2, 4)],
                      dtype=np.float64)
_EG_STD = 0.15
_EG_MEANS = np.array([(3.0 * np.cos(a), 3.0 * np.sin(a))
                      for a in 2.0 * np.pi * np.arange(8) / 8.0])


def _mixture_logp(X: np.ndarray, means: np.ndarray, std: float) -> np.ndarray:
    d2 = np.sum((X[:, None, :] - means[None, :, :]) ** 2, axis=2)
    comp = -d2 / (2.0 * std**2) - np.log(2 * np.pi * std**2) - np.log(len(means))
    return logsumexp_rows(comp)


def _gauss_grid_draw(n: int, rng: RngStream, means: np.ndarray, std: float) -> np.ndarray:
    comp = rng.integers(n, len(means))
    return means[comp] + std * rng.normals(2 * n).reshape(n, 2)


def _pinwheel_draw(n: int, rng: RngStream) -> np.ndarray:
    n_blades, radial_std, tang_std, rate = 5, 0.3, 0.05, 0.25
    blade = rng.integers(n, n_blades)
    feats = rng.normals(2 * n).reshape(n, 2) * np.array([radial_std, tang_std]) + np.array([1.0, 0.0])
    angles = 2.0 * np.pi * blade / n_blades + rate * np.exp(feats[:, 0])
    c, s = np.cos(angles), np.sin(angles)
    out = np.empty((n, 2))
    out[:, 0] = c * feats[:, 0] - s * feats[:, 1]
    out[:, 1] = s * feats[:, 0] + c * feats[:, 1]
    return 2.0 * out


def _checkerboard_draw(n: int, rng: RngStream) -> np.ndarray:
    # active ("black") cells of the 4x4 grid on [-4,4]^2: (i+j) even
    cells = [(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0]
    idx = rng.integers(n, len(cells))
    u = rng.uniforms(2 * n).reshape(n, 2)
    corners = np.array([(-4.0 + 2.0 * i, -4.0 + 2.0 * j) for i, j in cells])
    return corners[idx] + 2.0 * u


def _twospirals_draw(n: int, rng: RngStream) -> np.ndarray:
    u = rng.uniforms(n)
    arm = rng.uniforms(n) < 0.5
    t = np.sqrt(u) * 4.0 * np.pi
    r = t / (4.0 * np.pi) * 4.0
    ang = t + np.where(arm, np.pi, 0.0)
    pts = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    return pts + 0.05 * rng.normals(2 * n).reshape(n, 2)


def _rings_draw(n: int, rng: RngStream) -> np.ndarray:
    radii = np.array([1.0, 2.0, 3.0, 4.0])
    idx = rng.integers(n, len(radii))
    ang = 2.0 * np.pi * rng.uniforms(n)
    r = radii[idx] + 0.05 * rng.normals(n)
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)


def _moons_draw(n: int, rng: RngStream) -> np.ndarray:
    upper = rng.uniforms(n) < 0.5
    t = np.pi * rng.uniforms(n)
    x = np.where(upper, np.cos(t), 1.0 - np.cos(t))
    y = np.where(upper, np.sin(t), 0.5 - np.sin(t))
    pts = np.stack([x, y], axis=1) + 0.1 * rng.normals(2 * n).reshape(n, 2)
    pts[:, 0] -= 0.5
    pts[:, 1] -= 0.25
    return 2.7 * pts


def _swissroll_draw(n: int, rng: RngStream) -> np.ndarray:
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.uniforms(n))
    scale = 4.2 / (4.5 * np.pi)
    pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) * scale
    return pts + 0.05 * rng.normals(2 * n).reshape(n, 2)


_DRAWERS = {
    "gauss25": lambda n, rng: _gauss_grid_draw(n, rng, _G25_MEANS, _G25_STD),
    "eightgauss": lambda n, rng: _gauss_grid_draw(n, rng, _EG_MEANS, _EG_STD),
    "pinwheel": _pinwheel_draw,
    "checkerboard": _checkerboard_draw,
    "twospirals": _twospirals_draw,
    "rings": _rings_draw,
    "moons": _moons_draw,
    "swissroll": _swissroll_draw,
}


def exact_logp_fn(name: str):
    """Closed-form log density for the names that have one, else None."""
    if name == "gauss25":
        return lambda X: _mixture_logp(np.asarray(X, dtype=np.float64), _G25_MEANS, _G25_STD)
    if name == "eightgauss":
        return lambda X: _mixture_logp(np.asarray(X, dtype=np.float64), _EG_MEANS, _EG_STD)
    return None


def sample_toy2d(name: str, n: int, rng: RngStream):
    """n points from a named 2-D toy plus per-point exact log density when
    available (None otherwise). Out-of-box draws are replaced by fresh
    draws, in draw order, until all points lie inside the box."""
    if name not in _DRAWERS:
        raise ValueError(f"unknown toy2d dataset {name!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    draw = _DRAWERS[name]
    pts = draw(n, rng)
    bad = np.max(np.abs(pts), axis=1) > BOX_HALF_WIDTH
    while np.any(bad):
        pts[bad] = draw(int(np.sum(bad)), rng)
        bad = np.max(np.abs(pts), axis=1) > BOX_HALF_WIDTH
    fn = exact_logp_fn(name)
    return pts, (fn(pts) if fn is not None else None)


def sample_mixture1d(rho: float, n: int, rng: RngStream) -> np.ndarray:
    """n draws from rho N(-5,1) + (1-rho) N(5,1), as an (n, 1) array."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    left = rng.uniforms(n) < rho
    means = np.where(left, -5.0, 5.0)
    return (means + rng.normals(n))[:, None]


def mixture1d_logp(rho: float, x: np.ndarray) -> np.ndarray:
    """Exact log density of the two-Gaussian mixture."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    lg1 = -0.5 * (x + 5.0) ** 2 - 0.5 * np.log(2 * np.pi)
    lg2 = -0.5 * (x - 5.0) ** 2 - 0.5 * np.log(2 * np.pi)
    with np.errstate(divide="ignore"):
        comp = np.stack([np.log(rho) + lg1 if rho > 0 else np.full_like(x, -np.inf),
                         np.log1p(-rho) + lg2 if rho < 1 else np.full_like(x, -np.inf)],
                        axis=1)
    return logsumexp_rows(comp)


@dataclass(frozen=True)
class GrayCodec:
    """Reflected-Gray quantiser: each coordinate maps to bits_per_dim bits
    (MSB first), adjacent quantisation cells differing in exactly one bit."""

    bits_per_dim: int = 16
    low: float = -BOX_HALF_WIDTH
    high: float = BOX_HALF_WIDTH

    @property
    def levels(self) -> int:
        return 1 << self.bits_per_dim

    def index_of(self, x: np.ndarray):
        """Quantisation index per coordinate plus a clamped flag."""
        x = np.asarray(x, dtype=np.float64)
        k = np.floor((x - self.low) / (self.high - self.low) * self.levels).astype(np.int64)
        clamped = (x < self.low) | (x > self.high)
        return np.clip(k, 0, self.levels - 1), clamped

    def centre_of(self, k: np.ndarray) -> np.ndarray:
        return self.low + (np.asarray(k, dtype=np.float64) + 0.5) * (self.high - self.low) / self.levels


def _int_to_bits(k: np.ndarray, nbits: int) -> np.ndarray:
    shifts = np.arange(nbits - 1, -1, -1, dtype=np.int64)
    return ((k[..., None] >> shifts) & 1).astype(np.uint8)


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    nbits = bits.shape[-1]
    shifts = np.arange(nbits - 1, -1, -1, dtype=np.int64)
    return np.sum(bits.astype(np.int64) << shifts, axis=-1)


def gray_encode(x, codec: GrayCodec = GrayCodec()):
    """2-D point -> (2*bits_per_dim bit vector, clamped flag). Points outside
    the range are clamped to the boundary cell and flagged."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    k, clamped = codec.index_of(X)
    g = k ^ (k >> 1)
    bits = _int_to_bits(g, codec.bits_per_dim).reshape(X.shape[0], -1)
    flag = np.any(clamped, axis=1)
    if squeeze:
        return bits[0], bool(flag[0])
    return bits, flag


def gray_decode(bits, codec: GrayCodec = GrayCodec()) -> np.ndarray:
    """Bit vector(s) -> cell-centre point(s); exact inverse of gray_encode
    on the quantisation lattice."""
    bits = np.asarray(bits, dtype=np.uint8)
    squeeze = bits.ndim == 1
    B = np.atleast_2d(bits).reshape(-1, 2, codec.bits_per_dim)
    g = _bits_to_int(B)
    k = g.copy()
    shift = 1
    while shift < codec.bits_per_dim:
        k ^= k >> shift
        shift *= 2
    out = codec.centre_of(k)
    return out[0] if squeeze else out


def ising_lattice_coupling(h: int, w: int, strength: float) -> np.ndarray:
    """Coupling matrix of an h x w 4-neighbour lattice (no wraparound):
    J_ij = strength on lattice edges, symmetric, zero diagonal."""
    if h < 2 or w < 2:
        raise ValueError("lattice must be at least 2x2")
    d = h * w
    J = np.zeros((d, d))
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if c + 1 < w:
                J[i, i + 1] = J[i + 1, i] = strength
            if r + 1 < h:
                J[i, i + w] = J[i + w, i] = strength
    return J
