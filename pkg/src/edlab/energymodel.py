"""Parameterised scalar energy functions with exact gradients.

Four variants share one functional surface:

* ``Mlp``            -- feed-forward net, hand-written layer backprop
* ``Mixture1D``      -- two-Gaussian analytic energy, trainable weight rho
* ``IsingBilinear``  -- -s^T J s on spins, trainable upper triangle of J
* ``GaussQuad``      -- ||x-mu||^2 / (2 sigma^2), diagnostic only (no params)

Gradients are exact reverse-mode (no tape; the topology is fixed), which
keeps the operation order deterministic. Batched entry points carry the
training workload; the single-point functions are thin wrappers.

Checkpoint format: ASCII magic line ``EDCKPT1``, one line of JSON header
``{"variant", "spec", "param_count"}``, then the raw little-endian float64
parameter payload. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .ndcore import RngStream, act_array, act_value, logsumexp_rows

__all__ = [
    "MlpSpec",
    "Mlp",
    "Mixture1D",
    "IsingBilinear",
    "GaussQuad",
    "UnsupportedVariantError",
    "CheckpointError",
    "CheckpointMagicError",
    "CheckpointLengthError",
    "CheckpointSpecError",
    "init_xavier",
    "energy",
    "energy_batch",
    "grad_params",
    "grad_params_weighted",
    "grad_input",
    "grad_input_batch",
    "param_vector",
    "set_param_vector",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"EDCKPT1"


class UnsupportedVariantError(TypeError):
    """Operation not defined for this energy-model variant."""


class CheckpointError(IOError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointLengthError(CheckpointError):
    pass


class CheckpointSpecError(CheckpointError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a scalar-output feed-forward net.

    ``hidden_widths`` lists the widths of the hidden layers; the output layer
    has width 1. Activation sits between consecutive affine layers (none
    after the output).
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    activation: str = "softplus"

    def __post_init__(self):
        if self.input_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValueError("all widths must be >= 1")
        if self.activation not in ("softplus", "silu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer, output layer last."""
        widths = (self.input_dim, *self.hidden_widths, 1)
        return [(widths[i], widths[i + 1]) for i in range(len(widths) - 1)]

    @property
    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


def _shape_table(spec: MlpSpec) -> list[tuple[int, int, int, int]]:
    """Per-layer (weight_offset, bias_offset, fan_in, fan_out) into the flat
    vector. Layout is layer-by-layer: row-major W_l then b_l."""
    table = []
    off = 0
    for fi, fo in spec.layer_dims:
        table.append((off, off + fi * fo, fi, fo))
        off += fi * fo + fo
    return table


class Mlp:
    """MLP energy; parameters live in one flat float64 vector."""

    def __init__(self, spec: MlpSpec, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (spec.param_count,):
            raise ValueError(f"flat length {flat.size} != {spec.param_count}")
        self.spec = spec
        self.flat = flat
        self.shape_table = _shape_table(spec)

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    def layers(self):
        """Yield (W, b) views into the flat vector."""
        for woff, boff, fi, fo in self.shape_table:
            yield self.flat[woff:boff].reshape(fo, fi), self.flat[boff:boff + fo]


@dataclass
class Mixture1D:
    """Energy -log(rho g1 + (1-rho) g2) for Gaussians g1, g2; the single
    trainable parameter is rho."""

    rho: float
    means: tuple[float, float] = (-5.0, 5.0)
    stds: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")

    @property
    def input_dim(self) -> int:
        return 1


@dataclass
class IsingBilinear:
    """Energy -s^T J s on spins s in {-1,+1}^d; J symmetric, zero diagonal.
    Trainable parameters are the strict upper triangle of J (row-major)."""

    J: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.J, dtype=np.float64)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError("J must be square")
        if not np.array_equal(J, J.T):
            raise ValueError("J must be symmetric")
        if np.any(np.diag(J) != 0.0):
            raise ValueError("J must have zero diagonal")
        self.J = J

    @property
    def input_dim(self) -> int:
        return self.J.shape[0]


@dataclass
class GaussQuad:
    """Diagnostic quadratic energy ||x - mu||^2 / (2 sigma2)."""

    mu: np.ndarray
    sigma2: float

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def input_dim(self) -> int:
        return self.mu.shape[0]


def init_xavier(spec: MlpSpec, rng: RngStream) -> np.ndarray:
    """Xavier-normal weights (std sqrt(2/(fan_in+fan_out))), zero biases.

    Draw order is layer by layer, weights row-major, so the result is a pure
    function of (spec, stream state).
    """
    flat = np.zeros(spec.param_count)
    off = 0
    for fi, fo in spec.layer_dims:
        std = np.sqrt(2.0 / (fi + fo))
        flat[off:off + fi * fo] = std * rng.normals(fi * fo)
        off += fi * fo + fo  # biases stay zero
    return flat


def _check_batch(model, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"input dim {X.shape} does not match model dim {model.input_dim}")
    return X


def _mlp_forward(model: Mlp, X: np.ndarray):
    """Returns (energies, cache) where cache holds per-layer inputs and
    activation derivatives for the backward passes."""
    a = X
    inputs = []
    dacts = []
    layers = list(model.layers())
    for li, (W, b) in enumerate(layers):
        inputs.append(a)
        z = a @ W.T
        z += b
        if li < len(layers) - 1:
            a, da = act_array(model.spec.activation, z)
            dacts.append(da)
        else:
            a = z
    return a[:, 0], (inputs, dacts)


def _mlp_energy_only(model: Mlp, X: np.ndarray) -> np.ndarray:
    """Forward pass without the derivative bookkeeping."""
    a = X
    layers = list(model.layers())
    for li, (W, b) in enumerate(layers):
        z = a @ W.T
        z += b
        a = act_value(model.spec.activation, z) if li < len(layers) - 1 else z
    return a[:, 0]


def _mlp_backward(model: Mlp, cache, cot: np.ndarray, want_params: bool, want_input: bool):
    """Reverse pass with per-sample output cotangents ``cot``.

    Returns (flat parameter gradient of sum_n cot_n * E(x_n), input gradient
    rows cot_n * dE/dx_n) with unwanted parts as None.
    """
    inputs, dacts = cache
    layers = list(model.layers())
    gflat = np.zeros_like(model.flat) if want_params else None
    delta = cot[:, None]
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        if want_params:
            woff, boff, fi, fo = model.shape_table[li]
            gflat[woff:boff] = (delta.T @ inputs[li]).ravel()
            gflat[boff:boff + fo] = delta.sum(axis=0)
        if li > 0:
            delta = (delta @ W) * dacts[li - 1]
        elif want_input:
            delta = delta @ W
    return gflat, (delta if want_input else None)


def _mixture_logcomp(model: Mixture1D, x: np.ndarray):
    """log of the two weighted component densities, shape (n, 2)."""
    m1, m2 = model.means
    s1, s2 = model.stds
    lg1 = -0.5 * ((x - m1) / s1) ** 2 - np.log(s1) - 0.5 * np.log(2 * np.pi)
    lg2 = -0.5 * ((x - m2) / s2) ** 2 - np.log(s2) - 0.5 * np.log(2 * np.pi)
    with np.errstate(divide="ignore"):
        lw1 = np.log(model.rho) if model.rho > 0 else -np.inf
        lw2 = np.log1p(-model.rho) if model.rho < 1 else -np.inf
    return np.stack([lw1 + lg1, lw2 + lg2], axis=1), np.stack([lg1, lg2], axis=1)


def energy_batch(model, X: np.ndarray) -> np.ndarray:
    """Energies for a batch of row vectors."""
    X = _check_batch(model, X)
    if isinstance(model, Mlp):
        return _mlp_energy_only(model, X)
    if isinstance(model, Mixture1D):
        lcomp, _ = _mixture_logcomp(model, X[:, 0])
        return -logsumexp_rows(lcomp)
    if isinstance(model, IsingBilinear):
        return -np.einsum("ni,ij,nj->n", X, model.J, X)
    if isinstance(model, GaussQuad):
        diff = X - model.mu
        return np.sum(diff * diff, axis=1) / (2.0 * model.sigma2)
    raise UnsupportedVariantError(f"unknown model {type(model).__name__}")


def energy(model, x) -> float:
    return float(energy_batch(model, np.atleast_1d(np.asarray(x, dtype=np.float64)))[0])


def grad_params_weighted(model, X: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Flat gradient of sum_n weights_n * E(x_n) w.r.t. the parameters.

    This is the single batched reverse pass the losses are built on.
    """
    X = _check_batch(model, X)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != X.shape[0]:
        raise ValueError("weights length must match batch size")
    if isinstance(model, Mlp):
        _, cache = _mlp_forward(model, X)
        g, _ = _mlp_backward(model, cache, w, want_params=True, want_input=False)
        return g
    if isinstance(model, Mixture1D):
        lcomp, lg = _mixture_logcomp(model, X[:, 0])
        tot = logsumexp_rows(lcomp)
        # dE/drho = -(g1 - g2) / (rho g1 + (1-rho) g2)
        d = -(np.exp(lg[:, 0] - tot) - np.exp(lg[:, 1] - tot))
        return np.array([np.dot(w, d)])
    if isinstance(model, IsingBilinear):
        d = model.input_dim
        M = X.T @ (w[:, None] * X)
        iu = np.triu_indices(d, k=1)
        return -2.0 * M[iu]
    raise UnsupportedVariantError(
        f"{type(model).__name__} has no trainable parameters")


def grad_params(model, x) -> np.ndarray:
    """Exact reverse-mode gradient of E(x) w.r.t. the flat parameters."""
    X = _check_batch(model, np.atleast_1d(np.asarray(x, dtype=np.float64)))
    return grad_params_weighted(model, X, np.ones(X.shape[0]))


def forward_cached(model, X: np.ndarray):
    """Energies plus a handle that lets backward_params reuse this forward
    pass (only the net variant has real reuse; analytic variants recompute,
    they are cheap)."""
    X = _check_batch(model, X)
    if isinstance(model, Mlp):
        e, cache = _mlp_forward(model, X)
        return e, ("mlp", X, cache)
    return energy_batch(model, X), ("generic", X, None)


def backward_params(model, handle, weights: np.ndarray) -> np.ndarray:
    """Flat gradient of sum_n weights_n * E(x_n) using a forward_cached
    handle."""
    kind, X, cache = handle
    w = np.asarray(weights, dtype=np.float64).ravel()
    if kind == "mlp":
        g, _ = _mlp_backward(model, cache, w, want_params=True, want_input=False)
        return g
    return grad_params_weighted(model, X, w)


def grad_input_batch(model, X: np.ndarray) -> np.ndarray:
    """Rows of dE/dx for a batch (continuous-input variants only)."""
    X = _check_batch(model, X)
    if isinstance(model, Mlp):
        _, cache = _mlp_forward(model, X)
        _, gin = _mlp_backward(model, cache, np.ones(X.shape[0]),
                               want_params=False, want_input=True)
        return gin
    if isinstance(model, Mixture1D):
        lcomp, _ = _mixture_logcomp(model, X[:, 0])
        tot = logsumexp_rows(lcomp)
        r = np.exp(lcomp - tot[:, None])  # posterior component weights
        m1, m2 = model.means
        s1, s2 = model.stds
        g = r[:, 0] * (X[:, 0] - m1) / s1**2 + r[:, 1] * (X[:, 0] - m2) / s2**2
        return g[:, None]
    if isinstance(model, GaussQuad):
        return (X - model.mu) / model.sigma2
    raise UnsupportedVariantError(
        f"{type(model).__name__} does not support input gradients")


def grad_input(model, x) -> np.ndarray:
    return grad_input_batch(model, np.atleast_1d(np.asarray(x, dtype=np.float64)))[0]


def param_vector(model) -> np.ndarray:
    """Current trainable parameters as a flat copy."""
    if isinstance(model, Mlp):
        return model.flat.copy()
    if isinstance(model, Mixture1D):
        return np.array([model.rho])
    if isinstance(model, IsingBilinear):
        iu = np.triu_indices(model.input_dim, k=1)
        return model.J[iu].copy()
    raise UnsupportedVariantError(f"{type(model).__name__} has no trainable parameters")


def set_param_vector(model, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    if isinstance(model, Mlp):
        if flat.shape != model.flat.shape:
            raise ValueError("parameter length mismatch")
        model.flat = flat.copy()
        return
    if isinstance(model, Mixture1D):
        if flat.shape != (1,):
            raise ValueError("parameter length mismatch")
        model.rho = float(flat[0])
        return
    if isinstance(model, IsingBilinear):
        d = model.input_dim
        iu = np.triu_indices(d, k=1)
        if flat.shape != iu[0].shape:
            raise ValueError("parameter length mismatch")
        J = np.zeros((d, d))
        J[iu] = flat
        model.J = J + J.T
        return
    raise UnsupportedVariantError(f"{type(model).__name__} has no trainable parameters")


def _variant_header(model) -> dict:
    if isinstance(model, Mlp):
        return {"variant": "mlp",
                "spec": {"input_dim": model.spec.input_dim,
                         "hidden_widths": list(model.spec.hidden_widths),
                         "activation": model.spec.activation}}
    if isinstance(model, Mixture1D):
        return {"variant": "mixture1d",
                "spec": {"means": list(model.means), "stds": list(model.stds)}}
    if isinstance(model, IsingBilinear):
        return {"variant": "ising", "spec": {"d": model.input_dim}}
    if isinstance(model, GaussQuad):
        return {"variant": "gaussquad", "spec": {"d": model.input_dim}}
    raise UnsupportedVariantError(f"unknown model {type(model).__name__}")


def _payload(model) -> np.ndarray:
    if isinstance(model, GaussQuad):
        return np.concatenate([model.mu, [model.sigma2]])
    return param_vector(model)


def _expected_count(header: dict) -> int:
    variant, spec = header["variant"], header["spec"]
    if variant == "mlp":
        return MlpSpec(spec["input_dim"], tuple(spec["hidden_widths"]),
                       spec["activation"]).param_count
    if variant == "mixture1d":
        return 1
    if variant == "ising":
        d = spec["d"]
        return d * (d - 1) // 2
    if variant == "gaussquad":
        return spec["d"] + 1
    raise CheckpointSpecError(f"unknown checkpoint variant {variant!r}")


def save_checkpoint(model, path) -> None:
    header = _variant_header(model)
    payload = _payload(model)
    header["param_count"] = int(payload.size)
    blob = (_MAGIC + b"\n"
            + json.dumps(header, sort_keys=True).encode("ascii") + b"\n"
            + payload.astype("<f8").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != _MAGIC:
            raise CheckpointMagicError(f"bad checkpoint magic {magic!r}")
        try:
            header = json.loads(fh.readline().decode("ascii"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise CheckpointSpecError(f"unreadable checkpoint header: {exc}") from exc
        raw = fh.read()
    try:
        count = int(header["param_count"])
        expected = _expected_count(header)
    except (KeyError, TypeError) as exc:
        raise CheckpointSpecError(f"malformed checkpoint header: {exc}") from exc
    if expected != count:
        raise CheckpointSpecError(
            f"header param_count {count} inconsistent with spec ({expected})")
    if len(raw) != 8 * count:
        raise CheckpointLengthError(
            f"payload holds {len(raw) // 8} floats, header says {count}")
    payload = np.frombuffer(raw, dtype="<f8").astype(np.float64)

    variant, spec = header["variant"], header["spec"]
    if variant == "mlp":
        return Mlp(MlpSpec(spec["input_dim"], tuple(spec["hidden_widths"]),
                           spec["activation"]), payload)
    if variant == "mixture1d":
        return Mixture1D(float(payload[0]), tuple(spec["means"]), tuple(spec["stds"]))
    if variant == "ising":
        d = spec["d"]
        model = IsingBilinear(np.zeros((d, d)))
        set_param_vector(model, payload)
        return model
    if variant == "gaussquad":
        return GaussQuad(payload[:-1], float(payload[-1]))
    raise CheckpointSpecError(f"unknown checkpoint variant {variant!r}")
