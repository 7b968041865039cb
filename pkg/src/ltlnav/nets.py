"""Small feed-forward approximators with exact gradients and Adam.

Parameters live in one flat float64 vector per network so optimizer state
and checkpoints stay trivial.  Hidden layers use tanh; four output heads
cover the policy (categorical or diagonal gaussian), the two value
functions (scalar), and the nonnegative multiplier (softplus scalar).
Backward passes are hand-rolled reverse mode, checked against finite
differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MlpSpec", "AdamState", "n_params", "init_params", "forward", "backward",
    "adam_init", "adam_step",
    "sample_categorical", "categorical_logp", "categorical_logp_grad",
    "sample_gaussian", "gaussian_logp", "gaussian_logp_grad",
    "mean_action", "softmax",
    "spec_to_json", "spec_from_json", "head_to_json", "head_from_json",
]

HEADS = ("categorical", "gaussian", "scalar", "nonneg")


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    hidden: tuple[int, ...]
    head: str
    out_dim: int = 1

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.head in ("scalar", "nonneg") and self.out_dim != 1:
            raise ValueError(f"{self.head} head requires out_dim=1")
        if self.in_dim < 1 or self.out_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer widths must be positive")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.out_dim)


def n_params(spec: MlpSpec) -> int:
    dims = spec.dims
    total = sum(o * i + o for i, o in zip(dims, dims[1:]))
    if spec.head == "gaussian":
        total += spec.out_dim
    return total


def _orthogonal(rng: np.random.Generator, rows: int, cols: int,
                gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal weights, zero biases; policy output layer scaled down so
    initial action distributions are near-uniform; log_std starts at -0.5."""
    dims = spec.dims
    chunks = []
    last = len(dims) - 2
    for li, (i, o) in enumerate(zip(dims, dims[1:])):
        if li == last and spec.head in ("categorical", "gaussian"):
            gain = 0.01
        else:
            gain = 1.0
        chunks.append(_orthogonal(rng, o, i, gain).ravel())
        chunks.append(np.zeros(o))
    if spec.head == "gaussian":
        chunks.append(np.full(spec.out_dim, -0.5))
    return np.concatenate(chunks)


def _unpack(spec: MlpSpec, params: np.ndarray):
    dims = spec.dims
    ws, bs, at = [], [], 0
    for i, o in zip(dims, dims[1:]):
        ws.append(params[at:at + o * i].reshape(o, i))
        at += o * i
        bs.append(params[at:at + o])
        at += o
    log_std = params[at:at + spec.out_dim] if spec.head == "gaussian" else None
    return ws, bs, log_std


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _run(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    ws, bs, log_std = _unpack(spec, params)
    hs = [x]
    for w, b in zip(ws[:-1], bs[:-1]):
        hs.append(np.tanh(hs[-1] @ w.T + b))
    z = hs[-1] @ ws[-1].T + bs[-1]
    return ws, hs, z, log_std


def _as_batch(spec: MlpSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(f"input shape {x.shape} does not match in_dim "
                         f"{spec.in_dim}")
    return x, single


def forward(spec: MlpSpec, params: np.ndarray, x):
    """Head output: categorical -> logits (B, n); gaussian -> (mean (B, n),
    log_std (n,)); scalar -> (B,); nonneg -> softplus values (B,).  A 1-D
    input drops the batch axis in the result."""
    x, single = _as_batch(spec, x)
    _, _, z, log_std = _run(spec, params, x)
    if spec.head == "categorical":
        return z[0] if single else z
    if spec.head == "gaussian":
        return (z[0] if single else z), log_std.copy()
    out = _softplus(z[:, 0]) if spec.head == "nonneg" else z[:, 0]
    return float(out[0]) if single else out


def backward(spec: MlpSpec, params: np.ndarray, x, d_out) -> np.ndarray:
    """Gradient of sum(d_out * output) with respect to the flat params.

    d_out mirrors the head output: categorical -> (B, n) on logits;
    gaussian -> (d_mean (B, n), d_log_std (n,) or (B, n)); scalar/nonneg ->
    (B,) on the (post-softplus) value.
    """
    x, single = _as_batch(spec, x)
    ws, hs, z, _ = _run(spec, params, x)
    b = x.shape[0]
    if spec.head == "categorical":
        dz = np.asarray(d_out, dtype=np.float64)
        dz = dz[None, :] if single and dz.ndim == 1 else dz
        d_log_std = None
    elif spec.head == "gaussian":
        d_mean, d_log_std = d_out
        dz = np.asarray(d_mean, dtype=np.float64)
        dz = dz[None, :] if single and dz.ndim == 1 else dz
        d_log_std = np.asarray(d_log_std, dtype=np.float64)
        if d_log_std.ndim == 2:
            d_log_std = d_log_std.sum(axis=0)
    else:
        dv = np.asarray(d_out, dtype=np.float64).reshape(b)
        dz = (dv * _sigmoid(z[:, 0]))[:, None] if spec.head == "nonneg" \
            else dv[:, None]
        d_log_std = None
    grads = []
    for li in range(len(ws) - 1, -1, -1):
        grads.append((dz.T @ hs[li], dz.sum(axis=0)))
        if li > 0:
            dz = (dz @ ws[li]) * (1.0 - hs[li] * hs[li])
    flat = []
    for dw, db in reversed(grads):
        flat.append(dw.ravel())
        flat.append(db)
    if spec.head == "gaussian":
        flat.append(d_log_std)
    return np.concatenate(flat)


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_init(size: int) -> AdamState:
    return AdamState(np.zeros(size), np.zeros(size))


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> np.ndarray:
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grad
    state.v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = state.m / (1 - beta1 ** state.t)
    v_hat = state.v / (1 - beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


# -- action distributions -----------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_categorical(logits: np.ndarray, rng: np.random.Generator):
    p = softmax(logits)
    action = int(rng.choice(len(p), p=p))
    return action, float(categorical_logp(logits, action))


def categorical_logp(logits: np.ndarray, actions) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(z).sum(axis=-1))
    if np.ndim(logits) == 1:
        return z[int(actions)] - log_z
    return z[np.arange(len(z)), np.asarray(actions, dtype=int)] - log_z


def categorical_logp_grad(logits: np.ndarray, actions) -> np.ndarray:
    """d logp / d logits: one-hot(action) - softmax(logits)."""
    grad = -softmax(logits)
    if np.ndim(logits) == 1:
        grad[int(actions)] += 1.0
    else:
        grad[np.arange(len(grad)), np.asarray(actions, dtype=int)] += 1.0
    return grad


def sample_gaussian(mean: np.ndarray, log_std: np.ndarray,
                    rng: np.random.Generator):
    std = np.exp(log_std)
    action = mean + std * rng.standard_normal(mean.shape)
    return action, float(gaussian_logp(mean, log_std, action))


def gaussian_logp(mean, log_std, actions) -> np.ndarray:
    std = np.exp(log_std)
    u = (np.asarray(actions) - mean) / std
    return (-0.5 * (u * u).sum(axis=-1) - np.sum(log_std)
            - 0.5 * mean.shape[-1] * math.log(2 * math.pi))


def gaussian_logp_grad(mean, log_std, actions):
    """(d logp / d mean, d logp / d log_std) per sample."""
    std = np.exp(log_std)
    u = (np.asarray(actions) - mean) / std
    return u / std, u * u - 1.0


def mean_action(spec: MlpSpec, head_out):
    if spec.head == "categorical":
        return int(np.argmax(head_out))
    if spec.head == "gaussian":
        return np.array(head_out[0], dtype=np.float64)
    raise ValueError("mean_action is defined for policy heads only")


# -- checkpoint serialization -------------------------------------------------


def spec_to_json(spec: MlpSpec) -> dict:
    return {"in_dim": spec.in_dim, "hidden": list(spec.hidden),
            "head": spec.head, "out_dim": spec.out_dim}


def spec_from_json(d: dict) -> MlpSpec:
    return MlpSpec(int(d["in_dim"]), tuple(int(h) for h in d["hidden"]),
                   str(d["head"]), int(d["out_dim"]))


def head_to_json(spec: MlpSpec, params: np.ndarray) -> dict:
    return {"spec": spec_to_json(spec), "params": [float(p) for p in params]}


def head_from_json(d: dict) -> tuple[MlpSpec, np.ndarray]:
    spec = spec_from_json(d["spec"])
    params = np.asarray(d["params"], dtype=np.float64)
    if params.size != n_params(spec):
        raise ValueError(f"checkpoint has {params.size} params, spec needs "
                         f"{n_params(spec)}")
    return spec, params
