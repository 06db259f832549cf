"""Minimal neural network used by both agents: a position-shared 1x1
convolution over the observation grid, three fully-connected ReLU layers, and
a linear head. Backpropagation, Adam, and the annealing schedules are written
out explicitly; numpy supplies only array arithmetic.

Training math runs in float32; gradient checking uses float64 nets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DivergenceError, WeightFormatError

WEIGHT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkArch:
    """Layer dimensions: m grid positions of c_in channels, mixed to conv_out
    channels per position, then three hidden widths and the output count."""

    m: int
    c_in: int
    conv_out: int
    hidden_widths: tuple[int, int, int]
    out_dim: int

    def __post_init__(self):
        dims = (self.m, self.c_in, self.conv_out, *self.hidden_widths, self.out_dim)
        if len(self.hidden_widths) != 3:
            raise ValueError(f"expected 3 hidden widths, got {self.hidden_widths}")
        if any(d < 1 for d in dims):
            raise ValueError(f"all architecture dims must be >= 1, got {self}")

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "c_in": self.c_in,
            "conv_out": self.conv_out,
            "hidden_widths": list(self.hidden_widths),
            "out_dim": self.out_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkArch":
        return cls(
            m=d["m"],
            c_in=d["c_in"],
            conv_out=d["conv_out"],
            hidden_widths=tuple(d["hidden_widths"]),
            out_dim=d["out_dim"],
        )


def agent_arch(m: int, c_in: int, n_actions: int, out_dim: int | None = None) -> NetworkArch:
    """Architecture used by both agents: every hidden layer is n_actions wide.

    The Q-network keeps out_dim = n_actions; the supervised classifier passes
    out_dim = number of classes.
    """
    return NetworkArch(
        m=m,
        c_in=c_in,
        conv_out=n_actions,
        hidden_widths=(n_actions, n_actions, n_actions),
        out_dim=n_actions if out_dim is None else out_dim,
    )


# parameter names in canonical (serialization) order
PARAM_NAMES = ("conv_w", "conv_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b",
               "fc3_w", "fc3_b", "head_w", "head_b")


class Network:
    """Weights and biases of the conv + 3 FC + head stack.

    Immutable during forward evaluation; training mutates the arrays in place
    from a single control thread.
    """

    def __init__(self, arch: NetworkArch, params: dict[str, np.ndarray]):
        expected = dict(param_shapes(arch))
        for name in PARAM_NAMES:
            if name not in params:
                raise WeightFormatError(f"missing parameter {name!r}")
            if tuple(params[name].shape) != expected[name]:
                raise WeightFormatError(
                    f"parameter {name!r} has shape {params[name].shape}, "
                    f"expected {expected[name]}"
                )
            if not np.all(np.isfinite(params[name])):
                raise WeightFormatError(f"parameter {name!r} has non-finite entries")
        self.arch = arch
        self.params = {name: params[name] for name in PARAM_NAMES}

    @property
    def dtype(self):
        return self.params["conv_w"].dtype

    def copy(self) -> "Network":
        return Network(self.arch, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "Network":
        return Network(self.arch, {k: v.astype(dtype) for k, v in self.params.items()})

    def checksum_bytes(self) -> bytes:
        return b"".join(self.params[name].tobytes() for name in PARAM_NAMES)


def param_shapes(arch: NetworkArch) -> list[tuple[str, tuple[int, ...]]]:
    h1, h2, h3 = arch.hidden_widths
    flat = arch.m * arch.conv_out
    return [
        ("conv_w", (arch.c_in, arch.conv_out)),
        ("conv_b", (arch.conv_out,)),
        ("fc1_w", (flat, h1)),
        ("fc1_b", (h1,)),
        ("fc2_w", (h1, h2)),
        ("fc2_b", (h2,)),
        ("fc3_w", (h2, h3)),
        ("fc3_b", (h3,)),
        ("head_w", (h3, arch.out_dim)),
        ("head_b", (arch.out_dim,)),
    ]


def init_weights(arch: NetworkArch, seed: int = 0, dtype=np.float32) -> Network:
    """He-uniform fan-in initialization for the ReLU stack; zero biases."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(arch):
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            limit = np.sqrt(6.0 / shape[0])
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return Network(arch, params)


@dataclass
class ForwardCache:
    """Activations retained for backpropagation."""

    x: np.ndarray        # (B, m, c_in)
    conv_z: np.ndarray   # (B, m, conv_out)
    flat: np.ndarray     # (B, m * conv_out), post-ReLU
    zs: list[np.ndarray]   # FC pre-activations
    hs: list[np.ndarray]   # FC post-ReLU activations
    squeezed: bool


def forward(net: Network, state: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on one (m, c_in) observation or a (B, m, c_in) batch.

    The head is linear: Q-values are unbounded, and the classifier applies
    softmax only inside its loss.
    """
    arch = net.arch
    x = np.asarray(state, dtype=net.dtype)
    squeezed = x.ndim == 2
    if squeezed:
        x = x[None, :, :]
    if x.shape[1:] != (arch.m, arch.c_in):
        raise ValueError(
            f"state shape {state.shape} does not match architecture "
            f"({arch.m}, {arch.c_in})"
        )
    p = net.params
    conv_z = x @ p["conv_w"] + p["conv_b"]          # shared across positions
    flat = np.maximum(conv_z, 0).reshape(x.shape[0], arch.m * arch.conv_out)
    zs, hs = [], []
    h = flat
    for layer in ("fc1", "fc2", "fc3"):
        z = h @ p[f"{layer}_w"] + p[f"{layer}_b"]
        h = np.maximum(z, 0)
        zs.append(z)
        hs.append(h)
    out = h @ p["head_w"] + p["head_b"]
    cache = ForwardCache(x=x, conv_z=conv_z, flat=flat, zs=zs, hs=hs, squeezed=squeezed)
    return (out[0] if squeezed else out), cache


def backward(net: Network, cache: ForwardCache, output_gradient: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of the scalar loss whose output gradient is supplied,
    for every parameter, shaped like the parameters."""
    arch = net.arch
    p = net.params
    g = np.asarray(output_gradient, dtype=net.dtype)
    if cache.squeezed:
        g = g[None, :]
    grads: dict[str, np.ndarray] = {}
    grads["head_w"] = cache.hs[2].T @ g
    grads["head_b"] = g.sum(axis=0)
    d = g @ p["head_w"].T
    for i, layer in ((2, "fc3"), (1, "fc2"), (0, "fc1")):
        d = d * (cache.zs[i] > 0)
        prev = cache.hs[i - 1] if i > 0 else cache.flat
        grads[f"{layer}_w"] = prev.T @ d
        grads[f"{layer}_b"] = d.sum(axis=0)
        d = d @ p[f"{layer}_w"].T
    d = d.reshape(cache.conv_z.shape) * (cache.conv_z > 0)
    grads["conv_w"] = np.tensordot(cache.x, d, axes=([0, 1], [0, 1]))
    grads["conv_b"] = d.sum(axis=(0, 1))
    return grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment buffers and the step counter of the Adam optimizer."""

    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init_like(cls, net: Network, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> "AdamState":
        zeros = lambda: {k: np.zeros_like(v) for k, v in net.params.items()}
        return cls(t=0, m=zeros(), v=zeros(), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(net: Network, state: AdamState, grads: dict[str, np.ndarray],
              lr: float) -> None:
    """One bias-corrected Adam update; mutates the network and state in place."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient passed to the optimizer")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, param in net.params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# schedules and losses
# ---------------------------------------------------------------------------


def linear_anneal(start: float, end: float, t: float, horizon: float) -> float:
    """start + (end - start) * min(t / horizon, 1); clamps exactly at the ends."""
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if t <= 0:
        return float(start)
    if t >= horizon:
        return float(end)
    return start + (end - start) * (t / horizon)


def cross_entropy_loss(logits: np.ndarray, label) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy, log-sum-exp stabilized.

    1-D logits with an integer label give one example's loss and gradient;
    2-D (B, c) logits with a length-B label vector give batch-mean loss and a
    gradient already divided by B.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
        labels = np.array([label])
    else:
        labels = np.asarray(label)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(z.shape[0])
    loss = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    if single:
        return loss, grad[0].astype(np.asarray(logits).dtype, copy=False)
    grad /= z.shape[0]
    return loss, grad.astype(np.asarray(logits).dtype, copy=False)


def td_loss(q_predicted, target):
    """Squared temporal-difference error with the error term clipped to [-1, 1].

    loss = (q - y)^2 / 2, gradient = clip(q - y, -1, 1). Works elementwise on
    arrays; scalars in, scalars out.
    """
    q = np.asarray(q_predicted, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(y))):
        raise DivergenceError("non-finite value in TD loss inputs")
    err = q - y
    loss = 0.5 * err * err
    grad = np.clip(err, -1.0, 1.0)
    if np.isscalar(q_predicted) or q.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def numerical_gradients(net: Network, state: np.ndarray, loss_fn: LossFn,
                        step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of loss_fn(forward(net, state)) over every
    parameter. Only uses the forward pass, so it serves as an independent
    check of ``backward``. Run on float64 networks."""
    grads = {}
    for name, param in net.params.items():
        g = np.zeros_like(param)
        flat = param.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lo_plus, _ = loss_fn(forward(net, state)[0])
            flat[i] = orig - step
            lo_minus, _ = loss_fn(forward(net, state)[0])
            flat[i] = orig
            gflat[i] = (lo_plus - lo_minus) / (2.0 * step)
        grads[name] = g
    return grads


def analytic_gradients(net: Network, state: np.ndarray, loss_fn: LossFn) -> dict[str, np.ndarray]:
    """Backpropagated gradients of loss_fn(forward(net, state))."""
    out, cache = forward(net, state)
    _, out_grad = loss_fn(out)
    return backward(net, cache, out_grad)


def max_relative_gradient_error(net: Network, state: np.ndarray, loss_fn: LossFn,
                                step: float = 1e-5) -> float:
    """Worst-case relative disagreement between analytic and finite-difference
    gradients, with a unit floor on the denominator so near-zero entries
    compare absolutely."""
    analytic = analytic_gradients(net, state, loss_fn)
    numeric = numerical_gradients(net, state, loss_fn, step=step)
    worst = 0.0
    for name in analytic:
        a = analytic[name].astype(np.float64)
        n = numeric[name]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


# ---------------------------------------------------------------------------
# weight serialization
# ---------------------------------------------------------------------------

_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


def write_container(path: str | Path, header: dict, arrays: list[np.ndarray]) -> None:
    """One-file container: a JSON header line followed by the raw little-endian
    array payload, in header order. Byte-identical for identical inputs."""
    names = [t["name"] for t in header["tensors"]]
    if len(names) != len(arrays):
        raise WeightFormatError("tensor header does not match array count")
    blob = bytearray()
    for spec, arr in zip(header["tensors"], arrays):
        code = _DTYPE_CODES[spec["dtype"]]
        blob += np.ascontiguousarray(arr).astype(code).tobytes()
    text = json.dumps(header, sort_keys=True, separators=(",", ":"))
    with Path(path).open("wb") as fh:
        fh.write(text.encode("utf-8") + b"\n")
        fh.write(bytes(blob))


def read_container(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise WeightFormatError(f"weight file not found: {path}")
    with path.open("rb") as fh:
        first = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(first.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightFormatError(f"{path}: corrupt header ({e})") from e
    if header.get("format_version") != WEIGHT_FORMAT_VERSION:
        raise WeightFormatError(
            f"{path}: unsupported format version {header.get('format_version')!r}"
        )
    arrays = []
    offset = 0
    for spec in header.get("tensors", []):
        code = _DTYPE_CODES.get(spec["dtype"])
        if code is None:
            raise WeightFormatError(f"{path}: unknown tensor dtype {spec['dtype']!r}")
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * np.dtype(code).itemsize
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise WeightFormatError(f"{path}: truncated payload at tensor {spec['name']!r}")
        arrays.append(np.frombuffer(chunk, dtype=code).reshape(spec["shape"]).copy())
        offset += nbytes
    if offset != len(payload):
        raise WeightFormatError(f"{path}: {len(payload) - offset} trailing bytes")
    return header, arrays


def _tensor_header(net: Network) -> list[dict]:
    return [
        {"name": name, "shape": list(net.params[name].shape),
         "dtype": str(net.params[name].dtype)}
        for name in PARAM_NAMES
    ]


def save_weights(net: Network, path: str | Path, extra: dict | None = None) -> None:
    """Self-describing weight file: format version, architecture block, and the
    flat row-major little-endian parameter arrays."""
    header = {
        "format_version": WEIGHT_FORMAT_VERSION,
        "arch": net.arch.to_dict(),
        "tensors": _tensor_header(net),
    }
    if extra:
        header.update(extra)
    write_container(path, header, [net.params[name] for name in PARAM_NAMES])


def load_weights(path: str | Path, expected_arch: NetworkArch | None = None) -> Network:
    header, arrays = read_container(path)
    if "arch" not in header:
        raise WeightFormatError(f"{path}: header is missing the architecture block")
    arch = NetworkArch.from_dict(header["arch"])
    if expected_arch is not None and arch != expected_arch:
        raise WeightFormatError(
            f"{path}: file architecture {arch} does not match requested {expected_arch}"
        )
    names = [t["name"] for t in header["tensors"]]
    if names != list(PARAM_NAMES):
        raise WeightFormatError(f"{path}: unexpected tensor list {names}")
    return Network(arch, dict(zip(names, arrays)))
