"""Function approximation substrate.

Named parameter tensors, a small MLP with hand-derived gradients, SGD/Adam
updates with global-norm clipping, hard target synchronization, and a JSON
checkpoint codec. Everything operates on explicit float64 numpy arrays;
there is no autodiff framework underneath.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "ParamSet",
    "MlpSpec",
    "OptimizerState",
    "init_mlp_params",
    "forward",
    "backward",
    "gradient",
    "global_norm",
    "optimize_step",
    "target_sync",
    "params_to_jsonable",
    "params_from_jsonable",
]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# tag -> (value, derivative w.r.t. pre-activation)
ACTIVATIONS = {
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(np.float64)),
    "softplus": (lambda z: np.logaddexp(0.0, z), _sigmoid),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}


class ParamSet:
    """Named collection of float64 tensors; shapes are frozen at construction."""

    __slots__ = ("_tensors",)

    def __init__(self, tensors: dict[str, np.ndarray]):
        self._tensors: dict[str, np.ndarray] = {}
        for name, value in tensors.items():
            arr = np.array(value, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter {name!r}")
            self._tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        arr = np.asarray(value, dtype=np.float64)
        if name not in self._tensors:
            raise KeyError(f"unknown parameter {name!r}")
        if arr.shape != self._tensors[name].shape:
            raise ValueError(
                f"shape mismatch for {name!r}: {arr.shape} != {self._tensors[name].shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in parameter {name!r}")
        self._tensors[name] = arr.copy()

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: arr.shape for name, arr in self._tensors.items()}

    def copy(self) -> "ParamSet":
        return ParamSet({name: arr.copy() for name, arr in self._tensors.items()})

    def validate_finite(self) -> None:
        for name, arr in self._tensors.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter {name!r}")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input first, output last) plus activation tags."""

    widths: tuple[int, ...]
    hidden: str = "softplus"
    output: str = "identity"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("need at least an input and an output width")
        if any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")
        for tag in (self.hidden, self.output):
            if tag not in ACTIVATIONS:
                raise ValueError(f"unknown activation {tag!r}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator) -> ParamSet:
    """He-style init: weights ~ N(0, 2/fan_in), biases zero."""
    tensors: dict[str, np.ndarray] = {}
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        tensors[f"w{i}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        tensors[f"b{i}"] = np.zeros(fan_out)
    return ParamSet(tensors)


def _as_batch(x: np.ndarray, width: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"input shape {np.shape(x)} does not match width {width}")
    return arr, single


def forward(params: ParamSet, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a vector or a (batch, in_dim) matrix."""
    a, single = _as_batch(x, spec.in_dim)
    for i in range(spec.n_layers):
        z = a @ params[f"w{i}"] + params[f"b{i}"]
        tag = spec.output if i == spec.n_layers - 1 else spec.hidden
        a = ACTIVATIONS[tag][0](z)
    return a[0] if single else a


def backward(
    params: ParamSet, spec: MlpSpec, x: np.ndarray, upstream: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of sum(upstream * output) w.r.t. parameters and input.

    Returns (param_grads, input_grad); batch contributions are summed into
    the parameter gradients.
    """
    a, single = _as_batch(x, spec.in_dim)
    up, up_single = _as_batch(upstream, spec.out_dim)
    if single != up_single or up.shape[0] != a.shape[0]:
        raise ValueError("upstream batch shape does not match input")

    # forward pass, caching layer inputs and pre-activations
    inputs = [a]
    pre = []
    for i in range(spec.n_layers):
        z = inputs[-1] @ params[f"w{i}"] + params[f"b{i}"]
        pre.append(z)
        tag = spec.output if i == spec.n_layers - 1 else spec.hidden
        inputs.append(ACTIVATIONS[tag][0](z))

    grads: dict[str, np.ndarray] = {}
    delta = up
    for i in reversed(range(spec.n_layers)):
        tag = spec.output if i == spec.n_layers - 1 else spec.hidden
        delta = delta * ACTIVATIONS[tag][1](pre[i])
        grads[f"w{i}"] = inputs[i].T @ delta
        grads[f"b{i}"] = delta.sum(axis=0)
        delta = delta @ params[f"w{i}"].T
    return grads, (delta[0] if single else delta)


def gradient(
    params: ParamSet, spec: MlpSpec, x: np.ndarray, upstream: np.ndarray
) -> dict[str, np.ndarray]:
    """Parameter gradients of sum(upstream * output)."""
    return backward(params, spec, x, upstream)[0]


@dataclass
class OptimizerState:
    """SGD or Adam with optional global-norm gradient clipping."""

    lr: float
    algo: str = "adam"
    clip_norm: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.algo not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.algo!r}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def optimize_step(opt: OptimizerState, params: ParamSet, grads: dict[str, np.ndarray]) -> ParamSet:
    """Apply one update in place; rejects non-finite gradients."""
    shapes = params.shapes()
    if set(grads) != set(shapes):
        raise ValueError("gradient names do not match parameters")
    for name, g in grads.items():
        if np.shape(g) != shapes[name]:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for {name!r}; step rejected")

    scale = 1.0
    if opt.clip_norm is not None:
        norm = global_norm(grads)
        if norm > opt.clip_norm:
            scale = opt.clip_norm / norm

    opt.step += 1
    for name in params.names():
        g = np.asarray(grads[name], dtype=np.float64) * scale
        if opt.algo == "sgd":
            update = opt.lr * g
        else:
            if name not in opt.m:
                opt.m[name] = np.zeros_like(g)
                opt.v[name] = np.zeros_like(g)
            opt.m[name] = opt.beta1 * opt.m[name] + (1 - opt.beta1) * g
            opt.v[name] = opt.beta2 * opt.v[name] + (1 - opt.beta2) * g * g
            m_hat = opt.m[name] / (1 - opt.beta1**opt.step)
            v_hat = opt.v[name] / (1 - opt.beta2**opt.step)
            update = opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
        params[name] = params[name] - update
    params.validate_finite()
    return params


def target_sync(online: ParamSet, target: ParamSet) -> ParamSet:
    """Hard copy of online values into the target parameters."""
    if online.shapes() != target.shapes():
        raise ValueError("parameter shapes do not match")
    for name, arr in online.items():
        target[name] = arr
    return target


def params_to_jsonable(params: ParamSet) -> dict:
    """Mapping of name -> {shape, flat row-major data}; round-trips bit-exactly."""
    return {
        name: {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
        for name, arr in params.items()
    }


def params_from_jsonable(doc: dict) -> ParamSet:
    tensors = {}
    for name, entry in doc.items():
        shape = tuple(entry["shape"])
        tensors[name] = np.array(entry["data"], dtype=np.float64).reshape(shape, order="C")
    return ParamSet(tensors)
