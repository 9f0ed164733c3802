"""Minimal fp64 neural-network core: dense / conv1d / lstm_cell / relu / tanh /
l2norm layers with hand-written backward passes, Adam, and a central-difference
gradient checker.

Every layer exposes ``forward(x) -> (y, cache)`` and
``backward(cache, gy) -> (gx, param_grads)``; forward is pure and caches carry
whatever backward needs. Parameters live in ``layer.params`` (dict name ->
float64 array) and are updated in place by the optimizer.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NonFiniteGradientError, ShapeError, ZeroNormError


def _check_shape(name: str, arr: np.ndarray, expected: tuple) -> None:
    """Compare trailing dims against `expected`, ignoring None entries."""
    if arr.ndim != len(expected):
        raise ShapeError(f"{name}: expected rank {len(expected)} {expected}, got {arr.shape}")
    for got, want in zip(arr.shape, expected):
        if want is not None and got != want:
            raise ShapeError(f"{name}: expected dims {expected}, got {arr.shape}")


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization."""
    limit = np.sqrt(1.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    """Affine layer y = x @ w + b for inputs (B, in_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.params = {
            "w": uniform_init(rng, (in_dim, out_dim), in_dim),
            "b": uniform_init(rng, (out_dim,), in_dim),
        }

    def forward(self, x: np.ndarray):
        _check_shape("dense input", x, (None, self.in_dim))
        return x @ self.params["w"] + self.params["b"], x

    def backward(self, cache, gy: np.ndarray):
        x = cache
        _check_shape("dense upstream", gy, (None, self.out_dim))
        gw = x.T @ gy
        gb = gy.sum(axis=0)
        gx = gy @ self.params["w"].T
        return gx, {"w": gw, "b": gb}


class Conv1d:
    """'Valid' 1-D convolution over (B, C_in, W) inputs with a stride.

    Output width is floor((W - kernel) / stride) + 1.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int,
                 rng: np.random.Generator):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        fan_in = in_channels * kernel
        self.params = {
            "w": uniform_init(rng, (out_channels, in_channels, kernel), fan_in),
            "b": uniform_init(rng, (out_channels,), fan_in),
        }

    def out_width(self, in_width: int) -> int:
        if in_width < self.kernel:
            raise ShapeError(f"conv1d input width {in_width} < kernel {self.kernel}")
        return (in_width - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray):
        _check_shape("conv1d input", x, (None, self.in_channels, None))
        b_sz, c, w = x.shape
        j = self.out_width(w)
        windows = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)
        windows = windows[:, :, :: self.stride, :][:, :, :j, :]  # (B, C, J, K)
        cols = windows.transpose(0, 2, 1, 3).reshape(b_sz * j, c * self.kernel)
        wmat = self.params["w"].reshape(self.out_channels, c * self.kernel)
        y = cols @ wmat.T + self.params["b"]
        y = y.reshape(b_sz, j, self.out_channels).transpose(0, 2, 1)
        return np.ascontiguousarray(y), (x.shape, cols)

    def backward(self, cache, gy: np.ndarray):
        x_shape, cols = cache
        b_sz, c, w = x_shape
        j = self.out_width(w)
        _check_shape("conv1d upstream", gy, (None, self.out_channels, j))
        gy_rows = gy.transpose(0, 2, 1).reshape(b_sz * j, self.out_channels)
        wmat = self.params["w"].reshape(self.out_channels, c * self.kernel)
        gw = (gy_rows.T @ cols).reshape(self.params["w"].shape)
        gb = gy_rows.sum(axis=0)
        gcols = gy_rows @ wmat  # (B*J, C*K)
        gwin = gcols.reshape(b_sz, j, c, self.kernel).transpose(0, 2, 1, 3)
        gx = np.zeros(x_shape, dtype=np.float64)
        base = np.arange(j) * self.stride
        for k in range(self.kernel):
            gx[:, :, base + k] += gwin[:, :, :, k]
        return gx, {"w": gw, "b": gb}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LSTMCell:
    """Single LSTM cell with gates packed as [input, forget, cell, output].

    All parameters are initialized with fan_in = hidden_size.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        h = hidden_size
        self.params = {
            "wx": uniform_init(rng, (4 * h, input_size), h),
            "wh": uniform_init(rng, (4 * h, h), h),
            "b": uniform_init(rng, (4 * h,), h),
        }

    def zero_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        h = np.zeros((batch, self.hidden_size))
        return h, h.copy()

    def forward(self, x: np.ndarray, state: tuple[np.ndarray, np.ndarray]):
        _check_shape("lstm input", x, (None, self.input_size))
        h_prev, c_prev = state
        _check_shape("lstm hidden", h_prev, (x.shape[0], self.hidden_size))
        z = x @ self.params["wx"].T + h_prev @ self.params["wh"].T + self.params["b"]
        hs = self.hidden_size
        i = _sigmoid(z[:, 0 * hs:1 * hs])
        f = _sigmoid(z[:, 1 * hs:2 * hs])
        g = np.tanh(z[:, 2 * hs:3 * hs])
        o = _sigmoid(z[:, 3 * hs:4 * hs])
        c_new = f * c_prev + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        cache = (x, h_prev, c_prev, i, f, g, o, tanh_c)
        return (h_new, c_new), cache

    def backward(self, cache, gh: np.ndarray, gc: np.ndarray):
        """Given grads w.r.t. (h_new, c_new), return (gx, gh_prev, gc_prev, param_grads)."""
        x, h_prev, c_prev, i, f, g, o, tanh_c = cache
        go = gh * tanh_c
        gc_total = gc + gh * o * (1.0 - tanh_c * tanh_c)
        gi = gc_total * g
        gf = gc_total * c_prev
        gg = gc_total * i
        gc_prev = gc_total * f
        dz = np.concatenate(
            [
                gi * i * (1.0 - i),
                gf * f * (1.0 - f),
                gg * (1.0 - g * g),
                go * o * (1.0 - o),
            ],
            axis=1,
        )
        grads = {
            "wx": dz.T @ x,
            "wh": dz.T @ h_prev,
            "b": dz.sum(axis=0),
        }
        gx = dz @ self.params["wx"]
        gh_prev = dz @ self.params["wh"]
        return gx, gh_prev, gc_prev, grads


class ReLU:
    params: dict = {}

    def forward(self, x: np.ndarray):
        return np.maximum(x, 0.0), x

    def backward(self, cache, gy: np.ndarray):
        x = cache
        if gy.shape != x.shape:
            raise ShapeError(f"relu upstream: expected {x.shape}, got {gy.shape}")
        return gy * (x > 0.0), {}


class Tanh:
    params: dict = {}

    def forward(self, x: np.ndarray):
        y = np.tanh(x)
        return y, y

    def backward(self, cache, gy: np.ndarray):
        y = cache
        if gy.shape != y.shape:
            raise ShapeError(f"tanh upstream: expected {y.shape}, got {gy.shape}")
        return gy * (1.0 - y * y), {}


class L2Norm:
    """Row-wise projection onto the unit sphere; zero rows are an error."""

    params: dict = {}

    def forward(self, x: np.ndarray):
        arr = np.atleast_2d(x)
        norms = np.linalg.norm(arr, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ZeroNormError("l2norm received a zero row")
        y = arr / norms
        if x.ndim == 1:
            return y[0], (y, norms, 1)
        return y, (y, norms, 2)

    def backward(self, cache, gy: np.ndarray):
        y, norms, ndim = cache
        g = np.atleast_2d(gy)
        if g.shape != y.shape:
            raise ShapeError(f"l2norm upstream: expected {y.shape}, got {g.shape}")
        inner = np.sum(g * y, axis=1, keepdims=True)
        gx = (g - y * inner) / norms
        return (gx[0] if ndim == 1 else gx), {}


class Adam:
    """Bias-corrected Adam over a flat dict of named parameters.

    ``lr`` may be a float or a function mapping parameter name -> learning
    rate, which is how encoder and action-head groups get different rates.
    """

    def __init__(
        self,
        lr: float | Callable[[str], float],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _rate(self, name: str) -> float:
        return self.lr(name) if callable(self.lr) else self.lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Apply one update in place. Validates shapes and finiteness first so a
        bad gradient aborts without touching any weight."""
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                raise ShapeError(f"missing gradient for {name}")
            if g.shape != p.shape:
                raise ShapeError(f"grad {name}: expected {p.shape}, got {g.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient in {name}")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / b1t
            v_hat = v / b2t
            p -= self._rate(name) * m_hat / (np.sqrt(v_hat) + self.eps)


def finite_diff_check(
    loss_fn: Callable[[], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` re-evaluates the scalar loss (and its analytic gradients) at the
    current parameter values; parameters are perturbed in place, elementwise.
    The relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    _, analytic = loss_fn()
    worst = 0.0
    for name, p in params.items():
        grad = analytic[name]
        flat = p.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.shape[0]):
            old = flat[idx]
            flat[idx] = old + h
            lp, _ = loss_fn()
            flat[idx] = old - h
            lm, _ = loss_fn()
            flat[idx] = old
            fd = (lp - lm) / (2.0 * h)
            a = gflat[idx]
            rel = abs(fd - a) / max(abs(fd), abs(a), 1e-8)
            worst = max(worst, rel)
    return worst


def collect_params(layers: dict[str, object]) -> dict[str, np.ndarray]:
    """Flatten {layer_name: layer} into {"layer.param": array} (live views)."""
    out: dict[str, np.ndarray] = {}
    for lname, layer in layers.items():
        for pname, arr in layer.params.items():
            out[f"{lname}.{pname}"] = arr
    return out


def zero_grads_like(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def accumulate_grads(
    total: dict[str, np.ndarray], layer_name: str, grads: dict[str, np.ndarray]
) -> None:
    for pname, g in grads.items():
        total[f"{layer_name}.{pname}"] += g
