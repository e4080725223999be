"""Dense networks with hand-written exact gradients, 64-bit throughout.

Three consumers: the Gaussian policy (fixed diagonal std, trainable mean), the
value function, and the discriminator. Beyond ordinary backprop the
discriminator needs gradients of its output with respect to its *input*
(input_gradient) and parameter gradients of the squared input-gradient norm
(grad_norm_param_grads, "double backprop") for the gradient penalty; rectifier
masks are treated as locally constant, which is exact almost everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError(f"invalid layer sizes {self}")

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.in_dim, *self.hidden, self.out_dim]
        return list(zip(dims[1:], dims[:-1]))  # (fan_out, fan_in) per layer


class Mlp:
    """Rectifier MLP with a linear output layer and momentum buffers."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator,
                 out_scale: float = 1.0):
        self.spec = spec
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for li, (fan_out, fan_in) in enumerate(spec.layer_sizes):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            if li == len(spec.layer_sizes) - 1:
                w *= out_scale
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self.m_w = [np.zeros_like(w) for w in self.weights]
        self.m_b = [np.zeros_like(b) for b in self.biases]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x) -> tuple[np.ndarray, list]:
        """Returns (output, cache); accepts (in,) or (B, in)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.spec.in_dim:
            raise ValueError(f"input dim {a.shape[1]} != spec {self.spec.in_dim}")
        activations = [a]
        for li in range(self.n_layers):
            z = a @ self.weights[li].T + self.biases[li]
            a = np.maximum(z, 0.0) if li < self.n_layers - 1 else z
            activations.append(a)
        cache = (activations, single)
        out = activations[-1]
        return (out[0] if single else out), cache

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def value(self, x) -> np.ndarray | float:
        """Scalar-output convenience: squeezes the trailing dimension."""
        y = self(x)
        return float(y[0]) if y.ndim == 1 else y[:, 0]

    def backward(self, cache, grad_out) -> tuple[list, list, np.ndarray]:
        """Exact gradients for the scalar loss whose output grad is supplied.

        Parameter gradients are summed over the batch; the caller folds any
        1/B into grad_out. Also returns the gradient w.r.t. the input.
        """
        activations, single = cache
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        if g.shape != activations[-1].shape:
            raise ValueError("output gradient does not match cached forward")
        gws = [None] * self.n_layers
        gbs = [None] * self.n_layers
        for li in range(self.n_layers - 1, -1, -1):
            if li < self.n_layers - 1:
                g = g * (activations[li + 1] > 0.0)
            gws[li] = g.T @ activations[li]
            gbs[li] = g.sum(axis=0)
            g = g @ self.weights[li]
        return gws, gbs, (g[0] if single else g)

    def _input_grad_chain(self, x):
        """Backward residuals delta_l for a scalar-output net; see below."""
        if self.spec.out_dim != 1:
            raise ValueError("input gradients require a scalar-output network")
        y, (activations, single) = self.forward(x)
        B = activations[0].shape[0]
        deltas = [None] * self.n_layers
        g = np.ones((B, 1))
        for li in range(self.n_layers - 1, -1, -1):
            if li < self.n_layers - 1:
                g = g * (activations[li + 1] > 0.0)
            deltas[li] = g
            g = g @ self.weights[li]
        return y, activations, deltas, g, single

    def input_gradient(self, x) -> np.ndarray:
        """d output / d input for a scalar-output network."""
        _, _, _, g, single = self._input_grad_chain(x)
        return g[0] if single else g

    def grad_norm_param_grads(self, x) -> tuple[float, list, list]:
        """Penalty mean_b ||d y_b / d x_b||^2 and its parameter gradients.

        Rectifier masks are held constant (exact away from kinks). Biases get
        zero gradient: they influence the penalty only through mask flips.
        """
        _, activations, deltas, g, _ = self._input_grad_chain(x)
        B = g.shape[0]
        penalty = float(np.sum(g * g) / B)
        t = (2.0 / B) * g
        gws = [None] * self.n_layers
        gbs = [np.zeros_like(b) for b in self.biases]
        for li in range(self.n_layers):
            v = t @ self.weights[li].T
            gws[li] = deltas[li].T @ t
            if li < self.n_layers - 1:
                t = v * (activations[li + 1] > 0.0)
        return penalty, gws, gbs


def sgd_momentum_step(net: Mlp, gws, gbs, stepsize: float, momentum: float) -> bool:
    """m <- momentum m + g; p <- p - stepsize m. Non-finite grads reject the
    whole update and leave parameters and momentum untouched."""
    for g in (*gws, *gbs):
        if not np.all(np.isfinite(g)):
            return False
    for li in range(net.n_layers):
        net.m_w[li] = momentum * net.m_w[li] + gws[li]
        net.m_b[li] = momentum * net.m_b[li] + gbs[li]
        net.weights[li] -= stepsize * net.m_w[li]
        net.biases[li] -= stepsize * net.m_b[li]
    return True


class GaussianPolicy:
    """Gaussian action distribution with net-computed mean and fixed std."""

    def __init__(self, net: Mlp, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = np.full(net.spec.out_dim, float(sigma))
        if sigma.shape != (net.spec.out_dim,) or np.any(sigma <= 0.0):
            raise ValueError("sigma must be positive, one entry per action dim")
        self.net = net
        self.sigma = sigma

    def sample(self, x, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        mean = self.net(x)
        action = mean + self.sigma * rng.standard_normal(mean.shape)
        return action, self.log_prob(mean, action)

    def log_prob(self, mean, action):
        """Exact diagonal-Gaussian log density; batched or single."""
        z = (np.asarray(action) - np.asarray(mean)) / self.sigma
        axis = -1
        lp = (-0.5 * np.sum(z * z, axis=axis)
              - np.sum(np.log(self.sigma)) - 0.5 * len(self.sigma) * LOG_2PI)
        return float(lp) if np.ndim(lp) == 0 else lp

    def dlogp_dmean(self, mean, action) -> np.ndarray:
        return (np.asarray(action) - np.asarray(mean)) / (self.sigma**2)


# -- parameter (de)serialization ----------------------------------------------

def net_to_arrays(net: Mlp, prefix: str) -> dict:
    out = {f"{prefix}/spec": np.array([net.spec.in_dim, *net.spec.hidden,
                                       net.spec.out_dim], dtype=np.int64)}
    for li in range(net.n_layers):
        out[f"{prefix}/w{li}"] = net.weights[li]
        out[f"{prefix}/b{li}"] = net.biases[li]
        out[f"{prefix}/mw{li}"] = net.m_w[li]
        out[f"{prefix}/mb{li}"] = net.m_b[li]
    return out


def net_from_arrays(data: dict, prefix: str) -> Mlp:
    dims = [int(v) for v in data[f"{prefix}/spec"]]
    spec = MlpSpec(dims[0], tuple(dims[1:-1]), dims[-1])
    net = Mlp.__new__(Mlp)
    net.spec = spec
    net.weights = [np.array(data[f"{prefix}/w{li}"], dtype=float)
                   for li in range(len(spec.layer_sizes))]
    net.biases = [np.array(data[f"{prefix}/b{li}"], dtype=float)
                  for li in range(len(spec.layer_sizes))]
    net.m_w = [np.array(data[f"{prefix}/mw{li}"], dtype=float)
               for li in range(len(spec.layer_sizes))]
    net.m_b = [np.array(data[f"{prefix}/mb{li}"], dtype=float)
               for li in range(len(spec.layer_sizes))]
    for (fan_out, fan_in), w in zip(spec.layer_sizes, net.weights):
        if w.shape != (fan_out, fan_in):
            raise ValueError("checkpoint weights do not match their recorded spec")
    return net
