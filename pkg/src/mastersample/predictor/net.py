"""Feed-forward success classifier trained online with Adam.

Architecture: dense(256) -> batch norm -> ELU -> dense(128) -> ELU ->
dense(1) -> sigmoid. Forward and backward passes are written out in numpy so
the whole model is a handful of arrays that checkpoint cleanly.
"""

from __future__ import annotations

import numpy as np

PARAM_NAMES = ("W1", "b1", "gamma", "beta", "W2", "b2", "W3", "b3")

_P_LO = np.finfo(np.float64).tiny
_P_HI = 1.0 - np.finfo(np.float64).epsneg


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def _elu_grad(x, out):
    return np.where(x > 0, 1.0, out + 1.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    p = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(p, _P_LO, _P_HI)


def bce_with_logits(logits, labels) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


class PredictorNet:
    """Binary classifier ``h(z)`` estimating P(candidate beats the percentile).

    Args:
        input_dim: latent dimension.
        seed: initializer seed. The k-th re-initialization draws from
            ``default_rng([seed, k])``, so any (seed, k) pair is reproducible.
        hidden: widths of the two hidden layers.
        learning_rate, batch_size: Adam step size and mini-batch size.
        dtype: arithmetic dtype for training and inference.
        generation: initializer generation to start from (0 for a new run).
    """

    def __init__(
        self,
        input_dim: int,
        seed: int = 0,
        hidden: tuple[int, int] = (256, 128),
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        dtype=np.float32,
        momentum: float = 0.1,
        eps: float = 1e-5,
        generation: int = 0,
    ):
        if input_dim < 1:
            raise ValueError("input_dim must be positive")
        self.input_dim = input_dim
        self.seed = seed
        self.hidden = tuple(hidden)
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.dtype = np.dtype(dtype)
        self.momentum = momentum
        self.eps = eps
        self.generation = generation
        self._initialize()

    def _initialize(self) -> None:
        rng = np.random.default_rng([self.seed, self.generation])
        h1, h2 = self.hidden
        params = {}
        for name, fan_in, fan_out in (("1", self.input_dim, h1), ("2", h1, h2), ("3", h2, 1)):
            bound = 1.0 / np.sqrt(fan_in)
            params["W" + name] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            params["b" + name] = rng.uniform(-bound, bound, size=fan_out)
        params["gamma"] = np.ones(h1)
        params["beta"] = np.zeros(h1)
        self.params = {k: params[k].astype(self.dtype) for k in PARAM_NAMES}
        self.running_mean = np.zeros(h1, dtype=self.dtype)
        self.running_var = np.ones(h1, dtype=self.dtype)
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_t = 0

    def reinitialize(self) -> None:
        """Fresh random parameters and optimizer state (next initializer generation)."""
        self.generation += 1
        self._initialize()

    def _forward(self, X, training: bool):
        p = self.params
        X = np.asarray(X, dtype=self.dtype)
        a1 = X @ p["W1"] + p["b1"]
        batch_stats = training and X.shape[0] >= 2
        if batch_stats:
            mean = a1.mean(axis=0)
            var = a1.var(axis=0)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (a1 - mean) * inv_std
        bn = p["gamma"] * xhat + p["beta"]
        h1 = elu(bn)
        a2 = h1 @ p["W2"] + p["b2"]
        h2 = elu(a2)
        logits = (h2 @ p["W3"] + p["b3"])[:, 0]
        cache = dict(X=X, xhat=xhat, inv_std=inv_std, bn=bn, h1=h1, a2=a2, h2=h2,
                     batch_stats=batch_stats, mean=mean, var=var)
        return logits, cache

    def logits(self, X, training: bool = False) -> np.ndarray:
        return self._forward(np.atleast_2d(X), training)[0].astype(np.float64)

    def score(self, X) -> np.ndarray:
        """Inference-mode success probabilities, one per row of ``X``."""
        return sigmoid(self.logits(X, training=False))

    def loss_and_grads(self, X, labels) -> tuple[float, dict[str, np.ndarray]]:
        """Training-mode mean BCE and its gradient. Does not touch running stats."""
        loss, grads, _ = self._loss_and_grads(X, labels)
        return loss, grads

    def _loss_and_grads(self, X, labels):
        logits, c = self._forward(np.atleast_2d(X), training=True)
        y = np.asarray(labels, dtype=self.dtype)
        B = logits.shape[0]
        p = self.params
        g = {}

        dlogit = ((sigmoid(logits) - y) / B).astype(self.dtype)[:, None]
        g["W3"] = c["h2"].T @ dlogit
        g["b3"] = dlogit.sum(axis=0)
        dh2 = dlogit @ p["W3"].T
        da2 = dh2 * _elu_grad(c["a2"], c["h2"])
        g["W2"] = c["h1"].T @ da2
        g["b2"] = da2.sum(axis=0)
        dh1 = da2 @ p["W2"].T
        dbn = dh1 * _elu_grad(c["bn"], c["h1"])
        g["gamma"] = (dbn * c["xhat"]).sum(axis=0)
        g["beta"] = dbn.sum(axis=0)
        dxhat = dbn * p["gamma"]
        if c["batch_stats"]:
            da1 = (c["inv_std"] / B) * (
                B * dxhat - dxhat.sum(axis=0) - c["xhat"] * (dxhat * c["xhat"]).sum(axis=0)
            )
        else:
            da1 = dxhat * c["inv_std"]
        g["W1"] = c["X"].T @ da1
        g["b1"] = da1.sum(axis=0)
        return bce_with_logits(logits, y), g, c

    def _update_running_stats(self, mean, var, batch: int) -> None:
        m = self.momentum
        self.running_mean = (1 - m) * self.running_mean + m * mean
        self.running_var = (1 - m) * self.running_var + m * var * (batch / (batch - 1))

    def _adam(self, grads, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
        self.adam_t += 1
        t = self.adam_t
        lr_t = self.learning_rate * np.sqrt(1 - beta2**t) / (1 - beta1**t)
        for k in PARAM_NAMES:
            g, m, v = grads[k], self.adam_m[k], self.adam_v[k]
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * (g * g)
            step = np.sqrt(v)
            step += eps
            np.divide(m, step, out=step)
            step *= lr_t
            self.params[k] -= step

    def train_step(self, X, labels, rng: np.random.Generator, max_batches: int | None = None) -> float:
        """One shuffled epoch of mini-batch Adam updates; returns the mean batch loss.

        ``max_batches`` stops the epoch early after that many mini-batches.
        """
        X = np.atleast_2d(np.asarray(X, dtype=self.dtype))
        labels = np.asarray(labels, dtype=self.dtype)
        if X.shape[0] == 0:
            raise ValueError("train_step needs at least one labeled sample")
        if labels.shape[0] != X.shape[0]:
            raise ValueError("one label per sample required")
        order = rng.permutation(X.shape[0])
        if max_batches is not None:
            order = order[: max_batches * self.batch_size]
        losses = []
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            xb, yb = X[idx], labels[idx]
            loss, grads, cache = self._loss_and_grads(xb, yb)
            if cache["batch_stats"]:
                self._update_running_stats(cache["mean"], cache["var"], len(idx))
            self._adam(grads)
            losses.append(loss)
        return float(np.mean(losses))

    def state_dict(self) -> dict:
        return {
            "generation": self.generation,
            "params": {k: v.copy() for k, v in self.params.items()},
            "running_mean": self.running_mean.copy(),
            "running_var": self.running_var.copy(),
            "adam_m": {k: v.copy() for k, v in self.adam_m.items()},
            "adam_v": {k: v.copy() for k, v in self.adam_v.items()},
            "adam_t": self.adam_t,
        }

    def load_state_dict(self, state: dict) -> None:
        cast = lambda a: np.array(a, dtype=self.dtype)  # noqa: E731
        self.generation = int(state["generation"])
        self.params = {k: cast(state["params"][k]) for k in PARAM_NAMES}
        self.running_mean = cast(state["running_mean"])
        self.running_var = cast(state["running_var"])
        self.adam_m = {k: cast(state["adam_m"][k]) for k in PARAM_NAMES}
        self.adam_v = {k: cast(state["adam_v"][k]) for k in PARAM_NAMES}
        self.adam_t = int(state["adam_t"])
