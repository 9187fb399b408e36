"""Adam and RMSprop with a halve-on-plateau adaptive learning rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError


@dataclass
class OptimizerSpec:
    """Optimizer kind, learning rate, adaptive-rate policy, and constants.

    eps defaults per kind (adam 1e-8, rmsprop 1e-7) when left as None.
    """

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.9
    eps: float | None = None
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    lr_floor: float = 1e-5

    def __post_init__(self):
        if self.kind not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        for name, v in (("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)):
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")

    @property
    def resolved_eps(self) -> float:
        if self.eps is not None:
            return self.eps
        return 1e-8 if self.kind == "adam" else 1e-7


class _Optimizer:
    def __init__(self, spec: OptimizerSpec):
        self.spec = spec
        self.lr = spec.learning_rate

    def _check(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            g = grads.get(name)
            if g is None or g.shape != p.shape:
                got = None if g is None else g.shape
                raise ShapeMismatchError(f"gradient for {name!r}: shape {got} vs {p.shape}")


class Adam(_Optimizer):
    """Bias-corrected first/second moment update, applied in place."""

    def __init__(self, spec: OptimizerSpec):
        super().__init__(spec)
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self._check(params, grads)
        self.t += 1
        b1, b2, eps = self.spec.beta1, self.spec.beta2, self.spec.resolved_eps
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / (1.0 - b1 ** self.t)
            vhat = v / (1.0 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + eps)


class RMSprop(_Optimizer):
    """Decayed squared-gradient accumulator update, applied in place."""

    def __init__(self, spec: OptimizerSpec):
        super().__init__(spec)
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self._check(params, grads)
        rho, eps = self.spec.rho, self.spec.resolved_eps
        for name, p in params.items():
            g = grads[name]
            v = self.v.setdefault(name, np.zeros_like(p))
            v *= rho
            v += (1.0 - rho) * g * g
            p -= self.lr * g / (np.sqrt(v) + eps)


def make_optimizer(spec: OptimizerSpec) -> _Optimizer:
    return Adam(spec) if spec.kind == "adam" else RMSprop(spec)


class PlateauScheduler:
    """Halve the optimizer's learning rate when the monitored loss stalls.

    One observe() call per evaluation; after *patience* evaluations with
    no improvement the rate is multiplied by *factor* (never below
    *floor*) and the stall counter resets.
    """

    def __init__(self, optimizer: _Optimizer, spec: OptimizerSpec | None = None):
        spec = spec or optimizer.spec
        self.optimizer = optimizer
        self.factor = spec.plateau_factor
        self.patience = spec.plateau_patience
        self.floor = spec.lr_floor
        self.best = np.inf
        self.stalled = 0

    def observe(self, loss: float) -> bool:
        if loss < self.best:
            self.best = loss
            self.stalled = 0
            return False
        self.stalled += 1
        if self.stalled >= self.patience:
            self.optimizer.lr = max(self.floor, self.optimizer.lr * self.factor)
            self.stalled = 0
            return True
        return False
