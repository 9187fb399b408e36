"""Central finite-difference verification of analytic gradients.

Every loss evaluation reseeds the same rng, which freezes dropout masks
across perturbed evaluations; with a fixed mask, dropout is a linear map
and its gradient is exact, so the check covers every layer kind.
"""

from __future__ import annotations

import numpy as np

from .network import evaluate_loss


def grad_check(net, inputs, target, loss_kind: str = "bce", h: float = 1e-5,
               mask_seed: int = 0x5EED) -> float:
    """Max relative error between analytic and numeric gradients.

    Relative error per parameter element is |a - n| / max(1, |a|, |n|),
    maximized over every element of every parameter.
    """

    def total_loss() -> float:
        rng = np.random.default_rng(mask_seed)
        loss, _ = evaluate_loss(net, inputs, target, loss_kind, mode="train",
                                rng=rng, with_grads=False)
        return loss

    rng = np.random.default_rng(mask_seed)
    _, grads = evaluate_loss(net, inputs, target, loss_kind, mode="train", rng=rng)

    worst = 0.0
    for name, p in net.params().items():
        g = grads[name].reshape(-1)
        flat = p.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = total_loss()
            flat[idx] = orig - h
            lm = total_loss()
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * h)
            analytic = g[idx]
            rel = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            worst = max(worst, rel)
    return worst
