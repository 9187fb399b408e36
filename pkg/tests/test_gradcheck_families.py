"""Finite-difference gradient verification of every full model family.

Small instances of each architecture (tiny widths, short sequences) keep
the perturbation loops fast; the acceptance suite runs the wider battery.
"""

import numpy as np
import pytest

from sidewatch.models import (
    WindowConfig,
    build_autoencoder,
    build_conv_multibranch,
    build_mlp,
    build_rnn,
)
from sidewatch.nn import grad_check


def _family_instance(family, rng, seed):
    if family == "mlp":
        art = build_mlp(3, hidden=(4,), seed=seed)
        x = rng.normal(size=3)
        return art.network, x, float(rng.integers(0, 2)), "bce"
    if family == "conv_multibranch":
        art = build_conv_multibranch(2, window=WindowConfig(8, 6), filters=2,
                                     kernel=3, dense_units=3, seed=seed)
        xs = [rng.normal(size=(8, 2)) for _ in range(3)] + \
            [rng.normal(size=(6, 2)) for _ in range(2)]
        return art.network, xs, float(rng.integers(0, 2)), "bce"
    if family == "autoencoder":
        art = build_autoencoder(4, 2, seed=seed)
        x = rng.normal(size=(3, 4))
        return art.network, x, x, "mse"
    cell = family.split("_")[1]
    bi = family.endswith("_bi")
    art = build_rnn(2, cell=cell, bidirectional=bi, hidden=(2, 2), seed=seed)
    x = rng.normal(size=(6, 2))
    return art.network, x, float(rng.integers(0, 2)), "bce"


FAMILIES = ["mlp", "conv_multibranch", "autoencoder",
            "rnn_vanilla", "rnn_lstm", "rnn_lstm_bi", "rnn_gru", "rnn_gru_bi"]


@pytest.mark.parametrize("family", FAMILIES)
def test_family_gradients_match_finite_differences(family):
    rng = np.random.default_rng(sum(map(ord, family)))
    tol = 1e-4 if family.startswith("rnn") else 1e-5
    for trial in range(4):
        net, x, target, loss = _family_instance(family, rng, seed=trial)
        err = grad_check(net, x, target, loss_kind=loss, mask_seed=trial)
        assert err <= tol, f"{family} trial {trial}: max rel err {err}"
