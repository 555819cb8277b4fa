"""Independent reference computations shared by the tests."""
import math

import numpy as np

from procaudit import mlp
from procaudit.core import numerical_gradient

KINK_MARGIN = 1e-2


def away_from_kinks(params, rng, rows=3, max_tries=1000):
    """Draw inputs whose hidden pre-activations all clear the ReLU kink by ``KINK_MARGIN``.

    Central differences are only valid where the loss is differentiable
    throughout the probe interval.
    """
    for _ in range(max_tries):
        x = rng.uniform(size=(rows, params.config.input_dim))
        _, cache = mlp.forward(params, x, "train")
        if min(np.abs(cache.z1).min(), np.abs(cache.z2).min()) >= KINK_MARGIN:
            return x
    raise RuntimeError("could not find a kink-free input")


def gradient_errors(params, x, y, step=1e-3):
    """Max element-wise relative error of backward against central differences, per array."""
    _, cache = mlp.forward(params, x, "train")
    analytic = mlp.backward(params, cache, y)
    errors = {}
    for name in mlp.PARAM_NAMES:
        def loss_at(value, name=name):
            probe = params.copy()
            setattr(probe, name, value)
            return mlp.batch_loss(probe, x, y)

        numeric = numerical_gradient(loss_at, getattr(params, name), step)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        errors[name] = float(np.max(np.abs(a - numeric) / denom))
    return errors


def random_gradient_case(rng, hidden, classes, seed, input_dim=8, rows=3):
    cfg = mlp.NetworkConfig(input_dim=input_dim, hidden_dim=hidden, output_classes=classes,
                            dropout_ratio=0.0, seed=seed)
    params = mlp.init_params(cfg)
    for name in ("b1", "b2", "b3"):
        getattr(params, name)[:] = rng.normal(scale=0.1, size=getattr(params, name).shape)
    x = away_from_kinks(params, rng, rows)
    y = rng.integers(0, classes, rows)
    return params, x, y


def binomial_window_probability(p, n, half_width):
    """P(|X/n - p| <= half_width) for X ~ Binomial(n, p), by exact summation."""
    total = 0.0
    for k in range(n + 1):
        if abs(k / n - p) <= half_width + 1e-12:
            total += math.comb(n, k) * p ** k * (1 - p) ** (n - k)
    return total


def brute_force_archetype(record, cfg):
    """Classify one record by the documented archetype rules, written out longhand.

    Independent of ``synthgen.replay_rules``: re-derives the id blocks and
    thresholds from their definitions and loops record by record.
    """
    from procaudit import synthgen as sg

    blacklisted = int(math.floor(cfg.ssn_pool * cfg.blacklist_fraction + 0.5))
    offenders = int(math.floor(cfg.pgn_pool * cfg.offender_fraction + 0.5))
    hits = []
    if record.ssn - sg.SSN_BASE >= 2 * (cfg.ssn_pool - blacklisted):
        hits.append(1)
    median = sg.PRICE_BASE + sg.PRICE_STEP * (record.mgn - sg.MGN_BASE)
    if record.np >= 2.0 * median:
        hits.append(2)
    if record.pa >= 1000:
        hits.append(3)
    if abs(record.ptp - record.np * record.pa) > 0.10 * record.np * record.pa:
        hits.append(4)
    if record.pgn - sg.PGN_BASE >= 2 * (cfg.pgn_pool - offenders):
        hits.append(5)
    hits = [h for h in hits if h <= cfg.k_fraud]
    return hits
