"""Synthetic paired and sequential measurements from an interference model."""
from __future__ import annotations

import numpy as np

from .model import InterferenceModel, PairedMatrix, RunSeries
from .stats import substream


def _to_ns(values: np.ndarray) -> np.ndarray:
    return np.maximum(np.rint(values), 1).astype(np.int64)


def _compose(base, run_effect, iid, desync, sync, model: InterferenceModel):
    """Combine a base time with its noise factors under the model's law.

    Additive mode keeps run and iid noise multiplicative but turns each
    interference event into a fixed stall of ``(magnitude - 1)`` times the
    mean base time, the same absolute delay whichever workload it hits.
    """
    if model.additive:
        stall = 0.5 * (model.base_a + model.base_b)
        return base * run_effect * iid + (desync - 1.0) * stall + (sync - 1.0) * stall
    return base * run_effect * iid * desync * sync


def _events(rng, prob, magnitude, shape):
    hit = rng.random(shape) < prob
    return np.where(hit, magnitude, 1.0)


def _lognormal(rng, sigma, shape):
    if sigma == 0:
        return np.ones(shape)
    return np.exp(rng.normal(0.0, sigma, shape))


def generate(model: InterferenceModel, R: int, I: int, seed: int) -> PairedMatrix:
    """Duet-style measurements: run effects and sync events hit both sides."""
    if R < 1 or I < 1:
        raise ValueError("R and I must be >= 1")
    rng = substream(seed, "simgen-duet")
    shape = (R, I)
    run_effect = _lognormal(rng, model.run_sigma, (R, 1))
    sync = _events(rng, model.sync_prob, model.sync_magnitude, shape)
    iid_x = _lognormal(rng, model.iid_sigma, shape)
    iid_y = _lognormal(rng, model.iid_sigma, shape)
    desync_x = _events(rng, model.desync_prob, model.desync_magnitude, shape)
    desync_y = _events(rng, model.desync_prob, model.desync_magnitude, shape)
    # identical operation order on both sides keeps x == y bit-exact when the
    # independent factors are all 1
    x = _compose(model.base_a, run_effect, iid_x, desync_x, sync, model)
    y = _compose(model.base_b, run_effect, iid_y, desync_y, sync, model)
    return PairedMatrix.from_arrays(_to_ns(x).tolist(), _to_ns(y).tolist())


def replay_standard(model: InterferenceModel, R: int, I: int, seed: int):
    """Sequential-style measurements: nothing is shared between A and B.

    Every run gets its own run effect and every sample its own interference
    draw, as when the two workloads never execute at the same moment.
    """
    if R < 1 or I < 1:
        raise ValueError("R and I must be >= 1")
    rng = substream(seed, "simgen-standard")
    out = []
    for base in (model.base_a, model.base_b):
        run_effect = _lognormal(rng, model.run_sigma, (R, 1))
        sync = _events(rng, model.sync_prob, model.sync_magnitude, (R, I))
        iid = _lognormal(rng, model.iid_sigma, (R, I))
        desync = _events(rng, model.desync_prob, model.desync_magnitude, (R, I))
        vals = _to_ns(_compose(base, run_effect, iid, desync, sync, model))
        out.append([RunSeries(r + 1, vals[r].tolist()) for r in range(R)])
    return out[0], out[1]
