"""Deterministic low-discrepancy point sets."""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc


def halton(count: int, dim: int, start: int = 0) -> np.ndarray:
    """Unscrambled Halton points with indices start, ..., start + count - 1."""
    seq = qmc.Halton(d=dim, scramble=False)
    if start:
        seq.fast_forward(start)
    return seq.random(count)


def sphere_points(n: int, count: int) -> np.ndarray:
    """First ``count`` points of a nested sequence on the unit sphere S^{n-1}.

    Prefixes are nested, so any statistic minimised over the sample can only
    decrease as ``count`` grows.
    """
    if n == 1:
        return np.where(np.arange(count) % 2 == 0, 1.0, -1.0)[:, None]
    if n == 2:
        t = 2 * np.pi * halton(count, 1)[:, 0]
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    if n == 3:
        u = halton(count, 2)
        z = 1 - 2 * u[:, 0]
        rho = np.sqrt(np.clip(1 - z * z, 0, None))
        t = 2 * np.pi * u[:, 1]
        return np.stack([rho * np.cos(t), rho * np.sin(t), z], axis=-1)
    u = halton(count, n, start=1)
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
