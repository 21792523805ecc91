"""
ksg.py
k-nearest-neighbour (Kraskov-Stögbauer-Grassberger) estimators in bits.
Conditional mutual information uses the Frenzel-Pompe form with the
max-norm, which is what transfer entropy reduces to:

    TE(J -> I) = I(i_t ; j_hist | i_hist)
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

LN2 = np.log(2.0)


def _as_2d(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _jitter(a: np.ndarray, rng: np.random.Generator, ampl: float = 1e-10) -> np.ndarray:
    # small noise breaks distance ties, which the estimator assumes away
    scale = np.maximum(np.abs(a).max(axis=0), 1.0)
    return a + ampl * scale * rng.random(a.shape)


def _count_within(points: np.ndarray, radii: np.ndarray) -> np.ndarray:
    # strictly-inside counts, self included
    tree = cKDTree(points)
    return np.asarray(tree.query_ball_point(points, radii, p=np.inf, return_length=True))


def _radii(joint: np.ndarray, k: int) -> np.ndarray:
    tree = cKDTree(joint)
    dist, _ = tree.query(joint, k=k + 1, p=np.inf)
    return np.nextafter(dist[:, -1], 0)


def mutual_information(x, y, k: int = 4, rng: np.random.Generator | None = None) -> float:
    """KSG estimator (algorithm 1) of I(X;Y) in bits."""
    rng = rng or np.random.default_rng(0)
    x, y = _jitter(_as_2d(x), rng), _jitter(_as_2d(y), rng)
    n = len(x)
    eps = _radii(np.hstack([x, y]), k)
    nx, ny = _count_within(x, eps), _count_within(y, eps)
    mi = digamma(k) + digamma(n) - np.mean(digamma(nx) + digamma(ny))
    return float(mi / LN2)


def conditional_mutual_information(x, y, z, k: int = 4,
                                   rng: np.random.Generator | None = None) -> float:
    """Frenzel-Pompe estimator of I(X;Y|Z) in bits. May come out slightly negative."""
    rng = rng or np.random.default_rng(0)
    x, y, z = (_jitter(_as_2d(a), rng) for a in (x, y, z))
    eps = _radii(np.hstack([x, y, z]), k)
    n_xz = _count_within(np.hstack([x, z]), eps)
    n_yz = _count_within(np.hstack([y, z]), eps)
    n_z = _count_within(z, eps)
    cmi = digamma(k) - np.mean(digamma(n_xz) + digamma(n_yz) - digamma(n_z))
    return float(cmi / LN2)


def history(a: np.ndarray, lag: int, start: int) -> np.ndarray:
    """Rows [a[t-1], ..., a[t-lag]] for t = start .. len(a)-1."""
    return np.column_stack([a[start - s:len(a) - s] for s in range(1, lag + 1)])


def transfer_entropy(target, source, q: int = 1, o: int = 1, k: int = 4,
                     rng: np.random.Generator | None = None) -> float:
    target = np.asarray(target, dtype=float)
    source = np.asarray(source, dtype=float)
    start = max(q, o)
    now = target[start:]
    return conditional_mutual_information(
        now, history(source, o, start), history(target, q, start), k=k, rng=rng)
