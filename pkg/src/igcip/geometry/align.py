"""Closed-form least-squares alignment of corresponding point sets."""

from __future__ import annotations

import numpy as np

from .core import RigidTransform


def similarity_align(source, target, weights=None, with_scale: bool = True):
    """Weighted least-squares similarity (or rigid) alignment.

    Finds ``s``, ``R``, ``t`` minimising ``sum w_i || s R x_i + t - y_i ||^2``
    over proper rotations (Umeyama's solution). With ``with_scale=False`` the
    scale is fixed at 1.

    Returns
    -------
    (RigidTransform, float)
        The rigid part ``(R, t)`` and the scale ``s``. The full map is
        ``x -> s R x + t``.
    """
    x = np.asarray(source, dtype=float).reshape(-1, 3)
    y = np.asarray(target, dtype=float).reshape(-1, 3)
    if x.shape != y.shape or len(x) == 0:
        raise ValueError("matching non-empty point sets required")
    if weights is None:
        w = np.full(len(x), 1.0 / len(x))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(x),) or (w < 0).any():
            raise ValueError("weights must be non-negative, one per point")
        total = w.sum()
        if total <= 0:
            raise ValueError("at least one positive weight required")
        w = w / total
    mu_x = w @ x
    mu_y = w @ y
    xc = x - mu_x
    yc = y - mu_y
    cov = (w[:, None] * yc).T @ xc
    u, s, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        d = 1.0
    flip = np.ones(3)
    flip[-1] = d
    rot = u @ np.diag(flip) @ vt
    if with_scale:
        var_x = float(w @ np.einsum("ij,ij->i", xc, xc))
        if var_x == 0.0:
            scale = 1.0
        else:
            scale = float((s * flip).sum() / var_x)
    else:
        scale = 1.0
    t = mu_y - scale * rot @ mu_x
    return RigidTransform(rot, t), scale
