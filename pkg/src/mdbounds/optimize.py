"""Shared numerical utilities: simplex projections, input-distribution grids,
and a batched projected-gradient driver used by the search-based bounds.
"""

from __future__ import annotations

import numpy as np


def project_rows_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of the last axis onto the probability simplex.

    Sort-based method of Wang & Carreira-Perpinan (2013), vectorized over all
    leading axes.
    """
    v = np.asarray(v, dtype=float)
    k = v.shape[-1]
    u = np.sort(v, axis=-1)[..., ::-1]
    css = np.cumsum(u, axis=-1) - 1.0
    idx = np.arange(1, k + 1, dtype=float)
    cond = u - css / idx > 0
    rho = cond.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    lam = -np.take_along_axis(css, rho[..., None], axis=-1) / (rho + 1.0)[..., None]
    return np.maximum(v + lam, 0.0)


def project_rows_to_masked_simplex(v: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Project onto the simplex restricted to ``allowed`` coordinates.

    Rows with no allowed coordinate are returned as all-zero.
    """
    big = np.where(allowed, v, -1e18)
    out = project_rows_to_simplex(big)
    out = np.where(allowed, out, 0.0)
    return out


def dirichlet_rows(rng: np.random.Generator, shape, k: int, alpha: float = 1.0) -> np.ndarray:
    """Array of independent Dirichlet(alpha) rows with trailing axis k."""
    return rng.dirichlet(np.full(k, alpha), size=shape)


def binary_simplex_grid(mesh: float) -> np.ndarray:
    """Grid over binary input distributions with the given mesh, shape (m, 2)."""
    t = np.arange(0.0, 1.0 + mesh / 2, mesh)
    t = np.clip(t, 0.0, 1.0)
    return np.stack([t, 1.0 - t], axis=1)


def sampled_simplex(rng: np.random.Generator, k: int, count: int) -> np.ndarray:
    """Dirichlet(1) sample of input distributions plus the uniform point and vertices."""
    pts = rng.dirichlet(np.ones(k), size=count)
    extras = np.vstack([np.full((1, k), 1.0 / k), np.eye(k)])
    return np.vstack([extras, pts])


def projected_gradient(
    x0: np.ndarray,
    value_and_grad,
    project,
    iterations: int = 2000,
    step0: float = 0.5,
    armijo: bool = True,
):
    """Minimize a batched objective over a product of simplices.

    ``x0``: (B, ...) batch of starting points; ``value_and_grad`` maps the
    batch to (values (B,), gradients like x); ``project`` re-feasibilizes the
    batch.  Armijo backtracking is shared across the batch (a halved step is
    retried for the rows that did not improve).  Returns (best values, best
    points).
    """
    x = project(np.asarray(x0, dtype=float))
    val, grad = value_and_grad(x)
    best_val = val.copy()
    best_x = x.copy()
    step = np.full(val.shape, step0)
    for _ in range(iterations):
        cand = project(x - step[(...,) + (None,) * (x.ndim - 1)] * grad)
        cval, cgrad = value_and_grad(cand)
        if armijo:
            ok = cval <= val - 1e-12
            step = np.where(ok, np.minimum(step * 1.2, 1e3), step * 0.5)
            accept = ok | (step < 1e-14)
        else:
            accept = np.ones_like(cval, dtype=bool)
        x = np.where(accept[(...,) + (None,) * (x.ndim - 1)], cand, x)
        newv = np.where(accept, cval, val)
        newg = np.where(accept[(...,) + (None,) * (x.ndim - 1)], cgrad, grad)
        val, grad = newv, newg
        better = val < best_val
        best_val = np.where(better, val, best_val)
        best_x[better] = x[better]
        if np.all(step < 1e-14):
            break
    return best_val, best_x


def central_difference_grad(f_batch, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a batched scalar function.

    ``x`` is (B, d); ``f_batch`` maps (N, d) -> (N,).  One batched call
    evaluates all 2d perturbations of all B points.
    """
    b, d = x.shape
    eye = np.eye(d) * h
    plus = x[:, None, :] + eye[None]
    minus = x[:, None, :] - eye[None]
    allpts = np.concatenate([plus.reshape(-1, d), minus.reshape(-1, d)], axis=0)
    vals = f_batch(allpts)
    fp = vals[: b * d].reshape(b, d)
    fm = vals[b * d:].reshape(b, d)
    return (fp - fm) / (2 * h)
