"""Vectorised composite Gauss-Legendre quadrature with adaptive panel refinement.

Every routine integrates a batch of independent integrals at once: the limits
``a`` and ``b`` are arrays of a common shape S and the integrand receives nodes
of shape ``S + (n,)``. Integrand parameters that vary across the batch should be
shaped ``S + (1,)`` so they broadcast against the node axis.
"""

from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np

log = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    def __init__(self, msg, achieved_error=None):
        super().__init__(msg)
        self.achieved_error = achieved_error


@lru_cache(maxsize=None)
def _rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def composite_gl(f, a, b, panels: int = 8, order: int = 16):
    """Fixed composite rule: ``panels`` equal panels of ``order``-point Gauss-Legendre."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    x, w = _rule(order)
    frac = np.linspace(0.0, 1.0, panels + 1)
    edges = a[..., None] + (b - a)[..., None] * frac  # S + (P+1,)
    half = 0.5 * (edges[..., 1:] - edges[..., :-1])  # S + (P,)
    mid = 0.5 * (edges[..., 1:] + edges[..., :-1])
    nodes = mid[..., None] + half[..., None] * x  # S + (P, Q)
    shape = nodes.shape
    vals = f(nodes.reshape(shape[:-2] + (panels * order,)))
    vals = np.broadcast_to(vals, shape[:-2] + (panels * order,)).reshape(shape)
    return np.sum(vals * w * half[..., None], axis=(-2, -1))


def adaptive_gl(
    f,
    a,
    b,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-12,
    order: int = 16,
    panels: int = 4,
    max_panels: int = 1024,
    strict: bool = False,
):
    """Composite Gauss-Legendre with panel bisection until successive estimates agree.

    Refinement is carried out only for the batch members that have not yet met
    ``|I_2n - I_n| <= max(abs_tol, rel_tol * |I_2n|)``. Returns ``(value, error)``.
    Non-convergence at ``max_panels`` raises :class:`QuadratureError` when
    ``strict`` is set and is logged otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    af, bf = a.reshape(-1), b.reshape(-1)

    prev = composite_gl(f, af, bf, panels, order) if af.size else np.zeros(0)
    value = prev.copy()
    error = np.full(af.shape, np.inf)
    todo = np.arange(af.size)
    while todo.size:
        panels *= 2
        sub = _subset(f, todo, af.size)
        cur = composite_gl(sub, af[todo], bf[todo], panels, order)
        err = np.abs(cur - prev[todo])
        value[todo] = cur
        error[todo] = err
        done = err <= np.maximum(abs_tol, rel_tol * np.abs(cur))
        prev[todo] = cur
        todo = todo[~done]
        if todo.size and panels >= max_panels:
            worst = float(error[todo].max())
            msg = f"quadrature did not converge on {todo.size} integrals (max error {worst:.3g})"
            if strict:
                raise QuadratureError(msg, worst)
            log.warning(msg)
            break
    return value.reshape(shape), error.reshape(shape)


class _subset:
    """Wrap an integrand so its batch parameters are restricted to ``idx``.

    Batch parameters are bound through :meth:`Batch.take`; plain callables are
    assumed batch-independent.
    """

    def __init__(self, f, idx, full_size):
        self.f = f.take(idx) if isinstance(f, Batch) and len(idx) != full_size else f

    def __call__(self, x):
        return self.f(x)


class Batch:
    """Integrand with per-batch-member parameters that can be sliced.

    ``fn(x, **params)`` is called with each parameter reshaped to ``(m, 1)``.
    """

    def __init__(self, fn, **params):
        self.fn = fn
        self.params = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in params.items()}

    def take(self, idx) -> "Batch":
        return Batch(self.fn, **{k: (v[idx] if v.size > 1 else v) for k, v in self.params.items()})

    def __call__(self, x):
        return self.fn(x, **{k: v[:, None] for k, v in self.params.items()})
