"""Entropic fused transport solver.

`sinkhorn` solves the linear entropic problem in the log domain. `solve_fgwot`
runs the outer linearization loop: at each step the structural term is
linearized into G = (1 - alpha) * C_tilde + 2 * alpha * (C_x T C_y) and T is
replaced by the entropic plan for G, warm-starting the dual potentials. The
loop stops when the L1 change of T falls below the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericalOverflow, ShapeMismatch
from .priors import CostBundle


@dataclass(frozen=True)
class Coupling:
    """A transport plan plus solve diagnostics."""

    T: np.ndarray
    outer_iterations: int
    converged: bool
    final_delta: float
    objective_trace: tuple[float, ...] = field(default_factory=tuple)
    virtual: bool = False


def _validate_marginals(G, p, q):
    n, m = G.shape
    if p.shape != (n,) or q.shape != (m,):
        raise ShapeMismatch(f"marginals {p.shape}/{q.shape} do not fit cost {G.shape}")
    if not np.isfinite(G).all():
        raise ShapeMismatch("cost matrix contains non-finite entries")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ShapeMismatch("marginals must be strictly positive")


def _sinkhorn_core(G, p, q, epsilon, max_iters, tol, f0=None, g0=None):
    _validate_marginals(G, p, q)
    if epsilon <= 0:
        raise NumericalOverflow(f"epsilon must be positive, got {epsilon}")
    logp = np.log(p)
    logq = np.log(q)
    f0 = np.zeros_like(p) if f0 is None else np.asarray(f0, dtype=np.float64)
    g0 = np.zeros_like(q) if g0 is None else np.asarray(g0, dtype=np.float64)
    f, g, iters, violation = kernels.sinkhorn_log(
        np.ascontiguousarray(G, dtype=np.float64),
        logp,
        logq,
        float(epsilon),
        int(max_iters),
        float(tol),
        f0,
        g0,
    )
    if not (np.isfinite(f).all() and np.isfinite(g).all() and np.isfinite(violation)):
        raise NumericalOverflow(
            f"sinkhorn potentials left the representable range (epsilon={epsilon})"
        )
    t = np.exp((f[:, None] + g[None, :] - G) / epsilon)
    if not np.isfinite(t).all():
        raise NumericalOverflow("transport plan overflowed; epsilon too small for cost scale")
    return t, f, g, iters, float(violation)


def sinkhorn(G, p, q, epsilon, max_iters: int = 200, tol: float = 1e-9) -> Coupling:
    """Entropic OT between histograms p and q for cost G.

    Returns the plan with converged=False when max_iters ran out before the
    column-marginal violation reached tol (row marginals are exact after the
    final row update).
    """
    t, _, _, iters, violation = _sinkhorn_core(G, p, q, epsilon, max_iters, tol)
    return Coupling(
        T=t,
        outer_iterations=iters,
        converged=violation <= tol,
        final_delta=violation,
    )


def gw_gradient_fast(band_x, T, band_y) -> np.ndarray:
    """C_x @ T @ C_y in O(N*M) using prefix sums over the bands."""
    if T.shape != (band_x.size, band_y.size):
        raise ShapeMismatch(
            f"plan {T.shape} does not match bands ({band_x.size}, {band_y.size})"
        )
    return kernels.banded_gw_product(
        np.ascontiguousarray(T, dtype=np.float64),
        int(band_x.radius),
        int(band_y.radius),
        float(band_x.value),
    )


def _gw_pad(bundle: CostBundle, T) -> np.ndarray:
    """Structural product on the real block, zero on the virtual frame."""
    n, m = bundle.n_real, bundle.m_real
    prod = gw_gradient_fast(bundle.band_x, T[:n, :m], bundle.band_y)
    if not bundle.virtual:
        return prod
    out = np.zeros_like(T)
    out[:n, :m] = prod
    return out


@dataclass(frozen=True)
class ObjectiveParts:
    kot: float
    gw: float
    entropy: float
    total: float


def fgwot_objective(bundle: CostBundle, T, alpha: float, epsilon: float) -> ObjectiveParts:
    """Entropy-regularized fused objective and its three terms.

    total = (1 - alpha) <C_tilde, T> + alpha <C_x T C_y, T> - epsilon * H(T)
    with H(T) = -sum T log T.
    """
    kot = float(np.sum(bundle.C_tilde * T))
    gw = float(np.sum(_gw_pad(bundle, T) * T))
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(T > 0, T * np.log(np.where(T > 0, T, 1.0)), 0.0)
    entropy = float(-np.sum(xlogx))
    total = (1.0 - alpha) * kot + alpha * gw - epsilon * entropy
    return ObjectiveParts(kot=kot, gw=gw, entropy=entropy, total=total)


def solve_fgwot(bundle: CostBundle, hyper) -> Coupling:
    """Outer loop of the fused solver.

    T starts at the product coupling p q^T. Each iteration re-linearizes the
    structural term and re-solves the entropic linear problem with warm
    potentials; convergence is an L1 change of T at most hyper.solver_tol.
    """
    alpha = hyper.alpha
    eps = hyper.epsilon
    p, q = bundle.p, bundle.q
    if alpha == 0.0:
        t, _, _, _, violation = _sinkhorn_core(
            bundle.C_tilde, p, q, eps, hyper.solver_sinkhorn_iters, _inner_tol(hyper)
        )
        parts = fgwot_objective(bundle, t, alpha, eps)
        return Coupling(
            T=t,
            outer_iterations=1,
            converged=violation <= _inner_tol(hyper),
            final_delta=0.0,
            objective_trace=(parts.total,),
            virtual=bundle.virtual,
        )
    t = np.outer(p, q)
    f = g = None
    trace = []
    delta = np.inf
    converged = False
    iters = 0
    for it in range(1, hyper.solver_max_outer + 1):
        grad = (1.0 - alpha) * bundle.C_tilde + 2.0 * alpha * _gw_pad(bundle, t)
        t_new, f, g, _, _ = _sinkhorn_core(
            grad, p, q, eps, hyper.solver_sinkhorn_iters, _inner_tol(hyper), f, g
        )
        delta = float(np.abs(t_new - t).sum())
        trace.append(fgwot_objective(bundle, t_new, alpha, eps).total)
        t = t_new
        iters = it
        if delta <= hyper.solver_tol:
            converged = True
            break
    return Coupling(
        T=t,
        outer_iterations=iters,
        converged=converged,
        final_delta=delta,
        objective_trace=tuple(trace),
        virtual=bundle.virtual,
    )


def _inner_tol(hyper) -> float:
    # keep the inner marginal error well under the outer movement tolerance
    return min(1e-9, hyper.solver_tol * 1e-3)
