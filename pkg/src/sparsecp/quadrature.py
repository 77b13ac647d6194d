"""Adaptive quadrature for integrals against the generalized gamma intensity.

All integrals in this package reduce to

    I = int_lo^hi  fn(w) * w^(-1-sigma) * exp(-tau*w) dw

for integrands fn that vanish like w^p at the origin (p >= 1) and are bounded
at infinity.  The integrand is smooth in log(w), so we tile (lo, hi) with
decade panels in log space and apply Gauss-Legendre inside each panel,
doubling the node count until the total stabilises to the requested relative
tolerance.  A tiny leading-order stub accounts for (0, w_floor) when lo = 0.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = ["QuadratureError", "levy_integral", "levy_integral_multi"]

_LN10 = math.log(10.0)


class QuadratureError(RuntimeError):
    """Raised when panel refinement fails to reach the target tolerance."""

    def __init__(self, message: str, achieved_rtol: float):
        super().__init__(f"{message} (achieved rtol {achieved_rtol:.3e})")
        self.achieved_rtol = achieved_rtol


@lru_cache(maxsize=16)
def _gl_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _panel_edges(sigma: float, tau: float, lo: float, hi: float,
                 rtol: float, zero_order: int) -> tuple[np.ndarray, float]:
    """Log-space decade edges plus the analytic floor for lo = 0."""
    r = zero_order - sigma
    if lo > 0.0:
        x0 = math.log(lo)
        w_floor = lo
    else:
        # Below w_floor the integrand is fn(w)/w^p * w^(r-1); truncating
        # there loses a relative (w_floor/scale)^r, kept << rtol.
        scale = min(hi, 1.0)
        w_floor = scale * (0.01 * rtol) ** (1.0 / r)
        w_floor = max(w_floor, 1e-290)
        x0 = math.log(w_floor)
    if math.isinf(hi):
        if tau > 0.0:
            x1 = math.log(720.0 / tau)
        else:
            # tau = 0 requires sigma > 0 and bounded fn for convergence.
            if sigma <= 0.0:
                raise ValueError("tau = 0 requires sigma in (0, 1)")
            x1 = -math.log(1e-3 * rtol) / sigma
        x1 = max(x1, x0 + _LN10)
    else:
        x1 = math.log(hi)
    n_panels = max(1, int(math.ceil((x1 - x0) / _LN10)))
    edges = np.linspace(x0, x1, n_panels + 1)
    return edges, w_floor


def _evaluate(fn: Callable[[np.ndarray], np.ndarray], sigma: float,
              tau: float, edges: np.ndarray, n_nodes: int) -> float:
    x, gw = _gl_nodes(n_nodes)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    # (panel, node) grid flattened; integrate fn(w) w^{-sigma} e^{-tau w} dx.
    t = mid[:, None] + half[:, None] * x[None, :]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        w = np.exp(t)
        vals = fn(w) * np.exp(-sigma * t - tau * w)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    return float(np.sum(vals * gw[None, :] * half[:, None]))


def levy_integral(fn: Callable[[np.ndarray], np.ndarray], sigma: float,
                  tau: float, lo: float = 0.0, hi: float = math.inf,
                  rtol: float = 1e-8, zero_order: int = 1) -> float:
    """Integrate fn(w) * w^(-1-sigma) * e^(-tau*w) over (lo, hi).

    ``fn`` must be vectorised and satisfy fn(w) = Theta(w^zero_order) as
    w -> 0 whenever lo = 0 (this controls integrability at the origin).
    """
    if sigma >= 1.0:
        raise ValueError("sigma must be < 1")
    if lo < 0.0 or (not math.isinf(hi) and hi <= lo):
        raise ValueError("need 0 <= lo < hi")
    edges, w_floor = _panel_edges(sigma, tau, lo, hi, rtol, zero_order)

    # Leading-order stub for (0, w_floor): fn(w) ~ c*w^p there.
    stub = 0.0
    if lo == 0.0:
        r = zero_order - sigma
        c = fn(np.array([w_floor]))[0] / w_floor**zero_order
        stub = c * w_floor**r / r

    prev = None
    achieved = math.inf
    for n_nodes in (16, 32, 64, 128, 256):
        total = stub + _evaluate(fn, sigma, tau, edges, n_nodes)
        if prev is not None:
            denom = max(abs(total), abs(prev), 1e-300)
            achieved = abs(total - prev) / denom
            if achieved <= rtol or abs(total - prev) < 1e-300:
                return total
        prev = total
    # Last resort: halve the panels once at the highest order.
    fine = np.empty(2 * len(edges) - 1)
    fine[0::2] = edges
    fine[1::2] = 0.5 * (edges[:-1] + edges[1:])
    total = stub + _evaluate(fn, sigma, tau, fine, 256)
    denom = max(abs(total), abs(prev), 1e-300)
    achieved = abs(total - prev) / denom
    if achieved <= rtol:
        return total
    raise QuadratureError("quadrature did not converge", achieved)


def _evaluate_multi(fn, sigma: float, tau: float, edges: np.ndarray,
                    n_nodes: int) -> np.ndarray:
    x, gw = _gl_nodes(n_nodes)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        w = np.exp(t)
        vals = fn(w) * np.exp(-sigma * t - tau * w)[:, None]
    vals = np.where(np.isfinite(vals), vals, 0.0)
    coeff = (gw[None, :] * half[:, None]).ravel()
    return coeff @ vals


def levy_integral_multi(fn, sigma: float, tau: float, zero_orders,
                        lo: float = 0.0, hi: float = math.inf,
                        rtol: float = 1e-8) -> np.ndarray:
    """Batched :func:`levy_integral` for fn returning (n_points, m) columns.

    All components share quadrature nodes; zero_orders lists each column's
    leading power at the origin.  Returns the m integral values.
    """
    if sigma >= 1.0:
        raise ValueError("sigma must be < 1")
    zero_orders = np.asarray(zero_orders, dtype=float)
    edges, w_floor = _panel_edges(sigma, tau, lo, hi, rtol, float(zero_orders.min()))
    stub = np.zeros(zero_orders.shape[0])
    if lo == 0.0:
        r = zero_orders - sigma
        c = fn(np.array([w_floor]))[0] / w_floor**zero_orders
        stub = c * w_floor**r / r
    prev = None
    for n_nodes in (16, 32, 64, 128):
        total = stub + _evaluate_multi(fn, sigma, tau, edges, n_nodes)
        if prev is not None:
            scale = np.maximum(np.abs(total).max(), 1e-300)
            if np.abs(total - prev).max() <= rtol * scale:
                return total
        prev = total
    return total

