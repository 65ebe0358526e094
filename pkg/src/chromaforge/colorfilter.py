"""Monotonic piecewise-linear color filter with analytic gradients.

A filter with ``K`` pieces maps a value ``x`` in piece ``k`` (1-based) to::

    F(x) = theta[0] + ... + theta[k-2] + (K*x - (k-1)) * theta[k-1]

Each RGB channel carries its own ``K`` parameters, stored as a ``(3, K)``
array whose rows lie on the probability simplex. With every entry equal to
``1/K`` the filter is the identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class FilterParams:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[0] != 3 or theta.shape[1] < 1:
            raise ValueError(f"theta must have shape (3, K), got {theta.shape}")
        if not np.all(np.isfinite(theta)) or theta.min() < 0.0:
            raise ValueError("theta entries must be finite and non-negative")
        if np.any(np.abs(theta.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("each channel of theta must sum to 1")
        object.__setattr__(self, "theta", theta)

    @property
    def pieces(self) -> int:
        return self.theta.shape[1]

    def to_json(self) -> dict:
        return {"K": self.pieces, "theta": self.theta.tolist()}

    @classmethod
    def from_json(cls, doc) -> "FilterParams":
        if isinstance(doc, str):
            doc = json.loads(doc)
        params = cls(np.array(doc["theta"], dtype=np.float64))
        if params.pieces != int(doc["K"]):
            raise ValueError("declared K does not match theta")
        return params


def identity(K: int) -> FilterParams:
    if K < 1:
        raise ValueError("K must be positive")
    return FilterParams(np.full((3, K), 1.0 / K))


def piece_index(x: float, K: int) -> int:
    """1-based piece containing ``x``; boundaries go to the upper piece."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 1.0:
        return K
    return min(int(np.floor(K * x)) + 1, K)


def _locate(x: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-based piece indices and in-piece offsets for an array of values."""
    scaled = K * x
    k0 = np.minimum(np.floor(scaled), K - 1).astype(np.intp)
    return k0, scaled - k0


def _check_inputs(params: FilterParams, img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape[-1] != 3:
        raise ValueError(f"image must have 3 channels in the last axis, got {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return img


def apply_curve(theta: np.ndarray, img: np.ndarray) -> np.ndarray:
    """The filter formula for any (3, K) parameters, with no validation or clipping."""
    K = theta.shape[1]
    # starts[c, j] = sum of theta[c, :j]
    starts = np.zeros((3, K))
    np.cumsum(theta[:, :-1], axis=1, out=starts[:, 1:])
    out = np.empty_like(img)
    for c in range(3):
        k0, off = _locate(img[..., c], K)
        out[..., c] = starts[c, k0] + off * theta[c, k0]
    return out


def apply_filter(params: FilterParams, img: np.ndarray) -> np.ndarray:
    """Apply the per-channel curve to an (..., 3) array of values in [0, 1]."""
    img = _check_inputs(params, img)
    out = apply_curve(params.theta, img)
    # rounding in the cumulative sum can overshoot 1 by an ulp
    return np.clip(out, 0.0, 1.0, out=out)


def filter_grad_theta(params: FilterParams, img: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(upstream * apply_filter(params, img))`` w.r.t. theta."""
    img = _check_inputs(params, img)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != img.shape:
        raise ValueError(f"upstream shape {upstream.shape} != image shape {img.shape}")
    K = params.pieces
    grad = np.empty((3, K))
    for c in range(3):
        k0, off = _locate(img[..., c].ravel(), K)
        up = upstream[..., c].ravel()
        in_piece = np.bincount(k0, weights=up, minlength=K)
        partial = np.bincount(k0, weights=up * off, minlength=K)
        # theta[i] contributes fully to every pixel in a piece above i
        above = np.cumsum(in_piece[::-1])[::-1]
        grad[c, :-1] = above[1:]
        grad[c, -1] = 0.0
        grad[c] += partial
    return grad


def filter_grad_input(params: FilterParams, img: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input pixels: ``upstream * K * theta[piece]``."""
    img = _check_inputs(params, img)
    K = params.pieces
    slope = np.empty_like(img)
    for c in range(3):
        k0, _ = _locate(img[..., c], K)
        slope[..., c] = K * params.theta[c, k0]
    return np.asarray(upstream, dtype=np.float64) * slope


def project_simplex(theta_raw: np.ndarray) -> FilterParams:
    """Clamp negatives to zero and renormalize each channel to sum to 1.

    A channel whose entries are all clamped away falls back to the identity.
    """
    theta_raw = np.asarray(theta_raw, dtype=np.float64)
    if not np.all(np.isfinite(theta_raw)):
        raise ValueError("theta contains non-finite values")
    if theta_raw.ndim != 2 or theta_raw.shape[0] != 3:
        raise ValueError(f"theta must have shape (3, K), got {theta_raw.shape}")
    K = theta_raw.shape[1]
    clamped = np.maximum(theta_raw, 0.0)
    sums = clamped.sum(axis=1, keepdims=True)
    out = np.full_like(clamped, 1.0 / K)
    ok = sums[:, 0] > 0.0
    out[ok] = clamped[ok] / sums[ok]
    return FilterParams(out)


def project_simplex_euclidean(theta_raw: np.ndarray) -> FilterParams:
    """Nearest point on the simplex, per channel, in the Euclidean sense.

    Each channel becomes ``max(v - tau, 0)`` with ``tau`` chosen so the
    entries sum to 1 (sort-based algorithm). Unlike clamp-and-renormalize it
    shifts rather than rescales, so small steps produce small moves.
    """
    v = np.asarray(theta_raw, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("theta contains non-finite values")
    if v.ndim != 2 or v.shape[0] != 3:
        raise ValueError(f"theta must have shape (3, K), got {v.shape}")
    K = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ranks = np.arange(1, K + 1)
    # largest rank whose sorted entry stays positive after the shift
    rho = np.count_nonzero(u - css / ranks > 0, axis=1)
    tau = css[np.arange(3), rho - 1] / rho
    out = np.maximum(v - tau[:, None], 0.0)
    # the shift is exact up to rounding; renormalize to meet the tolerance
    out /= out.sum(axis=1, keepdims=True)
    return FilterParams(out)


PROJECTIONS = {"euclidean": project_simplex_euclidean, "clamp": project_simplex}


def deviation_penalty(params: FilterParams, K: int | None = None) -> tuple[float, np.ndarray]:
    """Sum of squared deviations from the identity value 1/K, and its gradient."""
    K = params.pieces if K is None else K
    if K != params.pieces:
        raise ValueError("K does not match params")
    diff = params.theta - 1.0 / K
    return float(np.sum(diff * diff)), 2.0 * diff


def curve_params(curve, K: int) -> FilterParams:
    """Fit filter params to per-channel monotone curves sampled at K+1 knots.

    ``curve`` maps an array of knot positions to a (3, K+1) array of outputs
    with F(0) = 0 and F(1) = 1.
    """
    knots = np.linspace(0.0, 1.0, K + 1)
    values = np.asarray(curve(knots), dtype=np.float64)
    return project_simplex(np.diff(values, axis=1))


def _gamma(g):
    return lambda t: np.vstack([t ** gc for gc in g])


def _sigmoid_contrast(strength):
    def curve(t):
        s = 1.0 / (1.0 + np.exp(-strength * (t - 0.5)))
        lo = 1.0 / (1.0 + np.exp(strength * 0.5))
        hi = 1.0 / (1.0 + np.exp(-strength * 0.5))
        norm = (s - lo) / (hi - lo)
        return np.vstack([norm, norm, norm])

    return curve


# Built-in tone-curve looks used as style targets.
STYLE_PRESETS = {
    "warm": _gamma((0.8, 1.0, 1.25)),
    "cool": _gamma((1.25, 1.05, 0.8)),
    "fade": lambda t: np.vstack([np.sqrt(t) * 0.6 + t * 0.4] * 3),
    "contrast": _sigmoid_contrast(6.0),
    "vintage": _gamma((0.9, 1.1, 1.4)),
}


def style_preset(name: str, K: int = 64) -> FilterParams:
    try:
        curve = STYLE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown style preset {name!r}; choose from {sorted(STYLE_PRESETS)}") from None
    return curve_params(curve, K)
