"""l1 / l2 / l-infinity norms and Euclidean projection onto their balls."""

from __future__ import annotations

import enum

import numpy as np

from .core import Image, ParameterError, ShapeError


class NormKind(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, name) -> "NormKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ParameterError(f"unknown norm {name!r}; expected l1, l2 or linf") from None


def norm(v, kind: NormKind) -> float:
    v = np.abs(np.asarray(v, dtype=np.float64)).ravel()
    if v.size == 0:
        return 0.0
    kind = NormKind.parse(kind)
    if kind is NormKind.L1:
        return float(v.sum())
    if kind is NormKind.L2:
        return float(np.sqrt(np.dot(v, v)))
    return float(v.max())


def distance(x: Image, y: Image, kind: NormKind) -> float:
    if x.shape != y.shape:
        raise ShapeError(f"cannot compare images of shape {x.shape} and {y.shape}")
    return norm(x.data - y.data, kind)


_SLACK = 1e-12


def _l1_threshold(a: np.ndarray, beta: float) -> float:
    """Return theta >= 0 with sum(max(a - theta, 0)) == beta, for a >= 0."""
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    # largest k such that u_k > (css_k - beta) / k
    rho = np.nonzero(u * k > css - beta)[0][-1]
    return max((css[rho] - beta) / (rho + 1.0), 0.0)


def project_to_ball(delta, kind: NormKind, beta: float) -> np.ndarray:
    """Euclidean-nearest point to ``delta`` inside the ``kind`` ball of radius ``beta``.

    Points already inside the ball are returned unchanged (as a copy).
    """
    if beta < 0:
        raise ParameterError(f"beta must be >= 0, got {beta}")
    kind = NormKind.parse(kind)
    d = np.array(delta, dtype=np.float64, copy=True)
    if kind is NormKind.LINF:
        return np.clip(d, -beta, beta)
    current = norm(d, kind)
    # slack absorbs the rounding left by a previous projection, keeping this idempotent
    if current <= beta * (1.0 + _SLACK):
        return d
    if kind is NormKind.L2:
        return d * (beta / current)
    if beta == 0:
        return np.zeros_like(d)
    theta = _l1_threshold(np.abs(d).ravel(), beta)
    return np.sign(d) * np.maximum(np.abs(d) - theta, 0.0)
