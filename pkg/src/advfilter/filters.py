"""Gaussian and median smoothing filters used as input-side defenses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Image, ParameterError

FILTER_KINDS = ("identity", "gaussian", "median")


def default_sigma(kernel_size: int) -> float:
    """Kernel-size to sigma rule: 0.8 for 3x3, 1.1 for 5x5."""
    return 0.3 * ((kernel_size - 1) / 2 - 1) + 0.8


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "identity"
    kernel_size: int = 0
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ParameterError(f"unknown filter kind {self.kind!r}")
        if self.kind == "identity":
            if self.sigma is not None:
                raise ParameterError("sigma is only meaningful for gaussian filters")
            object.__setattr__(self, "kernel_size", 0)
            return
        if self.kernel_size not in (3, 5):
            raise ParameterError(f"kernel_size must be 3 or 5, got {self.kernel_size}")
        if self.kind == "gaussian":
            sigma = default_sigma(self.kernel_size) if self.sigma is None else float(self.sigma)
            if not sigma > 0:
                raise ParameterError(f"sigma must be positive, got {sigma}")
            object.__setattr__(self, "sigma", sigma)
        elif self.sigma is not None:
            raise ParameterError("sigma is only meaningful for gaussian filters")

    @classmethod
    def parse(cls, name: str) -> "FilterSpec":
        """Parse names like ``gaussian3``, ``median5`` or ``none``."""
        name = name.strip().lower()
        if name in ("none", "identity"):
            return cls()
        for kind in ("gaussian", "median"):
            if name.startswith(kind):
                try:
                    size = int(name[len(kind):])
                except ValueError:
                    break
                return cls(kind, size)
        raise ParameterError(f"unknown filter {name!r}; expected e.g. gaussian3, median5, none")

    @property
    def label(self) -> str:
        return "none" if self.kind == "identity" else f"{self.kind}{self.kernel_size}"


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized ``size`` x ``size`` Gaussian kernel centred on the middle cell."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be a positive odd integer, got {size}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    c = (size - 1) / 2
    i = np.arange(size) - c
    k = np.exp(-(i[:, None] ** 2 + i[None, :] ** 2) / (2.0 * sigma**2))
    return k / k.sum()


def _gaussian_1d(size: int, sigma: float) -> np.ndarray:
    i = np.arange(size) - (size - 1) / 2
    k = np.exp(-(i**2) / (2.0 * sigma**2))
    return k / k.sum()


def _gaussian(data: np.ndarray, size: int, sigma: float) -> np.ndarray:
    # the 2-D kernel is an outer product, so two 1-D passes suffice
    k = _gaussian_1d(size, sigma)
    r = size // 2
    h, w = data.shape[:2]
    p = np.pad(data, ((r, r), (0, 0), (0, 0)), mode="edge")
    rows = sum(k[i] * p[i : i + h] for i in range(size))
    p = np.pad(rows, ((0, 0), (r, r), (0, 0)), mode="edge")
    return sum(k[j] * p[:, j : j + w] for j in range(size))


def _median(data: np.ndarray, size: int) -> np.ndarray:
    r = size // 2
    p = np.pad(data, ((r, r), (r, r), (0, 0)), mode="edge")
    windows = sliding_window_view(p, (size, size), axis=(0, 1))
    flat = windows.reshape(*windows.shape[:3], size * size)
    mid = (size * size) // 2
    return np.partition(flat, mid, axis=-1)[..., mid]


def apply_filter(x: Image, spec: FilterSpec) -> Image:
    """Filter each channel independently with edge-replicated borders."""
    if spec.kind == "identity":
        return Image(x.data)
    if spec.kind == "median":
        return Image(_median(x.data, spec.kernel_size))
    out = _gaussian(x.data, spec.kernel_size, spec.sigma)
    # convex weights can overshoot the input range by an ulp
    lo = x.data.min(axis=(0, 1))
    hi = x.data.max(axis=(0, 1))
    return Image(np.clip(out, lo, hi))
