"""Time functions used for references and control paths."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PiecewisePoly:
    """Piecewise polynomial in absolute time t.

    ``coeffs[i]`` holds ascending-power coefficients for the piece
    [breaks[i], breaks[i+1]); the last piece is closed on the right and
    extended beyond the breaks.  Vector values use a trailing axis:
    coeffs has shape (pieces, degree + 1) or (pieces, degree + 1, dim).
    """

    breaks: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        br = np.asarray(self.breaks, dtype=float).reshape(-1)
        co = np.asarray(self.coeffs, dtype=float)
        if co.ndim == 1:
            co = co[None, :]
        if br.size != co.shape[0] + 1 or np.any(np.diff(br) <= 0):
            raise ConfigError("piecewise polynomial needs increasing breaks, one more than pieces")
        object.__setattr__(self, "breaks", br)
        object.__setattr__(self, "coeffs", co)

    @classmethod
    def constant(cls, value, t0: float = 0.0, t1: float = 1.0) -> "PiecewisePoly":
        v = np.asarray(value, dtype=float)
        co = v.reshape(1, 1) if v.ndim == 0 else v.reshape(1, 1, -1)
        return cls(np.array([t0, t1]), co)

    @property
    def dim(self) -> int:
        return 1 if self.coeffs.ndim == 2 else self.coeffs.shape[2]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        idx = np.clip(np.searchsorted(self.breaks, flat, side="right") - 1,
                      0, self.coeffs.shape[0] - 1)
        co = self.coeffs[idx]                      # (N, deg+1[, dim])
        powers = flat[:, None] ** np.arange(co.shape[1])[None, :]
        if co.ndim == 2:
            return np.einsum("nd,nd->n", co, powers).reshape(t.shape)
        return np.einsum("ndk,nd->nk", co, powers).reshape(t.shape + (co.shape[2],))


TimeFunction = Union[Callable[[float], np.ndarray], PiecewisePoly]


def time_function(spec) -> Callable:
    """Constant, nested list or {"breaks", "coeffs"} mapping to a callable."""
    if callable(spec):
        return spec
    if isinstance(spec, dict):
        if "breaks" not in spec or "coeffs" not in spec:
            raise ConfigError("piecewise specification needs 'breaks' and 'coeffs'")
        return PiecewisePoly(spec["breaks"], spec["coeffs"])
    try:
        value = np.asarray(spec, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot interpret {spec!r} as a time function")
    return lambda t, _v=value: _v.copy()
