"""Loss topology of the asymmetric (chained) spatial multiplexer.

The multiplexer routes the heralded signal photon of one of ``n_units``
sources to a single output through a chain of 2-to-1 photon routers.
Arm ``n`` passes through ``n - 1`` router reflections, so its total
transmission decreases geometrically with the arm index.  The router
chain ends at the last arm, which enters through the reflective port
only and therefore skips the through-port factor ``v_t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .exceptions import ParameterError

__all__ = [
    "SourceFamily",
    "MultiplexerSpec",
    "arm_transmission",
    "transmission_vector",
]


class SourceFamily(str, Enum):
    """Statistics family of the photon-pair generation in each unit."""

    POISSON = "poisson"
    THERMAL = "thermal"

    @classmethod
    def coerce(cls, value: "SourceFamily | str") -> "SourceFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError(
                f"unknown source family {value!r}; expected 'poisson' or 'thermal'"
            ) from None


def _check_probability(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class MultiplexerSpec:
    """Loss parameters and size of the multiplexed source.

    v_r : reflection efficiency of a router (chained path)
    v_t : transmission efficiency of a router (through path)
    v_b : transmission collecting every loss upstream of the multiplexer
    v_d : heralding detector efficiency
    n_units : number of multiplexed units N
    source : pair-generation statistics family
    """

    v_r: float
    v_b: float
    v_d: float
    n_units: int
    v_t: float = 0.985
    source: SourceFamily = SourceFamily.POISSON

    def __post_init__(self) -> None:
        for name in ("v_r", "v_t", "v_b", "v_d"):
            object.__setattr__(self, name, _check_probability(name, getattr(self, name)))
        if not isinstance(self.n_units, (int, np.integer)) or self.n_units < 1:
            raise ParameterError(f"n_units must be a positive integer, got {self.n_units!r}")
        object.__setattr__(self, "n_units", int(self.n_units))
        object.__setattr__(self, "source", SourceFamily.coerce(self.source))

    def with_units(self, n_units: int) -> "MultiplexerSpec":
        """Copy of this spec with a different unit count."""
        return replace(self, n_units=n_units)


def arm_transmission(spec: MultiplexerSpec, n: int) -> float:
    """Total transmission of arm ``n`` (1-based).

    Every arm carries the common factor ``v_b`` and one reflection per
    router between it and the output (``v_r ** (n - 1)``).  All arms but
    the last additionally traverse one router through-port (``v_t``);
    the last arm enters the chain at its far end and has no through
    passage.  A single-unit system has no routers and returns ``v_b``.
    """
    if not isinstance(n, (int, np.integer)):
        raise ParameterError(f"arm index must be an integer, got {n!r}")
    if not 1 <= n <= spec.n_units:
        raise ParameterError(
            f"arm index {n} out of range for a {spec.n_units}-unit multiplexer"
        )
    base = spec.v_b * spec.v_r ** (n - 1)
    if n < spec.n_units:
        base *= spec.v_t
    return base


def transmission_vector(spec: MultiplexerSpec) -> np.ndarray:
    """Arm transmissions for arms 1..N as an array of length N."""
    n = np.arange(1, spec.n_units + 1, dtype=float)
    v = spec.v_b * spec.v_t * spec.v_r ** (n - 1.0)
    v[-1] = spec.v_b * spec.v_r ** (spec.n_units - 1.0)
    return v
