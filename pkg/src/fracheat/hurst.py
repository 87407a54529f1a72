"""Hurst index vectors and their regime classification."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import DomainError

REGULAR = "Regular"
ROUGH_WICK = "RoughWick"
ROUGH_2D = "Rough2D"
EXPLOSIVE = "Explosive"


@dataclass(frozen=True)
class HurstVector:
    """H = (H0, H1, ..., Hd): H0 in time, H1..Hd in space."""

    h: tuple

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        if len(h) < 2:
            raise DomainError("need at least one time and one space index")
        for x in h:
            if not (0.0 < x < 1.0):
                raise DomainError(f"Hurst component out of (0,1): {x}")
        object.__setattr__(self, "h", h)

    @classmethod
    def of(cls, values: Sequence[float]) -> "HurstVector":
        return values if isinstance(values, HurstVector) else cls(tuple(values))

    @property
    def d(self) -> int:
        return len(self.h) - 1

    @property
    def h0(self) -> float:
        return self.h[0]

    @property
    def spatial(self) -> tuple:
        return self.h[1:]

    @property
    def total(self) -> float:
        """2 H0 + sum of the spatial indices."""
        return 2.0 * self.h0 + sum(self.spatial)

    @property
    def alpha_h(self) -> float:
        return self.total - self.d

    @property
    def kappa(self) -> float:
        """Divergence exponent of the renormalization constant, d - (2H0 + sum H)."""
        return self.d - self.total

    @property
    def tags(self) -> frozenset:
        out = set()
        a = self.alpha_h
        if a > 0:
            out.add(REGULAR)
        if -0.25 < a <= 0:
            out.add(ROUGH_WICK)
        if self.d == 2 and all(x < 0.75 for x in self.spatial) and 1.5 < self.total <= 1.75:
            out.add(ROUGH_2D)
        if self.total <= 0.75 * self.d:
            out.add(EXPLOSIVE)
        return frozenset(out)

    @property
    def is_rough(self) -> bool:
        return bool(self.tags & {ROUGH_WICK, ROUGH_2D})

    def rough_alpha_window(self) -> tuple:
        """Open interval of admissible alpha in the rough regimes."""
        if ROUGH_WICK in self.tags:
            return (self.kappa, 0.25)
        if ROUGH_2D in self.tags:
            return (2.0 - self.total, 0.5)
        raise DomainError(f"H={self.h} is not in a rough regime")
