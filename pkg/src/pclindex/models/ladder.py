"""Iterates of an affine contraction ``h(x) = offset + rate * x``.

Iterates are produced by applying the map repeatedly, exactly as the
numeric engine does, so threshold comparisons agree bit for bit with it even
when a threshold coincides with an iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

# Iterates saturate at a float fixed point long before this many steps.
MAX_STEPS = 1_000_000


@dataclass(frozen=True)
class IterateLadder:
    offset: float
    rate: float

    def __post_init__(self):
        if not 0.0 < self.rate < 1.0:
            raise ValueError("ladder rate must lie in (0, 1)")

    @property
    def fixed(self) -> float:
        return self.offset / (1.0 - self.rate)

    def step(self, x: float) -> float:
        return self.offset + self.rate * x

    def h(self, x: float, t: int = 1) -> float:
        """``h_t(x)`` for ``t >= 0``."""
        for _ in range(t):
            x = self.step(x)
        return x

    def iterates(self, x: float, n: int) -> list[float]:
        out = [x]
        for _ in range(n):
            out.append(self.step(out[-1]))
        return out

    def orbit(self, x: float, limit: int = 100_000):
        """Yield ``x, h(x), h_2(x), ...`` until the float iterates stop moving monotonically."""
        yield x
        for _ in range(limit):
            nxt = self.step(x)
            if nxt == x or (nxt - x) * (self.fixed - x) <= 0:
                return
            x = nxt
            yield x

    def hitting(self, x: float, z: float, strict: bool = True) -> int | None:
        """``min{t >= 0: h_t(x) > z}`` (``>=`` when not strict), ``None`` if never."""
        above = (lambda v: v > z) if strict else (lambda v: v >= z)
        t = 0
        while not above(x):
            nxt = self.step(x)
            if nxt <= x or t >= MAX_STEPS:
                return None  # nonincreasing, or saturated below z
            x, t = nxt, t + 1
        return t

    def hit(self, x: float, z: float, strict: bool = True):
        """``(tau, h_tau(x))`` or ``(None, None)``."""
        tau = self.hitting(x, z, strict)
        return (None, None) if tau is None else (tau, self.h(x, tau))
