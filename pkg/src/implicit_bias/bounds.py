"""Margin-based generalization bound.

For a class F with Rademacher complexity ``Rad`` and ``sup |f| <= C``, with
probability at least ``1 - delta`` every ``f`` in F satisfies

    P[y f(x) < 0] <= 4 Rad / gamma + sqrt(log(log2(4C / gamma)) / n)
                     + sqrt(log(1 / delta) / (2 n)).

For the unit balls of F1 or F2 on inputs of norm at most R one may take
``Rad <= 1/sqrt(n)`` and ``C = R + 1``.  The margin ``gamma`` is supplied by
the caller, typically measured after training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundInputs:
    gamma: float
    C: float
    n: int
    delta: float
    rad: float | None = None  # Rademacher complexity, 1/sqrt(n) when omitted

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("margin gamma must be positive")
        if not self.C > 0:
            raise ValueError("sup-norm bound C must be positive")
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.rad is not None and self.rad < 0:
            raise ValueError("Rademacher complexity must be nonnegative")
        if math.log2(4.0 * self.C / self.gamma) <= 1.0:
            raise ValueError("log2(4C/gamma) <= 1: the log-log term is undefined; need gamma < 2C")

    @property
    def rademacher(self) -> float:
        return 1.0 / math.sqrt(self.n) if self.rad is None else float(self.rad)


@dataclass(frozen=True)
class BoundValue:
    complexity: float
    loglog: float
    confidence: float

    @property
    def raw(self) -> float:
        return self.complexity + self.loglog + self.confidence

    @property
    def value(self) -> float:
        """The bound clamped to [0, 1]."""
        return min(1.0, max(0.0, self.raw))

    def to_dict(self) -> dict:
        return {"value": self.value, "raw": self.raw, "terms": {
            "complexity": self.complexity, "loglog": self.loglog, "confidence": self.confidence}}


def margin_bound(b: BoundInputs) -> BoundValue:
    n = int(b.n)
    return BoundValue(
        complexity=4.0 * b.rademacher / b.gamma,
        loglog=math.sqrt(math.log(math.log2(4.0 * b.C / b.gamma)) / n),
        confidence=math.sqrt(math.log(1.0 / b.delta) / (2.0 * n)),
    )
