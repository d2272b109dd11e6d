"""Residual reports shared by the verification modules."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class IdentityReport:
    identity_name: str
    max_residual: float
    l2_residual: float
    tolerance: float
    sample_description: str
    extras: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "PASS" if self.max_residual <= self.tolerance else "FAIL"

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        return d


def residual_report(name: str, residual, weights, tol: float, description: str,
                    **extras) -> IdentityReport:
    """Max-node and weighted-L2 norms of a residual sampled at quadrature nodes."""
    r = np.abs(np.asarray(residual))
    w = np.asarray(weights, dtype=float)
    l2 = math.sqrt(math.fsum((w * r * r).tolist())) if r.size else 0.0
    mx = float(r.max()) if r.size else 0.0
    return IdentityReport(name, mx, l2, tol, description, dict(extras))
