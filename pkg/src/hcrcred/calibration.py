"""Positive calibration maps applied to raw predicted polynomials."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CalibrationSpec:
    """``softplus``: phi(r) = ln(1 + exp(k r) / c) / k.  ``clip``: phi(r) = max(r, eps).

    The renormalization to unit mass happens after phi, so the clip variant
    needs no scale constant.
    """

    variant: str = "softplus"
    k: float = 5.0
    c: float = 2.0
    eps: float = 0.01

    def __post_init__(self):
        if self.variant not in ("softplus", "clip"):
            raise ValueError(f"unknown calibration variant {self.variant!r}")
        if self.variant == "softplus" and not (self.k > 0 and self.c > 0):
            raise ValueError("softplus calibration needs k > 0 and c > 0")
        if self.variant == "clip" and not self.eps > 0:
            raise ValueError("clip calibration needs eps > 0")

    def phi(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.variant == "clip":
            return np.maximum(rho, self.eps)
        # log(1 + e^z) = max(z, 0) + log1p(e^-|z|): no overflow, few temporaries
        z = self.k * rho - math.log(self.c)
        out = np.empty_like(z)
        np.abs(z, out=out)
        np.negative(out, out=out)
        np.exp(out, out=out)
        np.log1p(out, out=out)
        out += np.maximum(z, 0.0)
        out /= self.k
        return out

    def to_dict(self) -> dict:
        if self.variant == "clip":
            return {"variant": "clip", "eps": self.eps}
        return {"variant": "softplus", "k": self.k, "c": self.c}

    @classmethod
    def from_dict(cls, d) -> "CalibrationSpec":
        return cls(**d)

    @classmethod
    def parse(cls, text: str) -> "CalibrationSpec":
        """Parse ``softplus``, ``softplus:K,C``, ``clip`` or ``clip:EPS``."""
        name, _, args = text.partition(":")
        name = name.strip().lower()
        values = [float(a) for a in args.split(",") if a.strip()] if args else []
        if name == "softplus":
            if len(values) not in (0, 2):
                raise ValueError("softplus takes two constants: softplus:K,C")
            return cls("softplus", *values) if values else cls("softplus")
        if name == "clip":
            if len(values) > 1:
                raise ValueError("clip takes one constant: clip:EPS")
            return cls("clip", eps=values[0]) if values else cls("clip")
        raise ValueError(f"unknown calibration {text!r}")

    def __str__(self) -> str:
        if self.variant == "clip":
            return f"clip:{self.eps!r}"
        return f"softplus:{self.k!r},{self.c!r}"
