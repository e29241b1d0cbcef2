"""Scalar cost / dis-utility functions with primitives.

Arc costs, demand dis-utilities and provider base prices are all scalar
functions of one volume.  Affine forms get closed-form primitives; anything
else is integrated with adaptive quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "ScalarCostFn",
    "affine",
    "custom",
    "bpr",
    "power",
    "CUSTOM_FORMS",
    "MonotonicityError",
    "check_monotone",
    "CostVector",
]

MONOTONE_SAMPLES = 1024


class MonotonicityError(ValueError):
    """A cost function fails the monotonicity a solver relies on."""


@dataclass(frozen=True)
class ScalarCostFn:
    """A scalar function ``t -> c(t)`` together with its primitive.

    Parameters
    ----------
    form : str
        ``"affine"`` or the name of a custom form.
    params : dict
        Parameters of the form; for ``"affine"`` the keys are ``c0`` and
        ``c1`` and the function is ``c0 + c1 * t``.
    fn : callable, optional
        Vectorized evaluator for custom forms.
    """

    form: str
    params: dict = field(default_factory=dict)
    fn: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, compare=False, repr=False)

    @property
    def is_affine(self) -> bool:
        return self.form == "affine"

    def __call__(self, t):
        if self.is_affine:
            return self.params["c0"] + self.params["c1"] * np.asarray(t, dtype=float)
        return self.fn(np.asarray(t, dtype=float))

    def integral(self, t: float) -> float:
        """Return ``int_0^t c(s) ds``."""
        return self.integral_between(0.0, t)

    def integral_between(self, a, b):
        """Return ``int_a^b c(s) ds``.

        The affine branch is written as ``(b - a) * c((a + b) / 2)`` so that
        small increments keep their relative accuracy.
        """
        if self.is_affine:
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            return (b - a) * (self.params["c0"] + 0.5 * self.params["c1"] * (a + b))
        if np.ndim(a) or np.ndim(b):
            a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
            return np.array([self._quad(ai, bi) for ai, bi in zip(a.ravel(), b.ravel())]
                            ).reshape(a.shape)
        return self._quad(float(a), float(b))

    def _quad(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        value, _ = integrate.quad(lambda s: float(self.fn(np.asarray(s))), a, b,
                                  epsabs=1e-13, epsrel=1e-12, limit=200)
        return value

    def to_dict(self) -> dict:
        return {"form": self.form, **self.params}


def affine(c0: float, c1: float) -> ScalarCostFn:
    """``t -> c0 + c1 * t``."""
    return ScalarCostFn("affine", {"c0": float(c0), "c1": float(c1)})


def custom(fn: Callable, name: str = "custom", **params) -> ScalarCostFn:
    """Wrap an arbitrary vectorized callable; its primitive uses quadrature."""
    return ScalarCostFn(name, dict(params), fn)


def bpr(t0: float, capacity: float, alpha: float = 0.15, beta: float = 4.0) -> ScalarCostFn:
    """Bureau of Public Roads link cost ``t0 * (1 + alpha * (t / capacity) ** beta)``."""
    def fn(t):
        return t0 * (1.0 + alpha * (np.maximum(t, 0.0) / capacity) ** beta)
    return ScalarCostFn("bpr", {"t0": float(t0), "capacity": float(capacity),
                                "alpha": float(alpha), "beta": float(beta)}, fn)


def power(a: float, b: float, p: float) -> ScalarCostFn:
    """``t -> a + b * t ** p`` for ``t >= 0``."""
    def fn(t):
        return a + b * np.maximum(t, 0.0) ** p
    return ScalarCostFn("power", {"a": float(a), "b": float(b), "p": float(p)}, fn)


# name -> constructor taking the stored params as keywords
CUSTOM_FORMS: dict[str, Callable[..., ScalarCostFn]] = {
    "affine": affine,
    "bpr": bpr,
    "power": power,
}


def from_dict(spec: dict) -> ScalarCostFn:
    spec = dict(spec)
    form = spec.pop("form")
    try:
        ctor = CUSTOM_FORMS[form]
    except KeyError:
        raise ValueError(f"unknown cost form {form!r}") from None
    return ctor(**spec)


def check_monotone(fn: ScalarCostFn, lo: float, hi: float, increasing: bool,
                   label: str = "") -> None:
    """Raise :class:`MonotonicityError` unless ``fn`` is monotone on ``[lo, hi]``.

    Affine forms are decided by the sign of the slope; custom forms are
    sampled at ``MONOTONE_SAMPLES`` points.
    """
    if fn.is_affine:
        slope = fn.params["c1"]
        ok = slope >= 0 if increasing else slope <= 0
    else:
        if not np.isfinite(hi):
            hi = lo + 1e3
        t = np.linspace(lo, hi, MONOTONE_SAMPLES)
        diffs = np.diff(np.asarray(fn(t), dtype=float))
        ok = bool(np.all(diffs >= -1e-12) if increasing else np.all(diffs <= 1e-12))
    if not ok:
        kind = "non-decreasing" if increasing else "non-increasing"
        raise MonotonicityError(f"{label or fn.form} is not {kind} on [{lo}, {hi}]")


class CostVector:
    """Evaluate a list of scalar functions componentwise.

    All-affine lists collapse to coefficient arrays so evaluation and
    integration are single numpy expressions.
    """

    def __init__(self, fns: Sequence[ScalarCostFn]):
        self.fns = tuple(fns)
        self.affine = all(f.is_affine for f in self.fns)
        if self.affine:
            self.c0 = np.array([f.params["c0"] for f in self.fns], dtype=float)
            self.c1 = np.array([f.params["c1"] for f in self.fns], dtype=float)

    def __len__(self) -> int:
        return len(self.fns)

    def __call__(self, t: np.ndarray, idx=None) -> np.ndarray:
        if self.affine:
            if idx is None:
                return self.c0 + self.c1 * t
            return self.c0[idx] + self.c1[idx] * t
        fns = self.fns if idx is None else [self.fns[i] for i in np.atleast_1d(idx)]
        return np.array([float(f(ti)) for f, ti in zip(fns, np.atleast_1d(t))])

    def integral_between(self, a: np.ndarray, b: np.ndarray, idx=None) -> np.ndarray:
        if self.affine:
            c0, c1 = (self.c0, self.c1) if idx is None else (self.c0[idx], self.c1[idx])
            return (b - a) * (c0 + 0.5 * c1 * (a + b))
        fns = self.fns if idx is None else [self.fns[i] for i in np.atleast_1d(idx)]
        a = np.broadcast_to(a, (len(fns),))
        b = np.broadcast_to(b, (len(fns),))
        return np.array([f.integral_between(ai, bi) for f, ai, bi in zip(fns, a, b)])

    def integral(self, t: np.ndarray, idx=None) -> np.ndarray:
        return self.integral_between(np.zeros_like(t, dtype=float), t, idx)

    def ray(self, a: np.ndarray, d: np.ndarray, idx=None) -> Callable[[float], float]:
        """Return ``t -> sum_k int_{a_k}^{a_k + t d_k} c_k``.

        For affine functions this is ``t * lin + t**2 * quad`` with both
        coefficients computed once, so line searches cost O(1) per trial.
        """
        if self.affine:
            c0, c1 = (self.c0, self.c1) if idx is None else (self.c0[idx], self.c1[idx])
            lin = float(d @ (c0 + c1 * a))
            quad = 0.5 * float((c1 * d) @ d)
            return lambda t: t * (lin + t * quad)
        return lambda t: float(self.integral_between(a, a + t * d, idx).sum())
