"""Exact flows for scalar piecewise-linear vector fields.

A field of the form f(x) = sum_k v_k * relu(w_k * x + b_k) is continuous and
piecewise linear, so the autonomous ODE dz/dt = f(z) can be integrated in
closed form: inside each linearity interval the solution is affine or
exponential, and a trajectory crosses each kink at most once because scalar
autonomous trajectories are monotone in time.  Everything downstream that
composes ReLU-built flows (drives, squeezes, slope compilation, shears) runs
on this kernel, which makes endpoint evaluation exact up to roundoff.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

__all__ = ["PwlField", "relu_terms_1d"]


def relu_terms_1d(terms) -> np.ndarray:
    """Normalize a list of (v, w, b) triples into a (k, 3) float array."""
    arr = np.atleast_2d(np.asarray(terms, dtype=float))
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected (k, 3) term array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PwlField:
    """Scalar field f(x) = sum_k v_k * relu(w_k x + b_k) with exact flow.

    Attributes
    ----------
    terms:
        (k, 3) array of (v, w, b) triples.  Terms with w == 0 contribute the
        constant v * relu(b).
    """

    terms: np.ndarray
    _kinks: np.ndarray = field(init=False, repr=False, compare=False)
    _slope: np.ndarray = field(init=False, repr=False, compare=False)
    _icept: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        terms = relu_terms_1d(self.terms)
        object.__setattr__(self, "terms", terms)
        v, w, b = terms[:, 0], terms[:, 1], terms[:, 2]
        live = w != 0.0
        with np.errstate(over="ignore", divide="ignore"):
            kinks = np.unique(-b[live] / w[live]) if live.any() else np.empty(0)
        kinks = kinks[np.isfinite(kinks)]
        # Piece j covers (kinks[j-1], kinks[j]); piece index runs 0..len(kinks).
        probes = self._piece_probes(kinks)
        slope = np.zeros(len(kinks) + 1)
        icept = np.zeros(len(kinks) + 1)
        const = float(np.sum(v[~live] * np.maximum(b[~live], 0.0))) if (~live).any() else 0.0
        for j, x0 in enumerate(probes):
            act = live & (w * x0 + b > 0.0)
            slope[j] = float(np.sum(v[act] * w[act]))
            icept[j] = float(np.sum(v[act] * b[act])) + const
        object.__setattr__(self, "_kinks", kinks)
        object.__setattr__(self, "_slope", slope)
        object.__setattr__(self, "_icept", icept)
        object.__setattr__(self, "_kl", kinks.tolist())
        object.__setattr__(self, "_sl", slope.tolist())
        object.__setattr__(self, "_cl", icept.tolist())

    @staticmethod
    def _piece_probes(kinks: np.ndarray) -> np.ndarray:
        if len(kinks) == 0:
            return np.zeros(1)
        gap = max(1.0, float(np.max(np.abs(kinks))))
        with np.errstate(over="ignore"):
            edges = np.concatenate([[kinks[0] - gap], kinks, [kinks[-1] + gap]])
            return 0.5 * (edges[:-1] + edges[1:])

    # -- evaluation -------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        v, w, b = self.terms[:, 0], self.terms[:, 1], self.terms[:, 2]
        return np.maximum(np.multiply.outer(x, w) + b, 0.0) @ v

    @property
    def lipschitz_bound(self) -> float:
        """Exact Lipschitz constant: max absolute slope over pieces."""
        return float(np.max(np.abs(self._slope))) if len(self._slope) else 0.0

    @property
    def max_kink_scale(self) -> float:
        return float(np.max(np.abs(self._kinks))) if len(self._kinks) else 0.0

    # -- algebra on term lists -------------------------------------------

    def scaled(self, c: float) -> "PwlField":
        """Field x -> c * f(x)."""
        t = self.terms.copy()
        t[:, 0] *= c
        return PwlField(t)

    def precomposed_affine(self, a: float, beta: float) -> "PwlField":
        """Field x -> f(a x + beta); stays in the same ReLU term family."""
        t = self.terms.copy()
        t[:, 2] = t[:, 1] * beta + t[:, 2]
        t[:, 1] = t[:, 1] * a
        return PwlField(t)

    # -- exact flow -------------------------------------------------------

    def flow(self, x, tau: float):
        """Endpoint of dz/dt = f(z), z(0) = x after time tau >= 0.

        Vectorized over x.  Exact up to floating point: steps from kink to
        kink using the affine closed form on each piece.
        """
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        x_in = np.asarray(x, dtype=float)
        z = x_in.ravel().copy()
        if tau > 0 and z.size:
            self._flow_inplace(z, float(tau))
        if x_in.ndim == 0:
            return float(z[0])
        return z.reshape(x_in.shape)

    def flow_scalar(self, x: float, tau: float) -> float:
        """Scalar fast path for flow(); avoids array allocation in root finders."""
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        kinks, slope, icept = self._kl, self._sl, self._cl
        K = len(kinks)
        z = float(x)
        rem = float(tau)
        for _ in range(K + 2):
            if rem <= 0.0:
                break
            p = bisect_right(kinks, z)
            a, c = slope[p], icept[p]
            v = a * z + c
            if p >= 1 and z == kinks[p - 1] and v < 0.0:
                p -= 1
                a, c = slope[p], icept[p]
                v = a * z + c
            if v == 0.0:
                break
            if v > 0.0:
                bnd = kinks[p] if p < K else None
            else:
                bnd = kinks[p - 1] if p >= 1 else None
            if bnd is None:
                t_hit = math.inf
            elif a == 0.0:
                t_hit = (bnd - z) / v
            else:
                ratio = (a * bnd + c) / v
                t_hit = math.log(ratio) / a if ratio > 0.0 else math.inf
            if t_hit <= rem:
                z = bnd
                rem -= t_hit
            elif a == 0.0:
                z += c * rem
                rem = 0.0
            else:
                zeq = -c / a
                try:
                    z = zeq + (z - zeq) * math.exp(a * rem)
                except OverflowError:
                    z = math.inf if z > zeq else -math.inf
                rem = 0.0
        return z

    def _flow_inplace(self, z: np.ndarray, tau: float) -> None:
        rem = np.full(z.shape, tau)
        kinks, slope, icept = self._kinks, self._slope, self._icept
        lo_edge = np.concatenate([[-np.inf], kinks])
        hi_edge = np.concatenate([kinks, [np.inf]])
        for _ in range(len(kinks) + 2):
            act = rem > 0.0
            if not act.any():
                break
            p = np.searchsorted(kinks, z, side="right")
            vel = slope[p] * z + icept[p]
            # Landed exactly on a kink while moving left: use the left piece.
            if len(kinks):
                on_kink = (p >= 1) & (z == lo_edge[p])
                p = np.where(act & on_kink & (vel < 0.0), p - 1, p)
            a, c = slope[p], icept[p]
            vel = a * z + c
            rem[act & (vel == 0.0)] = 0.0
            act = rem > 0.0
            if not act.any():
                break
            bnd = np.where(vel > 0.0, hi_edge[p], lo_edge[p])
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                t_lin = (bnd - z) / vel
                ratio = (a * bnd + c) / vel
                t_exp = np.where(ratio > 0.0, np.log(np.where(ratio > 0.0, ratio, 1.0)) / a, np.inf)
                t_hit = np.where(a == 0.0, t_lin, t_exp)
            t_hit = np.where(np.isnan(t_hit), np.inf, t_hit)
            hit = act & (t_hit <= rem)
            t_used = np.where(hit, t_hit, rem)
            with np.errstate(over="ignore", invalid="ignore"):
                z_eq = -c / np.where(a != 0.0, a, 1.0)
                z_free = np.where(
                    a == 0.0,
                    z + c * t_used,
                    z_eq + (z - z_eq) * np.exp(a * t_used),
                )
            z[act] = np.where(hit, bnd, z_free)[act]
            rem[act] = np.where(hit, rem - t_used, 0.0)[act]
