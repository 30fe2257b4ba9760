"""Concrete control families: ReLU, sigmoid, residual blocks, and wells.

A well function is a field vanishing exactly on the closure of a box and
keeping a constant nonzero sign per component outside it; translated and
sign-flipped copies of a well drive all the constructive machinery.  Closure
under f -> D f(A z + b) is provided by ``apply_restriction``, which also
recognizes the structured cases (ReLU recomposition, frozen-argument drives)
so that exact flows survive restriction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import VectorField, field_from_json, register_family
from .pwl import PwlField, relu_terms_1d

__all__ = [
    "relu_field",
    "field_from_terms_1d",
    "relu_well_1d",
    "relu_well_nd",
    "sigmoid",
    "sigmoid_soft_threshold",
    "sigmoid_smn",
    "smn_well_1d",
    "smn_well_nd",
    "soft_threshold_well_1d",
    "block_field",
    "block_well_1d",
    "generic_field",
    "negated_field",
    "AffineRestriction",
    "apply_restriction",
    "OutsideSign",
    "WellFunction",
    "certify_well",
]


def _as_matrix(M, rows=None, cols=None, name="matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if rows is not None and M.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {M.shape}")
    if cols is not None and M.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} cols, got {M.shape}")
    return M


def relu_field(V, W, b, label: str = "relu") -> VectorField:
    """Field z -> V relu(W z + b) with V (n, q), W (q, n), b (q,).

    Lipschitz bound is the operator-norm product |V| |W|.  Fields whose
    sparsity pattern drives a single coordinate from a single coordinate get
    an exact closed-form flow attached.
    """
    V = _as_matrix(V, name="V")
    n, q = V.shape
    W = _as_matrix(W, rows=q, cols=n, name="W")
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape != (q,):
        raise ValueError(f"b must have shape ({q},), got {b.shape}")
    lip = float(np.linalg.norm(V, 2) * np.linalg.norm(W, 2))

    def evaluate(z, V=V, W=W, b=b):
        z = np.asarray(z, dtype=float)
        return np.maximum(z @ W.T + b, 0.0) @ V.T

    exact = _relu_exact_flow(V, W, b, n)
    params = {"V": V.tolist(), "W": W.tolist(), "b": b.tolist()}
    pwl = PwlField(np.column_stack([V[0, :], W[:, 0], b])) if n == 1 else None
    return VectorField(dim=n, eval=evaluate, lipschitz_bound=lip, label=label,
                       tag="relu", params=params, exact_flow=exact, pwl=pwl)


def _relu_exact_flow(V: np.ndarray, W: np.ndarray, b: np.ndarray, n: int):
    rows = np.flatnonzero(np.any(V != 0.0, axis=1))
    cols = np.flatnonzero(np.any(W != 0.0, axis=0))
    if len(rows) == 0:
        return lambda z, tau: np.asarray(z, dtype=float).copy()
    if len(cols) == 0:
        # Constant drift everywhere.
        drift = V @ np.maximum(b, 0.0)

        def flow_const(z, tau, drift=drift):
            return np.asarray(z, dtype=float) + tau * drift

        return flow_const
    if len(rows) == 1 and len(cols) == 1:
        i, j = int(rows[0]), int(cols[0])
        if i == j:
            terms = np.column_stack([V[i, :], W[:, i], b])
            pwl = PwlField(terms)

            def flow_auto(z, tau, pwl=pwl, i=i):
                z = np.asarray(z, dtype=float).copy()
                z[..., i] = pwl.flow(z[..., i], tau)
                return z

            return flow_auto

        def flow_frozen(z, tau, V=V, W=W, b=b, i=i):
            # Driving coordinate i from frozen coordinate j: velocity constant.
            z = np.asarray(z, dtype=float).copy()
            vel = np.maximum(z @ W.T + b, 0.0) @ V[i, :]
            z[..., i] = z[..., i] + tau * vel
            return z

        return flow_frozen
    return None


def field_from_terms_1d(terms, label: str = "relu1d") -> VectorField:
    """1D field sum_k v_k relu(w_k x + b_k) from a (k, 3) term list."""
    t = relu_terms_1d(terms)
    return relu_field(t[:, 0][None, :], t[:, 1][:, None], t[:, 2], label=label)


def _terms_of(f: VectorField) -> Optional[np.ndarray]:
    """Term list of a 1D relu-tagged field, else None."""
    if f.dim != 1 or f.tag != "relu" or f.params is None:
        return None
    V = np.asarray(f.params["V"], dtype=float)
    W = np.asarray(f.params["W"], dtype=float)
    b = np.asarray(f.params["b"], dtype=float)
    return np.column_stack([V[0, :], W[:, 0], b])


def generic_field(fn, dim: int, lipschitz_bound: float, label: str = "custom") -> VectorField:
    """Wrap a plain callable (batch-aware, shape (..., dim)) as a field."""
    return VectorField(dim=dim, eval=fn, lipschitz_bound=lipschitz_bound, label=label)


# -- activations and scalar well shapes -------------------------------------


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def sigmoid_soft_threshold(z):
    """s(z) = 0.5 * min(max(|z| - 1, 0), 1): vanishes on [-1, 1], caps at 0.5."""
    z = np.asarray(z, dtype=float)
    out = 0.5 * np.minimum(np.maximum(np.abs(z) - 1.0, 0.0), 1.0)
    return out if out.ndim else float(out)


def sigmoid_smn(M: int, N: int, z):
    """Smooth surrogate of the soft threshold built from 2N steep sigmoids.

    Satisfies |s(z) - s_{M,N}(z)| < 1/N + 1/(1 + exp(M/N)) for all z.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be >= 1")
    z = np.asarray(z, dtype=float)
    k = np.arange(1, N + 1)
    q = 1.0 + k / N
    acc = sigmoid(M * (-q - z[..., None])) + sigmoid(M * (z[..., None] - q))
    out = acc.sum(axis=-1) / (2.0 * N)
    return out if out.ndim else float(out)


def smn_bound(M: int, N: int) -> float:
    return 1.0 / N + 1.0 / (1.0 + math.exp(M / N))


def soft_threshold_well_1d() -> "WellFunction":
    """The exact soft-threshold well: piecewise linear, zero set [-1, 1]."""
    f = field_from_terms_1d(
        [(0.5, 1.0, -1.0), (-0.5, 1.0, -2.0), (0.5, -1.0, -1.0), (-0.5, -1.0, -2.0)],
        label="soft_threshold",
    )
    return WellFunction(dim=1, field=f, zero_box=np.array([[-1.0, 1.0]]),
                        outside_sign=OutsideSign(+1, +1), slack=0.0, label="soft_threshold")


def smn_well_1d(M: int, N: int) -> "WellFunction":
    bound_inside = 1.0 / (1.0 + math.exp(M / N))

    def evaluate(z, M=M, N=N):
        out = sigmoid_smn(M, N, np.asarray(z, dtype=float)[..., 0])
        return np.asarray(out, dtype=float)[..., None]

    f = VectorField(dim=1, eval=evaluate, lipschitz_bound=M / 4.0,
                    label=f"smn({M},{N})", tag="sigmoid_smn",
                    params={"M": M, "N": N, "dim": 1})
    return WellFunction(dim=1, field=f, zero_box=np.array([[-1.0, 1.0]]),
                        outside_sign=OutsideSign(+1, +1), slack=bound_inside,
                        label=f"smn_well({M},{N})")


def smn_well_nd(M: int, N: int, n: int) -> "WellFunction":
    """All components equal to the coordinate average of s_{M,N}."""
    bound_inside = 1.0 / (1.0 + math.exp(M / N))

    def evaluate(z, M=M, N=N, n=n):
        z = np.asarray(z, dtype=float)
        per_coord = sigmoid_smn(M, N, z)
        mean = per_coord.mean(axis=-1, keepdims=True)
        return np.broadcast_to(mean, z.shape).copy()

    f = VectorField(dim=n, eval=evaluate, lipschitz_bound=M / 4.0,
                    label=f"smn_nd({M},{N})", tag="sigmoid_smn",
                    params={"M": M, "N": N, "dim": n})
    box = np.tile([[-1.0, 1.0]], (n, 1))
    return WellFunction(dim=n, field=f, zero_box=box,
                        outside_sign=OutsideSign(+1, +1), slack=bound_inside,
                        label=f"smn_well_nd({M},{N})")


_ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "sigmoid": sigmoid,
    "tanh": np.tanh,
}
_ACTIVATION_LIP = {"relu": 1.0, "sigmoid": 0.25, "tanh": 1.0}


def block_field(V, W2, b2, W1, b1, sigma: str, label: str = "block") -> VectorField:
    """Two-layer residual block z -> V sigma(W2 sigma(W1 z + b1) + b2)."""
    if sigma not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {sigma!r}")
    V = _as_matrix(V, name="V")
    n, q2 = V.shape
    W2 = _as_matrix(W2, rows=q2, name="W2")
    q1 = W2.shape[1]
    W1 = _as_matrix(W1, rows=q1, cols=n, name="W1")
    b1 = np.asarray(b1, dtype=float).reshape(-1)
    b2 = np.asarray(b2, dtype=float).reshape(-1)
    if b1.shape != (q1,) or b2.shape != (q2,):
        raise ValueError("bias shape mismatch")
    act = _ACTIVATIONS[sigma]
    lip = float(np.linalg.norm(V, 2) * np.linalg.norm(W2, 2) * np.linalg.norm(W1, 2)
                * _ACTIVATION_LIP[sigma] ** 2)

    def evaluate(z, V=V, W2=W2, b2=b2, W1=W1, b1=b1, act=act):
        z = np.asarray(z, dtype=float)
        u = act(z @ W1.T + b1)
        return act(u @ W2.T + b2) @ V.T

    params = {"V": V.tolist(), "W2": W2.tolist(), "b2": b2.tolist(),
              "W1": W1.tolist(), "b1": b1.tolist(), "sigma": sigma}
    return VectorField(dim=n, eval=evaluate, lipschitz_bound=lip, label=label,
                       tag="block", params=params)


# Closed intervals I with interval preimage under each activation; the scalar
# block well is s(a * sigma(z) + b) with a z + b mapping I onto [-1, 1].
_BLOCK_INTERVALS = {
    "relu": (0.5, 1.5),
    "sigmoid": (float(sigmoid(-1.0)), float(sigmoid(1.0))),
    "tanh": (math.tanh(-1.0), math.tanh(1.0)),
}
_BLOCK_ZERO_SETS = {
    "relu": (0.5, 1.5),
    "sigmoid": (-1.0, 1.0),
    "tanh": (-1.0, 1.0),
}


def block_well_1d(sigma: str) -> "WellFunction":
    """Scalar well built by feeding an activation through the soft threshold."""
    if sigma not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {sigma!r}")
    lo, hi = _BLOCK_INTERVALS[sigma]
    a = 2.0 / (hi - lo)
    b = 1.0 - a * hi
    act = _ACTIVATIONS[sigma]

    def evaluate(z, a=a, b=b, act=act):
        z = np.asarray(z, dtype=float)
        out = sigmoid_soft_threshold(a * act(z[..., 0]) + b)
        return np.asarray(out, dtype=float)[..., None]

    f = VectorField(dim=1, eval=evaluate,
                    lipschitz_bound=0.5 * abs(a) * _ACTIVATION_LIP[sigma],
                    label=f"block_well({sigma})")
    z1, z2 = _BLOCK_ZERO_SETS[sigma]
    return WellFunction(dim=1, field=f, zero_box=np.array([[z1, z2]]),
                        outside_sign=OutsideSign(+1, +1), slack=0.0,
                        label=f"block_well({sigma})")


# -- restricted affine invariance --------------------------------------------


@dataclass(frozen=True)
class AffineRestriction:
    """The closure operation f -> D f(A z + b).

    D is diagonal with entries in {-1, 0, +1} (stored as the diagonal).  In
    the "main" regime A must be diagonal with |entries| <= 1; the "tensor"
    regime admits arbitrary A.
    """

    D: np.ndarray
    A: np.ndarray
    b: np.ndarray
    regime: str = "main"

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float).reshape(-1)
        n = D.shape[0]
        A = _as_matrix(self.A, rows=n, cols=n, name="A")
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.shape != (n,):
            raise ValueError(f"b must have shape ({n},)")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.regime not in ("main", "tensor"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if not np.all(np.isin(D, (-1.0, 0.0, 1.0))):
            raise ValueError("D entries must be -1, 0 or +1")
        if self.regime == "main":
            if np.any(A != np.diag(np.diag(A))):
                raise ValueError("main regime requires diagonal A")
            if np.any(np.abs(np.diag(A)) > 1.0 + 1e-15):
                raise ValueError("main regime requires |A entries| <= 1")

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    @staticmethod
    def translation(n: int, shift) -> "AffineRestriction":
        """r with D = I, A = I and b = shift: f -> f(z + shift)."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (n,))
        return AffineRestriction(np.ones(n), np.eye(n), shift)

    @staticmethod
    def flip(n: int) -> "AffineRestriction":
        return AffineRestriction(-np.ones(n), np.eye(n), np.zeros(n))

    def compose_inside(self, outer: "AffineRestriction") -> "AffineRestriction":
        """Restriction equivalent to applying self first, then outer.

        outer(D2,A2,b2) applied to g = D1 f(A1 z + b1) gives
        D2 D1 f(A1 A2 z + A1 b2 + b1).
        """
        regime = "tensor" if "tensor" in (self.regime, outer.regime) else "main"
        return AffineRestriction(self.D * outer.D, self.A @ outer.A,
                                 self.A @ outer.b + self.b, regime=regime)


def apply_restriction(f: VectorField, r: AffineRestriction) -> VectorField:
    """Field z -> D f(A z + b), preserving exact flows where structure allows.

    Structured cases: relu fields recompose algebraically; when the
    coordinates read by A are disjoint from those driven by D the argument is
    frozen along the flow and the velocity is constant.
    """
    if r.dim != f.dim:
        raise ValueError(f"restriction dim {r.dim} != field dim {f.dim}")
    n = f.dim
    # Flatten nested restrictions.
    if f.tag == "restricted" and f.params is not None:
        inner = field_from_json(f.params["inner"])
        r_inner = AffineRestriction(np.asarray(f.params["D"]), np.asarray(f.params["A"]),
                                    np.asarray(f.params["b"]), regime=f.params["regime"])
        return apply_restriction(inner, r_inner.compose_inside(r))
    # ReLU fields stay ReLU: V' = D V, W' = W A, b' = W b + b.
    if f.tag == "relu" and f.params is not None:
        V = np.asarray(f.params["V"], dtype=float)
        W = np.asarray(f.params["W"], dtype=float)
        b = np.asarray(f.params["b"], dtype=float)
        return relu_field(r.D[:, None] * V, W @ r.A, W @ r.b + b,
                          label=f"{f.label}|restricted")
    exact = _restricted_exact_flow(f, r)
    lip = float(np.max(np.abs(r.D)) * f.lipschitz_bound * (np.linalg.norm(r.A, 2) if n > 0 else 0.0))

    def evaluate(z, f=f, r=r):
        z = np.asarray(z, dtype=float)
        return r.D * f.eval(z @ r.A.T + r.b)

    params = {"inner": {"family_tag": f.tag, "params": f.params},
              "D": r.D.tolist(), "A": r.A.tolist(), "b": r.b.tolist(),
              "regime": r.regime}
    tag = "restricted" if f.tag is not None else None
    return VectorField(dim=n, eval=evaluate, lipschitz_bound=lip,
                       label=f"{f.label}|restricted", tag=tag,
                       params=params if tag else None, exact_flow=exact)


def _restricted_exact_flow(f: VectorField, r: AffineRestriction):
    driven = np.flatnonzero(r.D != 0.0)
    read = np.flatnonzero(np.any(r.A != 0.0, axis=0))
    if len(driven) == 0:
        return lambda z, tau: np.asarray(z, dtype=float).copy()
    if len(np.intersect1d(driven, read)) == 0:
        # Frozen argument: A z + b constant along the flow, velocity constant.
        def flow_frozen(z, tau, f=f, r=r):
            z = np.asarray(z, dtype=float).copy()
            vel = r.D * f.eval(z @ r.A.T + r.b)
            return z + tau * vel

        return flow_frozen
    if f.tag == "tensor" and f.params is not None:
        return _tensor_restricted_exact_flow(f, r)
    return None


def _tensor_restricted_exact_flow(f: VectorField, r: AffineRestriction):
    """Exact flows for restricted tensor fields (g per coordinate).

    Handles the self-driven diagonal case and the co-moving pair used by the
    shear construction, where two coordinates share the same scalar argument
    a z_j + b and their difference (or sum) is conserved.
    """
    inner_terms = f.params.get("terms")
    if inner_terms is None:
        return None
    g = PwlField(np.asarray(inner_terms, dtype=float))
    driven = np.flatnonzero(r.D != 0.0)
    A, b = r.A, r.b
    # Self-driven single coordinate: dz_i/dt = d g(a z_i + b_i).
    if len(driven) == 1:
        i = int(driven[0])
        row_cols = np.flatnonzero(A[i, :] != 0.0)
        if len(row_cols) == 1 and int(row_cols[0]) == i and \
                all(len(np.flatnonzero(A[k, :])) == 0 for k in range(f.dim) if k != i):
            a = float(A[i, i])
            scaled = g.precomposed_affine(a, float(b[i])).scaled(float(r.D[i]))
            if a == 0.0:
                return None  # constant argument handled by the frozen case

            def flow_diag(z, tau, scaled=scaled, i=i):
                z = np.asarray(z, dtype=float).copy()
                z[..., i] = scaled.flow(z[..., i], tau)
                return z

            return flow_diag
    # Co-moving pair: rows i and j of A both read coordinate j with weight a.
    if len(driven) == 2:
        p, q = int(driven[0]), int(driven[1])
        for i, j in ((p, q), (q, p)):
            ok = (A[i, j] != 0.0 and A[j, j] == A[i, j] and b[i] == b[j]
                  and len(np.flatnonzero(A[i, :])) == 1
                  and len(np.flatnonzero(A[j, :])) == 1
                  and all(len(np.flatnonzero(A[k, :])) == 0
                          for k in range(f.dim) if k not in (i, j)))
            if ok:
                a = float(A[j, j])
                dj, di = float(r.D[j]), float(r.D[i])
                # u = a z_j + b evolves autonomously; z_i tracks z_j exactly.
                u_field = g.scaled(a * dj)

                def flow_pair(z, tau, u_field=u_field, a=a, b0=float(b[j]),
                              di=di, dj=dj, i=i, j=j):
                    z = np.asarray(z, dtype=float).copy()
                    u0 = a * z[..., j] + b0
                    u1 = u_field.flow(u0, tau)
                    dzj = (u1 - u0) / a
                    z[..., i] = z[..., i] + di * dj * dzj
                    z[..., j] = z[..., j] + dzj
                    return z

                return flow_pair
    return None


def negated_field(f: VectorField) -> VectorField:
    """The field -f, used to realize exact inverse flows."""
    return apply_restriction(f, AffineRestriction.flip(f.dim))


# -- well functions ----------------------------------------------------------


@dataclass(frozen=True)
class OutsideSign:
    """Constant component sign beyond the zero box, per probed side."""

    left: int
    right: int


@dataclass(frozen=True)
class WellFunction:
    """A field vanishing on a box, with certified outside-sign behavior.

    ``slack`` is the certified bound on |field| inside the zero box: exactly
    0 for the ReLU constructions, and the proven estimate for the smoothed
    sigmoid surrogates.
    """

    dim: int
    field: VectorField
    zero_box: np.ndarray
    outside_sign: OutsideSign
    slack: float = 0.0
    label: str = ""

    def __post_init__(self):
        box = np.asarray(self.zero_box, dtype=float).reshape(self.dim, 2)
        if np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("zero_box must have positive width on every axis")
        object.__setattr__(self, "zero_box", box)
        if self.field.dim != self.dim:
            raise ValueError("field dim mismatch")

    @property
    def q1(self) -> float:
        if self.dim != 1:
            raise ValueError("q1/q2 are 1D accessors")
        return float(self.zero_box[0, 0])

    @property
    def q2(self) -> float:
        if self.dim != 1:
            raise ValueError("q1/q2 are 1D accessors")
        return float(self.zero_box[0, 1])

    @property
    def width(self) -> float:
        return float(np.min(self.zero_box[:, 1] - self.zero_box[:, 0]))

    def translated(self, delta) -> "WellFunction":
        """Well with zero box shifted by +delta (field x -> h(x - delta))."""
        delta = np.broadcast_to(np.asarray(delta, dtype=float), (self.dim,))
        new_field = apply_restriction(self.field, AffineRestriction.translation(self.dim, -delta))
        return replace(self, field=new_field, zero_box=self.zero_box + delta[:, None])

    def flipped(self) -> "WellFunction":
        new_field = negated_field(self.field)
        sign = OutsideSign(-self.outside_sign.left, -self.outside_sign.right)
        return replace(self, field=new_field, outside_sign=sign)

    def section_1d(self, component: int = 0, axis: int = 0, base=None) -> "WellFunction":
        """1D well from the given component along an axis line through base.

        ReLU-built wells section into exact ReLU term lists; other families
        get a numeric wrapper field.  base defaults to the zero-box center,
        so the other coordinates contribute nothing.
        """
        if base is None:
            base = self.zero_box.mean(axis=1)
        base = np.asarray(base, dtype=float)
        box = self.zero_box[axis:axis + 1, :].copy()
        if self.field.tag == "relu" and self.field.params is not None:
            V = np.asarray(self.field.params["V"], dtype=float)
            W = np.asarray(self.field.params["W"], dtype=float)
            b = np.asarray(self.field.params["b"], dtype=float)
            off = W @ base - W[:, axis] * base[axis] + b
            terms = np.column_stack([V[component, :], W[:, axis], off])
            f1 = field_from_terms_1d(terms, label=f"{self.label}|section{component},{axis}")
        else:
            nd_eval = self.field.eval

            def section_eval(x, nd_eval=nd_eval, base=base, axis=axis, component=component):
                x = np.asarray(x, dtype=float)
                pts = np.broadcast_to(base, x.shape[:-1] + base.shape).copy()
                pts[..., axis] = x[..., 0]
                return nd_eval(pts)[..., component:component + 1]

            f1 = VectorField(dim=1, eval=section_eval,
                             lipschitz_bound=self.field.lipschitz_bound,
                             label=f"{self.label}|section{component},{axis}")
        return WellFunction(dim=1, field=f1, zero_box=box,
                            outside_sign=self.outside_sign, slack=self.slack,
                            label=f"{self.label}|1d")


def relu_well_1d(q1: float, q2: float) -> WellFunction:
    """h(x) = (relu(q1 - x) + relu(x - q2)) / 2: zero on [q1, q2], positive outside."""
    if not q1 < q2:
        raise ValueError("need q1 < q2")
    f = field_from_terms_1d([(0.5, -1.0, q1), (0.5, 1.0, -q2)], label="relu_well")
    return WellFunction(dim=1, field=f, zero_box=np.array([[q1, q2]]),
                        outside_sign=OutsideSign(+1, +1), slack=0.0, label="relu_well")


def relu_well_nd(n: int) -> WellFunction:
    """Every component equals the mean of relu(-1 - z_j) + relu(z_j - 1).

    Zero box is [-1, 1]^n; each component is positive outside.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    V = np.full((n, 2 * n), 1.0 / (2.0 * n))
    W = np.vstack([-np.eye(n), np.eye(n)])
    b = np.full(2 * n, -1.0)
    f = relu_field(V, W, b, label=f"relu_well_nd({n})")
    box = np.tile([[-1.0, 1.0]], (n, 1))
    return WellFunction(dim=n, field=f, zero_box=box,
                        outside_sign=OutsideSign(+1, +1), slack=0.0,
                        label=f"relu_well_nd({n})")


def certify_well(well: WellFunction, samples_per_line: int = 100_000,
                 reach: float = 3.0, tol: float = 1e-12, seed: int = 0) -> dict:
    """Sample-based certification of the well contract.

    Checks |field| <= slack + tol on points inside the zero box and constant
    nonzero component signs on rays beyond the box along every axis.
    Returns a report dict with the measured margins.
    """
    rng = np.random.default_rng(seed)
    box = well.zero_box
    n = well.dim
    inside = rng.uniform(box[:, 0], box[:, 1], size=(samples_per_line, n))
    vals = well.field.eval(inside)
    inside_max = float(np.max(np.abs(vals)))
    ok = inside_max <= well.slack + tol
    sign_ok = True
    min_margin = np.inf
    center = box.mean(axis=1)
    for axis in range(n):
        for side, sgn in (("left", well.outside_sign.left), ("right", well.outside_sign.right)):
            ts = np.linspace(1e-6, reach, samples_per_line // 10)
            pts = np.tile(center, (len(ts), 1))
            if side == "left":
                pts[:, axis] = box[axis, 0] - ts
            else:
                pts[:, axis] = box[axis, 1] + ts
            comp = well.field.eval(pts)
            signed = sgn * comp
            if np.any(signed <= 0.0):
                sign_ok = False
            min_margin = min(min_margin, float(np.min(np.abs(comp))))
    return {
        "inside_max_abs": inside_max,
        "inside_ok": bool(ok),
        "outside_sign_ok": bool(sign_ok),
        "outside_min_margin": min_margin,
        "passed": bool(ok and sign_ok),
    }


# -- serialization registry --------------------------------------------------


def _build_relu(params: dict) -> VectorField:
    return relu_field(params["V"], params["W"], params["b"])


def _build_sigmoid_smn(params: dict) -> VectorField:
    d = int(params["dim"])
    well = smn_well_1d(int(params["M"]), int(params["N"])) if d == 1 \
        else smn_well_nd(int(params["M"]), int(params["N"]), d)
    return well.field


def _build_block(params: dict) -> VectorField:
    return block_field(params["V"], params["W2"], params["b2"],
                       params["W1"], params["b1"], params["sigma"])


def _build_restricted(params: dict) -> VectorField:
    inner = field_from_json(params["inner"])
    r = AffineRestriction(np.asarray(params["D"]), np.asarray(params["A"]),
                          np.asarray(params["b"]), regime=params["regime"])
    return apply_restriction(inner, r)


register_family("relu", _build_relu)
register_family("sigmoid_smn", _build_sigmoid_smn)
register_family("block", _build_block)
register_family("restricted", _build_restricted)
