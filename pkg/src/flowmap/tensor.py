"""Tensor-product control families and shear-based point operations.

A tensor field applies one scalar field to every coordinate.  Widening the
affine closure to arbitrary matrices A makes two coordinates readable from
the same scalar argument, so their difference is conserved along the flow:
composing such a co-moving stage with the exact inverse on the controlling
coordinate realizes the shear x_i <- x_i + g(x_j).  Point separation and
transport then reduce to interpolating the needed per-point corrections by a
difference of two increasing piecewise-linear maps, each compiled exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Schedule, VectorField, field_from_json, register_family
from .families import AffineRestriction, apply_restriction
from .rates import compile_pwl_map
from .util import collision_counts, rank_spread

__all__ = [
    "tensor_field",
    "shear_schedule",
    "ShearParts",
    "shear_parts",
    "tensor_transport",
]

# Compiled shears land on their interpolation nodes only up to roundoff, so
# gaps below this floor are treated as collisions and separations overshoot it.
NOISE_FLOOR = 1e-9


def _loose_collisions(pts: np.ndarray, tol: float = NOISE_FLOOR) -> list:
    out = []
    for i in range(pts.shape[1]):
        vals = np.sort(pts[:, i])
        out.append(int(np.sum(np.diff(vals) < tol)))
    return out


def tensor_field(g: VectorField, n: int, label: str = "tensor") -> VectorField:
    """Coordinatewise field (g(x_1), ..., g(x_n)) from a scalar field g."""
    if g.dim != 1:
        raise ValueError("tensor_field needs a 1D inner field")
    inner_eval = g.eval

    def evaluate(z, inner_eval=inner_eval):
        z = np.asarray(z, dtype=float)
        return inner_eval(z[..., None])[..., 0]

    params = {"n": n, "inner": {"family_tag": g.tag, "params": g.params}}
    exact = None
    if g.pwl is not None:
        params["terms"] = g.pwl.terms.tolist()

        def exact(z, tau, pwl=g.pwl):
            z = np.asarray(z, dtype=float)
            return pwl.flow(z, tau)

    tag = "tensor" if g.tag is not None else None
    return VectorField(dim=n, eval=evaluate, lipschitz_bound=g.lipschitz_bound,
                       label=label, tag=tag, params=params if tag else None,
                       exact_flow=exact, pwl=g.pwl)


def _build_tensor(params: dict) -> VectorField:
    inner = field_from_json(params["inner"])
    return tensor_field(inner, int(params["n"]))


register_family("tensor", _build_tensor)


def _comove_field(g1d: VectorField, i: int, j: int, n: int, sign: float) -> VectorField:
    """dz_i = sign * g(z_j), dz_j = g(z_j), rest frozen; conserves z_i - sign z_j."""
    D = np.zeros(n)
    D[i] = sign
    D[j] = 1.0
    A = np.zeros((n, n))
    A[i, j] = 1.0
    A[j, j] = 1.0
    return apply_restriction(tensor_field(g1d, n),
                             AffineRestriction(D, A, np.zeros(n), regime="tensor"))


def _j_only_field(g1d: VectorField, j: int, n: int, negate: bool) -> VectorField:
    D = np.zeros(n)
    D[j] = -1.0 if negate else 1.0
    A = np.zeros((n, n))
    A[j, j] = 1.0
    return apply_restriction(tensor_field(g1d, n),
                             AffineRestriction(D, A, np.zeros(n), regime="tensor"))


def _doubling_schedule() -> Schedule:
    """1D schedule whose flow is exactly x -> 2x."""
    from .families import field_from_terms_1d

    t = math.log(2.0)
    up = field_from_terms_1d([(1.0, 1.0, 0.0)], label="double+")
    dn = field_from_terms_1d([(-1.0, -1.0, 0.0)], label="double-")
    return Schedule(((up, t), (dn, t)), 1)


@dataclass(frozen=True)
class ShearParts:
    comove: Schedule
    restore: Schedule
    comove_identity: Schedule
    restore_identity: Schedule

    @property
    def schedule(self) -> Schedule:
        out = self.comove.then(self.restore)
        return out.then(self.comove_identity).then(self.restore_identity)


def shear_parts(g_schedule: Schedule, i: int, j: int, n: int, sign: float = 1.0,
                include_identity: bool = True) -> ShearParts:
    """Stages of the shear construction; see shear_schedule."""
    if g_schedule.dim != 1:
        raise ValueError("g must be a 1D schedule")
    if i == j:
        raise ValueError("target and control coordinates must differ")
    if sign not in (1.0, -1.0):
        raise ValueError("sign must be +1 or -1")
    comove = Schedule(tuple((_comove_field(f, i, j, n, sign), t)
                            for f, t in g_schedule.steps), n)
    restore = Schedule(tuple((_j_only_field(f, j, n, negate=True), t)
                             for f, t in reversed(g_schedule.steps)), n)
    if include_identity and len(g_schedule.steps):
        dbl = _doubling_schedule()
        comove_id = Schedule(tuple((_comove_field(f, i, j, n, sign), t)
                                   for f, t in dbl.steps), n)
        restore_id = Schedule(tuple((_j_only_field(f, j, n, negate=True), t)
                                    for f, t in reversed(dbl.steps)), n)
    else:
        comove_id = Schedule((), n)
        restore_id = Schedule((), n)
    return ShearParts(comove=comove, restore=restore,
                      comove_identity=comove_id, restore_identity=restore_id)


def shear_schedule(g_schedule: Schedule, i: int, j: int, n: int,
                   sign: float = 1.0, include_identity: bool = True) -> Schedule:
    """Flow realizing x_i <- x_i + sign * G(x_j) with G the flow of g_schedule.

    The co-moving stages add sign * (G(x_j) - x_j) while the controlling
    coordinate evolves; the exact inverse (reversed, negated steps, applied to
    coordinate j alone) restores it.  A doubling pair contributes the
    remaining sign * x_j.  An empty g_schedule degenerates to the empty shear.
    With include_identity=False the realized shear is sign * (G(x_j) - x_j),
    which is what difference-of-increasing constructions pair up.
    """
    return shear_parts(g_schedule, i, j, n, sign, include_identity).schedule


def _difference_shear(abscissae, corrections, i: int, j: int, n: int,
                      slack: float = 1e-6) -> Schedule:
    """Shear x_i += D(x_j) where D interpolates corrections at the abscissae.

    D is realized as a difference P - Q of increasing piecewise-linear maps:
    Q = lam * x with lam large enough that P = Q + D-interpolant is strictly
    increasing; both are compiled exactly, so the shear is exact at the
    abscissae and bystander points listed with zero correction do not move.
    """
    a = np.asarray(abscissae, dtype=float)
    d = np.asarray(corrections, dtype=float)
    order = np.argsort(a)
    a, d = a[order], d[order]
    if len(a) >= 2 and float(np.min(np.diff(a))) < NOISE_FLOOR:
        raise RuntimeError("shear abscissae closer than the noise floor; "
                           "interpolation slopes would be unbounded")
    if len(a) >= 2:
        lam = float(max(1.0, np.max(-np.diff(d) / np.diff(a)) * 2.0 + 1.0))
    else:
        lam = 1.0
    p_vals = lam * a + d
    if len(a) >= 2:
        inner_slopes = np.diff(p_vals) / np.diff(a)
        slopes = np.concatenate([[lam], inner_slopes, [lam]])
        breakpoints = a
    else:
        slopes = np.array([lam])
        breakpoints = np.empty(0)
    p_sched = compile_pwl_map(breakpoints, slopes, float(a[0]), float(p_vals[0]), slack=slack)
    q_sched = compile_pwl_map(np.empty(0), np.array([lam]), 0.0, 0.0, slack=slack)
    plus = shear_schedule(p_sched, i, j, n, sign=1.0, include_identity=False)
    minus = shear_schedule(q_sched, i, j, n, sign=-1.0, include_identity=False)
    return plus.then(minus)


def tensor_transport(xs, ys, eps: float, seed: int = 0, family1d: str = "relu",
                     return_trace: bool = False):
    """Match distinct points to targets using tensor shears only.

    Separation moves one colliding pair per stage by a small difference bump
    (exactly zero at all other points); transport then fixes one coordinate
    per shear, since the interpolated correction lands every point at once.
    """
    if family1d != "relu":
        raise ValueError("tensor transport ships with the ReLU scalar family; "
                         "other families need their own increasing realizations")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    m, n = xs.shape
    if ys.shape != xs.shape:
        raise ValueError("xs and ys must have equal shape")
    if len(np.unique(xs, axis=0)) != m:
        raise ValueError("points must be pairwise distinct")

    ys_used = ys.copy()
    counts = collision_counts(ys_used)
    if any(c > 0 for c in counts):
        delta = eps / (2.0 * math.sqrt(n) * max(1, m))
        for i in range(n):
            if counts[i] > 0:
                ys_used[:, i] = rank_spread(ys_used[:, i], delta)

    pts = xs.copy()
    sched = Schedule((), n)
    trace = []
    # Separation: one bump per (tolerance-)colliding pair.  Gaps below the
    # noise floor count as collisions, and bumps overshoot the floor so that
    # later interpolation abscissae keep bounded slopes.
    guard = n * m * m + 1
    while True:
        cts = _loose_collisions(pts)
        if all(c == 0 for c in cts):
            break
        guard -= 1
        if guard <= 0:
            raise RuntimeError("separation failed to terminate")
        i = next(k for k in range(n) if cts[k] > 0)
        srt_i = np.argsort(pts[:, i])
        pos = int(np.nonzero(np.diff(pts[srt_i, i]) < NOISE_FLOOR)[0][0])
        group = srt_i[[pos, pos + 1]]
        k, l, read = None, None, None
        for jj in range(n):
            if jj == i:
                continue
            if abs(pts[group[0], jj] - pts[group[1], jj]) >= NOISE_FLOOR:
                srt = group[np.argsort(pts[group, jj])]
                k, l, read = int(srt[0]), int(srt[-1]), jj
                break
        if k is None:
            raise RuntimeError("colliding pair is not separable; points too close "
                               "in every coordinate")
        gaps = np.diff(np.sort(pts[:, i]))
        gaps = gaps[gaps >= NOISE_FLOOR]
        d_i = float(gaps.min()) if len(gaps) else math.inf
        delta = max(8.0 * NOISE_FLOOR, 0.5 * min(eps / (n * m * m), d_i / 3.0))
        absc = pts[:, read].copy()
        corr = np.zeros(m)
        corr[k] = delta
        corr[l] = -delta
        # Points sharing a read value (within noise) share one interpolation
        # node; the larger correction wins, which only co-moves the bystander
        # by at most delta and cannot create new collisions under the cap.
        srt_r = np.argsort(absc)
        kept = [int(srt_r[0])]
        for v in srt_r[1:]:
            u = kept[-1]
            if absc[v] - absc[u] < NOISE_FLOOR:
                if abs(corr[v]) > abs(corr[u]):
                    corr[u] = corr[v]
            else:
                kept.append(int(v))
        kept = np.asarray(kept)
        stage = _difference_shear(absc[kept], corr[kept], i, read, n)
        before = cts[i]
        new_pts = _flow(stage, pts)
        after = _loose_collisions(new_pts)[i]
        if after >= before:
            raise RuntimeError("separation bump did not reduce collisions")
        trace.append({"kind": "separate", "coord": i, "read": read,
                      "collisions_before": before, "collisions_after": after})
        pts = new_pts
        sched = sched.then(stage)

    # Transport: one difference shear per coordinate.
    for i in range(n):
        j = (i + 1) % n
        absc = pts[:, j]
        if m > 1 and float(np.min(np.diff(np.sort(absc)))) < NOISE_FLOOR:
            raise RuntimeError(f"controlling coordinate {j} not separated at pass {i}")
        corr = ys_used[:, i] - pts[:, i]
        stage = _difference_shear(absc, corr, i, j, n)
        pts = _flow(stage, pts)
        resid = float(np.max(np.abs(pts[:, i] - ys_used[:, i])))
        if resid > max(1e-9, eps * 1e-3):
            raise RuntimeError(f"tensor transport residual {resid:.3g} at coordinate {i}")
        trace.append({"kind": "transport", "coord": i, "residual": resid})
        sched = sched.then(stage)

    final_gap = float(np.max(np.linalg.norm(pts - ys, axis=1)))
    if final_gap > eps:
        raise RuntimeError(f"tensor transport landed {final_gap:.3g} > eps from targets")
    if return_trace:
        return sched, trace
    return sched


def _flow(sched: Schedule, pts: np.ndarray) -> np.ndarray:
    from .core import flow_eval

    return flow_eval(sched, pts)
