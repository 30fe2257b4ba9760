"""Vector fields, piecewise-constant schedules, and flow-map evaluation.

A Schedule is a finite list of (field, duration) pairs; its flow map is the
composition of the autonomous flows of the individual fields, applied in list
order.  Evaluation prefers exact closed forms where a field carries one
(ReLU-built scalar fields and their coordinate liftings do) and otherwise
falls back to adaptive RK45 or fixed-step RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "VectorField",
    "Schedule",
    "IntegratorConfig",
    "DEFAULT_CONFIG",
    "FlowEvalError",
    "BlowupError",
    "StepBudgetError",
    "flow_eval",
    "flow_eval_exact_relu_1d",
    "jacobian_sign_check",
    "spot_check_lipschitz",
    "JacobianRecord",
    "schedule_to_json",
    "schedule_from_json",
    "register_family",
]

BLOWUP_LIMIT = 1e12


class FlowEvalError(RuntimeError):
    """Flow evaluation failed."""


class BlowupError(FlowEvalError):
    """State left the |z| <= 1e12 guard box or became non-finite."""


class StepBudgetError(FlowEvalError):
    """Integrator exhausted its step budget (stiffness or misconfiguration)."""


@dataclass(frozen=True)
class VectorField:
    """An evaluable map R^dim -> R^dim with Lipschitz metadata.

    ``eval`` must accept arrays of shape (..., dim) and return the same shape.
    ``lipschitz_bound`` is an upper bound supplied by the constructor, possibly
    conservative; it is spot-checked by sampling, never computed symbolically.
    ``exact_flow``, when present, maps (x of shape (..., dim), tau) to the
    exact endpoint of the autonomous flow and is preferred by the default
    integrator config.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float
    label: str = ""
    tag: Optional[str] = None
    params: Optional[dict] = None
    exact_flow: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    pwl: Optional[object] = None  # PwlField for scalar ReLU-built fields

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.lipschitz_bound < 0:
            raise ValueError("lipschitz_bound must be nonnegative")


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant control: ordered (field, duration) steps."""

    steps: tuple
    dim: int

    def __post_init__(self):
        steps = tuple((f, float(t)) for f, t in self.steps)
        object.__setattr__(self, "steps", steps)
        for f, t in steps:
            if f.dim != self.dim:
                raise ValueError(f"field dim {f.dim} != schedule dim {self.dim}")
            if not (t >= 0.0 and math.isfinite(t)):
                raise ValueError(f"step duration must be finite and nonnegative, got {t}")

    @property
    def total_time(self) -> float:
        return math.fsum(t for _, t in self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def then(self, other: "Schedule") -> "Schedule":
        """Concatenation: self applied first, then other."""
        if other.dim != self.dim:
            raise ValueError("dim mismatch")
        return Schedule(self.steps + other.steps, self.dim)

    def reversed_inverse(self) -> "Schedule":
        """Exact inverse flow: reversed step order with negated fields."""
        from .families import negated_field  # local import to avoid a cycle

        steps = tuple((negated_field(f), t) for f, t in reversed(self.steps))
        return Schedule(steps, self.dim)


def schedule(steps: Sequence, dim: Optional[int] = None) -> Schedule:
    """Build a Schedule, inferring dim from the first field if not given."""
    steps = tuple(steps)
    if dim is None:
        if not steps:
            raise ValueError("dim required for an empty schedule")
        dim = steps[0][0].dim
    return Schedule(steps, dim)


@dataclass(frozen=True)
class IntegratorConfig:
    """Numeric integration settings.

    method: "closed_form_if_available" uses a field's exact flow when it has
    one and RK45 otherwise; "rk45_adaptive" always integrates numerically;
    "rk4_fixed" uses the classic fixed-step scheme with step size ``step``.
    """

    method: str = "closed_form_if_available"
    tol: float = 1e-10
    step: float = 1e-3
    max_steps: int = 200_000

    def __post_init__(self):
        if self.method not in ("closed_form_if_available", "rk45_adaptive", "rk4_fixed"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


DEFAULT_CONFIG = IntegratorConfig()


def _check_state(z: np.ndarray) -> None:
    if not np.all(np.isfinite(z)):
        raise BlowupError("non-finite state during flow evaluation")
    if np.max(np.abs(z)) > BLOWUP_LIMIT:
        raise BlowupError(f"state magnitude exceeded guard {BLOWUP_LIMIT:g}")


def _rk45_step_field(f: VectorField, z: np.ndarray, tau: float, cfg: IntegratorConfig) -> np.ndarray:
    shape = z.shape
    nfev = 0
    budget = 8 * cfg.max_steps

    def rhs(_t, y):
        nonlocal nfev
        nfev += 1
        if nfev > budget:
            raise StepBudgetError(f"max_steps={cfg.max_steps} exhausted (nfev>{budget})")
        state = y.reshape(shape)
        _check_state(state)
        return f.eval(state).ravel()

    sol = solve_ivp(rhs, (0.0, tau), z.ravel(), method="RK45",
                    rtol=cfg.tol, atol=cfg.tol * 1e-3)
    if not sol.success:
        raise FlowEvalError(f"RK45 failed on field {f.label!r}: {sol.message}")
    return sol.y[:, -1].reshape(shape)


def _rk4_fixed_step_field(f: VectorField, z: np.ndarray, tau: float, cfg: IntegratorConfig) -> np.ndarray:
    n = max(1, int(math.ceil(tau / cfg.step)))
    if n > cfg.max_steps:
        raise StepBudgetError(f"rk4_fixed needs {n} steps > max_steps={cfg.max_steps}")
    h = tau / n
    for _ in range(n):
        k1 = f.eval(z)
        k2 = f.eval(z + 0.5 * h * k1)
        k3 = f.eval(z + 0.5 * h * k2)
        k4 = f.eval(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_state(z)
    return z


def flow_eval(sched: Schedule, x, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Endpoint of the schedule's flow from x.

    x may be a single point of shape (dim,) or a batch (..., dim); the result
    has the same shape.  Deterministic for a fixed config.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (sched.dim,):
        raise ValueError(f"point shape {x.shape} incompatible with dim {sched.dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point must be finite")
    z = x.copy()
    for f, tau in sched.steps:
        if tau == 0.0:
            continue
        use_exact = cfg.method == "closed_form_if_available" and f.exact_flow is not None
        if use_exact:
            z = f.exact_flow(z, tau)
        elif cfg.method == "rk4_fixed":
            z = _rk4_fixed_step_field(f, z, tau, cfg)
        else:
            z = _rk45_step_field(f, z, tau, cfg)
        _check_state(z)
    return z


def flow_eval_exact_relu_1d(v: float, w: float, b: float, x: float, tau: float) -> float:
    """Closed-form flow of dz/dt = v * relu(w z + b) from x after time tau.

    Total on finite inputs: the inactive side is a fixed point, the active
    side evolves as an affine ODE toward or away from the kink.
    """
    if tau == 0.0 or v == 0.0:
        return float(x)
    if w == 0.0:
        return float(x + tau * v * max(b, 0.0))
    if w * x + b <= 0.0:
        return float(x)  # relu inactive along the whole trajectory
    kink = -b / w
    with np.errstate(over="ignore"):
        return float(kink + (x - kink) * np.exp(v * w * tau))


def spot_check_lipschitz(f: VectorField, box, samples: int = 2000,
                         seed: int = 0, tolerance: float = 1e-9) -> dict:
    """Sample-based check of the field's declared Lipschitz bound on a box.

    Bounds are caller-supplied metadata (possibly conservative), never
    computed symbolically; this verifies |f(x) - f(x')| <= L |x - x'| + tol
    on random pairs and reports the worst observed ratio.
    """
    box = np.asarray(box, dtype=float).reshape(f.dim, 2)
    rng = np.random.default_rng(seed)
    x = rng.uniform(box[:, 0], box[:, 1], size=(samples, f.dim))
    y = rng.uniform(box[:, 0], box[:, 1], size=(samples, f.dim))
    num = np.linalg.norm(f.eval(x) - f.eval(y), axis=-1)
    den = np.linalg.norm(x - y, axis=-1)
    ok = num <= f.lipschitz_bound * den + tolerance
    ratios = np.where(den > 0, num / np.maximum(den, 1e-300), 0.0)
    return {"passed": bool(np.all(ok)), "max_ratio": float(np.max(ratios)),
            "declared_bound": f.lipschitz_bound}


@dataclass(frozen=True)
class JacobianRecord:
    point: np.ndarray
    det: float
    positive: Optional[bool]  # None when |det| is below the singular threshold


def jacobian_sign_check(sched: Schedule, points, h: float = 1e-5,
                        cfg: IntegratorConfig = DEFAULT_CONFIG,
                        singular_threshold: float = 1e-9):
    """Central-difference Jacobian determinant of the flow map at each point.

    Near-zero determinants are reported as indeterminate (positive=None)
    rather than as failures of positivity.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = sched.dim
    out = []
    eye = np.eye(n)
    for p in pts:
        probes = np.concatenate([p + h * eye, p - h * eye])
        images = flow_eval(sched, probes, cfg)
        jac = (images[:n] - images[n:]).T / (2.0 * h)
        det = float(np.linalg.det(jac))
        positive = None if abs(det) < singular_threshold else bool(det > 0)
        out.append(JacobianRecord(point=p.copy(), det=det, positive=positive))
    return out


# -- schedule serialization ------------------------------------------------

_FAMILY_REGISTRY: dict = {}


def register_family(tag: str, builder: Callable[[dict], VectorField]) -> None:
    """Register a deserializer for a family tag used in Schedule JSON."""
    _FAMILY_REGISTRY[tag] = builder


def field_to_json(f: VectorField) -> dict:
    if f.tag is None or f.params is None:
        raise ValueError(f"field {f.label!r} carries no serializable family tag")
    return {"family_tag": f.tag, "params": f.params}


def field_from_json(doc: dict) -> VectorField:
    tag = doc["family_tag"]
    if tag not in _FAMILY_REGISTRY:
        raise ValueError(f"unknown family tag {tag!r}")
    return _FAMILY_REGISTRY[tag](doc["params"])


def schedule_to_json(sched: Schedule) -> dict:
    """JSON document {dim, steps: [{family_tag, params, tau}]}.

    Numeric parameters round-trip bit-faithfully (Python floats serialize via
    repr, which is exact for finite doubles).
    """
    return {
        "dim": sched.dim,
        "steps": [dict(field_to_json(f), tau=t) for f, t in sched.steps],
    }


def schedule_from_json(doc: dict) -> Schedule:
    steps = tuple((field_from_json(s), s["tau"]) for s in doc["steps"])
    return Schedule(steps, doc["dim"])
