"""Time-varying Lipschitz vector fields, flow maps and flow estimates.

Fields come from a closed-form registry so that a spatial Lipschitz bound
``L`` and a sup-norm bound ``M`` (over a declared space-time window) are
known analytically: the flow estimates treat those constants as
hypotheses, so they must not be estimated from the data they are checked
against.  Flow maps are integrated with classical RK4 under step doubling
until successive refinements agree to the requested position tolerance.

The registry also carries scalar test functions with known sup and
Lipschitz norms for integral-bound checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .exact_ot import wasserstein
from .genwass import GenWassParams, generalized_distance
from .measures import DiscreteMeasure, canonical_json

__all__ = [
    "IntegrationError",
    "VectorFieldSpec",
    "ScalarFunctionSpec",
    "FlowMap",
    "constant_field",
    "affine_field",
    "rotation_field",
    "gaussian_gradient_field",
    "time_scaled_field",
    "parse_field",
    "zero_function",
    "clamped_linear_function",
    "gaussian_bump_function",
    "integrate_flow",
    "flow_push",
    "sup_difference_bound",
    "growth_factor",
    "verify_flow_estimates",
]


class IntegrationError(RuntimeError):
    """Step control could not reach the requested tolerance."""


_TIME_PROFILES = {
    # name: (g(t), sup |g| on [0, 1], Lipschitz constant of g)
    "one": (lambda t: 1.0, 1.0, 0.0),
    "ramp": (lambda t: t, 1.0, 1.0),
    "sin_pi": (lambda t: math.sin(math.pi * t), 1.0, math.pi),
    "cos_pi": (lambda t: math.cos(math.pi * t), 1.0, math.pi),
}


@dataclass(frozen=True)
class VectorFieldSpec:
    """Closed-form vector field with declared regularity constants.

    ``lip_bound`` and ``sup_bound`` are valid (not necessarily tight)
    bounds on the window ``|x| <= space_radius``, ``t in [0, 1]``;
    ``time_lip_bound`` bounds ``|v_t(x) - v_s(x)| / |t - s|`` there.
    """

    kind: str
    dim: int
    lip_bound: float
    sup_bound: float
    space_radius: float
    time_lip_bound: float = 0.0
    params: dict = dataclass_field(default_factory=dict)

    def __call__(self, t: float, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return _EVALUATORS[self.kind](self, t, points)

    def to_json_dict(self) -> dict:
        doc = {"kind": self.kind, "dim": self.dim}
        doc.update(
            {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.params.items()
                if k != "base"
            }
        )
        if "base" in self.params:
            doc["base"] = self.params["base"].to_json_dict()
        doc["L"] = self.lip_bound
        doc["M"] = self.sup_bound
        doc["radius"] = self.space_radius
        return doc

    def to_json(self) -> str:
        return canonical_json(self.to_json_dict())


def _eval_constant(spec, t, points):
    return np.broadcast_to(spec.params["velocity"], points.shape).copy()


def _eval_affine(spec, t, points):
    return points @ spec.params["matrix"].T + spec.params["offset"]


def _eval_rotation(spec, t, points):
    rel = points - spec.params["center"]
    omega = spec.params["omega"]
    out = np.empty_like(rel)
    out[:, 0] = -omega * rel[:, 1]
    out[:, 1] = omega * rel[:, 0]
    return out


def _eval_gaussian_gradient(spec, t, points):
    amp = spec.params["amplitude"]
    width = spec.params["width"]
    rel = points - spec.params["center"]
    r2 = np.sum(rel * rel, axis=1, keepdims=True)
    return (-amp / width**2) * rel * np.exp(-r2 / (2.0 * width**2))


def _eval_time_scaled(spec, t, points):
    g = _TIME_PROFILES[spec.params["profile"]][0]
    return g(t) * spec.params["base"](t, points)


_EVALUATORS = {
    "constant": _eval_constant,
    "affine": _eval_affine,
    "rotation": _eval_rotation,
    "gaussian_gradient": _eval_gaussian_gradient,
    "time_scaled": _eval_time_scaled,
}


def constant_field(velocity, space_radius: float = 8.0) -> VectorFieldSpec:
    velocity = np.asarray(velocity, dtype=np.float64)
    return VectorFieldSpec(
        kind="constant",
        dim=len(velocity),
        lip_bound=0.0,
        sup_bound=float(np.linalg.norm(velocity)),
        space_radius=space_radius,
        params={"velocity": velocity},
    )


def affine_field(matrix, offset, space_radius: float = 8.0) -> VectorFieldSpec:
    """Field ``v(x) = A x + c``; L is the spectral norm of A."""
    matrix = np.asarray(matrix, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    norm_a = float(np.linalg.norm(matrix, 2))
    return VectorFieldSpec(
        kind="affine",
        dim=len(offset),
        lip_bound=norm_a,
        sup_bound=norm_a * space_radius + float(np.linalg.norm(offset)),
        space_radius=space_radius,
        params={"matrix": matrix, "offset": offset},
    )


def rotation_field(omega: float, center=(0.0, 0.0), space_radius: float = 8.0) -> VectorFieldSpec:
    """Planar rotation with angular rate omega about a center point."""
    center = np.asarray(center, dtype=np.float64)
    return VectorFieldSpec(
        kind="rotation",
        dim=2,
        lip_bound=abs(omega),
        sup_bound=abs(omega) * (space_radius + float(np.linalg.norm(center))),
        space_radius=space_radius,
        params={"omega": float(omega), "center": center},
    )


def gaussian_gradient_field(
    amplitude: float, width: float, center, space_radius: float = 8.0
) -> VectorFieldSpec:
    """Gradient of ``amplitude * exp(-|x - c|^2 / (2 width^2))``.

    Closed-form constants: the speed peaks at radius ``width`` with value
    ``|amplitude| / (width sqrt(e))`` and the Jacobian norm peaks at the
    center with value ``|amplitude| / width^2``.
    """
    center = np.asarray(center, dtype=np.float64)
    return VectorFieldSpec(
        kind="gaussian_gradient",
        dim=len(center),
        lip_bound=abs(amplitude) / width**2,
        sup_bound=abs(amplitude) / (width * math.sqrt(math.e)),
        space_radius=space_radius,
        params={"amplitude": float(amplitude), "width": float(width), "center": center},
    )


def time_scaled_field(base: VectorFieldSpec, profile: str) -> VectorFieldSpec:
    """Wrap a field as ``g(t) * v(x)`` with g from the profile table."""
    if profile not in _TIME_PROFILES:
        raise ValueError(f"unknown time profile {profile!r}")
    _, g_sup, g_lip = _TIME_PROFILES[profile]
    return VectorFieldSpec(
        kind="time_scaled",
        dim=base.dim,
        lip_bound=g_sup * base.lip_bound,
        sup_bound=g_sup * base.sup_bound,
        space_radius=base.space_radius,
        time_lip_bound=g_lip * base.sup_bound + g_sup * base.time_lip_bound,
        params={"base": base, "profile": profile},
    )


def parse_field(doc: dict) -> VectorFieldSpec:
    """Rebuild a registry field from its JSON dictionary."""
    kind = doc["kind"]
    radius = float(doc.get("radius", 8.0))
    if kind == "constant":
        return constant_field(doc["velocity"], radius)
    if kind == "affine":
        return affine_field(doc["matrix"], doc["offset"], radius)
    if kind == "rotation":
        return rotation_field(doc["omega"], doc.get("center", (0.0, 0.0)), radius)
    if kind == "gaussian_gradient":
        return gaussian_gradient_field(doc["amplitude"], doc["width"], doc["center"], radius)
    if kind == "time_scaled":
        return time_scaled_field(parse_field(doc["base"]), doc["profile"])
    raise ValueError(f"unknown field kind {kind!r}")


@dataclass(frozen=True)
class ScalarFunctionSpec:
    """Scalar test function with known sup and Lipschitz norms."""

    kind: str
    sup_norm: float
    lip_norm: float
    params: dict = dataclass_field(default_factory=dict)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.kind == "zero":
            return np.zeros(len(points))
        if self.kind == "clamped_linear":
            raw = points @ self.params["slope"] + self.params["offset"]
            c = self.params["clip"]
            return np.clip(raw, -c, c)
        if self.kind == "gaussian_bump":
            rel = points - self.params["center"]
            r2 = np.sum(rel * rel, axis=1)
            return self.params["amplitude"] * np.exp(-r2 / (2.0 * self.params["width"] ** 2))
        raise ValueError(f"unknown scalar function kind {self.kind!r}")


def zero_function(dim: int) -> ScalarFunctionSpec:
    return ScalarFunctionSpec("zero", 0.0, 0.0, {"dim": dim})


def clamped_linear_function(slope, offset: float = 0.0, clip: float = 1.0) -> ScalarFunctionSpec:
    slope = np.asarray(slope, dtype=np.float64)
    return ScalarFunctionSpec(
        "clamped_linear",
        sup_norm=clip,
        lip_norm=float(np.linalg.norm(slope)),
        params={"slope": slope, "offset": float(offset), "clip": float(clip)},
    )


def gaussian_bump_function(amplitude: float, width: float, center) -> ScalarFunctionSpec:
    center = np.asarray(center, dtype=np.float64)
    return ScalarFunctionSpec(
        "gaussian_bump",
        sup_norm=abs(amplitude),
        lip_norm=abs(amplitude) / (width * math.sqrt(math.e)),
        params={"amplitude": float(amplitude), "width": float(width), "center": center},
    )


def _rk4(field: VectorFieldSpec, t0: float, t1: float, x: np.ndarray, steps: int) -> np.ndarray:
    h = (t1 - t0) / steps
    y = x.copy()
    t = t0
    for _ in range(steps):
        k1 = field(t, y)
        k2 = field(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = field(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = field(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def integrate_flow(
    field: VectorFieldSpec,
    t0: float,
    t1: float,
    x,
    tol: float = 1e-8,
    max_steps: int = 1 << 20,
):
    """Flow map of the field applied to one point or an (n, d) batch.

    RK4 with step doubling: the step count doubles until two consecutive
    resolutions agree within ``tol`` in every coordinate.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if t0 == t1 or pts.size == 0:
        return arr.copy()
    steps = max(2, min(64, int(abs(t1 - t0) * 32) + 2))
    current = _rk4(field, t0, t1, pts, steps)
    while True:
        steps *= 2
        if steps > max_steps:
            raise IntegrationError(
                f"flow integration on [{t0}, {t1}] did not reach tol={tol}"
            )
        refined = _rk4(field, t0, t1, pts, steps)
        if np.max(np.abs(refined - current)) <= 0.5 * tol:
            return refined[0] if single else refined
        current = refined


@dataclass(frozen=True)
class FlowMap:
    """The diffeomorphism induced by a field between two times."""

    field: VectorFieldSpec
    t0: float
    t1: float
    tol: float = 1e-8

    def __call__(self, points):
        return integrate_flow(self.field, self.t0, self.t1, points, self.tol)

    def inverse(self) -> "FlowMap":
        return FlowMap(self.field, self.t1, self.t0, self.tol)


def flow_push(
    field: VectorFieldSpec, t0: float, t1: float, mu: DiscreteMeasure, tol: float = 1e-8
) -> DiscreteMeasure:
    """Push a measure along the flow; mass is preserved exactly."""
    if mu.atom_count == 0:
        return mu
    return mu.push_forward(lambda pts: integrate_flow(field, t0, t1, pts, tol))


def sup_difference_bound(
    v: VectorFieldSpec,
    w: VectorFieldSpec,
    t_max: float = 1.0,
    grid_step: float = 0.05,
    time_step: float = 0.01,
) -> float:
    """Rigorous upper bound for ``sup_{t, |x| <= R} |v_t(x) - w_t(x)|``.

    Samples a regular grid on the common window and pads with the covering
    radius times the Lipschitz constants (space) / the time-Lipschitz
    bounds (time), so the result is a valid over-estimate.
    """
    radius = min(v.space_radius, w.space_radius)
    dim = v.dim
    axes = [np.arange(-radius, radius + grid_step, grid_step)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    time_dependent = v.time_lip_bound > 0 or w.time_lip_bound > 0
    times = np.arange(0.0, t_max + time_step, time_step) if time_dependent else [0.0]
    best = 0.0
    for t in times:
        diff = v(float(t), pts) - w(float(t), pts)
        best = max(best, float(np.max(np.sqrt(np.sum(diff * diff, axis=1)))))
    pad_space = (v.lip_bound + w.lip_bound) * grid_step * math.sqrt(dim) / 2.0
    pad_time = (v.time_lip_bound + w.time_lip_bound) * (time_step / 2.0 if time_dependent else 0.0)
    return best + pad_space + pad_time


def growth_factor(lip: float, t: float) -> float:
    """Stable evaluation of ``(e^(L t) - 1) / L`` (limit t as L -> 0)."""
    x = lip * t
    if x < 1e-8:
        return t * (1.0 + 0.5 * x)
    return math.expm1(x) / lip


def verify_flow_estimates(
    field_v: VectorFieldSpec,
    field_w: VectorFieldSpec,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    params: GenWassParams,
    slack: float = 1e-6,
    integration_tol: float = 1e-10,
) -> dict:
    """Check the six flow inequalities on a concrete configuration.

    The first and third (classical-distance) estimates need equal masses
    and are skipped otherwise; the generalized-distance versions apply to
    any masses.  The sixth estimate is checked as stated, which requires
    ``b <= 1`` (with the transport weight larger than one, the comparison
    field term would need an extra factor b).
    """
    p = params.p
    lip = max(field_v.lip_bound, field_w.lip_bound)
    sup_v = field_v.sup_bound
    growth = math.exp(lip * t)
    supdiff = sup_difference_bound(field_v, field_w, t_max=t)
    mass_mu = mu.total_mass()
    equal_masses = abs(mass_mu - nu.total_mass()) <= 1e-9 * max(mass_mu, nu.total_mass(), 1e-300)

    push_v_mu = flow_push(field_v, 0.0, t, mu, integration_tol)
    push_v_nu = flow_push(field_v, 0.0, t, nu, integration_tol)
    push_w_nu = flow_push(field_w, 0.0, t, nu, integration_tol)

    allowance = slack + (mass_mu + nu.total_mass()) * 1e-7

    def gen_dist(x, y):
        return generalized_distance(x, y, params).distance

    checks = {}

    if equal_masses:
        w_orig = wasserstein(mu, nu, p).distance
        checks["classical_common_flow"] = (
            wasserstein(push_v_mu, push_v_nu, p).distance,
            growth * w_orig,
        )
        checks["classical_two_flows"] = (
            wasserstein(push_v_mu, push_w_nu, p).distance,
            growth * w_orig + growth_factor(lip, t) * mass_mu * supdiff,
        )
    checks["classical_drift"] = (
        wasserstein(mu, push_v_mu, p).distance,
        t * sup_v * mass_mu,
    )

    g_orig = gen_dist(mu, nu)
    checks["generalized_common_flow"] = (gen_dist(push_v_mu, push_v_nu), growth * g_orig)
    checks["generalized_drift"] = (gen_dist(mu, push_v_mu), params.b * t * sup_v * mass_mu)
    checks["generalized_two_flows"] = (
        gen_dist(push_v_mu, push_w_nu),
        growth * g_orig + growth_factor(lip, t) * mass_mu * supdiff,
    )

    report = {
        "t": t,
        "L": lip,
        "M": sup_v,
        "sup_difference": supdiff,
        "allowance": allowance,
        "estimates": {},
        "ok": True,
    }
    for name, (lhs, rhs) in checks.items():
        ok = lhs <= rhs + allowance
        report["estimates"][name] = {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "ok": ok}
        report["ok"] = report["ok"] and ok
    return report
