"""The five diffusion-reaction experiments: kinetics, parameter defaults,
equilibria, seeded random initial fields, boundary-coupling sources and
integral-mean diagnostics.

Each model is assembled into a :class:`CoupledSystem` holding one diffusing
component per unknown (bulk components on the volume geometry, surface
components on the boundary geometry) plus a kinetics evaluator that maps the
current states to the full reaction term, including any boundary-flux
sources.  Components with inhomogeneous Dirichlet data are integrated in
lifted (deviation) variables; the ``lift`` offset restores physical values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import tensor
from .integrators import ComponentOps, Geometry
from .operators import (
    DiagonalWeights,
    OperatorKind,
    PeriodicTridiagonal,
    TridiagonalOperator,
    build_lambda,
    build_phi_op,
    build_rho,
    build_theta,
    build_z,
)

# ---------------------------------------------------------------------------
# deterministic random numbers
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256pp:
    """xoshiro256++ generator, seeded through splitmix64.

    This exact algorithm (state update, output scrambler, seeding expansion
    and draw order) is part of the package contract: fields produced from a
    given seed must never change between versions.  Uniform doubles take the
    top 53 bits; normal deviates come from the Box-Muller transform applied
    to consecutive uniform pairs.
    """

    def __init__(self, seed: int):
        s = seed & _MASK64
        state = []
        for _ in range(4):
            s, word = _splitmix64(s)
            state.append(word)
        self._state = state

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._state
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._state = [s0, s1, s2, s3]
        return result

    def uniform(self, size: int) -> np.ndarray:
        """size iid draws from U[0, 1)."""
        out = np.empty(size)
        for i in range(size):
            out[i] = (self.next_uint64() >> 11) * 2.0**-53
        return out

    def normal(self, size: int) -> np.ndarray:
        """size iid standard normal draws (Box-Muller on uniform pairs)."""
        pairs = (size + 1) // 2
        out = np.empty(2 * pairs)
        for i in range(pairs):
            # u1 in (0, 1] so the logarithm is finite
            u1 = ((self.next_uint64() >> 11) + 1) * 2.0**-53
            u2 = (self.next_uint64() >> 11) * 2.0**-53
            radius = math.sqrt(-2.0 * math.log(u1))
            out[2 * i] = radius * math.cos(2.0 * math.pi * u2)
            out[2 * i + 1] = radius * math.sin(2.0 * math.pi * u2)
        return out[:size]


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    @property
    def scale(self) -> float:
        # standard deviation, so the meaning matches Normal.scale
        return (self.hi - self.lo) / math.sqrt(12.0)

    def draw(self, rng: Xoshiro256pp, size: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.uniform(size)


@dataclass(frozen=True)
class Normal:
    sigma: float

    @property
    def scale(self) -> float:
        return self.sigma

    def draw(self, rng: Xoshiro256pp, size: int) -> np.ndarray:
        return self.sigma * rng.normal(size)


Perturbation = Uniform | Normal


# ---------------------------------------------------------------------------
# model catalogue
# ---------------------------------------------------------------------------


class ModelName(Enum):
    BVAM_DISK = "bvam_disk"
    SCHNAKENBERG_ANOMALOUS_DISK = "schnakenberg_anomalous_disk"
    DIB_SPHERE = "dib_sphere"
    BULK_SURFACE_SCHNAKENBERG_BALL = "bulk_surface_schnakenberg_ball"
    BSDIB_CYLINDER = "bsdib_cylinder"


_DEFAULT_PARAMS: dict[ModelName, dict[str, float]] = {
    ModelName.BVAM_DISK: {
        "gamma": 3.87e-3,
        "delta": 7.5e-3,
        "alpha1": 0.899,
        "alpha2": 0.2,
        "alpha3": 0.2,
        "beta1": -0.91,
        "beta2": -0.899,
    },
    ModelName.SCHNAKENBERG_ANOMALOUS_DISK: {
        "alpha1": 5.0e2,
        "alpha2": 1.4e-1,
        "beta1": 1.34,
        "delta": 5.0e1,
        "lambda": -1.95,
    },
    ModelName.DIB_SPHERE: {
        "zeta1": 10.0,
        "zeta2": 10.0,
        "zeta3": 1.0,
        "zeta4": 48.0,
        "zeta5": 0.5,
        "eta1": 5.0,
        "eta2": 2.5,
        "eta3": 0.2,
        "eta5": 1.5,
        "epsilon": 20.0,
    },
    ModelName.BULK_SURFACE_SCHNAKENBERG_BALL: {
        "alpha1": 55.0,
        "alpha2": 0.1,
        "beta1": 0.9,
        "zeta1": 55.0,
        "zeta2": 5.0 / 12.0,
        "zeta3": 5.0 / 12.0,
        "eta1": 5.0,
        "eta2": 5.0,
        "delta": 10.0,
        "epsilon": 10.0,
    },
    ModelName.BSDIB_CYLINDER: {
        "alpha1": 1.0,
        "alpha2": 1.0,
        "alpha3": 0.15,
        "beta1": 1.0,
        "beta2": 1.0,
        "beta3": 0.15,
        "delta": 1.0,
        "epsilon": 20.0,
        "zeta1": 1.0,
        "zeta2": 10.0,
        "zeta3": 1.0,
        "zeta4": 66.0,
        "zeta5": 0.5,
        "eta1": 3.0,
        "eta2": 2.5,
        "eta3": 0.2,
        "eta5": 1.5,
    },
}

_DEFAULT_SIZES: dict[ModelName, dict[str, float]] = {
    ModelName.BVAM_DISK: {"rho_star": 1.0},
    ModelName.SCHNAKENBERG_ANOMALOUS_DISK: {"rho_star": 1.0},
    ModelName.DIB_SPHERE: {"rho_star": 1.1653},
    ModelName.BULK_SURFACE_SCHNAKENBERG_BALL: {"rho_star": 1.0},
    ModelName.BSDIB_CYLINDER: {"rho_star": 25.0, "z_star": 25.0},
}


@dataclass(frozen=True)
class ModelSpec:
    """Name, parameter map, geometry sizes and per-component perturbation
    laws of one experiment.  eta4 is never stored: it is always recomputed
    from the equilibrium constraint."""

    name: ModelName
    params: dict[str, float]
    sizes: dict[str, float]
    perturbations: dict[str, Perturbation | None]

    def equilibrium(self) -> dict[str, float]:
        p = self.params
        if self.name is ModelName.BVAM_DISK:
            return {"u": 0.0, "v": 0.0}
        if self.name is ModelName.SCHNAKENBERG_ANOMALOUS_DISK:
            ue = p["alpha2"] + p["beta1"]
            return {"u": ue, "v": p["beta1"] / ue**2}
        if self.name is ModelName.DIB_SPHERE:
            return {"r": 0.0, "s": p["zeta5"]}
        if self.name is ModelName.BULK_SURFACE_SCHNAKENBERG_BALL:
            ue = p["alpha2"] + p["beta1"]
            ve = p["beta1"] / ue**2
            return {"u": ue, "v": ve, "r": ue, "s": ve}
        return {"u": p["alpha2"], "v": p["beta2"], "r": 0.0, "s": p["zeta5"]}


def model_spec(
    name: ModelName | str, overrides: dict[str, float] | None = None
) -> ModelSpec:
    """ModelSpec with the published parameter defaults, optionally overridden
    (keys: parameter names, or geometry sizes rho_star / z_star)."""
    if isinstance(name, str):
        name = ModelName(name)
    params = dict(_DEFAULT_PARAMS[name])
    sizes = dict(_DEFAULT_SIZES[name])
    for key, value in (overrides or {}).items():
        if key in sizes:
            sizes[key] = float(value)
        elif key in params:
            params[key] = float(value)
        else:
            raise KeyError(f"unknown parameter {key!r} for model {name.value}")
    if name is ModelName.BVAM_DISK:
        perts: dict[str, Perturbation | None] = {
            "u": Uniform(-0.5, 0.5),
            "v": Uniform(-0.5, 0.5),
        }
    elif name is ModelName.SCHNAKENBERG_ANOMALOUS_DISK:
        perts = {"u": Normal(1e-5), "v": Normal(1e-5)}
    elif name is ModelName.DIB_SPHERE:
        perts = {"r": Normal(1e-6), "s": Normal(1e-6)}
    elif name is ModelName.BULK_SURFACE_SCHNAKENBERG_BALL:
        perts = {c: Normal(1e-3) for c in ("u", "v", "r", "s")}
    else:
        perts = {"u": None, "v": None, "r": Uniform(0.0, 1e-2), "s": Uniform(0.0, 1e-2)}
    return ModelSpec(name=name, params=params, sizes=sizes, perturbations=perts)


# ---------------------------------------------------------------------------
# kinetics
# ---------------------------------------------------------------------------


def bvam_kinetics(u, v, params) -> tuple[np.ndarray, np.ndarray]:
    """Cubic activator-inhibitor kinetics of the BVAM system."""
    a1, a2, a3 = params["alpha1"], params["alpha2"], params["alpha3"]
    b1, b2 = params["beta1"], params["beta2"]
    b = a1 * u * (1.0 - a2 * v**2) + v * (1.0 - a3 * u)
    c = b1 * v * (1.0 + (a1 * a2 / b1) * u * v) + u * (b2 + a3 * v)
    return b, c


def schnakenberg_kinetics(u, v, params) -> tuple[np.ndarray, np.ndarray]:
    """Schnakenberg production kinetics (unscaled)."""
    uuv = u * u * v
    return params["alpha2"] - u + uuv, params["beta1"] - uuv


def eta4(params) -> float:
    """Constrained DIB parameter making (r, s) = (0, zeta5) an equilibrium.

    The bulk-surface cylinder variant carries the extra beta2 prefactor from
    its v-dependent kinetics; for the plain DIB model beta2 is absent, which
    is encoded by defaulting it to 1.
    """
    z5, e1, e3 = params["zeta5"], params["eta1"], params["eta3"]
    pre = params.get("beta2", 1.0)
    return pre * e1 * (1.0 - z5) * (1.0 - e3 + e3 * z5) / (z5 * (1.0 + e3 * z5))


def dib_kinetics(r, s, params) -> tuple[np.ndarray, np.ndarray]:
    """Electrodeposition (DIB) kinetics; eta4 comes from the constraint."""
    z2, z3, z4, z5 = (params[k] for k in ("zeta2", "zeta3", "zeta4", "zeta5"))
    e1, e2, e3, e5 = (params[k] for k in ("eta1", "eta2", "eta3", "eta5"))
    p = z2 * (1.0 - s) * r - z3 * r**3 - z4 * (s - z5)
    q = e1 * (1.0 + e2 * r) * (1.0 - s) * (1.0 - e3 * (1.0 - s)) - eta4(params) * s * (
        1.0 + e3 * s
    ) * (1.0 + e5 * r)
    return p, q


def bulk_surface_coupling_ball(
    u_trace, v_trace, r, s, params, h_rho: float, rho_edge: float
):
    """Robin-flux sources for the bulk components of the ball model plus the
    surface kinetics.

    Returns (src_u, src_v, p, q): the sources are the ghost-elimination
    contributions to add at the outermost radial row (the diffusion
    coefficients cancel against the Robin conditions, so none appears here),
    p and q are the surface kinetics before the zeta1 time-scale factor.
    """
    if u_trace.shape != r.shape or v_trace.shape != s.shape:
        raise ValueError("bulk traces and surface fields must share a grid")
    z1, z2, z3 = params["zeta1"], params["zeta2"], params["zeta3"]
    e1, e2 = params["eta1"], params["eta2"]
    flux_u = z1 * (z2 * r - z3 * u_trace)
    flux_v = z1 * (e1 * s - e2 * v_trace)
    ghost = 1.0 / h_rho**2 + 1.0 / (rho_edge * h_rho)  # (d-1)/(2 rho h), d = 3
    src_u = 2.0 * h_rho * ghost * flux_u
    src_v = 2.0 * h_rho * ghost * flux_v
    b, c = schnakenberg_kinetics(r, s, params)
    p = b - (z2 * r - z3 * u_trace)
    q = c - (e1 * s - e2 * v_trace)
    return src_u, src_v, p, q


def bs_cylinder_coupling(u_bottom, v_bottom, r, s, params, h_z: float):
    """Bottom-disk flux sources and surface kinetics of the cylinder model.

    Returns (src_u, src_v, p, q); the sources are added on the z = 0 slice of
    the bulk reaction terms, p and q feed both the surface equations (times
    zeta1) and the flux conditions.
    """
    if u_bottom.shape != r.shape or v_bottom.shape != s.shape:
        raise ValueError("bulk bottom slices and surface fields must share a grid")
    z1 = params["zeta1"]
    z2, z3, z4, z5 = (params[k] for k in ("zeta2", "zeta3", "zeta4", "zeta5"))
    e1, e2, e3, e5 = (params[k] for k in ("eta1", "eta2", "eta3", "eta5"))
    p = z2 * u_bottom * (1.0 - s) * r - z3 * r**3 - z4 * (s - z5)
    q = e1 * v_bottom * (1.0 + e2 * r) * (1.0 - s) * (
        1.0 - e3 * (1.0 - s)
    ) - eta4(params) * (1.0 + e5 * r) * s * (1.0 + e3 * s)
    # ghost coefficient of the axial stencil is 1/h^2; the v-source keeps the
    # bulk diffusion coefficient because its flux condition fixes the plain
    # normal derivative.
    src_u = -(2.0 / h_z) * z1 * params["alpha3"] * p
    src_v = -(2.0 / h_z) * z1 * params["beta3"] * params["delta"] * q
    return src_u, src_v, p, q


# ---------------------------------------------------------------------------
# coupled-system assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemComponent:
    name: str
    ops: ComponentOps
    initial: np.ndarray
    lift: float = 0.0
    perturbation: Perturbation | None = None


@dataclass(frozen=True)
class CoupledSystem:
    spec: ModelSpec
    components: list[SystemComponent]
    kinetics: Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]]
    equilibrium: dict[str, float]

    def physical_fields(self, states: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Undo the constant lifting of Dirichlet components."""
        lifts = {c.name: c.lift for c in self.components}
        return {name: W + lifts[name] for name, W in states.items()}


def anomalous_setup(
    params, n_rho: int, n_theta: int, rho_star: float = 1.0
) -> tuple[TridiagonalOperator, DiagonalWeights, PeriodicTridiagonal]:
    """Disk operator family for the superdiffusive model: the weighted radial
    stencil plus the matching rho^-(2+lambda) diagonal, and the usual
    periodic angular stencil.  The system is integrated in lifted variables
    (homogeneous Dirichlet)."""
    lam = params["lambda"]
    rho_op = build_lambda(n_rho, rho_star, lam)
    weights = DiagonalWeights(rho_op.grid ** (-2.0 - lam))
    return rho_op, weights, build_theta(n_theta)


def random_initial_condition(
    spec: ModelSpec, seed: int, dims: dict[str, int]
) -> dict[str, np.ndarray]:
    """Equilibrium plus seeded perturbation for every component.

    One generator serves all components; draws happen component-major (in
    the model's component order) and flat-index order within a field.
    Components without a perturbation law consume no draws.  The result is
    bitwise reproducible for a fixed seed.
    """
    rng = Xoshiro256pp(seed)
    shapes = component_shapes(spec.name, dims)
    equilibrium = spec.equilibrium()
    fields = {}
    for name, shape in shapes.items():
        base = np.full(shape, equilibrium[name])
        law = spec.perturbations[name]
        if law is not None:
            base += tensor.unvec(law.draw(rng, int(np.prod(shape))), shape)
        fields[name] = base
    return fields


def component_shapes(
    name: ModelName, dims: dict[str, int]
) -> dict[str, tuple[int, ...]]:
    """Field dims per component, from the per-axis point counts."""
    if name in (ModelName.BVAM_DISK, ModelName.SCHNAKENBERG_ANOMALOUS_DISK):
        shape = (dims["n_rho"], dims["n_theta"])
        return {"u": shape, "v": shape}
    if name is ModelName.DIB_SPHERE:
        shape = (dims["n_theta"], dims["n_phi"])
        return {"r": shape, "s": shape}
    if name is ModelName.BULK_SURFACE_SCHNAKENBERG_BALL:
        bulk = (dims["n_rho"], dims["n_theta"], dims["n_phi"])
        surf = (dims["n_theta"], dims["n_phi"])
        return {"u": bulk, "v": bulk, "r": surf, "s": surf}
    bulk = (dims["n_rho"], dims["n_theta"], dims["n_z"])
    surf = (dims["n_rho"], dims["n_theta"])
    return {"u": bulk, "v": bulk, "r": surf, "s": surf}


def build_system(
    spec: ModelSpec | ModelName | str,
    dims: dict[str, int],
    seed: int,
    overrides: dict[str, float] | None = None,
) -> CoupledSystem:
    """Assemble operators, initial fields and the kinetics evaluator."""
    if not isinstance(spec, ModelSpec):
        spec = model_spec(spec, overrides)
    elif overrides:
        raise ValueError("pass overrides via model_spec when supplying a ModelSpec")
    builder = {
        ModelName.BVAM_DISK: _build_bvam,
        ModelName.SCHNAKENBERG_ANOMALOUS_DISK: _build_anomalous,
        ModelName.DIB_SPHERE: _build_dib_sphere,
        ModelName.BULK_SURFACE_SCHNAKENBERG_BALL: _build_ball,
        ModelName.BSDIB_CYLINDER: _build_cylinder,
    }[spec.name]
    return builder(spec, dims, seed)


def _component(
    spec: ModelSpec,
    name: str,
    ops: ComponentOps,
    initial: dict[str, np.ndarray],
    lift: float = 0.0,
) -> SystemComponent:
    return SystemComponent(
        name=name,
        ops=ops,
        initial=initial[name] - lift,
        lift=lift,
        perturbation=spec.perturbations[name],
    )


def _build_bvam(spec: ModelSpec, dims, seed) -> CoupledSystem:
    p = spec.params
    rho = build_rho(2, dims["n_rho"], spec.sizes["rho_star"])
    theta = build_theta(dims["n_theta"])
    init = random_initial_condition(spec, seed, dims)

    def make(coeff):
        return ComponentOps(Geometry.DISK, coeff, rho=rho, theta=theta)

    def kinetics(states):
        b, c = bvam_kinetics(states["u"], states["v"], p)
        return {"u": b, "v": c}

    return CoupledSystem(
        spec=spec,
        components=[
            _component(spec, "u", make(p["gamma"]), init),
            _component(spec, "v", make(p["delta"]), init),
        ],
        kinetics=kinetics,
        equilibrium=spec.equilibrium(),
    )


def _build_anomalous(spec: ModelSpec, dims, seed) -> CoupledSystem:
    p = spec.params
    rho, weights, theta = anomalous_setup(
        p, dims["n_rho"], dims["n_theta"], spec.sizes["rho_star"]
    )
    init = random_initial_condition(spec, seed, dims)
    eq = spec.equilibrium()

    def make(coeff):
        return ComponentOps(
            Geometry.DISK, coeff, rho=rho, theta=theta, rho_weights=weights
        )

    def kinetics(states):
        u = states["u"] + eq["u"]
        v = states["v"] + eq["v"]
        b, c = schnakenberg_kinetics(u, v, p)
        return {"u": p["alpha1"] * b, "v": p["alpha1"] * c}

    return CoupledSystem(
        spec=spec,
        components=[
            _component(spec, "u", make(1.0), init, lift=eq["u"]),
            _component(spec, "v", make(p["delta"]), init, lift=eq["v"]),
        ],
        kinetics=kinetics,
        equilibrium=eq,
    )


def _build_dib_sphere(spec: ModelSpec, dims, seed) -> CoupledSystem:
    p = spec.params
    rho_star = spec.sizes["rho_star"]
    theta = build_theta(dims["n_theta"])
    phi, _ = build_phi_op(dims["n_phi"])
    init = random_initial_condition(spec, seed, dims)

    def make(coeff):
        return ComponentOps(Geometry.SPHERE, coeff, theta=theta, phi=phi)

    def kinetics(states):
        pr, qs = dib_kinetics(states["r"], states["s"], p)
        return {"r": p["zeta1"] * pr, "s": p["zeta1"] * qs}

    return CoupledSystem(
        spec=spec,
        components=[
            _component(spec, "r", make(1.0 / rho_star**2), init),
            _component(spec, "s", make(p["epsilon"] / rho_star**2), init),
        ],
        kinetics=kinetics,
        equilibrium=spec.equilibrium(),
    )


def _build_ball(spec: ModelSpec, dims, seed) -> CoupledSystem:
    p = spec.params
    rho_star = spec.sizes["rho_star"]
    rho = build_rho(3, dims["n_rho"], rho_star)
    theta = build_theta(dims["n_theta"])
    phi, _ = build_phi_op(dims["n_phi"])
    init = random_initial_condition(spec, seed, dims)

    def bulk(coeff):
        return ComponentOps(Geometry.BALL, coeff, rho=rho, theta=theta, phi=phi)

    def surf(coeff):
        return ComponentOps(Geometry.SPHERE, coeff, theta=theta, phi=phi)

    h_rho = rho.h
    rho_edge = rho.grid[-1]

    def kinetics(states):
        u, v, r, s = states["u"], states["v"], states["r"], states["s"]
        src_u, src_v, ps, qs = bulk_surface_coupling_ball(
            u[-1, :, :], v[-1, :, :], r, s, p, h_rho, rho_edge
        )
        b, c = schnakenberg_kinetics(u, v, p)
        gu = p["alpha1"] * b
        gv = p["alpha1"] * c
        gu[-1, :, :] += src_u
        gv[-1, :, :] += src_v
        return {
            "u": gu,
            "v": gv,
            "r": p["zeta1"] * ps,
            "s": p["zeta1"] * qs,
        }

    return CoupledSystem(
        spec=spec,
        components=[
            _component(spec, "u", bulk(1.0), init),
            _component(spec, "v", bulk(p["delta"]), init),
            _component(spec, "r", surf(1.0 / rho_star**2), init),
            _component(spec, "s", surf(p["epsilon"] / rho_star**2), init),
        ],
        kinetics=kinetics,
        equilibrium=spec.equilibrium(),
    )


def _build_cylinder(spec: ModelSpec, dims, seed) -> CoupledSystem:
    p = spec.params
    rho = build_rho(2, dims["n_rho"], spec.sizes["rho_star"])
    theta = build_theta(dims["n_theta"])
    z = build_z(dims["n_z"], spec.sizes["z_star"])
    init = random_initial_condition(spec, seed, dims)
    eq = spec.equilibrium()

    def bulk(coeff):
        return ComponentOps(Geometry.CYLINDER, coeff, rho=rho, theta=theta, z=z)

    def surf(coeff):
        return ComponentOps(Geometry.DISK, coeff, rho=rho, theta=theta)

    h_z = z.h

    def kinetics(states):
        u = states["u"] + eq["u"]
        v = states["v"] + eq["v"]
        r, s = states["r"], states["s"]
        src_u, src_v, ps, qs = bs_cylinder_coupling(
            u[:, :, 0], v[:, :, 0], r, s, p, h_z
        )
        gu = -p["alpha1"] * (u - p["alpha2"])
        gv = -p["beta1"] * (v - p["beta2"])
        gu[:, :, 0] += src_u
        gv[:, :, 0] += src_v
        return {
            "u": gu,
            "v": gv,
            "r": p["zeta1"] * ps,
            "s": p["zeta1"] * qs,
        }

    return CoupledSystem(
        spec=spec,
        components=[
            _component(spec, "u", bulk(1.0), init, lift=eq["u"]),
            _component(spec, "v", bulk(p["delta"]), init, lift=eq["v"]),
            _component(spec, "r", surf(1.0), init),
            _component(spec, "s", surf(p["epsilon"]), init),
        ],
        kinetics=kinetics,
        equilibrium=eq,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def _clipped_widths(grid: np.ndarray, h: float, lo: float, hi: float) -> np.ndarray:
    left = np.clip(grid - h / 2.0, lo, hi)
    right = np.clip(grid + h / 2.0, lo, hi)
    return right - left


def quadrature_weights(
    cops: ComponentOps, normalized: bool = True, rho_star: float | None = None
) -> np.ndarray:
    """Node-centered quadrature weights with the coordinate Jacobian.

    Cells are node-centered and truncated at the domain boundaries (e.g.
    half cells where a node sits on the boundary).  Normalized weights make
    the integral mean of a constant exact; unnormalized weights approximate
    the measure of the domain.  ``rho_star`` only matters for the sphere,
    whose radius is not recoverable from its angular operators.
    """
    g = cops.geometry
    if g is Geometry.SPHERE:
        theta, phi = cops.theta, cops.phi
        radius = 1.0 if rho_star is None else rho_star
        wphi = _clipped_widths(phi.grid, phi.h, 0.0, np.pi)
        w = np.multiply.outer(
            np.full(theta.n, theta.h), radius**2 * np.sin(phi.grid) * wphi
        )
    else:
        rho = cops.rho
        if rho.kind is OperatorKind.LAMBDA:
            edge = rho.grid[-1] + rho.h
        else:
            edge = rho.grid[-1]
        wrho = _clipped_widths(rho.grid, rho.h, 0.0, edge)
        theta_w = np.full(cops.theta.n, cops.theta.h)
        if g is Geometry.DISK:
            w = np.multiply.outer(rho.grid * wrho, theta_w)
        elif g is Geometry.BALL:
            phi = cops.phi
            wphi = _clipped_widths(phi.grid, phi.h, 0.0, np.pi)
            w = np.multiply.outer(
                np.multiply.outer(rho.grid**2 * wrho, theta_w),
                np.sin(phi.grid) * wphi,
            )
        else:
            zop = cops.z
            wz = _clipped_widths(zop.grid, zop.h, 0.0, zop.grid[-1] + zop.h)
            w = np.multiply.outer(np.multiply.outer(rho.grid * wrho, theta_w), wz)
    return w / np.sum(w) if normalized else w


def integral_mean(
    field: np.ndarray, cops: ComponentOps, rho_star: float | None = None
) -> float:
    """Domain-averaged field value (stabilization diagnostic)."""
    w = quadrature_weights(cops, normalized=True, rho_star=rho_star)
    if field.shape != w.shape:
        raise ValueError(f"field shape {field.shape} does not match {w.shape}")
    return float(np.sum(field * w))


def mean_diagnostics(system: CoupledSystem) -> Callable[[dict], dict]:
    """Diagnostics closure returning the physical integral mean of every
    component (lift restored).  Quadrature weights are built once."""
    rho_star = system.spec.sizes.get("rho_star")
    lifts = {c.name: c.lift for c in system.components}
    weights = {
        c.name: quadrature_weights(c.ops, normalized=True, rho_star=rho_star)
        for c in system.components
    }

    def evaluate(states: dict[str, np.ndarray]) -> dict[str, float]:
        return {
            name: float(np.sum(W * weights[name])) + lifts[name]
            for name, W in states.items()
        }

    return evaluate


def is_stabilized(times, values, rel: float = 1e-3, abs_tol: float = 1e-6) -> bool:
    """True when the diagnostic at the final time differs from its value at
    90% of the final time by at most rel*|final| + abs_tol."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_star = times[-1]
    idx = int(np.argmin(np.abs(times - 0.9 * t_star)))
    return abs(values[-1] - values[idx]) <= rel * abs(values[-1]) + abs_tol


def pattern_amplitude(system: CoupledSystem, states: dict[str, np.ndarray], name: str):
    """(spatial std of the component, 10x its initial perturbation scale)."""
    comp = next(c for c in system.components if c.name == name)
    scale = comp.perturbation.scale if comp.perturbation is not None else 0.0
    return float(np.std(states[name])), 10.0 * scale
