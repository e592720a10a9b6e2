"""Environment catalog: parameter ranges, dynamics, rewards and interaction notes."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from simcal.core import Param, ParameterSpace
from simcal.errors import CatalogError
from simcal.simenv import _kernels_py as K

DT = 0.02


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    space: ParameterSpace
    state_dim: int
    action_dim: int
    horizon: int
    dt: float
    reward_fn_id: str
    dynamics_code: int
    action_low: float
    action_high: float
    start_low: tuple[float, ...]
    start_high: tuple[float, ...]
    default_theta: tuple[float, ...]
    return_shift: float
    description: str
    notes: tuple[str, ...] = field(default=())
    tier: str = ""
    variant_of: str | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def action_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.full(self.action_dim, self.action_low, dtype=float),
            np.full(self.action_dim, self.action_high, dtype=float),
        )


def _default(env_id: str, dim: int) -> tuple[float, ...]:
    rng = np.random.default_rng(zlib.crc32(env_id.encode()))
    return tuple(float(x) for x in np.round(rng.uniform(0.2, 0.8, size=dim), 3))


def _pendulum() -> EnvSpec:
    return EnvSpec(
        env_id="pendulum",
        space=ParameterSpace((Param("mass", 0.5, 2.0, "kg"), Param("damping", 0.0, 0.5, "N*m*s/rad"))),
        state_dim=2,
        action_dim=1,
        horizon=100,
        dt=DT,
        reward_fn_id="upright-regulation",
        dynamics_code=K.PENDULUM,
        action_low=-5.0,
        action_high=5.0,
        start_low=(-0.3, -0.3),
        start_high=(0.3, 0.3),
        default_theta=(0.3, 0.7),
        return_shift=1000.0,
        description=(
            "Torque-driven pendulum of length 1 m; state (angle, angular velocity), angle 0 is upright. "
            "angle'' = (g/L) sin(angle) - damping/(m L^2) angle' + u/(m L^2). The torque limit of 5 N*m "
            "cannot hold a heavy pendulum far from upright."
        ),
        notes=(
            "mass scales both the torque response (1/m) and the damping decay rate (damping/m); "
            "gravity-driven swing frequency is mass independent, so mass is only visible through actuation",
            "damping is only observable while the pendulum moves",
        ),
        tier="simple",
    )


def _spring() -> EnvSpec:
    return EnvSpec(
        env_id="spring-damper",
        space=ParameterSpace(
            (Param("mass", 0.5, 2.0, "kg"), Param("stiffness", 1.0, 10.0, "N/m"), Param("damping", 0.0, 1.0, "N*s/m"))
        ),
        state_dim=2,
        action_dim=1,
        horizon=100,
        dt=DT,
        reward_fn_id="quadratic-regulation",
        dynamics_code=K.SPRING,
        action_low=-5.0,
        action_high=5.0,
        start_low=(-1.0, -1.0),
        start_high=(1.0, 1.0),
        default_theta=(0.4, 0.6, 0.3),
        return_shift=100.0,
        description="Mass on a linear spring and dashpot; state (position, velocity). x'' = (-k x - c v + u)/m.",
        notes=(
            "unforced motion depends only on the ratios k/m and c/m; mass is separated from them by the force input",
        ),
        tier="simple",
    )


def _ball() -> EnvSpec:
    return EnvSpec(
        env_id="bouncing-ball",
        space=ParameterSpace(
            (
                Param("restitution", 0.5, 0.95, ""),
                Param("mass", 0.5, 2.0, "kg"),
                Param("drag", 0.0, 0.2, "kg/m"),
            )
        ),
        state_dim=2,
        action_dim=1,
        horizon=100,
        dt=DT,
        reward_fn_id="hover",
        dynamics_code=K.BALL,
        action_low=-15.0,
        action_high=15.0,
        start_low=(1.0, -0.5),
        start_high=(2.0, 0.5),
        default_theta=(0.5, 0.4, 0.6),
        return_shift=200.0,
        description=(
            "Vertically thrusted ball above a floor; state (height, velocity). "
            "v' = -g - (drag/m) v|v| + u/m; on crossing the floor height and downward velocity reflect scaled by restitution."
        ),
        notes=(
            "restitution is only observable through floor contacts",
            "drag and mass enter the free flight through drag/m; thrust separates them",
        ),
        tier="contact",
    )


def _ball_surjective() -> EnvSpec:
    return EnvSpec(
        env_id="bouncing-ball-surjective",
        space=ParameterSpace((Param("drag_area", 0.2, 0.6, "m^2"), Param("drag_coefficient", 0.2, 0.6, "kg/m^3"))),
        state_dim=2,
        action_dim=1,
        horizon=100,
        dt=DT,
        reward_fn_id="hover",
        dynamics_code=K.BALL_SURJ,
        action_low=-15.0,
        action_high=15.0,
        start_low=(1.0, -0.5),
        start_high=(2.0, 0.5),
        default_theta=(0.5, 0.5),
        return_shift=200.0,
        description=(
            "Unit-mass bouncing ball (restitution 0.8) whose drag is drag_area * drag_coefficient * v|v|."
        ),
        notes=(
            "only the product drag_area * drag_coefficient is observable: every point on a level curve of the "
            "product generates the same trajectory",
        ),
        tier="surjective",
        variant_of="bouncing-ball",
    )


def _chain(links: int, joints: bool) -> EnvSpec:
    env_id = f"chain-{'joints' if joints else 'links'}-{links}"
    if joints:
        params = []
        for j in range(links):
            params += [
                Param(f"joint{j}_damping", 0.05, 0.5, "N*s/m"),
                Param(f"joint{j}_stiffness", 1.0, 10.0, "N/m"),
                Param(f"joint{j}_friction", 0.0, 0.5, "N"),
            ]
        notes = (
            "joint j couples link j to link (j+1) mod L; its friction acts on link j",
            "stiffness and damping of a joint are only observable when its two links move relative to each other",
        )
        code = K.CHAIN_JOINTS
    else:
        params = [Param(f"link{i}_mass", 0.5, 2.0, "kg") for i in range(links)]
        notes = (
            f"joints fixed at stiffness {K.CHAIN_STIFFNESS} N/m, damping {K.CHAIN_DAMPING} N*s/m, "
            f"friction {K.CHAIN_FRICTION} N",
            "a link's mass is seen through its response to its own actuator and to neighbouring joint forces",
        )
        code = K.CHAIN_LINKS
    space = ParameterSpace(tuple(params))
    return EnvSpec(
        env_id=env_id,
        space=space,
        state_dim=2 * links,
        action_dim=links,
        horizon=100,
        dt=DT,
        reward_fn_id="forward-progress",
        dynamics_code=code,
        action_low=-1.0,
        action_high=1.0,
        start_low=tuple([-0.05] * (2 * links)),
        start_high=tuple([0.05] * (2 * links)),
        default_theta=_default(env_id, space.dim),
        return_shift=10.0,
        description=(
            f"Ring of {links} sliding links joined by spring-damper joints with smooth Coulomb ground friction; "
            f"state (displacements, velocities), one force actuator per link. Forward progress is the mean displacement."
        ),
        notes=notes,
        tier="locomotion-hard" if joints else "locomotion-simple",
    )


_SHIPPED = [
    _pendulum(),
    _spring(),
    _ball(),
    _chain(5, False),
    _chain(5, True),
    _chain(17, False),
    _chain(17, True),
]
_VARIANTS = [_ball_surjective()]

CATALOG: dict[str, EnvSpec] = {spec.env_id: spec for spec in _SHIPPED + _VARIANTS}
SHIPPED_ENV_IDS: tuple[str, ...] = tuple(spec.env_id for spec in _SHIPPED)


def get_spec(env_id: str) -> EnvSpec:
    try:
        return CATALOG[env_id]
    except KeyError:
        raise CatalogError(f"unknown environment {env_id!r}; valid ids: {', '.join(CATALOG)}") from None


def catalog_document() -> str:
    """Markdown description of every environment, its parameters and their interactions."""
    lines = ["# Environment catalog", ""]
    for spec in CATALOG.values():
        lines.append(f"## {spec.env_id}")
        lines.append("")
        if spec.variant_of:
            lines.append(f"Variant of `{spec.variant_of}`.")
            lines.append("")
        lines.append(spec.description)
        lines.append("")
        lines.append(
            f"- tier: {spec.tier}; state dim {spec.state_dim}; action dim {spec.action_dim} "
            f"in [{spec.action_low:g}, {spec.action_high:g}]; horizon {spec.horizon} steps of {spec.dt:g} s"
        )
        lines.append(f"- reward: {spec.reward_fn_id}; transfer return shift {spec.return_shift:g}")
        lines.append(f"- parameter dim {spec.dim}")
        lines.append("")
        lines.append("| parameter | low | high | unit | default (normalized) |")
        lines.append("|---|---|---|---|---|")
        for p, d in zip(spec.space.params, spec.default_theta):
            lines.append(f"| {p.name} | {p.low:g} | {p.high:g} | {p.unit} | {d:g} |")
        lines.append("")
        lines.append("Interactions:")
        for note in spec.notes:
            lines.append(f"- {note}")
        lines.append("")
    return "\n".join(lines)
