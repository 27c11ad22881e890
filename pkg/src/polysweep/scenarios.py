"""Scenario registry and configuration files.

Registry entries build :class:`Scenario` objects for the worked examples
(one-dimensional pushing, the inactive-constraint variant, the excluded
candidate, the two-face planar problem, the play-and-stop operator, a
pseudo-rigid plasticity toy and the set-jump counterexample) plus two
templates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .discrete_ocp import (CostSpec, CostTerm, Scenario, SolverSettings,
                           TerminalCost)
from .errors import ConfigError
from .functions import PiecewisePoly, time_function


@dataclass(frozen=True)
class Reference:
    cost: Optional[float] = None
    x: Optional[Callable] = None
    b: Optional[Callable] = None
    source: str = ""


@dataclass(frozen=True)
class ScenarioRegistryEntry:
    id: str
    builder: Callable[..., Scenario]
    reference: Reference = field(default_factory=Reference)
    default_subcommand: str = "simulate"
    description: str = ""
    simulate_b: Optional[Callable] = None

    def build(self, **params) -> Scenario:
        return self.builder(**params)


# ----------------------------------------------------------------------
# builders


def _one_dim_pushing(tau: float = 0.0, k: int = 200) -> Scenario:
    cost = CostSpec(terminal=TerminalCost("quadratic_half", [1.0]),
                    l3=(CostTerm("bdot", "quadratic", 0.5),))
    return Scenario("ex7_3", 1, 1, 1.0, [0.0], cost,
                    u_path=lambda t: [[-1.0]], b_path=lambda t: [0.0],
                    mode="free_u", tau=tau, k=k,
                    notes="x' in -N(x; {-x <= b}), phi = (x-1)^2/2, l = bdot^2/2")


def _inactive_variant(tau: float = 0.0, k: int = 100) -> Scenario:
    cost = CostSpec(terminal=TerminalCost("quadratic_half", [1.0]),
                    l1=(CostTerm("b", "quadratic", 0.5, 1.0),),
                    l3=(CostTerm("bdot", "quadratic", 0.5),))
    return Scenario("ex7_4", 1, 1, 1.0, [0.0], cost,
                    u_path=lambda t: [[-1.0]], b_path=lambda t: [1.0],
                    mode="free_u", tau=tau, k=k,
                    notes="l = ((b-1)^2 + bdot^2)/2; the trivial b = 1 keeps the face inactive")


# s0 and the candidate offsets of the excluded-candidate problem
S0 = PiecewisePoly([0.0, 0.2, 0.8, 1.0],
                   [[0.04, -0.4, 1.0], [0.0, 0.0, 0.0], [-0.16, -0.6, 1.0]])
EXCL_TRACK = PiecewisePoly([0.0, 0.2, 0.8, 1.0],
                           [[0.04, -1.4, 1.0], [0.0, -1.0, 0.0], [-0.16, -1.6, 1.0]])
EXCL_RATE = PiecewisePoly([0.0, 1.0], [[2.0, -4.0]])


def excluded_candidate_b(t):
    t = np.asarray(t, dtype=float)
    return -t + S0(t)


def excluded_candidate_x(t):
    return np.clip(np.asarray(t, dtype=float), 0.2, 0.8)


def _excluded_candidate(alpha: float = 1.0, k: int = 100) -> Scenario:
    cost = CostSpec(terminal=TerminalCost("quadratic", [1.0]),
                    l1=(CostTerm("b", "quadratic", 1.0, EXCL_TRACK),),
                    l3=(CostTerm("bdot", "abs", float(alpha), EXCL_RATE),))
    return Scenario("ex7_5", 1, 1, 1.0, [0.2], cost,
                    u_path=lambda t: [[-1.0]],
                    b_path=lambda t: [float(excluded_candidate_b(t))],
                    mode="fixed_u", k=k, params={"alpha": float(alpha)},
                    notes="l = (b + t - s0)^2 + alpha |bdot + 4t - 2|, candidate b = -t + s0")


def _planar_box(k: int = 100) -> Scenario:
    cost = CostSpec(terminal=TerminalCost("quadratic_half", [0.0, 0.0]),
                    l3=(CostTerm("bdot", "quadratic", 0.5),))
    return Scenario("ex7_6", 2, 2, 1.0, [1.0, 1.0], cost,
                    u_path=lambda t: [[1.0, 0.0], [0.0, 1.0]],
                    b_path=lambda t: [1.0, 1.0], mode="fixed_u", k=k,
                    notes="faces x_1 <= b_1, x_2 <= b_2; phi = |x|^2/2, l = |bdot|^2/2")


def play_stop_offsets(beta, amplitude: float = 0.3, as_printed: bool = False) -> Callable:
    """Offsets of b(t) - Z for the rectangle Z = [-beta_1, beta_1] x [-beta_2, beta_2]."""
    b1, b2 = beta

    def offsets(t):
        c = amplitude * math.sin(t)
        if as_printed:
            return [b1 + c, b2, b1 + c, b2]
        return [b1 + c, b2, b1 - c, b2]
    return offsets


def _play_stop(beta=(0.2, 0.1), amplitude: float = 0.3, as_printed: bool = False,
               k: int = 100) -> Scenario:
    cost = CostSpec(terminal=TerminalCost("quadratic_half", [0.0, 0.0]),
                    l3=(CostTerm("bdot", "quadratic", 0.5),))
    normals = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    return Scenario("play_stop", 2, 4, 2 * math.pi, [0.0, 0.0], cost,
                    u_path=lambda t: normals,
                    b_path=play_stop_offsets(beta, amplitude, as_printed),
                    mode="fixed_u", k=k,
                    params={"beta": list(beta), "amplitude": amplitude,
                            "as_printed": as_printed},
                    notes="x' in -N(x; b(t) - Z), b(t) = amplitude (sin t, 0)")


def tresca_normals() -> np.ndarray:
    e = np.eye(3)
    rows = [(e[a] - e[c]) / math.sqrt(2.0) for a in range(3) for c in range(3) if a != c]
    return np.array(rows)


def _elasto_toy(yield_bound: float = 1.0, amplitude: float = 1.5, shape: str = "tresca",
                k: int = 100) -> Scenario:
    if shape == "tresca":
        U = tresca_normals()
    elif shape == "box":
        U = np.vstack([np.eye(3), -np.eye(3)])
    else:
        raise ConfigError(f"unknown admissible-stress shape {shape!r}")
    direction = np.array([1.0, -0.5, -0.5])

    def offsets(t):
        sigma = amplitude * math.sin(2 * math.pi * t) * direction
        return yield_bound - U @ sigma

    cost = CostSpec(terminal=TerminalCost("quadratic_half", np.zeros(3)),
                    l3=(CostTerm("bdot", "quadratic", 0.5),))
    return Scenario("elasto_toy", 3, U.shape[0], 1.0, np.zeros(3), cost,
                    u_path=lambda t: U, b_path=offsets, mode="fixed_u", k=k,
                    params={"yield_bound": yield_bound, "amplitude": amplitude, "shape": shape},
                    notes="q = -k p in the moving set {<q + sigma(t), u_i> <= b_i}; "
                          "external forces enter only through sigma")


def _set_jump(k: int = 100) -> Scenario:
    def normals(t):
        return [[1.0, 0.0], [-1.0, 0.0], [-math.cos(t), -math.sin(t)]]

    def offsets(t):
        return [1.0, -1.0, -math.cos(t) - math.sin(t)]

    return Scenario("degenerate_2_3", 2, 3, math.pi, [1.0, 0.0], CostSpec(),
                    u_path=normals, b_path=offsets, mode="fixed_u", k=k,
                    notes="C(0) = {1} x R, C(t) = {1} x [1, inf) for t > 0")


def _static_box(k: int = 50) -> Scenario:
    x0 = [0.3, -0.2]
    cost = CostSpec(terminal=TerminalCost("quadratic", x0))
    normals = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    return Scenario("static_box", 2, 4, 1.0, x0, cost,
                    u_path=lambda t: normals, b_path=lambda t: [1.0, 1.0, 1.0, 1.0],
                    mode="fixed_u", k=k, notes="static unit box, x0 interior")


def _box_lipschitz(k: int = 100) -> Scenario:
    s = 1.0 / math.sqrt(2.0)
    normals = [[1.0, 0.0], [s, s]]

    def offsets(t):
        return [1.0 - 0.5 * t - 0.2 * abs(math.sin(3.0 * t)),
                1.2 - 0.6 * t + 0.1 * abs(t - 0.5)]

    cost = CostSpec(terminal=TerminalCost("quadratic_half", [0.0, 0.0]),
                    l3=(CostTerm("bdot", "quadratic", 0.5),))
    return Scenario("box_lipschitz", 2, 2, 1.0, [0.5, 0.3], cost,
                    u_path=lambda t: normals, b_path=offsets, mode="fixed_u", k=k,
                    notes="two fixed faces pushed by Lipschitz offsets")


_ENTRIES = [
    ScenarioRegistryEntry(
        "ex7_3", _one_dim_pushing,
        Reference(0.25, lambda t: np.asarray(t) / 2, lambda t: -np.asarray(t) / 2,
                  "optimal triple (t/2, -1, -t/2) with cost 1/4"),
        "optimize", "one-dimensional pushing with terminal target 1",
        simulate_b=lambda t: [-t / 2]),
    ScenarioRegistryEntry(
        "ex7_4", _inactive_variant,
        Reference(0.5, lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                  lambda t: np.ones_like(np.asarray(t, dtype=float)),
                  "trivial solution b = 1 with cost 1/2"),
        "certify", "inactive constraint; trivial solution certified with lambda = 1"),
    ScenarioRegistryEntry(
        "ex7_5", _excluded_candidate,
        Reference(0.04, excluded_candidate_x, excluded_candidate_b,
                  "candidate (v0, -t + s0); cost 0.04 when alpha = 0"),
        "certify", "candidate excluded by enhanced nontriviality for alpha > 0"),
    ScenarioRegistryEntry(
        "ex7_6", _planar_box,
        Reference(0.5, lambda t: np.outer(1 - np.minimum(np.asarray(t), 1) / 2, [1, 1]),
                  None, "simultaneous pushing with beta = -1/2, theta = 1, cost 1/2"),
        "optimize", "two orthogonal faces in the plane"),
    ScenarioRegistryEntry(
        "play_stop", _play_stop, Reference(source="no reference value"),
        "simulate", "play-and-stop operator for a translated rectangle"),
    ScenarioRegistryEntry(
        "elasto_toy", _elasto_toy, Reference(source="no reference value"),
        "simulate", "pseudo-rigid kinematic hardening with a Tresca prism"),
    ScenarioRegistryEntry(
        "degenerate_2_3", _set_jump, Reference(source="no absolutely continuous solution"),
        "simulate", "moving set jumps at t = 0+"),
    ScenarioRegistryEntry(
        "static_box", _static_box, Reference(0.0, lambda t: np.outer(np.ones_like(t), [0.3, -0.2]),
                                 source="the state never moves; phi(x0) = 0"),
        "simulate", "template: static set, interior start"),
    ScenarioRegistryEntry(
        "box_lipschitz", _box_lipschitz, Reference(source="Richardson reference"),
        "convergence", "template: Lipschitz offsets, fixed normals"),
]


def registry() -> List[ScenarioRegistryEntry]:
    return list(_ENTRIES)


def lookup(scenario_id: str) -> Optional[ScenarioRegistryEntry]:
    for e in _ENTRIES:
        if e.id == scenario_id:
            return e
    return None


# ----------------------------------------------------------------------
# configuration files


def _read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib as toml
        except ModuleNotFoundError:
            import tomli as toml
        try:
            return toml.loads(text)
        except Exception as exc:
            raise ConfigError(f"invalid TOML: {exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}")


def _term(d: dict) -> CostTerm:
    if not isinstance(d, dict) or "on" not in d:
        raise ConfigError(f"cost term needs an 'on' key: {d!r}")
    return CostTerm(d["on"], d.get("kind", "quadratic"), float(d.get("weight", 1.0)),
                    d.get("ref"))


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build a scenario from the documented configuration layout."""
    try:
        dims = cfg["dims"]
        n, m = int(dims["n"]), int(dims["m"])
        hz = cfg.get("horizon", {})
        T = float(hz.get("T", 1.0))
        cost_cfg = cfg.get("cost", {})
        term_cfg = cost_cfg.get("terminal", {"kind": "none"})
        terminal = TerminalCost(term_cfg.get("kind", "none"), term_cfg.get("center"),
                                float(term_cfg.get("weight", 1.0)))
        groups = {g: tuple(_term(d) for d in cost_cfg.get(g, [])) for g in ("l1", "l2", "l3")}
        controls = cfg.get("controls", {})
        if "u_init" not in controls or "b_init" not in controls:
            raise ConfigError("controls need u_init and b_init")
        u_fn = time_function(controls["u_init"])
        b_fn = time_function(controls["b_init"])
        mode = cfg.get("mode", "fixed_u" if controls.get("fixed_u", True) else "free_u")
        solver = SolverSettings(**{k: v for k, v in cfg.get("solver", {}).items()
                                   if k in SolverSettings.__dataclass_fields__})
        return Scenario(cfg.get("id", "custom"), n, m, T, cfg["x0"],
                        CostSpec(terminal, **groups), u_fn, b_fn, mode=mode,
                        tau=float(hz.get("tau", 0.0)), k=int(hz.get("k", 100)),
                        epsilon=float(cfg.get("epsilon", 10.0)),
                        M_tilde=float(cfg.get("M_tilde", 1e6)), solver=solver)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario configuration: {exc!r}")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(_read_config(path))
