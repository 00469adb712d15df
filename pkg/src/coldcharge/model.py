"""Domain types shared by the simulator, the controllers and the oracles.

Units throughout: energy in kWh, power in kW, temperature in degC, time in
slots of ``dt_hours`` hours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

import numpy as np

DEFAULT_DT_HOURS = 1.0 / 12.0
DEFAULT_HORIZON = 288


@dataclass(frozen=True)
class ThermalParams:
    """Lumped thermal/electrical parameters of one EV battery.

    Defaults are the cold-climate settings used in the case studies:
    0.95 charging efficiency, 0.8 heating efficiency, 4.8 kW / 3.0 kW base
    charge/heat rates with slopes 0.12 / 0.024 kW per degC, a 7.4 kW joint
    cap, q = 0.72 and eta = 0.048, and a [0, 20] degC operating band.
    """

    q: float = 0.72
    eta: float = 0.048
    delta_h: float = 0.8
    delta_c: float = 0.95
    beta_c: float = 0.12
    beta_h: float = 0.024
    p_c_base: float = 4.8
    p_h_base: float = 3.0
    p_total: float = 7.4
    t_low: float = 0.0
    t_high: float = 20.0

    @property
    def zeta(self) -> float:
        return 1.0 - self.eta / self.q

    def violations(self, where: str = "thermal") -> List["Violation"]:
        out = []
        if not 0.0 < self.delta_c <= 1.0:
            out.append(Violation(f"{where}.delta_c", "must lie in (0, 1]"))
        if not 0.0 < self.delta_h <= 1.0:
            out.append(Violation(f"{where}.delta_h", "must lie in (0, 1]"))
        if not 0.0 < self.eta < self.q:
            out.append(Violation(f"{where}.eta", "need 0 < eta < q"))
        if not self.t_low < self.t_high:
            out.append(Violation(f"{where}.t_low", "need t_low < t_high"))
        for name in ("beta_c", "beta_h", "p_c_base", "p_h_base"):
            if getattr(self, name) < 0:
                out.append(Violation(f"{where}.{name}", "must be >= 0"))
        if not self.p_total > 0:
            out.append(Violation(f"{where}.p_total", "must be > 0"))
        return out


@dataclass(frozen=True)
class EvSession:
    """One charging request. The EV is plugged in for slots [t_arrive, t_depart)."""

    id: int
    t_arrive: int
    t_depart: int
    e_initial: float
    e_depart: float
    e_cap: float
    t_initial: float
    thermal: ThermalParams = field(default_factory=ThermalParams)

    @property
    def demand(self) -> float:
        return self.e_depart - self.e_initial

    @property
    def duration(self) -> int:
        return self.t_depart - self.t_arrive


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Scenario:
    """Time grid, exogenous series and the session list for one episode."""

    dt_hours: float
    horizon: int
    ambient: np.ndarray
    price: np.ndarray
    pv_cap: np.ndarray
    sessions: tuple
    price_cap: float
    ambient_low: float
    ambient_high: float

    def __post_init__(self):
        object.__setattr__(self, "ambient", _frozen_array(self.ambient))
        object.__setattr__(self, "price", _frozen_array(self.price))
        object.__setattr__(self, "pv_cap", _frozen_array(self.pv_cap))
        object.__setattr__(self, "sessions", tuple(self.sessions))

    @classmethod
    def build(
        cls,
        ambient: Sequence[float],
        price: Sequence[float],
        pv_cap: Sequence[float],
        sessions: Sequence[EvSession],
        price_cap: float,
        dt_hours: float = DEFAULT_DT_HOURS,
        ambient_low: float | None = None,
        ambient_high: float | None = None,
    ) -> "Scenario":
        """Construct a scenario, taking ambient bounds from the series if omitted."""
        amb = np.asarray(ambient, dtype=float)
        return cls(
            dt_hours=dt_hours,
            horizon=len(amb),
            ambient=amb,
            price=price,
            pv_cap=pv_cap,
            sessions=tuple(sessions),
            price_cap=price_cap,
            ambient_low=float(amb.min()) if ambient_low is None else ambient_low,
            ambient_high=float(amb.max()) if ambient_high is None else ambient_high,
        )

    def session_by_id(self) -> Dict[int, EvSession]:
        return {s.id: s for s in self.sessions}

    @property
    def r_max(self) -> int:
        """Longest parking duration in slots (at least 1)."""
        return max([s.duration for s in self.sessions], default=1)

    def with_sessions(self, sessions: Sequence[EvSession]) -> "Scenario":
        return Scenario(
            self.dt_hours, self.horizon, self.ambient, self.price, self.pv_cap,
            tuple(sessions), self.price_cap, self.ambient_low, self.ambient_high,
        )

    def shifted(self, offset: float) -> "Scenario":
        """Same scenario with the ambient series and its bounds translated by ``offset``."""
        return Scenario(
            self.dt_hours, self.horizon, self.ambient + offset, self.price, self.pv_cap,
            self.sessions, self.price_cap, self.ambient_low + offset, self.ambient_high + offset,
        )


@dataclass(frozen=True)
class SlotDecision:
    """Per-EV charging/heating power plus the PV/grid split for one slot."""

    p_charge: Mapping[int, float]
    p_heat: Mapping[int, float]
    p_pv: float
    p_grid: float

    @property
    def total_load(self) -> float:
        return float(sum(self.p_charge.values()) + sum(self.p_heat.values()))

    @classmethod
    def from_loads(cls, p_charge: Mapping[int, float], p_heat: Mapping[int, float], pv_cap: float):
        """Serve the load from PV first and buy the remainder from the grid."""
        load = float(sum(p_charge.values()) + sum(p_heat.values()))
        p_pv = min(load, max(pv_cap, 0.0))
        return cls(dict(p_charge), dict(p_heat), p_pv, max(load - p_pv, 0.0))


@dataclass
class EvRuntimeState:
    """Mutable per-EV state owned by an episode."""

    energy: float
    temperature: float
    theta: float

    @property
    def h_backlog(self) -> float:
        return self.temperature - self.theta


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


def validate_scenario(s: Scenario) -> List[Violation]:
    """Check every type invariant; an empty list means the scenario is well formed."""
    out: List[Violation] = []
    if not s.dt_hours > 0:
        out.append(Violation("dt_hours", "must be > 0"))
    for name in ("ambient", "price", "pv_cap"):
        n = len(getattr(s, name))
        if n != s.horizon:
            out.append(Violation(name, f"length {n} != horizon {s.horizon}"))
    if s.price_cap < 0:
        out.append(Violation("price_cap", "must be >= 0"))
    for t, lam in enumerate(s.price):
        if not 0.0 <= lam <= s.price_cap:
            out.append(Violation(f"price[{t}]", f"{lam} outside [0, price_cap={s.price_cap}]"))
    for t, pv in enumerate(s.pv_cap):
        if pv < 0:
            out.append(Violation(f"pv_cap[{t}]", f"{pv} < 0"))
    if len(s.ambient):
        if s.ambient_low > float(np.min(s.ambient)):
            out.append(Violation("ambient_low", "above the series minimum"))
        if s.ambient_high < float(np.max(s.ambient)):
            out.append(Violation("ambient_high", "below the series maximum"))
    if s.ambient_low > s.ambient_high:
        out.append(Violation("ambient_low", "greater than ambient_high"))

    seen = set()
    for ev in s.sessions:
        tag = f"session[{ev.id}]"
        if ev.id in seen:
            out.append(Violation(f"{tag}.id", "duplicate id"))
        seen.add(ev.id)
        if not ev.t_arrive < ev.t_depart:
            out.append(Violation(f"{tag}.t_depart", "need t_arrive < t_depart"))
        if ev.t_arrive < 0 or ev.t_depart > s.horizon:
            out.append(Violation(f"{tag}.window", f"[{ev.t_arrive}, {ev.t_depart}) not within [0, {s.horizon})"))
        if not ev.e_initial <= ev.e_depart <= ev.e_cap:
            out.append(Violation(f"{tag}.e_depart", "need e_initial <= e_depart <= e_cap"))
        if ev.e_initial < 0:
            out.append(Violation(f"{tag}.e_initial", "must be >= 0"))
        if not ev.thermal.t_low <= ev.t_initial <= ev.thermal.t_high:
            out.append(Violation(f"{tag}.t_initial", "outside the thermal band"))
        out.extend(ev.thermal.violations(f"{tag}.thermal"))
    return out
