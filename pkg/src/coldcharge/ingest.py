"""Scenario input/output and the synthetic scenario generator.

File formats
------------
Series files are two-column CSV with a header line ``slot,value``; slot
indices must start at 0 and increase by one. A series with one row per hour
is expanded to the slot grid by holding each value for the hour.

A scenario directory holds ``ambient.csv``, ``price.csv``, ``pv.csv``,
``sessions.csv`` and an optional ``scenario.cfg`` with ``key = value`` lines
(``dt_hours``, ``price_cap``, ``ambient_low``, ``ambient_high``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import DEFAULT_DT_HOURS, DEFAULT_HORIZON, EvSession, Scenario, ThermalParams

SERIES_KINDS = ("ambient", "price", "pv")
SESSION_COLUMNS = ("id", "t_arrive", "t_depart", "e_initial", "e_depart", "e_cap", "t_initial")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def load_series(path, kind: str, horizon: int = DEFAULT_HORIZON, dt_hours: float = DEFAULT_DT_HOURS) -> np.ndarray:
    """Read a ``slot,value`` CSV and align it to a grid of ``horizon`` slots."""
    if kind not in SERIES_KINDS:
        raise ValueError(f"kind must be one of {SERIES_KINDS}")
    path = Path(path)
    values: List[float] = []
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no data rows")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                slot = int(row[0])
                value = float(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: cannot parse {row!r}") from None
            if slot in seen:
                raise DataError(f"{path}:{lineno}: duplicate slot index {slot}")
            if slot != len(values):
                raise DataError(f"{path}:{lineno}: slot index {slot} out of order or leaves a gap (expected {len(values)})")
            if not math.isfinite(value):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if kind in ("price", "pv") and value < 0:
                raise DataError(f"{path}:{lineno}: negative {kind}")
            seen.add(slot)
            values.append(value)
    if not values:
        raise DataError(f"{path}: no data rows")
    arr = np.array(values)
    if len(arr) == horizon:
        return arr
    per_hour = 1.0 / dt_hours
    if abs(per_hour - round(per_hour)) < 1e-9 and len(arr) * round(per_hour) == horizon:
        return np.repeat(arr, int(round(per_hour)))
    raise DataError(f"{path}: {len(arr)} rows match neither {horizon} slots nor hourly data")


def write_series(path, values: Sequence[float]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "value"])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])


def load_sessions(path, thermal: Optional[ThermalParams] = None) -> List[EvSession]:
    thermal = thermal or ThermalParams()
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SESSION_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(EvSession(
                    id=int(row["id"]), t_arrive=int(row["t_arrive"]), t_depart=int(row["t_depart"]),
                    e_initial=float(row["e_initial"]), e_depart=float(row["e_depart"]),
                    e_cap=float(row["e_cap"]), t_initial=float(row["t_initial"]), thermal=thermal,
                ))
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: cannot parse session row") from None
    return out


def write_sessions(path, sessions: Sequence[EvSession]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SESSION_COLUMNS)
        for s in sessions:
            w.writerow([s.id, s.t_arrive, s.t_depart, repr(s.e_initial), repr(s.e_depart), repr(s.e_cap), repr(s.t_initial)])


def parse_kv(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def load_scenario_dir(path, horizon: Optional[int] = None) -> Scenario:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path}: not a scenario directory")
    meta = parse_kv((path / "scenario.cfg").read_text()) if (path / "scenario.cfg").exists() else {}
    dt = float(meta.get("dt_hours", DEFAULT_DT_HOURS))
    horizon = int(meta.get("horizon", horizon or DEFAULT_HORIZON))
    series = {k: load_series(path / f"{k}.csv", k, horizon, dt) for k in SERIES_KINDS}
    sessions = load_sessions(path / "sessions.csv")
    price_cap = float(meta["price_cap"]) if "price_cap" in meta else float(series["price"].max())
    return Scenario.build(
        series["ambient"], series["price"], series["pv"], sessions, price_cap, dt,
        float(meta["ambient_low"]) if "ambient_low" in meta else None,
        float(meta["ambient_high"]) if "ambient_high" in meta else None,
    )


def save_scenario_dir(scenario: Scenario, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_series(path / "ambient.csv", scenario.ambient)
    write_series(path / "price.csv", scenario.price)
    write_series(path / "pv.csv", scenario.pv_cap)
    write_sessions(path / "sessions.csv", scenario.sessions)
    (path / "scenario.cfg").write_text(
        f"dt_hours = {scenario.dt_hours!r}\nhorizon = {scenario.horizon}\nprice_cap = {scenario.price_cap!r}\n"
        f"ambient_low = {scenario.ambient_low!r}\nambient_high = {scenario.ambient_high!r}\n"
    )


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic scenario generator (slot indices on a 5-minute grid by default).

    ``t_initial_range`` is relative to each battery's ``t_low``.
    """

    ev_count: int = 20
    arrival_window: Tuple[int, int] = (84, 132)
    parking_slots: Tuple[int, int] = (108, 144)
    soc_initial: Tuple[float, float] = (0.1, 0.3)
    soc_depart: float = 0.9
    capacity_kwh: float = 50.0
    t_initial_range: Tuple[float, float] = (0.0, 5.0)
    ambient_offset: float = 0.0
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    dt_hours: float = DEFAULT_DT_HOURS
    days: int = 1
    ambient_mean: float = -10.0
    ambient_swing: float = 3.0
    pv_peak_kw: float = 30.0
    price_base: float = 0.002
    price_morning: float = 3.0
    price_evening: float = 1.6
    price_midday_dip: float = 0.4
    price_cap: float = 0.05

    def __post_init__(self):
        pairs = {"arrival_window": self.arrival_window, "parking_slots": self.parking_slots,
                 "soc_initial": self.soc_initial, "t_initial_range": self.t_initial_range}
        for name, (a, b) in pairs.items():
            if a > b:
                raise ValueError(f"{name} bounds out of order")
        if not (0 <= self.soc_initial[0] and self.soc_initial[1] <= 1 and 0 <= self.soc_depart <= 1):
            raise ValueError("SoC values must lie in [0, 1]")
        if self.ev_count < 0 or self.days < 1:
            raise ValueError("ev_count must be >= 0 and days >= 1")

    @property
    def total_slots(self) -> int:
        return self.horizon * self.days


def synthetic_series(cfg: GeneratorConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cold-day ambient, real-time-like price and clear-sky-like PV profiles."""
    n = cfg.total_slots
    hours = (np.arange(n) * cfg.dt_hours) % 24.0
    # coldest around 05:00, warmest around 15:00
    ambient = cfg.ambient_mean - cfg.ambient_swing * np.cos(2 * np.pi * (hours - 15.0) / 24.0)
    ambient = ambient + rng.normal(0.0, 0.3, n).cumsum() * 0.1
    morning = np.exp(-0.5 * ((hours - 8.5) / 1.5) ** 2)
    evening = np.exp(-0.5 * ((hours - 18.0) / 2.0) ** 2)
    midday = np.exp(-0.5 * ((hours - 13.0) / 2.0) ** 2)
    price = cfg.price_base * (1.0 + cfg.price_morning * morning + cfg.price_evening * evening
                              - cfg.price_midday_dip * midday)
    price = price * np.exp(rng.normal(0.0, 0.15, n))
    price = np.clip(price, 0.0, cfg.price_cap)
    daylight = np.clip(np.sin(np.pi * (hours - 7.5) / 9.5), 0.0, None) ** 1.5
    cloud = np.clip(1.0 - 0.3 * rng.random(n // 12 + 1).repeat(12)[:n], 0.0, 1.0)
    pv = cfg.pv_peak_kw * daylight * cloud
    return ambient, price, pv


def generate_scenario(
    cfg: GeneratorConfig,
    series: Optional[Tuple[Sequence[float], Sequence[float], Sequence[float]]] = None,
    thermal: Optional[ThermalParams] = None,
) -> Scenario:
    """Seeded synthetic scenario.

    ``series`` optionally supplies (ambient, price, pv) on the slot grid; the
    ambient offset is applied to whichever ambient series is used. With
    ``days > 1`` the EV population and session pattern repeat daily.
    """
    rng = np.random.default_rng(cfg.seed)
    thermal = thermal or ThermalParams()
    if series is None:
        ambient, price, pv = synthetic_series(cfg, rng)
    else:
        ambient, price, pv = (np.asarray(s, dtype=float) for s in series)
        if not len(ambient) == len(price) == len(pv):
            raise DataError("series lengths differ")
    n = len(ambient)
    a_lo, a_hi = cfg.arrival_window
    d_lo, d_hi = cfg.parking_slots
    if a_lo < 0 or d_lo < 1 or a_lo + d_lo > cfg.horizon:
        raise DataError("infeasible session window: parking time exceeds the horizon")
    sessions = []
    for day in range(cfg.days):
        base = day * cfg.horizon
        for _ in range(cfg.ev_count):
            arrive = int(rng.integers(a_lo, min(a_hi, cfg.horizon - d_lo) + 1))
            stay = int(rng.integers(d_lo, d_hi + 1))
            depart = min(arrive + stay, cfg.horizon)
            soc = rng.uniform(*cfg.soc_initial)
            temp0 = thermal.t_low + rng.uniform(*cfg.t_initial_range)
            temp0 = min(max(temp0, thermal.t_low), thermal.t_high)
            sessions.append(EvSession(
                id=len(sessions), t_arrive=base + arrive, t_depart=min(base + depart, n),
                e_initial=soc * cfg.capacity_kwh, e_depart=cfg.soc_depart * cfg.capacity_kwh,
                e_cap=cfg.capacity_kwh, t_initial=temp0, thermal=thermal,
            ))
    ambient = ambient + cfg.ambient_offset
    return Scenario.build(ambient, price, pv, sessions, cfg.price_cap, cfg.dt_hours)


@dataclass
class RunConfig:
    method: str = "proposed"
    v: float = 600.0
    gamma: float = 20.0
    truth_model: str = "queue"
    enforce_v_max: bool = True
    alpha: Optional[float] = None
    out: str = "out"
    scenario: Optional[str] = None
    ambient: Optional[str] = None
    price: Optional[str] = None
    pv: Optional[str] = None
    sessions: Optional[str] = None
    seed: int = 0
    offset: float = 0.0
    ev_count: int = 20

    def __post_init__(self):
        from .harness import METHODS, TRUTH_MODELS

        if self.method not in METHODS:
            raise DataError(f"method must be one of {METHODS}")
        if self.truth_model not in TRUTH_MODELS:
            raise DataError(f"truth_model must be one of {TRUTH_MODELS}")


def _coerce(value: str, typ):
    if typ in ("bool", bool):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise DataError(f"not a boolean: {value!r}")
    if typ in ("int", int):
        return int(value)
    if typ in ("float", float, "Optional[float]"):
        return float(value)
    return value


def run_config_from_mapping(values: Dict[str, object], base: Optional[RunConfig] = None) -> RunConfig:
    """Overlay ``values`` on ``base``; string values are coerced to the field types."""
    base = base or RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    kwargs = {f.name: getattr(base, f.name) for f in fields(RunConfig)}
    for k, v in values.items():
        if v is None:
            continue
        if k not in known:
            raise DataError(f"unknown configuration key {k!r}")
        kwargs[k] = _coerce(v, known[k]) if isinstance(v, str) else v
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise DataError(str(exc)) from None


def load_run_config(path) -> RunConfig:
    return run_config_from_mapping(parse_kv(Path(path).read_text()))
