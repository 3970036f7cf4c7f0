"""Domain entities, geometry, and the wireless-charging energy model.

The network has three tiers: ground-mounted charging towers feed charging
drones, and charging drones ferry energy to mobile-base-station (MBS)
drones.  Everything in this module is a pure value computation shared by
the matching solvers, the transmit-power controller, and the simulation
engine.  Units are SI throughout: joules, meters, seconds, watts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .powerctl import QueueState


class InvalidParameterError(ValueError):
    """An operation was called outside its documented domain."""


# A 5870 mAh / 17.4 V flight battery holds 5.87 * 17.4 * 3600 = 367696.8 J.
# Spending it over the 30 min maximum flight time gives ~204 W cruise power.
BATTERY_CAPACITY_J = 367_696.8
MOVE_POWER_W = 204.0
MAX_SPEED_MS = 20.0
CHARGE_EFFICIENCY = 0.81
TOWER_RATED_POWER_W = 100.0
MBS_CHARGE_POWER_MAX_W = 160.0


@dataclass(frozen=True)
class Position:
    """A point in 3-D space; z is altitude above ground."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise InvalidParameterError(f"non-finite coordinate in ({self.x}, {self.y}, {self.z})")
        if self.z < 0:
            raise InvalidParameterError(f"altitude must be >= 0, got {self.z}")


@dataclass
class Tower:
    """Static ground charger with a fixed number of charging plates."""

    id: str
    position: Position
    plates: int = 4
    charge_power: float = TOWER_RATED_POWER_W
    efficiency: float = CHARGE_EFFICIENCY

    def __post_init__(self) -> None:
        if self.plates < 1:
            raise InvalidParameterError(f"tower {self.id}: plates must be >= 1")
        if self.charge_power <= 0:
            raise InvalidParameterError(f"tower {self.id}: charge_power must be > 0")
        if not 0 < self.efficiency <= 1:
            raise InvalidParameterError(f"tower {self.id}: efficiency must be in (0, 1]")


@dataclass
class ChargerDrone:
    """Battery-operated drone that ferries energy from towers to MBS drones."""

    id: str
    position: Position
    capacity: float = BATTERY_CAPACITY_J
    residual: float = BATTERY_CAPACITY_J
    speed: float = MAX_SPEED_MS
    efficiency: float = CHARGE_EFFICIENCY
    move_power: float = MOVE_POWER_W

    def __post_init__(self) -> None:
        if not 0 <= self.residual <= self.capacity:
            raise InvalidParameterError(
                f"charger {self.id}: residual {self.residual} outside [0, {self.capacity}]"
            )
        if self.speed <= 0:
            raise InvalidParameterError(f"charger {self.id}: speed must be > 0")
        if not 0 < self.efficiency <= 1:
            raise InvalidParameterError(f"charger {self.id}: efficiency must be in (0, 1]")
        if self.move_power < 0:
            raise InvalidParameterError(f"charger {self.id}: move_power must be >= 0")

    @property
    def deficit(self) -> float:
        """Charging capacity: how much energy the drone can still absorb."""
        return self.capacity - self.residual


@dataclass
class MbsDrone:
    """Drone acting as a mobile base station over a fixed coverage area."""

    id: str
    position: Position
    capacity: float = BATTERY_CAPACITY_J
    residual: float = BATTERY_CAPACITY_J
    efficiency: float = CHARGE_EFFICIENCY
    plates: int = 1
    hover_power: float = 0.0
    charge_power_max: float = MBS_CHARGE_POWER_MAX_W
    queue: "QueueState | None" = field(default=None, repr=False)
    dropped: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.residual <= self.capacity:
            raise InvalidParameterError(
                f"mbs {self.id}: residual {self.residual} outside [0, {self.capacity}]"
            )
        if self.plates < 1:
            raise InvalidParameterError(f"mbs {self.id}: plates must be >= 1")
        if not 0 < self.efficiency <= 1:
            raise InvalidParameterError(f"mbs {self.id}: efficiency must be in (0, 1]")
        if self.hover_power < 0:
            raise InvalidParameterError(f"mbs {self.id}: hover_power must be >= 0")
        if self.charge_power_max <= 0:
            raise InvalidParameterError(f"mbs {self.id}: charge_power_max must be > 0")

    @property
    def deficit(self) -> float:
        return self.capacity - self.residual


@dataclass(frozen=True)
class TimingConfig:
    """Split of one scheduling period into its two charging phases.

    One unit time of ``unit_s`` seconds consists of a tower-to-charger
    phase of ``tower_phase_s`` followed by a charger-to-MBS phase of
    ``mbs_phase_s``; transmission runs in ``slots_per_unit`` slots of
    ``slot_s`` seconds spanning the whole unit.
    """

    unit_s: float = 120.0
    tower_phase_s: float = 60.0
    mbs_phase_s: float = 60.0
    slot_s: float = 1.0
    slots_per_unit: int = 120

    def __post_init__(self) -> None:
        for name in ("unit_s", "tower_phase_s", "mbs_phase_s", "slot_s"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"timing: {name} must be > 0")
        if self.slots_per_unit < 1:
            raise InvalidParameterError("timing: slots_per_unit must be >= 1")
        if not math.isclose(self.unit_s, self.tower_phase_s + self.mbs_phase_s, rel_tol=1e-9):
            raise InvalidParameterError(
                f"timing: unit_s ({self.unit_s}) must equal tower_phase_s + mbs_phase_s "
                f"({self.tower_phase_s + self.mbs_phase_s})"
            )
        if not math.isclose(self.unit_s, self.slot_s * self.slots_per_unit, rel_tol=1e-9):
            raise InvalidParameterError(
                f"timing: slots_per_unit * slot_s ({self.slots_per_unit * self.slot_s}) "
                f"must equal unit_s ({self.unit_s})"
            )


def distance(a: Position, b: Position) -> float:
    """Euclidean distance in meters."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def travel_time(d: float, speed: float) -> float:
    """Time for a drone flying at ``speed`` to cover distance ``d``."""
    if speed <= 0:
        raise InvalidParameterError(f"speed must be > 0, got {speed}")
    return d / speed


def travel_energy(d: float, speed: float, move_power: float) -> float:
    """Energy spent flying distance ``d`` under the constant-power model.

    Propulsion draw is modeled as a constant ``move_power`` watts over the
    whole flight, so the cost is simply power times travel time.
    """
    if move_power < 0:
        raise InvalidParameterError(f"move_power must be >= 0, got {move_power}")
    return move_power * travel_time(d, speed)


def tower_charge_amount(
    charge_power: float,
    eta_tower: float,
    eta_charger: float,
    tower_phase_s: float,
    d: float,
    speed: float,
) -> float:
    """Energy a tower delivers to a matched charging drone in one phase.

    The drone first flies to the tower, which eats ``d / speed`` seconds of
    the phase; the remainder charges at the tower's rated power through
    both wireless-transfer efficiencies.  Clamped at zero when the flight
    consumes the whole window (delivered energy cannot be negative).
    """
    if tower_phase_s <= 0:
        raise InvalidParameterError(f"tower_phase_s must be > 0, got {tower_phase_s}")
    window = max(tower_phase_s - travel_time(d, speed), 0.0)
    return charge_power * eta_tower * eta_charger * window


def apply_charge(residual: float, amount: float, capacity: float) -> float:
    """Credit ``amount`` joules to a battery, clamped at full capacity."""
    if amount < 0:
        raise InvalidParameterError(f"charge amount must be >= 0, got {amount}")
    return min(residual + amount, capacity)
