"""Resource vectors, budgets, and message cost accounting.

Four resource dimensions are tracked: memory (bytes held), bandwidth
(bytes moved), cpu (abstract work units), energy (abstract units).
Quantities are exact rationals so that charge/refund sequences are
associative and order-independent; floating point would let a long
simulation drift across the feasibility boundary.

Memory is the only dimension that is refunded: buffering a message
charges memory transiently and evicting it from the history ring
refunds the same amount.  Bandwidth, cpu, and energy are cumulative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

DIMENSIONS = ("memory", "bandwidth", "cpu", "energy")

Rational = int | float | str | Fraction


def _frac(x: Rational) -> Fraction:
    """Exact conversion; decimal strings and floats go through their
    shortest decimal representation rather than the raw binary float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


class ResourceError(Exception):
    pass


class NegativeResource(ResourceError):
    """A vector component went below zero."""


class InfeasibleCharge(ResourceError):
    """Charging would exceed the remaining budget; state is unchanged."""


@dataclass(frozen=True)
class ResourceVector:
    """A point in the four-dimensional resource space, componentwise
    non-negative."""

    memory: Fraction = Fraction(0)
    bandwidth: Fraction = Fraction(0)
    cpu: Fraction = Fraction(0)
    energy: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        for name in DIMENSIONS:
            v = _frac(getattr(self, name))
            if v < 0:
                raise NegativeResource(f"{name}={v} is negative")
            object.__setattr__(self, name, v)

    @classmethod
    def of(
        cls,
        memory: Rational = 0,
        bandwidth: Rational = 0,
        cpu: Rational = 0,
        energy: Rational = 0,
    ) -> "ResourceVector":
        return cls(_frac(memory), _frac(bandwidth), _frac(cpu), _frac(energy))

    @classmethod
    def zero(cls) -> "ResourceVector":
        return _ZERO

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(
            self.memory + other.memory,
            self.bandwidth + other.bandwidth,
            self.cpu + other.cpu,
            self.energy + other.energy,
        )

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        # Raises NegativeResource if any component would go negative.
        return ResourceVector(
            self.memory - other.memory,
            self.bandwidth - other.bandwidth,
            self.cpu - other.cpu,
            self.energy - other.energy,
        )

    def scale(self, k: Rational) -> "ResourceVector":
        k = _frac(k)
        return ResourceVector(
            self.memory * k, self.bandwidth * k, self.cpu * k, self.energy * k
        )

    def __le__(self, other: "ResourceVector") -> bool:
        """Componentwise order; this is a partial order, so (a <= b) and
        (b <= a) can both be false."""
        return (
            self.memory <= other.memory
            and self.bandwidth <= other.bandwidth
            and self.cpu <= other.cpu
            and self.energy <= other.energy
        )

    def __ge__(self, other: "ResourceVector") -> bool:
        return other.__le__(self)

    def as_tuple(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        return (self.memory, self.bandwidth, self.cpu, self.energy)

    def as_floats(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in DIMENSIONS}


_ZERO = ResourceVector()


@dataclass(frozen=True)
class ResourceBudget:
    """A limit and what remains of it.

    Budgets are immutable; charge() and refund() return new budgets, so
    a failed charge cannot leave partial state behind.
    """

    limit: ResourceVector
    remaining: ResourceVector

    def __post_init__(self) -> None:
        if not self.remaining <= self.limit:
            raise ResourceError("remaining exceeds limit")

    @classmethod
    def full(cls, limit: ResourceVector) -> "ResourceBudget":
        return cls(limit, limit)

    @property
    def spent(self) -> ResourceVector:
        return self.limit - self.remaining

    def feasible(self, cost: ResourceVector) -> bool:
        return cost <= self.remaining

    def charge(self, cost: ResourceVector) -> "ResourceBudget":
        if not self.feasible(cost):
            raise InfeasibleCharge(
                f"cost {cost.as_floats()} exceeds remaining "
                f"{self.remaining.as_floats()}"
            )
        return ResourceBudget(self.limit, self.remaining - cost)

    def refund(self, amount: ResourceVector) -> "ResourceBudget":
        """Return previously charged resources (memory eviction).  The
        result is capped by the limit: refunding more than was spent is
        an accounting bug and raises."""
        new_remaining = self.remaining + amount
        if not new_remaining <= self.limit:
            raise ResourceError("refund exceeds amount spent")
        return ResourceBudget(self.limit, new_remaining)


UNBOUNDED = ResourceBudget.full(
    ResourceVector.of(10**12, 10**12, 10**12, 10**12)
)


@dataclass(frozen=True)
class CostModel:
    """Affine cost of handling one message of a given wire size.

    cost(size) = (buffer_per_byte * size,
                  per_byte_bandwidth * size,
                  per_message_cpu + per_byte_cpu * size,
                  per_message_energy + per_byte_energy * size)

    The default model charges bandwidth alone, one unit per wire byte,
    which makes consumption equal the true transmission size.
    """

    per_byte_bandwidth: Fraction = Fraction(1)
    per_byte_cpu: Fraction = Fraction(0)
    per_message_cpu: Fraction = Fraction(0)
    per_byte_energy: Fraction = Fraction(0)
    per_message_energy: Fraction = Fraction(0)
    buffer_per_byte: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        for name in (
            "per_byte_bandwidth",
            "per_byte_cpu",
            "per_message_cpu",
            "per_byte_energy",
            "per_message_energy",
            "buffer_per_byte",
        ):
            v = _frac(getattr(self, name))
            if v < 0:
                raise NegativeResource(f"{name}={v} is negative")
            object.__setattr__(self, name, v)

    def cost_of_size(self, size: int) -> ResourceVector:
        if size < 0:
            raise ValueError("negative message size")
        return ResourceVector(
            self.buffer_per_byte * size,
            self.per_byte_bandwidth * size,
            self.per_message_cpu + self.per_byte_cpu * size,
            self.per_message_energy + self.per_byte_energy * size,
        )

    def cost_of(self, msg) -> ResourceVector:
        """Cost of one message; accepts anything exposing wire_size."""
        return self.cost_of_size(msg.wire_size)

    def buffer_memory(self, size: int) -> ResourceVector:
        """The transient (refundable) part of the cost."""
        return ResourceVector(memory=self.buffer_per_byte * size)

    def to_json(self) -> dict:
        return {
            "per_byte_bandwidth": str(self.per_byte_bandwidth),
            "per_byte_cpu": str(self.per_byte_cpu),
            "per_message_cpu": str(self.per_message_cpu),
            "per_byte_energy": str(self.per_byte_energy),
            "per_message_energy": str(self.per_message_energy),
            "buffer_per_byte": str(self.buffer_per_byte),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CostModel":
        known = {
            "per_byte_bandwidth",
            "per_byte_cpu",
            "per_message_cpu",
            "per_byte_energy",
            "per_message_energy",
            "buffer_per_byte",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown cost model fields: {sorted(unknown)}")
        return cls(**{k: _frac(v) for k, v in obj.items()})


@dataclass(frozen=True)
class JournalEntry:
    """One accounting event: a charge or a refund at a point in time."""

    time: int
    kind: str  # "send" | "receive" | "refund"
    amount: ResourceVector


@dataclass(frozen=True)
class BoundCheckReport:
    """Result of checking a journal against per-horizon limits."""

    horizon: int
    totals: dict          # dimension -> float total consumed
    peak_memory: float
    peak_rate: int        # max send charges in any single time unit
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def cumulative_bound_check(
    journal: Iterable[JournalEntry],
    *,
    horizon: int,
    bandwidth_per_unit: Rational,
    cpu_per_unit: Rational,
    energy_per_unit: Rational,
    memory_cap: Rational,
    rate_cap: int | None = None,
) -> BoundCheckReport:
    """Check a charge/refund journal against linear-in-time limits.

    Over a horizon of T time units, cumulative bandwidth must stay
    within bandwidth_per_unit * T (likewise cpu and energy), the
    running memory level must never exceed memory_cap, and no single
    time unit may contain more than rate_cap send charges.
    """
    entries = sorted(journal, key=lambda e: e.time)
    if entries and entries[-1].time > horizon:
        raise ValueError("journal entry beyond the stated horizon")
    t = horizon
    bw_limit = _frac(bandwidth_per_unit) * t
    cpu_limit = _frac(cpu_per_unit) * t
    en_limit = _frac(energy_per_unit) * t
    mem_cap = _frac(memory_cap)

    bw = cpu = en = Fraction(0)
    mem = Fraction(0)
    peak_mem = Fraction(0)
    violations: list[str] = []
    sends_per_unit: dict[int, int] = {}
    for e in entries:
        if e.kind == "refund":
            mem -= e.amount.memory
            if mem < 0:
                violations.append(
                    f"t={e.time}: memory level went negative ({mem})"
                )
                mem = Fraction(0)
            continue
        mem += e.amount.memory
        bw += e.amount.bandwidth
        cpu += e.amount.cpu
        en += e.amount.energy
        peak_mem = max(peak_mem, mem)
        if e.kind == "send":
            sends_per_unit[e.time] = sends_per_unit.get(e.time, 0) + 1
        if mem > mem_cap:
            violations.append(f"t={e.time}: memory {mem} exceeds {mem_cap}")

    if bw > bw_limit:
        violations.append(f"bandwidth {bw} exceeds {bw_limit} over T={t}")
    if cpu > cpu_limit:
        violations.append(f"cpu {cpu} exceeds {cpu_limit} over T={t}")
    if en > en_limit:
        violations.append(f"energy {en} exceeds {en_limit} over T={t}")
    peak_rate = max(sends_per_unit.values(), default=0)
    if rate_cap is not None and peak_rate > rate_cap:
        violations.append(f"send rate {peak_rate} exceeds cap {rate_cap}")

    return BoundCheckReport(
        horizon=horizon,
        totals={
            "memory": float(peak_mem),
            "bandwidth": float(bw),
            "cpu": float(cpu),
            "energy": float(en),
        },
        peak_memory=float(peak_mem),
        peak_rate=peak_rate,
        violations=tuple(violations),
    )


def load_cost_model(path: str) -> CostModel:
    with open(path, "r", encoding="utf-8") as fp:
        return CostModel.from_json(json.load(fp))
