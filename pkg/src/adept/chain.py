"""Linear-chain layout, per-round gate schedule and tunable parameter registry.

Qubits sit on a line ``0 .. n-1``. Even positions hold data qubits, odd
positions hold measure qubits, so every measure qubit has two data
neighbours and the two chain ends are data qubits.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator


class Role(str, Enum):
    DATA = "data"
    MEASURE = "measure"


class Kind(str, Enum):
    SQ_DATA = "sq_data"
    SQ_MEASURE = "sq_measure"
    CZ = "cz"
    READOUT = "readout"


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class ChainLayout:
    n_qubits: int

    def __post_init__(self):
        n = self.n_qubits
        if not isinstance(n, int) or isinstance(n, bool):
            raise LayoutError(f"n_qubits must be an integer, got {n!r}")
        if n < 3:
            raise LayoutError(f"a chain needs at least 3 qubits, got {n}")
        if n % 2 == 0:
            raise LayoutError(
                f"n_qubits must be odd (data/measure alternate and both ends are data), got {n}"
            )

    def role(self, i: int) -> Role:
        self._check(i)
        return Role.DATA if i % 2 == 0 else Role.MEASURE

    def neighbors(self, i: int) -> tuple[int, ...]:
        self._check(i)
        return tuple(j for j in (i - 1, i + 1) if 0 <= j < self.n_qubits)

    @cached_property
    def data_qubits(self) -> tuple[int, ...]:
        return tuple(range(0, self.n_qubits, 2))

    @cached_property
    def measure_qubits(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_qubits, 2))

    def measure_index(self, q: int) -> int:
        """Position of measure qubit ``q`` in :attr:`measure_qubits`."""
        if self.role(q) is not Role.MEASURE:
            raise LayoutError(f"qubit {q} is not a measure qubit")
        return q // 2

    def data_index(self, q: int) -> int:
        if self.role(q) is not Role.DATA:
            raise LayoutError(f"qubit {q} is not a data qubit")
        return q // 2

    def _check(self, i: int):
        if not 0 <= i < self.n_qubits:
            raise LayoutError(f"qubit {i} outside chain of {self.n_qubits}")


def build_chain(n_qubits: int) -> ChainLayout:
    return ChainLayout(n_qubits)


@dataclass(frozen=True, order=True)
class GateLocation:
    """One tunable gate occurrence within a detection round.

    ``qubits`` is ``(q,)`` for single-qubit gates and readout, and
    ``(measure, data)`` for CZ. ``slot`` separates the two single-qubit gates
    on a measure qubit (0 before the CZ layers, 1 after); CZ slot 0 couples to
    the left data neighbour and slot 1 to the right one.
    """

    kind: Kind
    qubits: tuple[int, ...]
    slot: int = 0

    @property
    def qubit(self) -> int:
        return self.qubits[0]

    @property
    def home(self) -> int:
        """Qubit that owns this location when grouping (the data qubit for CZ)."""
        return self.qubits[1] if self.kind is Kind.CZ else self.qubits[0]

    @property
    def id(self) -> str:
        if self.kind is Kind.SQ_MEASURE:
            return f"sq_measure:{self.qubits[0]}:{self.slot}"
        if self.kind is Kind.CZ:
            return f"cz:{self.qubits[0]}:{self.qubits[1]}"
        return f"{self.kind.value}:{self.qubits[0]}"

    def __str__(self):
        return self.id

    @classmethod
    def parse(cls, text: str) -> "GateLocation":
        """Inverse of :attr:`id`. ``sq_measure:3`` is shorthand for slot 0."""
        parts = text.strip().split(":")
        try:
            kind = Kind(parts[0])
            nums = [int(p) for p in parts[1:]]
        except ValueError as exc:
            raise LayoutError(f"bad location id {text!r}") from exc
        if kind is Kind.CZ:
            if len(nums) != 2:
                raise LayoutError(f"CZ location needs measure:data, got {text!r}")
            m, d = nums
            return cls(kind, (m, d), 0 if d < m else 1)
        if kind is Kind.SQ_MEASURE and len(nums) in (1, 2):
            return cls(kind, (nums[0],), nums[1] if len(nums) == 2 else 0)
        if len(nums) != 1:
            raise LayoutError(f"bad location id {text!r}")
        return cls(kind, (nums[0],))


def gate_locations(layout: ChainLayout) -> list[GateLocation]:
    """All gate locations of one round, in schedule order.

    Order: first single-qubit layer on measure qubits, data single-qubit
    gates, left CZ layer, right CZ layer, second measure single-qubit layer,
    readout.
    """
    return list(_locations(layout.n_qubits))


def _locations(n: int) -> tuple[GateLocation, ...]:
    ms = range(1, n, 2)
    out = [GateLocation(Kind.SQ_MEASURE, (m,), 0) for m in ms]
    out += [GateLocation(Kind.SQ_DATA, (d,)) for d in range(0, n, 2)]
    out += [GateLocation(Kind.CZ, (m, m - 1), 0) for m in ms]
    out += [GateLocation(Kind.CZ, (m, m + 1), 1) for m in ms]
    out += [GateLocation(Kind.SQ_MEASURE, (m,), 1) for m in ms]
    out += [GateLocation(Kind.READOUT, (m,)) for m in ms]
    return tuple(out)


class ParamType(str, Enum):
    ANGLE = "angle"
    BIAS = "bias"


@dataclass
class Parameter:
    name: str
    type: ParamType
    optimum: float
    value: float
    sensitivity: float = 1.0
    lower: float = float("-inf")
    upper: float = float("inf")

    def __post_init__(self):
        self.type = ParamType(self.type)
        if self.sensitivity < 0:
            raise ValueError(f"sensitivity of {self.name!r} must be >= 0, got {self.sensitivity}")

    @property
    def offset(self) -> float:
        return self.value - self.optimum


ParamKey = tuple[GateLocation, str]


@dataclass
class ParameterRegistry:
    """Tunable parameters keyed by ``(location, name)``.

    Mutation is single-owner; hand :meth:`snapshot` copies to concurrent
    evaluators.
    """

    params: dict[ParamKey, Parameter] = field(default_factory=dict)

    def __post_init__(self):
        self._by_location: dict[GateLocation, list[Parameter]] = {}
        for (loc, _), p in self.params.items():
            self._by_location.setdefault(loc, []).append(p)

    def add(self, location: GateLocation, param: Parameter) -> Parameter:
        key = (location, param.name)
        if key in self.params:
            raise KeyError(f"parameter {param.name!r} already registered at {location}")
        self.params[key] = param
        self._by_location.setdefault(location, []).append(param)
        return param

    def get(self, location: GateLocation, name: str) -> Parameter:
        try:
            return self.params[(location, name)]
        except KeyError:
            raise KeyError(f"no parameter {name!r} at {location}") from None

    def at(self, location: GateLocation) -> list[Parameter]:
        return list(self._by_location.get(location, ()))

    def set_value(self, location: GateLocation, name: str, value: float):
        self.get(location, name).value = float(value)

    def set_optimum(self, location: GateLocation, name: str, optimum: float):
        self.get(location, name).optimum = float(optimum)

    def locations(self) -> list[GateLocation]:
        seen = dict.fromkeys(loc for loc, _ in self.params)
        return list(seen)

    def snapshot(self) -> "ParameterRegistry":
        # locations are immutable; only the parameter records need copying
        return ParameterRegistry({k: copy.copy(p) for k, p in self.params.items()})

    def reset_to_optimum(self):
        for p in self.params.values():
            p.value = p.optimum

    def __iter__(self) -> Iterator[tuple[ParamKey, Parameter]]:
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def __contains__(self, key: ParamKey):
        return key in self.params


# Default sensitivities. Angles use the sin^2 law with unit amplitude; bias
# sensitivities are flip probability per (bias unit)^2, bias units are MHz.
DEFAULT_FREQ_SENSITIVITY = 0.0015
DEFAULT_READOUT_SENSITIVITY = 0.01


def default_registry(
    layout: ChainLayout,
    freq_sensitivity: float = DEFAULT_FREQ_SENSITIVITY,
) -> ParameterRegistry:
    """Registry with every location tunable and one frequency bias per qubit.

    * every single-qubit gate and CZ carries an ``angle`` parameter,
    * each readout carries a ``threshold`` bias,
    * each qubit's frequency bias ``freq`` lives on its first single-qubit
      location (``sq_measure:m:0`` or ``sq_data:d``).
    """
    reg = ParameterRegistry()
    for loc in gate_locations(layout):
        if loc.kind is Kind.READOUT:
            reg.add(loc, Parameter("threshold", ParamType.BIAS, 0.0, 0.0, DEFAULT_READOUT_SENSITIVITY))
            continue
        reg.add(loc, Parameter("angle", ParamType.ANGLE, 0.0, 0.0, 1.0))
        if loc.kind is Kind.SQ_DATA or (loc.kind is Kind.SQ_MEASURE and loc.slot == 0):
            reg.add(loc, Parameter("freq", ParamType.BIAS, 0.0, 0.0, freq_sensitivity))
    return reg


def freq_location(layout: ChainLayout, qubit: int) -> GateLocation:
    """Location carrying the frequency bias of ``qubit``."""
    if layout.role(qubit) is Role.DATA:
        return GateLocation(Kind.SQ_DATA, (qubit,))
    return GateLocation(Kind.SQ_MEASURE, (qubit,), 0)
