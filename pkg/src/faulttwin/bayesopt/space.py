"""Typed hyperparameter domains and their unit-hypercube encoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..errors import EncodingError


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"uniform domain needs lo < hi, got ({self.lo}, {self.hi})")

    @property
    def width(self) -> int:
        return 1

    def contains(self, v) -> bool:
        return isinstance(v, (int, float)) and self.lo <= v <= self.hi

    def encode(self, v) -> list[float]:
        return [(v - self.lo) / (self.hi - self.lo)]

    def decode(self, u: np.ndarray) -> float:
        return float(self.lo + min(max(float(u[0]), 0.0), 1.0) * (self.hi - self.lo))

    def to_dict(self) -> dict:
        return {"type": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class LogUniform(Uniform):
    kind = "log_uniform"

    def __post_init__(self):
        super().__post_init__()
        if not self.lo > 0:
            raise ValueError("log_uniform domain needs lo > 0")

    def encode(self, v) -> list[float]:
        return [(math.log(v) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))]

    def decode(self, u: np.ndarray) -> float:
        t = min(max(float(u[0]), 0.0), 1.0)
        v = math.exp(math.log(self.lo) + t * (math.log(self.hi) - math.log(self.lo)))
        return float(min(max(v, self.lo), self.hi))


@dataclass(frozen=True)
class Integer:
    lo: int
    hi: int
    kind = "integer"

    def __post_init__(self):
        if not (int(self.lo) == self.lo and int(self.hi) == self.hi):
            raise ValueError("integer domain bounds must be integers")
        if not self.lo < self.hi:
            raise ValueError(f"integer domain needs lo < hi, got ({self.lo}, {self.hi})")

    @property
    def width(self) -> int:
        return 1

    def contains(self, v) -> bool:
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and self.lo <= v <= self.hi

    def encode(self, v) -> list[float]:
        # each integer owns an equal-width cell; encode to the cell centre
        return [(v - self.lo + 0.5) / (self.hi - self.lo + 1)]

    def decode(self, u: np.ndarray) -> int:
        n = self.hi - self.lo + 1
        return int(self.lo + min(max(int(math.floor(float(u[0]) * n)), 0), n - 1))

    def to_dict(self) -> dict:
        return {"type": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Categorical:
    choices: tuple
    kind = "categorical"

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if not self.choices:
            raise ValueError("categorical domain needs at least one choice")
        if len(set(map(repr, self.choices))) != len(self.choices):
            raise ValueError("categorical choices must be distinct")

    @property
    def width(self) -> int:
        return len(self.choices)

    def contains(self, v) -> bool:
        return any(v == c and type(v) is type(c) for c in self.choices)

    def encode(self, v) -> list[float]:
        for i, c in enumerate(self.choices):
            if v == c and type(v) is type(c):
                return [1.0 if j == i else 0.0 for j in range(len(self.choices))]
        raise EncodingError(f"{v!r} is not one of {self.choices}")

    def decode(self, u: np.ndarray):
        return self.choices[int(np.argmax(u))]

    def to_dict(self) -> dict:
        return {"type": self.kind, "choices": list(self.choices)}


Domain = Uniform | LogUniform | Integer | Categorical


def domain_from_dict(d: dict) -> Domain:
    kind = d.get("type")
    if kind == "uniform":
        return Uniform(float(d["lo"]), float(d["hi"]))
    if kind == "log_uniform":
        return LogUniform(float(d["lo"]), float(d["hi"]))
    if kind == "integer":
        return Integer(int(d["lo"]), int(d["hi"]))
    if kind == "categorical":
        return Categorical(tuple(d["choices"]))
    raise ValueError(f"unknown domain type {kind!r}")


class SearchSpace:
    """Ordered named domains; encodes assignments into [0, 1]^dim."""

    def __init__(self, params: Sequence[tuple[str, Domain]] | dict[str, Domain]):
        items = list(params.items()) if isinstance(params, dict) else list(params)
        names = [n for n, _ in items]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        if not items:
            raise ValueError("search space is empty")
        self.params: list[tuple[str, Domain]] = items
        self.names = names
        self.dim = sum(d.width for _, d in items)

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> Domain:
        return dict(self.params)[name]

    def validate(self, assignment: dict[str, Any]) -> None:
        missing = [n for n in self.names if n not in assignment]
        if missing:
            raise EncodingError(f"missing parameters {missing}")
        for name, dom in self.params:
            if not dom.contains(assignment[name]):
                raise EncodingError(f"{name}={assignment[name]!r} is outside {dom.to_dict()}")

    def encode(self, assignment: dict[str, Any]) -> np.ndarray:
        self.validate(assignment)
        out: list[float] = []
        for name, dom in self.params:
            out += dom.encode(assignment[name])
        return np.array(out, dtype=np.float64)

    def decode(self, u) -> dict[str, Any]:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.dim,):
            raise EncodingError(f"expected encoded vector of length {self.dim}")
        out, i = {}, 0
        for name, dom in self.params:
            out[name] = dom.decode(u[i : i + dom.width])
            i += dom.width
        return out

    def sample(self, rng) -> dict[str, Any]:
        """Uniform draw in the encoded space (log-uniform for log domains)."""
        out = {}
        for name, dom in self.params:
            if isinstance(dom, Categorical):
                out[name] = dom.choices[int(rng.integers(len(dom.choices)))]
            else:
                out[name] = dom.decode(np.array([rng.random()]))
        return out

    def to_dict(self) -> dict:
        return {name: dom.to_dict() for name, dom in self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls([(name, domain_from_dict(spec)) for name, spec in d.items()])
