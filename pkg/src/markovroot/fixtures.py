"""Bundled study datasets with their constraint masks, cycle counts,
tolerance presets and documented expected values."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .core import ConstraintMask, CountMatrix
from .likelihood import LikelihoodContext
from .optimizer import PRESETS, OptimizerSettings

SOURCES = ("reported", "computed")


@dataclass(frozen=True)
class ExpectedValue:
    key: str
    value: object
    source: str  # "reported": printed with the data; "computed": frozen output of this package
    decimals: int | None = None
    T: int | None = None

    def array(self) -> np.ndarray:
        return np.asarray(self.value, dtype=float)

    @property
    def atol(self) -> float:
        """Half a unit in the last printed place (0 when exact)."""
        return 0.5 * 10.0 ** -self.decimals if self.decimals is not None else 0.0


@dataclass(frozen=True, eq=False)
class StudyFixture:
    name: str
    description: str
    counts: CountMatrix
    mask: ConstraintMask
    cycles: tuple
    grid: dict  # scale -> per-row denominators
    expected: dict  # key -> ExpectedValue

    def context(self, t: int | None = None) -> LikelihoodContext:
        t = self.cycles[0] if t is None else t
        return LikelihoodContext(self.counts, t, self.mask)

    def settings(self, t: int | None = None) -> OptimizerSettings:
        t = self.cycles[0] if t is None else t
        return PRESETS.get((self.name, t), OptimizerSettings())

    def denominators(self, scale: str = "small") -> tuple:
        if scale not in self.grid:
            raise KeyError(f"unknown scale {scale!r}; choose from {sorted(self.grid)}")
        return tuple(self.grid[scale])

    def value(self, key: str) -> ExpectedValue:
        return self.expected[key]


def _parse(name: str, raw: dict) -> StudyFixture:
    exp = {}
    for key, e in raw["expected"].items():
        if e["source"] not in SOURCES:
            raise ValueError(f"{name}.{key}: unknown source {e['source']!r}")
        exp[key] = ExpectedValue(key, e["value"], e["source"], e.get("decimals"), e.get("T"))
    return StudyFixture(
        name=name,
        description=raw["description"],
        counts=CountMatrix(np.array(raw["counts"])),
        mask=ConstraintMask.from_rows(raw["mask"]),
        cycles=tuple(raw["cycles"]),
        grid={k: tuple(v) for k, v in raw["grid"].items()},
        expected=exp,
    )


@lru_cache(maxsize=None)
def _raw() -> dict:
    text = resources.files(__package__).joinpath("data/studies.json").read_text()
    return {k: v for k, v in json.loads(text).items() if not k.startswith("_")}


def fixture_names() -> list:
    return sorted(_raw())


@lru_cache(maxsize=None)
def load_fixture(name: str) -> StudyFixture:
    raw = _raw()
    if name not in raw:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(fixture_names())}")
    return _parse(name, raw[name])


def all_fixtures() -> list:
    return [load_fixture(n) for n in fixture_names()]
