"""CSV tables with a ``#`` header block that records the full run configuration."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

from . import __version__
from .model import SystemParams

CONFIG_PREFIX = "# config: "


@dataclass(frozen=True)
class GridSpec:
    """Detuning grid in units of g (or kappa when g = 0)."""

    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if self.points < 1:
            raise ValueError(f"grid needs at least one point, got {self.points}")
        if self.points > 1 and not self.hi > self.lo:
            raise ValueError(f"grid max must exceed min, got {self.lo}:{self.hi}")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must look like min:max:points, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    def values(self) -> list[float]:
        if self.points == 1:
            return [self.lo]
        step = (self.hi - self.lo) / (self.points - 1)
        return [self.lo + k * step for k in range(self.points)]

    def __str__(self):
        return f"{self.lo:g}:{self.hi:g}:{self.points}"


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one CLI run (output path excluded)."""

    command: str
    g: float
    gamma: float
    omega: float = 0.01
    nth: float = 0.0
    dims: Optional[tuple[int, int, int]] = None
    allow_strong_drive: bool = False
    grid: Optional[str] = None
    delta: Optional[float] = None
    pair: Optional[str] = None
    tau_max: Optional[float] = None
    with_analytic: bool = False
    tolerances: dict = field(default_factory=dict)
    seed: Optional[int] = None

    @property
    def delta_unit(self) -> str:
        return "g" if self.g > 0 else "kappa"

    def params(self, delta_ratio: float = 0.0) -> SystemParams:
        """SystemParams at a detuning given in units of g (or kappa when g = 0)."""
        scale = self.g if self.g > 0 else 1.0
        return SystemParams(
            g=self.g, gamma=self.gamma, delta=delta_ratio * scale, omega=self.omega,
            n_th=self.nth, dims=self.dims, allow_strong_drive=self.allow_strong_drive,
        )

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        if d["dims"] is not None:
            d["dims"] = list(d["dims"])
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        if d.get("dims") is not None:
            d["dims"] = tuple(int(x) for x in d["dims"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path: Path) -> RunConfig:
    """Read a RunConfig from a JSON file or from the header block of a CSV written by this tool."""
    text = Path(path).read_text()
    for line in text.splitlines():
        if line.startswith(CONFIG_PREFIX):
            return RunConfig.from_json(line[len(CONFIG_PREFIX):])
    stripped = text.strip()
    if stripped.startswith("{"):
        return RunConfig.from_json(stripped)
    raise ValueError(f"{path} has no '{CONFIG_PREFIX.strip()}' header line and is not a JSON config")


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    if isinstance(value, (tuple, list)):
        return ";".join(str(v) for v in value)
    return str(value)


def write_table(stream: TextIO, config: RunConfig, columns: Sequence[str], rows: Iterable[Sequence],
                *, source: str = "numeric", extra: Optional[dict] = None) -> None:
    """Write the header block, the column line and one line per row."""
    stream.write(f"# twomode-om {__version__}\n")
    stream.write(f"# command: {config.command}\n")
    stream.write(f"# source={source}\n")
    stream.write(CONFIG_PREFIX + config.to_json() + "\n")
    for key, value in (extra or {}).items():
        stream.write(f"# {key}: {fmt(value)}\n")
    stream.write(",".join(columns) + "\n")
    for row in rows:
        stream.write(",".join(fmt(v) for v in row) + "\n")


def read_table(path: Path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a table written by :func:`write_table` into (header, columns, rows)."""
    header: dict = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("config: "):
                header["config"] = body[len("config: "):]
            elif "=" in body and ":" not in body.split("=")[0]:
                key, value = body.split("=", 1)
                header[key.strip()] = value.strip()
            elif ": " in body:
                key, value = body.split(": ", 1)
                header[key.strip()] = value.strip()
            continue
        if not columns:
            columns = line.split(",")
        else:
            rows.append(line.split(","))
    return header, columns, rows
