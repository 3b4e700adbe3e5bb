"""Uniform sample grids, datasets and measurement noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from weakid.errors import GridError


@dataclass(frozen=True)
class Axis:
    n: int
    lo: float
    hi: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise GridError(f"axis needs at least 2 samples, got n={self.n}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise GridError(f"axis needs hi > lo, got [{self.lo}, {self.hi}]")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid. By convention the last axis is time."""

    axes: tuple[Axis, ...]

    def __post_init__(self):
        if len(self.axes) == 0:
            raise GridError("grid needs at least one axis")
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.n for a in self.axes)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(a.spacing for a in self.axes)

    def coords(self, axis: int) -> np.ndarray:
        return self.axes[axis].coords

    @classmethod
    def from_coords(cls, coords, rtol: float = 1e-9) -> "Grid":
        axes = []
        for c in coords:
            c = np.asarray(c, dtype=float)
            if c.ndim != 1 or c.size < 2:
                raise GridError("coordinate arrays must be 1-D with at least 2 entries")
            d = np.diff(c)
            if np.any(d <= 0) or np.ptp(d) > rtol * abs(d.mean()) * 10 + 1e-300:
                raise GridError("non-uniform sampling is not supported")
            axes.append(Axis(c.size, c[0], c[-1]))
        return cls(tuple(axes))


def make_grid(axes) -> Grid:
    """Build a grid from ``(n, lo, hi)`` triples."""
    return Grid(tuple(Axis(*a) for a in axes))


@dataclass(frozen=True, eq=False)
class Dataset:
    grid: Grid
    values: np.ndarray
    components: int = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == self.grid.ndim:
            v = v[..., None]
        if v.shape[:-1] != self.grid.shape or v.ndim != self.grid.ndim + 1:
            raise GridError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if v.shape[-1] < 1:
            raise GridError("dataset needs at least one component")
        if not np.all(np.isfinite(v)):
            raise GridError("dataset contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "components", v.shape[-1])

    def with_values(self, values) -> "Dataset":
        return Dataset(self.grid, values)


@dataclass(frozen=True)
class NoiseSpec:
    level: float
    seed: int = 0
    kind: str = "gaussian-additive"

    def __post_init__(self):
        if self.kind != "gaussian-additive":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not self.level >= 0:
            raise ValueError(f"noise level must be >= 0, got {self.level}")


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x)))


def add_noise(d: Dataset, s: NoiseSpec) -> Dataset:
    """Add i.i.d. Gaussian noise with std ``level * RMS`` of each clean component."""
    if s.level == 0:
        return d
    rng = np.random.default_rng(s.seed)
    flat = d.values.reshape(-1, d.components)
    sigma = s.level * np.sqrt(np.mean(flat * flat, axis=0))
    return d.with_values(d.values + sigma * rng.standard_normal(d.values.shape))
