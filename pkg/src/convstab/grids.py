"""Cell-centered grids, quadrature and elementary discrete calculus.

Everything downstream (stationary solves, time stepping, diagnostics) works on
midpoint samples: one spatial period of length ``period`` is split into
``n_cells`` cells with nodes at the cell centers x_i = (i + 1/2) h, and the
computational line domain is an integer number of periods so that periodic
profiles restrict to it exactly.  Midpoint quadrature keeps the discrete mass
bookkeeping of the finite-volume scheme exact, which the conservation and
contraction checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

__all__ = [
    "BoundaryMode",
    "CellGrid",
    "LineGrid",
    "NormKind",
    "Profile",
    "norm",
    "primitive",
]

NormKind = Literal["L1", "L2", "Linf"]

# "pinned_to_wp" freezes ghost cells at the background profile (the domain is a
# truncation of the line, perturbations must stay away from the edges);
# "periodic" wraps the domain into a torus of n_periods periods.
BoundaryMode = Literal["pinned_to_wp", "periodic"]


def _readonly(values) -> np.ndarray:
    out = np.array(values, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CellGrid:
    """One spatial period split into uniform cells, nodes at cell centers."""

    n_cells: int
    period: float

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValueError(f"n_cells must be an integer >= 8, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def h(self) -> float:
        return self.period / self.n_cells

    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h

    def refined(self, factor: int = 2) -> "CellGrid":
        return CellGrid(self.n_cells * factor, self.period)


@dataclass(frozen=True)
class Profile:
    """A periodic function sampled at the cell centers of one period.

    ``mean`` caches the cell average; it is computed on construction and must
    stay consistent with ``values`` (the dataclass is frozen and the array is
    marked read-only, so it cannot drift).
    """

    grid: CellGrid
    values: np.ndarray
    mean: Optional[float] = None

    def __post_init__(self):
        values = _readonly(self.values)
        if values.shape != (self.grid.n_cells,):
            raise ValueError(
                f"profile has {values.shape} values for a grid of "
                f"{self.grid.n_cells} cells"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        object.__setattr__(self, "values", values)
        if self.mean is None:
            object.__setattr__(self, "mean", float(values.mean()))

    def validate_mean(self, rtol: float = 1e-13) -> None:
        actual = float(self.values.mean())
        scale = max(1.0, abs(actual))
        if abs(actual - self.mean) > rtol * scale:
            raise ValueError(
                f"cached mean {self.mean} inconsistent with values (actual {actual})"
            )


@dataclass(frozen=True)
class LineGrid:
    """An integer number of periods laid side by side.

    The domain is [0, n_periods * period] with the same cell size as ``cell``,
    so a periodic profile tiles onto it without interpolation.
    """

    cell: CellGrid
    n_periods: int
    boundary_mode: BoundaryMode

    def __post_init__(self):
        if int(self.n_periods) != self.n_periods or self.n_periods < 1:
            raise ValueError(
                f"n_periods must be a positive integer, got {self.n_periods}"
            )
        object.__setattr__(self, "n_periods", int(self.n_periods))
        if self.boundary_mode not in ("pinned_to_wp", "periodic"):
            raise ValueError(f"unknown boundary_mode {self.boundary_mode!r}")

    @property
    def h(self) -> float:
        return self.cell.h

    @property
    def n_total(self) -> int:
        return self.cell.n_cells * self.n_periods

    @property
    def length(self) -> float:
        return self.cell.period * self.n_periods

    def centers(self) -> np.ndarray:
        return (np.arange(self.n_total) + 0.5) * self.h

    def interfaces(self) -> np.ndarray:
        return np.arange(self.n_total + 1) * self.h

    def tile(self, profile: Profile) -> np.ndarray:
        """Tile a one-period profile over the whole line domain (exact copy)."""
        if profile.grid.n_cells != self.cell.n_cells or not np.isclose(
            profile.grid.period, self.cell.period, rtol=1e-14, atol=0.0
        ):
            raise ValueError("profile grid does not match the line's cell grid")
        return np.tile(profile.values, self.n_periods)


def norm(values: np.ndarray, h: float, kind: NormKind) -> float:
    """Discrete norm of midpoint samples: L1 = h*sum|v|, L2 = sqrt(h*sum v^2),
    Linf = max|v|."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("norm of an empty sample array is undefined")
    if kind == "L1":
        return float(h * np.abs(values).sum())
    if kind == "L2":
        return float(np.sqrt(h * np.square(values).sum()))
    if kind == "Linf":
        return float(np.abs(values).max())
    raise ValueError(f"unknown norm kind {kind!r}")


def primitive(u: np.ndarray, h: float) -> np.ndarray:
    """Running integral V_i = h * sum_{j<=i} u_j (zero inflow at the left edge).

    The forward difference (V_i - V_{i-1})/h recovers u exactly in floating
    point, which the diagnostics rely on when reconstructing perturbations
    from their primitives.
    """
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("primitive of an empty sample array is undefined")
    return h * np.cumsum(u)
