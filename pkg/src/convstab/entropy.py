"""Entropy built on the stationary family: pi = p(u, x), eta, dispersion fits.

For each cell x_i the family profiles give a strictly increasing table
p -> w_p(x_i).  A monotone piecewise-cubic interpolant (PCHIP) in p extends
the table between knots; inverting it defines pi(t, x) = p(u(t, x), x), and

    eta(u, x) = integral_0^{pi} (u - w_p(x)) dp

is the entropy density.  Because the interpolant is cubic on each p-interval,
eta is evaluated by integrating it exactly (antiderivative of the piecewise
polynomial) rather than by sampling: the result is the exact integral of the
same interpolant the inversion uses, so the two are consistent to roundoff
and eta inherits nonnegativity from the interpolant's monotonicity.

The dissipation h sum dpw(pi_i, x_i) (D pi)_i^2 uses centered differences of
pi (wrap-around on periodic domains, one-sided end stencils otherwise), and
the entropy balance d/dt total_eta + dissipation = 0 is checked with centered
time differences over uniformly spaced snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .evolution import State
from .stationary import StationaryFamily

__all__ = [
    "BalanceReport",
    "DispersionFit",
    "EntropyField",
    "FamilyInterpolant",
    "FamilyRangeError",
    "dispersion_fit",
    "entropy_balance_check",
    "eta_field",
    "invert_p",
    "nash_ratio",
]


class FamilyRangeError(ValueError):
    """A state value falls outside the p-range the family covers."""


def _gather_eval(coeffs: np.ndarray, j: np.ndarray,
                 s: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Evaluate a per-cell piecewise polynomial at interval j, offset s."""
    acc = coeffs[0, j, cells].copy()
    for k in range(1, coeffs.shape[0]):
        acc = acc * s + coeffs[k, j, cells]
    return acc


@dataclass(frozen=True)
class FamilyInterpolant:
    """Monotone-in-p interpolant of a stationary family, per cell.

    Wraps two PCHIP interpolants over the family's p-knots: one for the
    profile table w_p(x_i) and one for the mean-derivative table.  All
    evaluations accept per-cell p arrays (interval lookup plus Horner on the
    gathered cubic coefficients), which is what the entropy field needs --
    every cell sits at its own pi.
    """

    family: StationaryFamily

    def __post_init__(self):
        values = self.family.values_table()
        dp = self.family.dp_table()
        p = np.asarray(self.family.p_grid, dtype=float)
        w_interp = PchipInterpolator(p, values, axis=0, extrapolate=False)
        dp_interp = PchipInterpolator(p, dp, axis=0, extrapolate=False)
        object.__setattr__(self, "_p", p)
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "_w_coeffs", w_interp.c)
        object.__setattr__(self, "_w_anti", w_interp.antiderivative().c)
        object.__setattr__(self, "_dp_coeffs", dp_interp.c)

    @property
    def p_min(self) -> float:
        return float(self._p[0])

    @property
    def p_max(self) -> float:
        return float(self._p[-1])

    def _locate(self, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        j = np.clip(np.searchsorted(self._p, p, side="right") - 1, 0, self._p.size - 2)
        return j, p - self._p[j]

    def _check_cells(self, cells: np.ndarray, size: int) -> None:
        n = self._values.shape[1]
        if np.any(cells < 0) or np.any(cells >= n):
            raise IndexError(f"cell indices must lie in [0, {n})")
        if cells.size != size:
            raise ValueError("cells and p arrays must have matching size")

    def profile_at(self, p, cells) -> np.ndarray:
        """w_p(x_i) for per-cell p values (cells index the family's grid)."""
        p = np.asarray(p, dtype=float)
        cells = np.asarray(cells, dtype=int)
        self._check_cells(cells, p.size)
        j, s = self._locate(p)
        return _gather_eval(self._w_coeffs, j, s, cells)

    def dp_at(self, p, cells) -> np.ndarray:
        """Mean-derivative table interpolated at per-cell p values."""
        p = np.asarray(p, dtype=float)
        cells = np.asarray(cells, dtype=int)
        self._check_cells(cells, p.size)
        j, s = self._locate(p)
        return _gather_eval(self._dp_coeffs, j, s, cells)

    def profile_integral(self, p, cells) -> np.ndarray:
        """integral_{p_min}^{p} w_q(x_i) dq, exact for the interpolant."""
        p = np.asarray(p, dtype=float)
        cells = np.asarray(cells, dtype=int)
        self._check_cells(cells, p.size)
        j, s = self._locate(p)
        return _gather_eval(self._w_anti, j, s, cells)

    def invert(self, u, cells) -> np.ndarray:
        """Per-cell inverse pi with w_pi(x_i) = u_i, by bracketed bisection.

        Values matching a knot profile exactly return the knot's p exactly.
        Values outside the family's bracket at their cell raise
        FamilyRangeError (a relative slack of 1e-10 absorbs roundoff by
        clamping to the end knot).
        """
        u = np.asarray(u, dtype=float)
        cells = np.asarray(cells, dtype=int)
        self._check_cells(cells, u.size)
        table = self._values[:, cells]  # (M+1, len(u)) increasing in axis 0
        lo_vals, hi_vals = table[0], table[-1]
        slack = 1e-10 * (1.0 + np.abs(u))
        below = u < lo_vals - slack
        above = u > hi_vals + slack
        if np.any(below) or np.any(above):
            bad = int(np.argmax(below | above))
            raise FamilyRangeError(
                f"value {u[bad]!r} at cell {int(cells[bad])} is outside the "
                f"family range [{lo_vals[bad]!r}, {hi_vals[bad]!r}]; "
                "build the family over a wider p interval"
            )
        u = np.clip(u, lo_vals, hi_vals)

        # bracket: row index k with table[k] <= u < table[k+1], per column
        k = (u[None, :] >= table).sum(axis=0) - 1
        k = np.clip(k, 0, self._p.size - 2)
        exact = np.abs(table[k, np.arange(u.size)] - u) == 0.0
        exact_hi = np.abs(table[k + 1, np.arange(u.size)] - u) == 0.0

        lo = self._p[k].copy()
        hi = self._p[k + 1].copy()
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            w_mid = self.profile_at(mid, cells)
            go_right = w_mid < u
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
        pi = 0.5 * (lo + hi)
        pi = np.where(exact, self._p[k], pi)
        pi = np.where(exact_hi, self._p[k + 1], pi)
        return pi


@dataclass(frozen=True)
class EntropyField:
    """pi, eta and their aggregates for one state against one family."""

    pi: np.ndarray
    eta: np.ndarray
    total_eta: float
    dissipation: float

    def __post_init__(self):
        for name in ("pi", "eta"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.eta.size and float(self.eta.min()) < 0:
            raise ValueError(f"eta must be nonnegative, got min {self.eta.min()!r}")


def invert_p(family: StationaryFamily, u_value: float, cell_index: int) -> float:
    """Scalar convenience wrapper around FamilyInterpolant.invert."""
    interp = FamilyInterpolant(family)
    return float(interp.invert(np.array([u_value]), np.array([cell_index]))[0])


def _cell_phase(state: State, family: StationaryFamily) -> np.ndarray:
    n_cells = family.grid.n_cells
    if state.grid.cell.n_cells != n_cells or not np.isclose(
        state.grid.cell.period, family.grid.period, rtol=1e-12, atol=0.0
    ):
        raise ValueError("state grid and family grid do not match")
    return np.arange(state.grid.n_total) % n_cells


def eta_field(
    family: StationaryFamily,
    state: State,
    interpolant: Optional[FamilyInterpolant] = None,
) -> EntropyField:
    """Entropy field of a state: inversion, exact eta integral, dissipation.

    eta_i = u_i pi_i - integral_0^{pi_i} w_p(x_i) dp, with the integral taken
    exactly on the family interpolant.  Roundoff can leave eta a hair below
    zero near pi = 0; anything above -1e-12 (1 + pi^2) is clamped, anything
    below that raises, since it would mean the interpolant lost monotonicity.
    """
    interp = interpolant if interpolant is not None else FamilyInterpolant(family)
    cells = _cell_phase(state, family)
    u = state.u
    pi = interp.invert(u, cells)

    zero = np.zeros_like(pi)
    integral = interp.profile_integral(pi, cells) - interp.profile_integral(zero, cells)
    eta = u * pi - integral
    floor = -1e-12 * (1.0 + pi**2)
    if np.any(eta < floor):
        worst = int(np.argmin(eta - floor))
        raise ValueError(
            f"eta = {eta[worst]!r} at cell {worst} is negative beyond roundoff"
        )
    eta = np.maximum(eta, 0.0)

    h = state.grid.h
    if state.grid.boundary_mode == "periodic":
        dpi = (np.roll(pi, -1) - np.roll(pi, 1)) / (2.0 * h)
    else:
        dpi = np.gradient(pi, h)
    dpw = interp.dp_at(pi, cells)
    dissipation = float(h * np.sum(dpw * dpi**2))
    total = float(h * eta.sum())
    return EntropyField(pi=pi, eta=eta, total_eta=total, dissipation=dissipation)


@dataclass(frozen=True)
class BalanceReport:
    """Centered-difference residuals of d/dt total_eta + dissipation = 0."""

    residuals: np.ndarray
    max_residual: float

    def __post_init__(self):
        arr = np.array(self.residuals, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "residuals", arr)


def entropy_balance_check(
    fields: Sequence[EntropyField], times: Sequence[float]
) -> BalanceReport:
    """Residuals r_k = (total_eta_{k+1} - total_eta_{k-1})/(2 dt) + diss_k."""
    times = np.asarray(times, dtype=float)
    if len(fields) != times.size:
        raise ValueError("one snapshot time per entropy field required")
    if times.size < 3:
        raise ValueError("entropy balance needs at least 3 snapshots")
    gaps = np.diff(times)
    if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=0.0):
        raise ValueError("entropy balance needs uniformly spaced snapshots")
    dt = float(gaps[0])
    totals = np.array([f.total_eta for f in fields])
    diss = np.array([f.dissipation for f in fields])
    residuals = (totals[2:] - totals[:-2]) / (2.0 * dt) + diss[1:-1]
    return BalanceReport(residuals=residuals, max_residual=float(np.abs(residuals).max()))


@dataclass(frozen=True)
class DispersionFit:
    """Log-log OLS fit of an L2-distance decay over a time window."""

    window: Tuple[float, float]
    exponent: float
    constant: float
    r_squared: float
    converged: bool = False


def dispersion_fit(diagnostics, window: Tuple[float, float]) -> DispersionFit:
    """OLS fit of log l2_dist against log t inside the window.

    Needs at least 8 recorded snapshots in the window and t_lo > 0.  If any
    recorded distance in the window is nonpositive the run has already hit
    the stationary profile to working precision; that is reported with
    converged=True and NaN fit fields rather than as an error.
    """
    t_lo, t_hi = float(window[0]), float(window[1])
    if not 0 < t_lo < t_hi:
        raise ValueError(f"window must satisfy 0 < t_lo < t_hi, got {window}")
    times = diagnostics.column("t")
    dists = diagnostics.column("l2_dist")
    mask = (times >= t_lo - 1e-12) & (times <= t_hi + 1e-12) & ~np.isnan(dists)
    if mask.sum() < 8:
        raise ValueError(
            f"dispersion fit needs >= 8 snapshots in [{t_lo}, {t_hi}], "
            f"found {int(mask.sum())}"
        )
    t = times[mask]
    d = dists[mask]
    if np.any(d <= 0):
        return DispersionFit(
            window=(t_lo, t_hi),
            exponent=float("nan"),
            constant=float("nan"),
            r_squared=float("nan"),
            converged=True,
        )
    slope, intercept = np.polyfit(np.log(t), np.log(d), 1)
    fitted = slope * np.log(t) + intercept
    ss_res = float(np.sum((np.log(d) - fitted) ** 2))
    ss_tot = float(np.sum((np.log(d) - np.log(d).mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return DispersionFit(
        window=(t_lo, t_hi),
        exponent=float(slope),
        constant=float(np.exp(intercept)),
        r_squared=r2,
    )


def nash_ratio(pi: np.ndarray, h: float) -> float:
    """|pi|_2 / (|pi|_1^(2/3) |dx pi|_2^(1/3)), the d = 1 Nash quotient.

    Interior derivatives are centered; the end stencils are one-sided, which
    perturbs the ratio at O(h^2).  A zero denominator means pi is constant
    (or identically zero) and the run has converged; that is signalled with
    +inf rather than an error.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size < 3:
        raise ValueError("nash_ratio needs a 1-d field with >= 3 samples")
    theta_nash = 1.0 / 3.0
    l2 = np.sqrt(h * np.sum(pi**2))
    l1 = h * np.sum(np.abs(pi))
    grad = np.gradient(pi, h)
    g2 = np.sqrt(h * np.sum(grad**2))
    denominator = l1 ** (1.0 - theta_nash) * g2**theta_nash
    if denominator == 0.0:
        return float("inf")
    return float(l2 / denominator)
