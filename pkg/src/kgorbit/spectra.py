"""Real Fourier eigenbasis of -Laplace on flat tori, with dealiased quadrature.

The basis is the tensor product, over axes, of {1, sqrt(2) cos(2 pi k x/L),
sqrt(2) sin(2 pi k x/L)} for k = 1..K, orthonormal under the mean value
scalar product <f, g> = integral of f*g (the torus volume is normalised
to 1).  The quadrature grid carries (2p+2)K + 1 equispaced nodes per axis,
so products of up to 2p+2 basis functions are integrated exactly by the
rectangle rule.  That removes aliasing entirely: every projection of the
power nonlinearity computed here is exact up to rounding.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolated, DimensionMismatch

_KIND_CODE = {"const": 0, "cos": 1, "sin": 2}


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: mass m, nonlinearity exponent p (term u^(2p+1)),
    torus dimension, per-axis Fourier cutoff K, and torus side lengths."""

    m: float
    p: int
    dim: int
    cutoff: int
    periods: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if not (isinstance(self.p, int) and self.p >= 1):
            raise AssumptionViolated(f"nonlinearity exponent p must be a positive integer, got {self.p!r}")
        if self.dim not in (1, 2, 3):
            raise AssumptionViolated(f"dimension must be 1, 2 or 3, got {self.dim!r}")
        if self.dim == 3 and self.p != 1:
            raise AssumptionViolated("in dimension 3 the model requires p = 1")
        if not (isinstance(self.cutoff, int) and self.cutoff >= 1):
            raise AssumptionViolated(f"cutoff must be a positive integer, got {self.cutoff!r}")
        periods = tuple(float(L) for L in self.periods)
        object.__setattr__(self, "periods", periods)
        if len(periods) != self.dim:
            raise AssumptionViolated(
                f"need {self.dim} periods, got {len(periods)}")
        if any(L <= 0 for L in periods):
            raise AssumptionViolated("periods must be positive")
        vol = math.prod(periods)
        if abs(vol - 1.0) > 1e-12:
            raise AssumptionViolated(
                f"torus volume must equal 1 (rescaled model), got {vol!r}")
        if not self.m > 0:
            raise AssumptionViolated(f"mass parameter must be positive, got {self.m!r}")
        # The upper bound m < lambda_1 is checked in build_spectrum, where
        # the smallest nonzero eigenvalue is known.

    @property
    def center(self) -> float:
        """Amplitude m^(1/p) of the interior space-stationary equilibrium."""
        return self.m ** (1.0 / self.p)

    @property
    def separatrix_amplitude(self) -> float:
        """Largest amplitude (p+1)^(1/2p) m^(1/p) reached by the saddle loop."""
        return (self.p + 1) ** (1.0 / (2 * self.p)) * self.m ** (1.0 / self.p)


@dataclass(frozen=True)
class Mode:
    """One real basis function: per-axis wavevector and trig kind."""

    index: int
    wavevector: tuple[int, ...]
    kinds: tuple[str, ...]
    lam: float


@dataclass(frozen=True)
class SpectrumTable:
    """Immutable eigenbasis table; safe to share across concurrent runs."""

    params: ModelParams
    modes: tuple[Mode, ...]
    lam: np.ndarray
    lam_sq: np.ndarray
    grid_shape: tuple[int, ...]
    nodes: tuple[np.ndarray, ...]
    basis: np.ndarray = field(repr=False)        # (mode_count, n_nodes)
    basis_t_mean: np.ndarray = field(repr=False)  # basis.T / n_nodes

    @property
    def mode_count(self) -> int:
        return self.basis.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.basis.shape[1]

    @property
    def lambda_1(self) -> float:
        """Smallest nonzero eigenvalue frequency."""
        positive = self.lam[self.lam > 0]
        return float(positive.min())


def build_spectrum(params: ModelParams) -> SpectrumTable:
    """Enumerate all modes with per-axis index <= cutoff and tabulate their
    values on the dealiased tensor grid.

    Modes are sorted by eigenvalue, ties broken lexicographically by
    wavevector then (const, cos, sin), so indexing is deterministic.
    Raises AssumptionViolated if m >= lambda_1.
    """
    K, dim, periods = params.cutoff, params.dim, params.periods
    n_axis = (2 * params.p + 2) * K + 1
    grid_shape = (n_axis,) * dim

    axis_factors = [(0, "const")] + [(k, t) for k in range(1, K + 1) for t in ("cos", "sin")]
    records = []
    for combo in itertools.product(axis_factors, repeat=dim):
        wavevector = tuple(k for k, _ in combo)
        kinds = tuple(t for _, t in combo)
        lam_sq = sum((2.0 * math.pi * k / L) ** 2 for k, L in zip(wavevector, periods))
        records.append((lam_sq, wavevector, tuple(_KIND_CODE[t] for t in kinds), kinds))
    records.sort(key=lambda r: (r[0], r[1], r[2]))

    lam_sq = np.array([r[0] for r in records])
    lam = np.sqrt(lam_sq)
    lam1 = float(lam[lam > 0].min())
    if params.m >= lam1:
        raise AssumptionViolated(
            f"mass parameter must satisfy 0 < m < lambda_1 = {lam1:.6g}, got m = {params.m!r}")

    # Per-axis factor values on the equidistant nodes x_j = j L / n; the
    # rescaled argument 2 pi k x / L = 2 pi k j / n does not depend on L.
    j = np.arange(n_axis)
    factor_values = {(0, "const"): np.ones(n_axis)}
    for k in range(1, K + 1):
        theta = 2.0 * math.pi * k * j / n_axis
        factor_values[(k, "cos")] = math.sqrt(2.0) * np.cos(theta)
        factor_values[(k, "sin")] = math.sqrt(2.0) * np.sin(theta)

    n_total = n_axis ** dim
    basis = np.empty((len(records), n_total))
    modes = []
    for idx, (ls, wavevector, _, kinds) in enumerate(records):
        row = factor_values[(wavevector[0], kinds[0])]
        for axis in range(1, dim):
            row = np.multiply.outer(row, factor_values[(wavevector[axis], kinds[axis])])
        basis[idx] = row.ravel()
        modes.append(Mode(index=idx, wavevector=wavevector, kinds=kinds, lam=float(math.sqrt(ls))))

    nodes = tuple(np.arange(n_axis) * (L / n_axis) for L in periods)
    return SpectrumTable(
        params=params,
        modes=tuple(modes),
        lam=lam,
        lam_sq=lam_sq,
        grid_shape=grid_shape,
        nodes=nodes,
        basis=basis,
        basis_t_mean=np.ascontiguousarray(basis.T) / n_total,
    )


def to_grid(a: np.ndarray, table: SpectrumTable) -> np.ndarray:
    """Evaluate sum_n a_n e_n at the quadrature nodes (exact synthesis)."""
    a = np.asarray(a, dtype=float)
    if a.shape != (table.mode_count,):
        raise DimensionMismatch(
            f"expected {table.mode_count} mode coefficients, got shape {a.shape}")
    return (a @ table.basis).reshape(table.grid_shape)


def to_modes(g: np.ndarray, table: SpectrumTable) -> np.ndarray:
    """Project grid values onto the basis by the rectangle rule.

    Exact for trigonometric polynomials up to the dealiased degree.  A
    constant offset is split off first: the offset lands entirely in the
    constant mode, and exactly-constant fields get exactly-zero
    coefficients on every nonconstant mode.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != table.grid_shape and g.shape != (table.n_nodes,):
        raise DimensionMismatch(
            f"expected grid shape {table.grid_shape}, got {g.shape}")
    flat = g.reshape(-1)
    offset = flat[0]
    coeffs = (flat - offset) @ table.basis_t_mean
    coeffs[0] += offset
    return coeffs


def project_power(a: np.ndarray, exponent: int, table: SpectrumTable) -> np.ndarray:
    """Mode coefficients of (sum_k a_k e_k)^exponent, exact on the dealiased grid.

    Only exponent = 2p+1 is admitted: that is the power the grid was sized for.
    """
    if exponent != 2 * table.params.p + 1:
        raise DimensionMismatch(
            f"grid is dealiased for exponent {2 * table.params.p + 1}, got {exponent}")
    a = np.asarray(a, dtype=float)
    if a.shape != (table.mode_count,):
        raise DimensionMismatch(
            f"expected {table.mode_count} mode coefficients, got shape {a.shape}")
    return _project_power_raw(a, exponent, table)


def _grid_power(g: np.ndarray, exponent: int) -> np.ndarray:
    if exponent == 2:
        return g * g
    if exponent == 3:
        return g * g * g
    return g ** exponent


def _project_power_raw(a: np.ndarray, exponent: int, table: SpectrumTable) -> np.ndarray:
    """Unchecked synthesis-power-analysis kernel (hot path of the integrators)."""
    g = a @ table.basis
    gp = _grid_power(g, exponent)
    offset = gp[0]
    coeffs = (gp - offset) @ table.basis_t_mean
    coeffs[0] += offset
    return coeffs
