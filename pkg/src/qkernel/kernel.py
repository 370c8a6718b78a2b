"""Transition kernels on uniform grids.

The kernel law is a compensated Poisson law: jumps of size ``-eps`` at rate
``sigma^2/eps^2`` plus the deterministic drift ``sigma^2 t/eps``.  Its
characteristic function never decays, so two regimes are handled:

* smooth regime (many expected jumps, ``sigma^2 t/eps^2 >= LATTICE_LIMIT``):
  the characteristic function is negligible well inside the Nyquist band and
  the inverse DFT gives a spectrally accurate density;
* lattice regime (few jumps): the law lives on ``c - eps*N``.  The grid is
  aligned with that lattice (spacing dividing ``|eps|``, node offset equal to
  the compensator modulo the spacing) and the inverse DFT returns the atoms
  exactly, stored as mass / spacing.

Grid nodes sit at ``offset + (l - n/2) * spacing``; ``offset`` is 0 for the
Gaussian and smooth cases, so x = 0 is a node there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .errors import CompositionError, ConfigurationError, GridError, StabilityError, ValidationError
from .model import CLOSED, ModelParams, TruncationSpec, characteristic_exponent

LATTICE_LIMIT = 16.0
MIN_POINTS = 64
MAX_POINTS = 1 << 22
NEGATIVE_TOL = 1e-9
BOUNDARY_TOL = 1e-8
NORM_TOL = 1e-4
# points per standard deviation for Gaussian-like kernels
RESOLUTION = 32


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpatialGrid:
    spacing: float
    n: int
    offset: float = 0.0

    def __post_init__(self):
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise GridError(f"grid spacing must be positive, got {self.spacing}")
        if not _is_pow2(self.n) or self.n < MIN_POINTS:
            raise GridError(f"grid size must be a power of two >= {MIN_POINTS}, got {self.n}")
        if not (0.0 <= self.offset < self.spacing):
            raise GridError("grid offset must lie in [0, spacing)")

    @classmethod
    def from_bounds(cls, x_min: float, x_max: float, n: int) -> "SpatialGrid":
        """Grid through x = 0 spanning at least [x_min, x_max] with n nodes."""
        if not x_min < x_max:
            raise GridError("x_min must be below x_max")
        if not _is_pow2(n) or n < MIN_POINTS:
            raise GridError(f"grid size must be a power of two >= {MIN_POINTS}, got {n}")
        half = max(-x_min, x_max)
        return cls(2.0 * half / (n - 2), n)

    @property
    def x(self) -> np.ndarray:
        return self.offset + (np.arange(self.n) - self.n // 2) * self.spacing

    @property
    def x_min(self) -> float:
        return self.offset - (self.n // 2) * self.spacing

    @property
    def x_max(self) -> float:
        return self.offset + (self.n // 2 - 1) * self.spacing

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def wavenumbers(self) -> np.ndarray:
        """DFT wavenumbers in numpy FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    def with_offset(self, offset: float) -> "SpatialGrid":
        return SpatialGrid(self.spacing, self.n, float(offset) % self.spacing)

    def index_of(self, x: float) -> int:
        """Index of the node at ``x``; raises if ``x`` is not a node."""
        pos = (x - self.offset) / self.spacing + self.n // 2
        idx = int(round(pos))
        if abs(pos - idx) > 1e-7 or not 0 <= idx < self.n:
            raise GridError(f"x = {x} is not a node of the grid")
        return idx


@dataclass(frozen=True)
class CumulantSet:
    k2: float
    k3: float
    k4: float

    def __post_init__(self):
        if not self.k2 > 0:
            raise ValidationError("second cumulant must be positive")

    @property
    def skewness(self) -> float:
        return self.k3 / self.k2 ** 1.5

    @property
    def excess_kurtosis(self) -> float:
        return self.k4 / self.k2 ** 2

    @classmethod
    def from_central_moments(cls, m2: float, m3: float, m4: float) -> "CumulantSet":
        return cls(m2, m3, m4 - 3.0 * m2 * m2)


@dataclass(frozen=True)
class KernelDensity:
    """Density samples on a grid.  ``lattice`` kernels hold point masses
    (value = mass / spacing) rather than samples of a smooth curve."""

    grid: SpatialGrid
    values: np.ndarray
    params: ModelParams
    method: str = "fourier"
    lattice: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise GridError("values do not match the grid")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def integral(self) -> float:
        return float(np.trapezoid(self.values, dx=self.grid.spacing))

    def masses(self) -> np.ndarray:
        """Quadrature weights; trapezoid rule on the grid."""
        w = self.values * self.grid.spacing
        w = w.copy()
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def cdf(self, x, left: bool = False) -> np.ndarray:
        """Cumulative distribution at ``x``.

        Lattice kernels give the right-continuous step function (its left
        limit with ``left=True``); smooth kernels interpolate the cumulative
        trapezoid integral linearly.
        """
        x = np.asarray(x, dtype=float)
        w = self.masses()
        cum = np.cumsum(w)
        nodes = self.grid.x
        if self.lattice:
            tol = 1e-7 * self.grid.spacing
            if left:
                idx = np.searchsorted(nodes, x - tol, side="left") - 1
            else:
                idx = np.searchsorted(nodes, x + tol, side="right") - 1
            out = np.where(idx >= 0, cum[np.clip(idx, 0, None)], 0.0)
            return out
        inner = np.concatenate(([0.0], 0.5 * (self.values[1:] + self.values[:-1]) * self.grid.spacing))
        return np.interp(x, nodes, np.cumsum(inner), left=0.0, right=float(np.sum(inner)))

    def density_at(self, x) -> np.ndarray:
        return np.interp(x, self.grid.x, self.values, left=0.0, right=0.0)

    def sup_distance(self, other: "KernelDensity") -> float:
        if other.grid != self.grid:
            raise GridError("kernels live on different grids")
        return float(np.max(np.abs(self.values - other.values)))

    def to_csv(self, path_or_file) -> None:
        header = (f"# qkernel {__version__} sigma={self.params.sigma!r} "
                  f"epsilon={self.params.epsilon!r} horizon={self.params.horizon!r} "
                  f"method={self.method} lattice={self.lattice} "
                  f"spacing={self.grid.spacing!r} n={self.grid.n} offset={self.grid.offset!r}\n")
        rows = "".join(f"{x:.17g},{v:.17g}\n" for x, v in zip(self.grid.x, self.values))
        text = header + "x,density\n" + rows
        if hasattr(path_or_file, "write"):
            path_or_file.write(text)
        else:
            with open(path_or_file, "w", newline="") as fh:
                fh.write(text)


def is_lattice(params: ModelParams) -> bool:
    """True when atoms of the jump law are resolvable (few expected jumps)."""
    return params.epsilon != 0.0 and params.jump_intensity < LATTICE_LIMIT


def _poisson_tail_halfwidth(params: ModelParams) -> float:
    lam = params.jump_intensity
    n_hi = float(stats.poisson.isf(1e-14, lam)) + 2.0
    return abs(params.compensator) + abs(params.epsilon) * n_hi


def auto_grid(params: ModelParams) -> SpatialGrid:
    """Deterministic power-of-two grid that resolves the kernel of ``params``.

    Width is at least ``12 sd + 6 |eps| * sigma^2 t / eps^2`` (and never less
    than 8 standard deviations each side); spacing is ``sd/32`` for Gaussian
    and smooth kernels (raised to ``0.75 |eps|`` if needed to keep the periodic
    revival of the characteristic function out of the band) and ``|eps|`` on
    lattice kernels.
    """
    sd = params.stdev
    eps = params.epsilon
    width = 12.0 * sd
    half = 8.0 * sd
    offset = 0.0
    if eps == 0.0:
        dx = sd / RESOLUTION
    else:
        width += 6.0 * abs(eps) * params.jump_intensity
        if is_lattice(params):
            dx = abs(eps)
            half = max(half, _poisson_tail_halfwidth(params))
            offset = params.compensator % dx
        else:
            dx = max(sd / RESOLUTION, 0.75 * abs(eps))
    width = max(width, 2.0 * half)
    n = MIN_POINTS
    while n * dx < width + 2 * dx:
        n *= 2
        if n > MAX_POINTS:
            # compensator term of the width rule explodes as eps -> 0
            n = MAX_POINTS
            if n * dx < 2.0 * half:
                raise GridError("kernel needs more than 2^22 grid points",
                                spacing=dx, width=width)
            break
    return SpatialGrid(dx, n, offset)


def characteristic_on_grid(params: ModelParams, grid: SpatialGrid,
                           trunc: TruncationSpec = CLOSED) -> np.ndarray:
    return np.exp(params.horizon * characteristic_exponent(grid.wavenumbers, params, trunc))


def _to_density(phi: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Invert characteristic-function samples to node values."""
    p = grid.wavenumbers
    j = np.arange(grid.n)
    psi = phi * np.exp(-1j * p * grid.offset) * np.where(j % 2 == 0, 1.0, -1.0)
    return np.fft.fft(psi).real / (grid.n * grid.spacing)


def _to_characteristic(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    p = grid.wavenumbers
    j = np.arange(grid.n)
    sign = np.where(j % 2 == 0, 1.0, -1.0)
    return grid.spacing * np.exp(1j * p * grid.offset) * sign * grid.n * np.fft.ifft(values)


def _check_lattice_alignment(params: ModelParams, grid: SpatialGrid) -> None:
    ratio = abs(params.epsilon) / grid.spacing
    phase = (params.compensator - grid.offset) / grid.spacing
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1 or abs(phase - round(phase)) > 1e-7:
        suggestion = auto_grid(params)
        raise GridError("grid is not aligned with the jump lattice of the kernel",
                        suggested=suggestion)


def _finish(values: np.ndarray, grid: SpatialGrid, params: ModelParams, method: str,
            lattice: bool, meta: dict, strict: bool = True) -> KernelDensity:
    peak = float(np.max(values))
    low = float(np.min(values))
    meta = dict(meta, min_value=low)
    if strict:
        edge = max(values[0], values[-1], values[1], values[-2])
        if edge > BOUNDARY_TOL * peak:
            half = 2.0 * max(abs(grid.x_min), abs(grid.x_max))
            raise GridError("kernel mass reaches the grid boundary (aliasing)",
                            suggested_bounds=(-half, half))
        if low < -NEGATIVE_TOL:
            raise GridError(f"kernel has negative values down to {low:.3g}; grid under-resolves it",
                            suggested=auto_grid(params))
        values = np.where(values < 0.0, 0.0, values)
    kd = KernelDensity(grid, values, params, method, lattice, meta)
    if strict:
        total = kd.integral()
        if abs(total - 1.0) > NORM_TOL:
            raise ValidationError(f"kernel integrates to {total:.8f}")
    return kd


def compute_kernel(params: ModelParams, grid: Optional[SpatialGrid] = None) -> KernelDensity:
    """Kernel K_t(x) by inverse Fourier transform of exp(t m(p))."""
    if grid is None:
        grid = auto_grid(params)
    lattice = is_lattice(params)
    if lattice:
        _check_lattice_alignment(params, grid)
    else:
        phi = characteristic_on_grid(params, grid)
        tail = np.abs(phi[np.abs(grid.wavenumbers) > 0.75 * np.pi / grid.spacing])
        if tail.size and float(np.max(tail)) > 1e-10:
            raise GridError("characteristic function is not negligible at the band edge; "
                            "refine the grid", suggested=auto_grid(params))
    phi = characteristic_on_grid(params, grid)
    values = _to_density(phi, grid)
    return _finish(values, grid, params, "fourier", lattice, {})


def gaussian_density(params: ModelParams, grid: SpatialGrid) -> np.ndarray:
    v = params.variance
    x = grid.x
    return np.exp(-x * x / (2.0 * v)) / math.sqrt(2.0 * math.pi * v)


def analytic_cumulants(params: ModelParams) -> CumulantSet:
    """kappa_k = t sigma^2 (-eps)^(k-2) for k = 2, 3, 4."""
    v = params.variance
    eps = params.epsilon
    return CumulantSet(v, -eps * v, eps * eps * v)


def empirical_moments(kernel: KernelDensity, max_order: int = 4) -> list:
    """``[mean, m2, m3, ..., m_max]``: the mean followed by central moments
    of orders 2..max_order, by the trapezoid rule."""
    if not 2 <= max_order <= 6:
        raise ConfigurationError("max_order must be between 2 and 6")
    total = kernel.integral()
    if abs(total - 1.0) > NORM_TOL:
        raise ValidationError(f"kernel is not normalised (integral {total:.6f})")
    w = kernel.masses() / total
    x = kernel.grid.x
    mean = float(np.dot(w, x))
    d = x - mean
    out = [mean]
    for k in range(2, max_order + 1):
        out.append(float(np.dot(w, d ** k)))
    return out


def empirical_cumulants(kernel: KernelDensity) -> CumulantSet:
    _, m2, m3, m4 = empirical_moments(kernel, 4)
    return CumulantSet.from_central_moments(m2, m3, m4)


def compose(a: KernelDensity, b: KernelDensity) -> KernelDensity:
    """Chapman-Kolmogorov composition: the law of the sum of independent draws.

    Grids must share spacing and size; node offsets add.
    """
    if a.grid.n != b.grid.n or not math.isclose(a.grid.spacing, b.grid.spacing, rel_tol=1e-12):
        raise CompositionError("kernels must share grid spacing and size")
    pa, pb = a.params, b.params
    if pa.sigma != pb.sigma or pa.epsilon != pb.epsilon:
        raise CompositionError("kernels must share sigma and epsilon")
    n, dx = a.grid.n, a.grid.spacing
    conv = np.fft.irfft(np.fft.rfft(a.values) * np.fft.rfft(b.values), n) * dx
    out = np.roll(conv, -(n // 2))
    offset = a.grid.offset + b.grid.offset
    if offset >= dx:
        offset -= dx
        out = np.roll(out, 1)
    grid = SpatialGrid(a.grid.spacing, n, min(max(offset, 0.0), math.nextafter(dx, 0.0)))
    params = pa.with_horizon(pa.horizon + pb.horizon)
    lattice = a.lattice or b.lattice
    return _finish(out, grid, params, "composed", lattice, {"parts": (pa.horizon, pb.horizon)})


def point_mass(grid: SpatialGrid, at: float = 0.0, params: Optional[ModelParams] = None) -> KernelDensity:
    """Unit mass at a grid node, the usual initial condition for propagation."""
    values = np.zeros(grid.n)
    values[grid.index_of(at)] = 1.0 / grid.spacing
    params = params or ModelParams(1.0, 0.0, 1.0)
    return KernelDensity(grid, values, params, "initial", True, {"at": at})


def unstable_band(params: ModelParams, grid: SpatialGrid, trunc: TruncationSpec):
    """Wavenumbers on the grid where the (truncated) symbol has Re > 0."""
    p = grid.wavenumbers
    m = characteristic_exponent(p, params, trunc)
    scale = params.sigma ** 2 * np.maximum(p * p, 1.0)
    bad = m.real > 1e-12 * scale
    return p, bad


def spectral_propagate(initial: KernelDensity, params: ModelParams, trunc: TruncationSpec,
                       t: float, filter_unstable: bool = False) -> KernelDensity:
    """Evolve ``initial`` for time ``t`` with the (possibly truncated) symbol,
    diagonally in transform space.

    Truncations whose symbol has positive real part somewhere on the band are
    ill-posed; they raise :class:`StabilityError` unless ``filter_unstable``
    is set, in which case those modes are cut and the count recorded in
    ``meta``.  Truncated equations do not preserve positivity, so negative
    values are reported in ``meta['min_value']`` rather than rejected.
    """
    if not t > 0:
        raise ConfigurationError("propagation time must be positive")
    grid = initial.grid
    run = params.with_horizon(t)
    p, bad = unstable_band(run, grid, trunc)
    meta = {"truncation": trunc.label(), "filtered_modes": 0}
    expo = t * characteristic_exponent(p, run, trunc)
    if np.any(bad):
        band = (float(np.min(np.abs(p[bad]))), float(np.max(np.abs(p[bad]))))
        if not filter_unstable:
            raise StabilityError(f"symbol {trunc.label()} has Re > 0 for |p| in "
                                 f"[{band[0]:.6g}, {band[1]:.6g}]; enable the spectral filter",
                                 band=band)
        expo = np.where(bad, -np.inf, expo)
        meta.update(filtered_modes=int(np.count_nonzero(bad)), filtered_band=band)
    mult = np.exp(expo)
    phi0 = _to_characteristic(initial.values, grid)
    values = _to_density(phi0 * mult, grid)
    method = "spectral" if trunc.is_closed else f"spectral({trunc.order})"
    horizon = t + (initial.params.horizon if initial.method != "initial" else 0.0)
    return _finish(values, grid, params.with_horizon(horizon), method,
                   initial.lattice and is_lattice(run), meta, strict=False)


def kernel_family(sigma: float, horizon: float, epsilons: Sequence[float]) -> list:
    """Kernels for several translations, each on its own automatic grid."""
    params = [ModelParams(sigma, e, horizon) for e in epsilons]
    return [compute_kernel(p) for p in params]
