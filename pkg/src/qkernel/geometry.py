"""Nonlocal diffusion: blurring densities, their moments, Kramers-Moyal
coefficients and one-dimensional Riemannian metrics.

A nonlocal forward equation ``p_t = (sigma^2/2) d^2/dx^2 (H * p)`` is
matched to the translation model by its blurring-density moments
``H_i = 2 eps^i / ((i+1)(i+2))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from . import __version__
from .errors import ConfigurationError, DegenerateBlurError, DomainError, MetricError

TABLE_POINTS = 2048
GL_NODES = 16
MAX_FIT_ORDER = 12
TIKHONOV = 1e-10
FIT_TOL = 1e-8


# --------------------------------------------------------------------------- moments

@dataclass(frozen=True)
class MomentSequence:
    epsilon: float
    alpha: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise DomainError("moment sequence has non-finite entries")
        if vals.size == 0 or vals[0] != 1.0:
            raise DomainError("moment sequences are normalised to H_0 = 1")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)

    def to_csv(self, path_or_file) -> None:
        text = (f"# qkernel {__version__} moments epsilon={self.epsilon!r} alpha={self.alpha!r}\n"
                "order,value\n" + "".join(f"{i},{v:.17g}\n" for i, v in enumerate(self.values)))
        _write(path_or_file, text)


def _write(path_or_file, text):
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)


def lemma1_moments(epsilon: float, order: int) -> MomentSequence:
    """H_i = 2 eps^i / ((i+1)(i+2)) for i = 0..order (flat metric)."""
    if order < 0:
        raise ConfigurationError("order must be >= 0")
    i = np.arange(order + 1)
    vals = 2.0 * float(epsilon) ** i / ((i + 1.0) * (i + 2.0))
    vals[0] = 1.0
    return MomentSequence(epsilon, 0.0, vals)


def lemma2_moments(epsilon: float, alpha: float, order: int) -> MomentSequence:
    """Moments for the curved metric g(x) = exp(-alpha x):

    H_{k-1} = (2k(k-1) H_{k-2} - 4 eps^(k-2)) / (k alpha),  H_0 = 1.

    The recurrence is singular at alpha = 0; use :func:`lemma1_moments` there.
    """
    if alpha == 0:
        raise ConfigurationError("alpha = 0 is the flat case; use lemma1_moments")
    if order < 0:
        raise ConfigurationError("order must be >= 0")
    vals = np.empty(order + 1)
    vals[0] = 1.0
    for k in range(2, order + 2):
        vals[k - 1] = (2.0 * k * (k - 1) * vals[k - 2] - 4.0 * epsilon ** (k - 2)) / (k * alpha)
    return MomentSequence(epsilon, alpha, vals)


def recurrence_residuals(seq: MomentSequence) -> np.ndarray:
    """|k alpha H_{k-1} - 2k(k-1) H_{k-2} + 4 eps^(k-2)| for k = 2..N+1."""
    h, a, e = seq.values, seq.alpha, seq.epsilon
    return np.array([abs(k * a * h[k - 1] - 2.0 * k * (k - 1) * h[k - 2] + 4.0 * e ** (k - 2))
                     for k in range(2, len(h) + 1)])


# --------------------------------------------------------------------------- blurring densities

@dataclass(frozen=True)
class BlurringDensity:
    """A density H(y) tabulated on ``y`` (piecewise linear between nodes), or a
    point mass when ``atom`` is set.  ``epsilon`` records the translation a
    triangular blur was built for."""

    y: np.ndarray
    h: np.ndarray
    kind: str = "tabulated"
    epsilon: Optional[float] = None
    atom: Optional[float] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        h = np.array(self.h, dtype=float)
        if self.atom is None:
            if y.ndim != 1 or y.size < 2 or np.any(np.diff(y) <= 0):
                raise DomainError("blurring support must be an increasing grid")
            if np.any(h < 0) or h.shape != y.shape:
                raise DomainError("blurring density must be non-negative on its grid")
            mass = float(np.trapezoid(h, y))
            if abs(mass - 1.0) > 1e-8:
                raise DomainError(f"blurring density integrates to {mass:.12f}")
        y.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h", h)

    @property
    def is_atom(self) -> bool:
        return self.atom is not None

    @property
    def support(self) -> tuple:
        if self.is_atom:
            return (self.atom, self.atom)
        return (float(self.y[0]), float(self.y[-1]))

    def __call__(self, y):
        if self.is_atom:
            raise DegenerateBlurError("a point mass has no density values")
        return np.interp(y, self.y, self.h, left=0.0, right=0.0)

    def quadrature(self, n_nodes: int = GL_NODES):
        """Nodes and weights such that sum w f(y) = int f(y) H(y) dy for
        polynomial f of degree < 2*n_nodes - 1 (exact on each linear piece)."""
        if self.is_atom:
            return np.array([self.atom]), np.array([1.0])
        t, wt = np.polynomial.legendre.leggauss(n_nodes)
        a, b = self.y[:-1], self.y[1:]
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * t[None, :]
        # linear interpolation of H inside each cell
        frac = (t + 1.0) / 2.0
        hvals = self.h[:-1, None] * (1.0 - frac) + self.h[1:, None] * frac
        weights = half[:, None] * wt[None, :] * hvals
        return nodes.ravel(), weights.ravel()

    def moments(self, order: int) -> np.ndarray:
        """Raw moments int y^i H(y) dy for i = 0..order."""
        nodes, weights = self.quadrature(max(GL_NODES, order // 2 + 2))
        return np.array([float(np.dot(weights, nodes ** i)) for i in range(order + 1)])

    def moment_sequence(self, order: int) -> MomentSequence:
        m = self.moments(order)
        m = m / m[0]
        return MomentSequence(self.epsilon or 0.0, 0.0, m)


def triangular_blur(epsilon: float, points: int = TABLE_POINTS) -> BlurringDensity:
    """h(y) = 2(eps - y)/eps^2 on [0, eps], mirrored onto [eps, 0] for eps < 0.

    Its i-th moment is exactly 2 eps^i / ((i+1)(i+2)).
    """
    if epsilon == 0 or not math.isfinite(epsilon):
        raise DegenerateBlurError("triangular blur needs eps != 0; eps = 0 is the Dirac blur")
    a = abs(epsilon)
    u = np.linspace(0.0, a, points)
    h = 2.0 * (a - u) / (a * a)
    if epsilon > 0:
        return BlurringDensity(u, h, "triangular", epsilon)
    return BlurringDensity(-u[::-1], h[::-1], "triangular", epsilon)


def dirac_blur(at: float = 0.0) -> BlurringDensity:
    return BlurringDensity(np.array([at]), np.array([1.0]), "dirac", None, atom=float(at))


def uniform_blur(lo: float, hi: float, points: int = TABLE_POINTS) -> BlurringDensity:
    if not hi > lo:
        raise DomainError("uniform blur needs lo < hi")
    y = np.linspace(lo, hi, points)
    return BlurringDensity(y, np.full(points, 1.0 / (hi - lo)), "uniform")


def tabulated_blur(y, h) -> BlurringDensity:
    """Normalise arbitrary non-negative samples into a blurring density."""
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    return BlurringDensity(y, h / np.trapezoid(h, y), "tabulated")


# --------------------------------------------------------------------------- metrics

@dataclass(frozen=True)
class MetricProfile:
    """One-dimensional metric g(x) > 0: either exp(-alpha x) in closed form or
    tabulated on a grid (derivatives by central differences)."""

    alpha: Optional[float] = None
    x: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    x0: float = 0.0

    def __post_init__(self):
        if self.alpha is None:
            if self.x is None or self.g is None:
                raise MetricError("tabulated metric needs x and g arrays")
            x = np.array(self.x, dtype=float)
            g = np.array(self.g, dtype=float)
            if x.shape != g.shape or x.size < 3 or np.any(np.diff(x) <= 0):
                raise MetricError("tabulated metric needs matching increasing arrays")
            if np.any(g <= 0) or not np.all(np.isfinite(g)):
                raise MetricError("metric must be positive everywhere it is represented")
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "g", g)

    @classmethod
    def flat(cls) -> "MetricProfile":
        return cls(alpha=0.0)

    @classmethod
    def exponential(cls, alpha: float, x0: float = 0.0) -> "MetricProfile":
        return cls(alpha=float(alpha), x0=x0)

    @classmethod
    def tabulated(cls, x, g, x0: float = 0.0) -> "MetricProfile":
        return cls(None, np.asarray(x), np.asarray(g), x0)

    @property
    def closed_form(self) -> bool:
        return self.alpha is not None

    def _interp(self, table, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.x[0]) or np.any(x > self.x[-1]):
            raise MetricError("position outside the tabulated metric")
        return np.interp(x, self.x, table)

    def metric(self, x):
        if self.closed_form:
            return np.exp(-self.alpha * np.asarray(x, dtype=float))
        return self._interp(self.g, x)

    def inverse(self, x):
        """g(x)^-1."""
        if self.closed_form:
            return np.exp(self.alpha * np.asarray(x, dtype=float))
        return 1.0 / self.metric(x)

    def inverse_derivative(self, x):
        """d(g^-1)/dx."""
        if self.closed_form:
            return self.alpha * np.exp(self.alpha * np.asarray(x, dtype=float))
        return self._interp(np.gradient(1.0 / self.g, self.x), x)

    def inv_sqrt(self, x):
        """g(x)^(-1/2)."""
        if self.closed_form:
            return np.exp(0.5 * self.alpha * np.asarray(x, dtype=float))
        return 1.0 / np.sqrt(self.metric(x))

    def inv_sqrt_derivative(self, x):
        if self.closed_form:
            return 0.5 * self.alpha * np.exp(0.5 * self.alpha * np.asarray(x, dtype=float))
        return self._interp(np.gradient(1.0 / np.sqrt(self.g), self.x), x)


# --------------------------------------------------------------------------- Kramers-Moyal

@dataclass(frozen=True)
class PDECoefficients:
    """Coefficient tables of the expanded local forward equation

        p_t = first_order(x) p_x + sum_k c_k(x) d^k p / dx^k.

    ``drift`` is the velocity of the equivalent process, ``-first_order``.
    ``multipliers[k]`` holds c_k on ``x``.
    """

    x: np.ndarray
    first_order: np.ndarray
    multipliers: dict

    @property
    def drift(self) -> np.ndarray:
        return -self.first_order


def kramers_moyal_coefficients(blur: BlurringDensity, metric: MetricProfile, sigma: float,
                               order: int, x=0.0) -> PDECoefficients:
    """Expand the Laplace-Beltrami nonlocal equation to order ``order``:

    first order:  (sigma^2/4) d(g^-1)/dx H_0
    order k >= 2: (sigma^2/2) [(-1)^(k-2) g^-1 H_{k-2}/(k-2)!
                               + (-1)^(k-1) d(g^-1)/dx H_{k-1} / (2 (k-1)!)]
    """
    if order < 2:
        raise ConfigurationError("expansion order must be >= 2")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not metric.closed_form and np.any(metric.metric(x) <= 0):
        raise MetricError("metric must be positive")
    H = blur.moments(order) if not blur.is_atom else blur.atom ** np.arange(order + 1)
    ginv = metric.inverse(x)
    dginv = metric.inverse_derivative(x)
    s2 = sigma * sigma
    first = 0.25 * s2 * dginv * H[0]
    mult = {}
    for k in range(2, order + 1):
        mult[k] = 0.5 * s2 * ((-1) ** (k - 2) * ginv * H[k - 2] / math.factorial(k - 2)
                              + (-1) ** (k - 1) * dginv * H[k - 1] / (2.0 * math.factorial(k - 1)))
    if np.any(mult[2] <= 0):
        raise MetricError("second-order coefficient is not positive")
    return PDECoefficients(x, first, mult)


def translation_coefficients(sigma: float, epsilon: float, order: int) -> dict:
    """Reference coefficients sigma^2 (-1)^k eps^(k-2) / k! of the flat forward equation."""
    return {k: sigma ** 2 * (-1) ** k * epsilon ** (k - 2) / math.factorial(k)
            for k in range(2, order + 1)}


def connection_terms(metric: MetricProfile, x) -> tuple:
    """Connection A_x = -g^(1/2) d(g^(-1/2))/dx and section
    Q = -A_x^2/g - (1/g) dA_x/dx that reduce the general Laplacian to g^-1 d^2/dx^2."""
    x = np.asarray(x, dtype=float)
    g = metric.metric(x)
    if np.any(g <= 0):
        raise MetricError("metric must be positive")
    if metric.closed_form:
        a = metric.alpha
        A = np.full_like(x, -0.5 * a, dtype=float)
        dA = np.zeros_like(x, dtype=float)
    else:
        A = -np.sqrt(g) * metric.inv_sqrt_derivative(x)
        dA = np.gradient(A, x) if x.size > 2 else np.zeros_like(A)
    Q = -A * A / g - dA / g
    return A, Q


def laplacian_coefficients(metric: MetricProfile, x, A, Q) -> tuple:
    """(second, first, zeroth)-order coefficients of the expanded general
    Laplacian for a given connection and section."""
    x = np.asarray(x, dtype=float)
    g = metric.metric(x)
    dA = np.gradient(A, x)
    second = 1.0 / g
    first = metric.inv_sqrt(x) * metric.inv_sqrt_derivative(x) + A / g
    zeroth = A * A / g + dA / g + Q
    return second, first, zeroth


def coordinate_transform(metric: MetricProfile, x: float) -> float:
    """s(x) = int_{x0}^{x} g(y)^(-1/2) dy."""
    x0 = metric.x0
    if metric.closed_form:
        a = metric.alpha
        if a == 0:
            return float(x - x0)
        return float((2.0 / a) * (math.exp(0.5 * a * x) - math.exp(0.5 * a * x0)))
    lo, hi = min(x0, x), max(x0, x)
    if lo < metric.x[0] or hi > metric.x[-1]:
        raise MetricError("integration leaves the tabulated metric")
    val, _ = integrate.quad(lambda y: float(metric.inv_sqrt(y)), x0, x, limit=200)
    return float(val)


# --------------------------------------------------------------------------- metric fitting

@dataclass(frozen=True)
class MetricFit:
    """Result of solving the moment equations for w(y) = g(y)^(-1/2).

    ``weights`` is None when no admissible weight exists; the residuals
    explain why.
    """

    feasible: bool
    y: np.ndarray
    weights: Optional[np.ndarray]
    residuals: np.ndarray
    targets: np.ndarray
    tolerance: float

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    def metric(self) -> MetricProfile:
        if not self.feasible:
            raise MetricError("no feasible metric; see residuals")
        return MetricProfile.tabulated(self.y, 1.0 / self.weights ** 2)

    def to_csv(self, path_or_file) -> None:
        if not self.feasible:
            raise MetricError("no feasible metric to write")
        text = (f"# qkernel {__version__} metric-weights max_residual={self.max_residual:.3g}\n"
                "y,w\n" + "".join(f"{a:.17g},{b:.17g}\n" for a, b in zip(self.y, self.weights)))
        _write(path_or_file, text)


def fit_metric_weights(blur: BlurringDensity, epsilon: float, order: int = 8,
                       tol: float = FIT_TOL) -> MetricFit:
    """Non-negative weights w on the blur's table solving

        int y^i H(y) w(y) dy = 2 eps^i / ((i+1)(i+2)),  i = 0..order,

    as bounded least squares with a 1e-10 Tikhonov pull towards w = 1.
    Equations are scaled by eps^-i so every row is O(1).
    """
    if not 0 <= order <= MAX_FIT_ORDER:
        raise ConfigurationError(f"order must be between 0 and {MAX_FIT_ORDER}")
    if epsilon == 0:
        raise DegenerateBlurError("eps = 0 makes the moment targets degenerate")
    targets = lemma1_moments(epsilon, order).values
    i = np.arange(order + 1)
    scaled_targets = 2.0 / ((i + 1.0) * (i + 2.0))
    if blur.is_atom:
        y = np.array([blur.atom])
        A = ((y / epsilon)[None, :] ** i[:, None])
    else:
        y = blur.y
        # trapezoid-in-w weights that are exact for piecewise-linear H*w*poly
        nodes, qw = blur.quadrature(max(GL_NODES, order // 2 + 3))
        n_cell = len(y) - 1
        k = qw.size // n_cell
        t = ((nodes.reshape(n_cell, k) - y[:-1, None]) / np.diff(y)[:, None])
        A = np.zeros((order + 1, len(y)))
        for r in range(order + 1):
            contrib = (qw.reshape(n_cell, k) * (nodes.reshape(n_cell, k) / epsilon) ** r)
            np.add.at(A[r], np.arange(n_cell), np.sum(contrib * (1.0 - t), axis=1))
            np.add.at(A[r], np.arange(1, n_cell + 1), np.sum(contrib * t, axis=1))
    # penalty approximates TIKHONOV * int H (w - 1)^2 dy
    col = np.sqrt(np.maximum(A[0], 0.0) * TIKHONOV)
    m = A.shape[1]
    big = np.vstack([A, np.diag(col)])
    rhs = np.concatenate([scaled_targets, col])
    sol = optimize.lsq_linear(big, rhs, bounds=(0.0, np.inf), method="bvls",
                              tol=1e-15, lsmr_tol="auto", max_iter=5000)
    w = sol.x
    scaled_res = A @ w - scaled_targets
    residuals = scaled_res * np.abs(epsilon) ** i * np.sign(epsilon) ** i
    feasible = bool(np.max(np.abs(scaled_res)) <= tol)
    return MetricFit(feasible, np.asarray(y, dtype=float), w if feasible else None,
                     residuals, targets, tol)
