"""Monte-Carlo engines: an exact sampler for the kernel law and the
McKean particle method for the nonlocal forward equation.

The oracle draws ``x = c - eps * N`` with ``N ~ Poisson(sigma^2 t / eps^2)``
and ``c = sigma^2 t / eps``; its characteristic function is ``exp(t m(p))``.

The particle engine evolves

    dx = sigma * sqrt((H * p)(x) / p(x)) dW

from a point mass at 0, with ``p`` a binned Gaussian KDE of the ensemble
frozen at the start of each step.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats
from scipy.ndimage import gaussian_filter1d
from scipy.signal import fftconvolve

from . import __version__, _accel
from .errors import ConfigurationError, SimulationError, StatisticsError
from .geometry import BlurringDensity
from .kernel import KernelDensity
from .model import ModelParams

BLOCK = 1 << 16
DENSITY_FLOOR = 1e-8
MIN_STEPS = 50
ORACLE = "oracle"
PARTICLE = "particle"


@dataclass(frozen=True)
class PathEnsemble:
    samples: np.ndarray
    engine: str
    seed: Optional[int]
    params: ModelParams
    paths: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ConfigurationError("an ensemble needs at least one sample")
        if self.engine not in (ORACLE, PARTICLE):
            raise ConfigurationError(f"unknown engine {self.engine!r}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    def header(self) -> str:
        p = self.params
        return (f"# qkernel {__version__} ensemble engine={self.engine} seed={self.seed!r} "
                f"sigma={p.sigma!r} epsilon={p.epsilon!r} horizon={p.horizon!r} n={len(self)}\n")

    def to_csv(self, path_or_file) -> None:
        text = self.header() + "sample\n" + "".join(f"{v:.17g}\n" for v in self.samples)
        if hasattr(path_or_file, "write"):
            path_or_file.write(text)
        else:
            with open(path_or_file, "w", newline="") as fh:
                fh.write(text)


@dataclass(frozen=True)
class ParticleConfig:
    """``bandwidth`` is ``"silverman"`` or a fixed positive width; the
    Silverman width is floored at ``bandwidth_floor * sigma * sqrt(dt)`` so
    the KDE is defined when all particles coincide."""

    n_particles: int = 10_000
    n_steps: int = MIN_STEPS
    bandwidth: object = "silverman"
    bandwidth_floor: float = 1.0
    density_floor: float = DENSITY_FLOOR

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 100:
            raise ConfigurationError("particle count must be an integer >= 100")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigurationError("step count must be an integer >= 1")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ConfigurationError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not (float(self.bandwidth) > 0 and math.isfinite(float(self.bandwidth))):
            raise ConfigurationError("bandwidth must be > 0")
        if not self.bandwidth_floor > 0 or not self.density_floor > 0:
            raise ConfigurationError("floors must be > 0")


# --------------------------------------------------------------------------- oracle

def _oracle_block(params: ModelParams, n: int, seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seq)
    if params.epsilon == 0.0:
        return params.stdev * rng.standard_normal(n)
    jumps = rng.poisson(params.jump_intensity, n)
    return params.compensator - params.epsilon * jumps


def sample_oracle(params: ModelParams, n_samples: int, seed: Optional[int] = None,
                  workers: Optional[int] = None) -> PathEnsemble:
    """I.i.d. draws from the kernel law.

    Samples come in fixed blocks, each with its own spawned seed, so the
    output does not depend on ``workers``.
    """
    if int(n_samples) != n_samples or n_samples < 1:
        raise ConfigurationError("n_samples must be a positive integer")
    n_samples = int(n_samples)
    sizes = [BLOCK] * (n_samples // BLOCK)
    if n_samples % BLOCK:
        sizes.append(n_samples % BLOCK)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, seqs))
    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _oracle_block(params, *a), jobs))
    else:
        parts = [_oracle_block(params, *a) for a in jobs]
    return PathEnsemble(np.concatenate(parts), ORACLE, seed, params,
                        meta={"blocks": len(sizes)})


# --------------------------------------------------------------------------- particle method

def equivalent_epsilon(blur: BlurringDensity) -> float:
    """Translation of the kernel law a blur reproduces to third order.

    Matching the third Kramers-Moyal term gives ``eps = -3 * E_H[y]``, so
    ``triangular_blur(e)`` pairs with the kernel at ``-e``.
    """
    return -3.0 * float(blur.moments(1)[1])


def silverman_bandwidth(x: np.ndarray) -> float:
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * n ** -0.2


def _blur_weights(blur: BlurringDensity, dx: float):
    """Masses of H on the lattice k*dx, returned with the first k."""
    nodes, w = blur.quadrature()
    pos = nodes / dx
    j = np.floor(pos).astype(np.int64)
    frac = pos - j
    k0 = int(j.min())
    out = np.zeros(int(j.max()) - k0 + 2)
    np.add.at(out, j - k0, w * (1.0 - frac))
    np.add.at(out, j - k0 + 1, w * frac)
    return out, k0


def _ratio_grid(x: np.ndarray, blur: BlurringDensity, bw: float, floor: float):
    lo_h, hi_h = blur.support
    width = hi_h - lo_h
    dx = bw / 4.0 if width <= 0 else min(bw / 4.0, width / 16.0)
    pad = 6.0 * bw + max(abs(lo_h), abs(hi_h))
    origin = float(x.min()) - pad
    n = int(math.ceil((float(x.max()) + pad - origin) / dx)) + 2
    counts = _accel.linear_bin(x, origin, dx, n)
    dens = gaussian_filter1d(counts, bw / dx, mode="constant", truncate=6.0) / (x.size * dx)
    hw, k0 = _blur_weights(blur, dx)
    full = fftconvolve(dens, hw, mode="full")
    # (H * p)(x_i) = sum_k hw_k p(x_i - (k0 + k) dx) = full[i - k0]
    idx = np.arange(n) - k0
    ok = (idx >= 0) & (idx < full.size)
    smooth = np.zeros(n)
    smooth[ok] = np.maximum(full[idx[ok]], 0.0)
    ratio = smooth / np.maximum(dens, floor)
    return ratio, dens, origin, dx


def run_particle_method(blur: BlurringDensity, sigma: float, horizon: float,
                        cfg: ParticleConfig = ParticleConfig(), seed: Optional[int] = None,
                        record_paths: bool = False) -> PathEnsemble:
    """Euler scheme for the McKean dynamics, started from a point mass at 0.

    Particles whose estimated density falls below ``cfg.density_floor`` are
    counted in ``meta["floored"]``; a NaN anywhere is fatal.
    """
    params = ModelParams(sigma, equivalent_epsilon(blur), horizon)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n, m = int(cfg.n_particles), int(cfg.n_steps)
    dt = horizon / m
    scale = sigma * math.sqrt(dt)
    x = np.zeros(n)
    paths = np.empty((m + 1, n)) if record_paths else None
    if record_paths:
        paths[0] = x
    floored = outside = 0
    bandwidths = []
    plain = blur.is_atom and blur.atom == 0.0
    for step in range(m):
        z = rng.standard_normal(n)
        if plain:
            # H is the identity, the ratio is 1
            x += scale * z
        else:
            if isinstance(cfg.bandwidth, str):
                bw = max(silverman_bandwidth(x), cfg.bandwidth_floor * scale)
            else:
                bw = float(cfg.bandwidth)
            bandwidths.append(bw)
            ratio, dens, origin, dx = _ratio_grid(x, blur, bw, cfg.density_floor)
            at = _accel.interp_uniform(dens, origin, dx, x)
            floored += int(np.count_nonzero(at < cfg.density_floor))
            outside += _accel.mckean_step(x, np.ascontiguousarray(ratio), origin, dx, z, scale)
        if not np.all(np.isfinite(x)):
            raise SimulationError("non-finite particle position", step=step + 1)
        if record_paths:
            paths[step + 1] = x
    meta = {"floored": floored, "outside": outside, "steps": m, "backend": _accel.BACKEND,
            "blur": blur.kind}
    if bandwidths:
        meta["bandwidth_min"] = min(bandwidths)
        meta["bandwidth_max"] = max(bandwidths)
    return PathEnsemble(x, PARTICLE, seed, params, paths, meta)


# --------------------------------------------------------------------------- statistics

@dataclass(frozen=True)
class EnsembleStats:
    n: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks: Optional[float] = None

    def to_json(self, path_or_file, extra: Optional[dict] = None) -> None:
        doc = {"version": __version__, **self.__dict__, **(extra or {})}
        text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"
        if hasattr(path_or_file, "write"):
            path_or_file.write(text)
        else:
            with open(path_or_file, "w") as fh:
                fh.write(text)


def ks_distance(samples, reference: KernelDensity) -> float:
    """sup |F_n - F| with F the kernel CDF, exact at atoms of either side."""
    u, counts = np.unique(np.asarray(samples, dtype=float), return_counts=True)
    n = counts.sum()
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    f_at = reference.cdf(u)
    f_left = reference.cdf(u, left=True)
    # the first and last terms cover both tails
    return float(max(np.max(np.abs(upper - f_at)), np.max(np.abs(lower - f_left))))


def ks_two_sample(a, b) -> float:
    return float(stats.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


def ensemble_stats(e, reference: Optional[KernelDensity] = None) -> EnsembleStats:
    """Unbiased mean, variance, skewness and excess kurtosis; KS distance
    against ``reference`` when given."""
    x = e.samples if isinstance(e, PathEnsemble) else np.asarray(e, dtype=float)
    if x.size < 4:
        raise StatisticsError("kurtosis needs at least 4 samples", n=int(x.size))
    var = float(np.var(x, ddof=1))
    if var > 0:
        skew = float(stats.skew(x, bias=False))
        kurt = float(stats.kurtosis(x, bias=False))
    else:
        skew = kurt = math.nan
    ks = ks_distance(x, reference) if reference is not None else None
    return EnsembleStats(int(x.size), float(np.mean(x)), var, skew, kurt, ks)


def empirical_characteristic(samples, p) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    return np.array([np.mean(np.exp(1j * q * x)) for q in np.atleast_1d(p)])
