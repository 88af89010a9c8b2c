"""Seeded ensembles over randomization samples and sub-Gaussian tail fits.

Sample ``i`` of an ensemble is a pure function of ``(master_seed, i)``: the
randomization draws its coefficients from a counter-based hash of both, so
the results do not depend on how samples are distributed over workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import Field, GridSpec, fftn, ifftn
from .norms import AdmissiblePair, sobolev_norm, time_lebesgue, _lebesgue_values
from .randomization import RandomizationConfig, randomize_spectrum

__all__ = [
    "EnsembleSpec",
    "EnsembleResult",
    "TailEstimate",
    "TailFitError",
    "HsNorm",
    "L2NormSquared",
    "StrichartzNorm",
    "ordered_map",
    "resolve_workers",
    "run_ensemble",
    "survival",
    "tail_fit",
    "strichartz_gain_experiment",
    "GainTable",
    "concentrated_packet",
]

P_WINDOW = (0.001, 0.5)


# --- scheduling -------------------------------------------------------------------


def resolve_workers(workers: Optional[int] = None) -> int:
    """Explicit value, else ``RNLS_WORKERS``, else 1."""
    if workers is None:
        workers = int(os.environ.get("RNLS_WORKERS", "1"))
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return int(workers)


def _call_chunk(func, items):
    out = []
    for it in items:
        try:
            out.append((True, func(it)))
        except Exception as exc:  # reported per item, never dropped
            out.append((False, f"{type(exc).__name__}: {exc}"))
    return out


def ordered_map(func: Callable, items: Sequence, workers: int = 1, chunk: Optional[int] = None):
    """Apply ``func`` to ``items`` and return ``[(ok, value_or_error), ...]`` in input order.

    With ``workers > 1`` the items are split into contiguous chunks and run in
    a process pool; the result order never depends on the schedule.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return _call_chunk(func, items)
    if chunk is None:
        chunk = max(1, math.ceil(len(items) / (4 * workers)))
    chunks = [items[i : i + chunk] for i in range(0, len(items), chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_call_chunk, [func] * len(chunks), chunks))
    return [r for part in parts for r in part]


# --- extractors -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _SpectralExtractor:
    """Base for statistics of ``phi^omega`` computed from its spectrum."""

    phi: Field
    randomization: RandomizationConfig = RandomizationConfig()
    force_unit: bool = False

    def spectrum(self, sample: int) -> np.ndarray:
        return randomize_spectrum(self.phi.spectral_values(), self.phi.grid,
                                  self.randomization, sample, self.force_unit)

    def with_seed(self, master_seed: int):
        return replace(self, randomization=replace(self.randomization, master_seed=master_seed))


@dataclass(frozen=True, eq=False)
class HsNorm(_SpectralExtractor):
    """``||phi^omega||_{H^s}``."""

    s: float = 0.0

    @property
    def name(self) -> str:
        return f"Hs_norm({self.s:g})"

    def __call__(self, sample: int) -> float:
        g = self.phi.grid
        hat = self.spectrum(sample)
        w = (1.0 + g.k2) ** self.s
        return math.sqrt(float(np.sum(w * (hat.real**2 + hat.imag**2)) * g.cell_volume))


@dataclass(frozen=True, eq=False)
class L2NormSquared(_SpectralExtractor):
    """``||phi^omega||_{L^2}^2``."""

    @property
    def name(self) -> str:
        return "L2_norm_squared"

    def __call__(self, sample: int) -> float:
        hat = self.spectrum(sample)
        return float(np.sum(hat.real**2 + hat.imag**2) * self.phi.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class StrichartzNorm(_SpectralExtractor):
    """``||S(t) phi^omega||_{L^q([0,T]; L^r)}`` with ``n_times`` trapezoid nodes.

    ``q = inf`` gives the max over the nodes.
    """

    q: float = 4.0
    r: float = 4.0
    T: float = 1.0
    n_times: int = 65

    @property
    def name(self) -> str:
        return f"strichartz({self.q:g},{self.r:g},{self.T:g})"

    def __call__(self, sample: int) -> float:
        g = self.phi.grid
        hat = self.spectrum(sample)
        times = np.linspace(0.0, self.T, self.n_times)
        vals = [_lebesgue_values(g, ifftn(np.exp(-1j * t * g.k2) * hat), self.r) for t in times]
        return time_lebesgue(times, vals, self.q)


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """``m`` samples of ``statistic`` under ``master_seed``.

    ``statistic`` is a picklable callable ``sample_index -> float`` that
    exposes ``with_seed(master_seed)`` (all extractors in this module do).
    """

    m: int
    master_seed: int
    statistic: Callable[[int], float]
    first_sample: int = 0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError("an ensemble needs m >= 2 samples")

    @property
    def seeded_statistic(self):
        stat = self.statistic
        return stat.with_seed(self.master_seed) if hasattr(stat, "with_seed") else stat

    @property
    def name(self) -> str:
        return getattr(self.statistic, "name", type(self.statistic).__name__)


@dataclass
class EnsembleResult:
    """Samples in index order; failed entries are NaN and listed in ``failed``."""

    samples: np.ndarray
    indices: np.ndarray
    failed: list
    errors: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failed

    def valid(self) -> np.ndarray:
        return self.samples[np.isfinite(self.samples)]


def run_ensemble(spec: EnsembleSpec, workers: Optional[int] = None) -> EnsembleResult:
    """Evaluate sample indices ``first_sample .. first_sample + m - 1``."""
    workers = resolve_workers(workers)
    indices = np.arange(spec.first_sample, spec.first_sample + spec.m)
    results = ordered_map(spec.seeded_statistic, [int(i) for i in indices], workers)
    samples = np.full(spec.m, np.nan)
    failed, errors = [], {}
    for j, (ok, val) in enumerate(results):
        if ok:
            samples[j] = float(val)
        else:
            failed.append(int(indices[j]))
            errors[int(indices[j])] = val
    return EnsembleResult(samples, indices, failed, errors)


# --- tail fitting ----------------------------------------------------------------------


class TailFitError(ValueError):
    """No usable lambda window for the tail fit."""


@dataclass
class TailEstimate:
    """Fit of ``log P(X > lambda) ~ log C - c lambda^2``.

    ``c`` is None when fewer than 20 samples exceed the smallest ``lambda``
    in the window.
    """

    lambdas: np.ndarray
    survival: np.ndarray
    used: np.ndarray
    log_C: float
    c: Optional[float]
    r_squared: float
    se_log_C: float
    se_c: float
    n_samples: int

    @property
    def scale(self) -> Optional[float]:
        """Tail scale ``1/sqrt(c)`` (same units as the samples)."""
        return None if self.c is None or self.c <= 0 else 1.0 / math.sqrt(self.c)

    def fitted_log_survival(self, lambdas=None) -> np.ndarray:
        lam = self.lambdas if lambdas is None else np.asarray(lambdas, float)
        c = self.c if self.c is not None else math.nan
        return self.log_C - c * lam**2


def survival(samples, lambdas) -> np.ndarray:
    """Empirical ``P(X > lambda)`` for each lambda."""
    x = np.sort(np.asarray(samples, float))
    lam = np.asarray(lambdas, float)
    return (x.size - np.searchsorted(x, lam, side="right")) / x.size


def default_lambdas(samples, n: int = 30) -> np.ndarray:
    """Empirical quantiles at survival levels spaced geometrically over the fit window.

    Quantile placement makes the grid scale with the samples, so the fit is
    equivariant under ``X -> a X``.
    """
    levels = np.geomspace(P_WINDOW[1], P_WINDOW[0], n)
    return np.unique(np.quantile(np.asarray(samples, float), 1.0 - levels, method="linear"))


def tail_fit(samples, lambdas=None) -> TailEstimate:
    """Weighted least squares of ``log P_hat`` on ``lambda^2``.

    Only lambdas with ``0.001 <= P_hat <= 0.5`` enter.  The weights
    ``m P / (1 - P)`` are inverse delta-method variances of ``log P_hat``.
    """
    x = np.asarray(samples, float)
    x = x[np.isfinite(x)]
    m = x.size
    if m < 2:
        raise TailFitError("need at least two finite samples")
    lam = default_lambdas(x) if lambdas is None else np.asarray(lambdas, float)
    P = survival(x, lam)
    used = (P >= P_WINDOW[0]) & (P <= P_WINDOW[1]) & (P > 0)
    if used.sum() < 3:
        raise TailFitError(f"only {int(used.sum())} lambda values have survival in {P_WINDOW}")
    X2 = lam[used] ** 2
    y = np.log(P[used])
    w = m * P[used] / (1.0 - P[used])
    A = np.column_stack([np.ones_like(X2), -X2])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    dof = max(int(used.sum()) - 2, 1)
    cov = np.linalg.inv((A * w[:, None]).T @ A) * (ss_res / dof)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    enough = np.sum(x > lam[used].min()) >= 20
    return TailEstimate(lam, P, used, float(coef[0]), float(coef[1]) if enough else None,
                        float(r2), float(se[0]), float(se[1]), m)


# --- probabilistic Strichartz experiment -------------------------------------------------


@dataclass
class GainTable:
    """Per-horizon medians and tail scales of ``||S(t) phi^omega||_{L^q_T L^r}``."""

    T: np.ndarray
    median: np.ndarray
    scale: np.ndarray
    fits: list
    slope: float
    target: float
    hs_norm: float
    samples: list

    def rows(self):
        for i, T in enumerate(self.T):
            yield {"T": float(T), "median": float(self.median[i]), "tail_scale": float(self.scale[i]),
                   "normalized_scale": float(self.scale[i] / self.hs_norm)}


def strichartz_gain_experiment(phi: Field, s: float, qr, T_list: Sequence[float], m: int,
                               randomization: RandomizationConfig = RandomizationConfig(),
                               snapshots_per_horizon: int = 64,
                               workers: Optional[int] = None) -> GainTable:
    """Tail scale of the randomized free-evolution norm against the horizon ``T``.

    ``qr`` is a pair ``(q, r)`` or an :class:`AdmissiblePair`; ``r`` need not
    be admissible.  The time step is ``T / snapshots_per_horizon``.  The
    fitted slope of ``log scale`` against ``log T`` is compared to ``1/q``.
    """
    if isinstance(qr, AdmissiblePair):
        q, r = qr.as_float()
    else:
        q, r = float(qr[0]), float(qr[1])
    if not (math.isfinite(q) and math.isfinite(r)):
        raise ValueError("q and r must be finite")
    if m < 10:
        raise ValueError("under-sampled: need m >= 10")
    T_list = np.asarray(sorted(T_list), float)
    medians, scales, fits, all_samples = [], [], [], []
    for T in T_list:
        stat = StrichartzNorm(phi, randomization, q=q, r=r, T=float(T),
                              n_times=snapshots_per_horizon + 1)
        res = run_ensemble(EnsembleSpec(m, randomization.master_seed, stat), workers)
        x = res.valid()
        fit = tail_fit(x)
        fits.append(fit)
        all_samples.append(res.samples)
        medians.append(float(np.median(x)))
        scales.append(fit.scale if fit.scale is not None else math.nan)
    scales = np.asarray(scales)
    slope = float(np.polyfit(np.log(T_list), np.log(scales), 1)[0]) if len(T_list) > 1 else math.nan
    return GainTable(T_list, np.asarray(medians), scales, fits, slope, 1.0 / q,
                     sobolev_norm(phi, s), all_samples)


def concentrated_packet(grid: GridSpec, s: float, hs_norm: float, width: Optional[float] = None) -> Field:
    """Gaussian packet of width ``width`` (default ``2 dx``) at the origin,
    scaled to the given ``H^s`` norm.

    Serves as the deterministic comparator for randomized Strichartz norms.
    """
    width = 2 * grid.dx if width is None else width
    f = Field.from_function(grid, lambda *x: np.exp(-sum(xi**2 for xi in x) / (2 * width**2)))
    return f * (hs_norm / sobolev_norm(f, s))
