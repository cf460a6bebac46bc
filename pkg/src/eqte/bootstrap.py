"""Resampling inference: full-sample bootstrap and b-out-of-n subsampling.

Replicate ``j`` draws its row indices (and the seed handed to the
estimator) from an RNG stream constructed from ``(seed, j)``, so serial
and parallel execution produce bit-identical summaries. Replicates are
aggregated in sorted order; failed replicates are dropped and counted,
and more than 10% failures aborts with the dominant failure kind.

Confidence intervals are empirical percentiles of the replicates with
linear interpolation; ``basic=True`` reflects them around the point
estimate instead.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._util import check_seed, substream
from .data import Dataset
from .errors import BootstrapFailureError, EstimationError, InvalidArgumentError

__all__ = [
    "BootstrapSummary",
    "full_bootstrap",
    "b_out_of_n_bootstrap",
    "bootstrap_components",
    "default_subsample_size",
]


@dataclass(frozen=True)
class BootstrapSummary:
    point: float
    replicates: tuple[float, ...]
    n_failed: int
    bias: float
    se: float
    ci_low: float
    ci_high: float
    method: str
    b: int | None
    seed: int

    def __post_init__(self):
        if self.method not in ("full", "b_out_of_n"):
            raise InvalidArgumentError(f"unknown bootstrap method {self.method!r}")
        if self.se < 0.0 or self.ci_low > self.ci_high:
            raise InvalidArgumentError("inconsistent bootstrap summary")

    def to_json_dict(self, include_replicates: bool = False) -> dict:
        out = {
            "point": self.point,
            "n_replicates": len(self.replicates),
            "n_failed": self.n_failed,
            "bias": self.bias,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "method": self.method,
            "b": self.b,
            "seed": self.seed,
        }
        if include_replicates:
            out["replicates"] = list(self.replicates)
        return out


def default_subsample_size(n: int) -> int:
    """Standard subsampling heuristic, ceil(n^(2/3))."""
    return int(math.ceil(n ** (2.0 / 3.0)))


def _summarize(
    point: float,
    replicates: np.ndarray,
    n_failed: int,
    ci_level: float,
    method: str,
    b: int | None,
    seed: int,
    basic: bool,
) -> BootstrapSummary:
    reps = np.sort(np.asarray(replicates, dtype=float))
    alpha = 1.0 - ci_level
    lo, hi = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    if basic:
        lo, hi = 2.0 * point - hi, 2.0 * point - lo
    return BootstrapSummary(
        point=float(point),
        replicates=tuple(float(r) for r in reps),
        n_failed=int(n_failed),
        bias=float(reps.mean() - point),
        se=float(reps.std(ddof=1)) if reps.size > 1 else 0.0,
        ci_low=float(lo),
        ci_high=float(hi),
        method=method,
        b=b,
        seed=seed,
    )


def _resample_estimates(data, estimator, size, n_boot, seed, n_out):
    n = data.n
    rows = np.full((n_boot, n_out), np.nan)
    ok = np.zeros(n_boot, dtype=bool)
    failures: Counter[str] = Counter()
    for j in range(n_boot):
        rng = substream(seed, j)
        idx = rng.integers(0, n, size=size)
        est_seed = int(rng.integers(2**62))
        try:
            value = estimator(data.take(idx), est_seed)
        except EstimationError as exc:
            failures[type(exc).__name__] += 1
            continue
        rows[j] = np.asarray(value, dtype=float).ravel()
        ok[j] = True
    n_failed = sum(failures.values())
    if n_failed > 0.1 * n_boot:
        dominant = failures.most_common(1)[0][0]
        raise BootstrapFailureError(
            f"{n_failed} of {n_boot} bootstrap replicates failed "
            f"(mostly {dominant})"
        )
    return rows[ok], n_failed


def _run_bootstrap(
    data: Dataset,
    estimator,
    size: int,
    n_boot: int,
    seed: int,
    ci_level: float,
    method: str,
    b: int | None,
    basic: bool,
) -> BootstrapSummary:
    if n_boot < 100:
        raise InvalidArgumentError(f"need at least 100 replicates, got {n_boot}")
    if not 0.0 < ci_level < 1.0:
        raise InvalidArgumentError(f"ci_level must lie in (0, 1), got {ci_level!r}")
    seed = check_seed(seed)
    point = float(estimator(data, seed))
    reps, n_failed = _resample_estimates(data, estimator, size, n_boot, seed, 1)
    return _summarize(
        point, reps[:, 0], n_failed, ci_level, method, b, seed, basic
    )


def full_bootstrap(
    data: Dataset,
    estimator,
    n_boot: int = 1000,
    seed: int = 0,
    ci_level: float = 0.95,
    basic: bool = False,
) -> BootstrapSummary:
    """Bias, standard error, and CI from ``n_boot`` full-size resamples.

    ``estimator(dataset, seed) -> float`` must be deterministic given its
    arguments; any internal randomness must come from the passed seed.
    """
    return _run_bootstrap(
        data, estimator, data.n, n_boot, seed, ci_level, "full", None, basic
    )


def b_out_of_n_bootstrap(
    data: Dataset,
    estimator,
    b: int,
    n_boot: int = 1000,
    seed: int = 0,
    ci_level: float = 0.95,
    basic: bool = False,
) -> BootstrapSummary:
    """As :func:`full_bootstrap` with resamples of size ``b`` < n.

    The CI is taken directly from percentiles of the subsample estimates
    without rate rescaling (documented limitation). With ``b == n`` this
    runs the same code path as the full bootstrap and reproduces its
    replicates exactly for equal seeds.
    """
    if not 10 <= b <= data.n:
        raise InvalidArgumentError(
            f"subsample size must lie in [10, n={data.n}], got {b}"
        )
    return _run_bootstrap(
        data, estimator, b, n_boot, seed, ci_level, "b_out_of_n", int(b), basic
    )


def bootstrap_components(
    data: Dataset,
    estimator,
    n_components: int,
    n_boot: int = 1000,
    seed: int = 0,
    ci_level: float = 0.95,
    b: int | None = None,
    basic: bool = False,
) -> list[BootstrapSummary]:
    """Bootstrap a vector-valued estimator once, summarising per component.

    ``estimator(dataset, seed)`` returns a 1-d array of fixed length
    ``n_components``; all components share the same resamples. A replicate
    that fails is dropped for every component.
    """
    if n_boot < 100:
        raise InvalidArgumentError(f"need at least 100 replicates, got {n_boot}")
    if not 0.0 < ci_level < 1.0:
        raise InvalidArgumentError(f"ci_level must lie in (0, 1), got {ci_level!r}")
    seed = check_seed(seed)
    size = data.n if b is None else int(b)
    if not 10 <= size <= data.n:
        raise InvalidArgumentError(
            f"subsample size must lie in [10, n={data.n}], got {size}"
        )
    method = "full" if b is None else "b_out_of_n"
    points = np.asarray(estimator(data, seed), dtype=float).ravel()
    if points.size != n_components:
        raise InvalidArgumentError(
            f"estimator returned {points.size} components, expected {n_components}"
        )
    reps, n_failed = _resample_estimates(
        data, estimator, size, n_boot, seed, n_components
    )
    return [
        _summarize(
            float(points[i]), reps[:, i], n_failed, ci_level, method, b, seed, basic
        )
        for i in range(n_components)
    ]
