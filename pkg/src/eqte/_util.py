"""Small shared helpers: immutable arrays, seed derivation, parallelism."""

from __future__ import annotations

import os

import numpy as np

from .errors import InvalidArgumentError


def frozen_array(values, dtype=float, ndim: int | None = None) -> np.ndarray:
    """Copy ``values`` into a read-only float array."""
    a = np.array(values, dtype=dtype)
    if ndim is not None and a.ndim != ndim:
        raise InvalidArgumentError(f"expected a {ndim}-d array, got {a.ndim}-d")
    a.setflags(write=False)
    return a


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InvalidArgumentError(f"seed must be a nonnegative integer, got {seed!r}")
    return int(seed)


def substream(seed: int, *indices: int) -> np.random.Generator:
    """Deterministic child generator for (seed, *indices).

    Counter-style construction: the entropy sequence fully determines the
    stream, so parallel and serial consumers see identical values.
    """
    return np.random.default_rng([check_seed(seed), *[int(i) for i in indices]])


def subseed(seed: int, *indices: int) -> int:
    """Derive a nonnegative integer seed for a nested procedure."""
    ss = np.random.SeedSequence([check_seed(seed), *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def exceedance_mask(outcomes: np.ndarray, fitted: np.ndarray) -> np.ndarray:
    """Rows strictly above a fitted threshold plane.

    Points the quantile-regression fit interpolates sit on the plane with
    residuals of pure rounding noise either side of zero, so "strictly
    above" is taken relative to the outcome scale.
    """
    resid = outcomes - fitted
    scale = float(np.median(np.abs(outcomes - np.median(outcomes))))
    return resid > 1e-9 * max(scale, 1e-300)


def worker_count() -> int:
    """Parallel workers: min(EQTE_THREADS, cpu count); defaults to cpus."""
    cpus = os.cpu_count() or 1
    raw = os.environ.get("EQTE_THREADS", "").strip()
    if not raw:
        return cpus
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"EQTE_THREADS must be an integer, got {raw!r}")
    return max(1, cap)
