"""Wall-clock micro-benchmarks for the fusion rules.

Two cases: plain Gaussian fusion across state dimensions, and mixture fusion
across component counts. The interesting ratios are harmonic over geometric
(the harmonic rule needs one extra matrix inversion plus a moment match) and
mixture-harmonic over pseudo-Chernoff (both touch every component pair).
"""

from __future__ import annotations

import time

import numpy as np

from .fusion import _mixture_product, fuse_amd, fuse_gmd, fuse_hmd, fuse_hmd_mixture, fuse_naive, fuse_pcf
from .gaussians import GaussianDensity, GaussianMixture

__all__ = ["bench_fusion", "summarize_ratios", "bench_csv_text", "BENCH_CSV_HEADER"]

BENCH_CSV_HEADER = "case,strategy,size,mean_s,repeats"


def _random_pair(rng: np.random.Generator, dim: int) -> tuple[GaussianDensity, GaussianDensity]:
    def one():
        root = rng.standard_normal((dim, dim))
        return GaussianDensity(3.0 * rng.standard_normal(dim),
                               root @ root.T + dim * np.eye(dim))
    return one(), one()


def _random_mixture(rng: np.random.Generator, n_comp: int, dim: int) -> GaussianMixture:
    comps = []
    for k in range(n_comp):
        root = rng.standard_normal((dim, dim))
        comps.append(GaussianDensity(8.0 * k + rng.standard_normal(dim),
                                     root @ root.T + dim * np.eye(dim)))
    w = rng.random(n_comp) + 0.5
    return GaussianMixture(w / np.sum(w), tuple(comps))


def _time_call(fn, repeats: int, warmup: int = 5) -> float:
    for _ in range(warmup):
        fn()
    tic = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - tic) / repeats


def bench_fusion(dims=(2, 4, 6, 9), counts=(1, 2, 4, 8), repeats: int = 200,
                 seed: int = 0) -> list[dict]:
    """Time each strategy; returns rows of case/strategy/size/mean seconds."""
    rng = np.random.default_rng(seed)
    rows = []
    for dim in dims:
        a, b = _random_pair(rng, dim)
        gaussian_calls = {
            "naive": lambda a=a, b=b: fuse_naive(a, b),
            "gmd": lambda a=a, b=b: fuse_gmd(a, b, 0.5),
            "amd": lambda a=a, b=b: fuse_amd([a, b], [0.5, 0.5]),
            "hmd": lambda a=a, b=b: fuse_hmd(a, b, 0.5),
        }
        for name, call in gaussian_calls.items():
            rows.append({"case": "gaussian", "strategy": name, "size": int(dim),
                         "mean_s": _time_call(call, repeats), "repeats": repeats})
    for count in counts:
        ma = _random_mixture(rng, count, 4)
        mb = _random_mixture(rng, count, 4)
        mixture_calls = {
            "naive": lambda a=ma, b=mb: _mixture_product(a, b),
            "pcf": lambda a=ma, b=mb: fuse_pcf(a, b, 0.5),
            "hmd": lambda a=ma, b=mb: fuse_hmd_mixture(a, b, 0.5),
        }
        for name, call in mixture_calls.items():
            rows.append({"case": "mixture", "strategy": name, "size": int(count),
                         "mean_s": _time_call(call, repeats), "repeats": repeats})
    return rows


def summarize_ratios(rows: list[dict]) -> dict:
    """Ratios of mean call times: hmd/gmd per dimension, hmd/pcf per count."""
    def lookup(case, strategy, size):
        for row in rows:
            if (row["case"], row["strategy"], row["size"]) == (case, strategy, size):
                return row["mean_s"]
        return None

    out = {"gaussian_hmd_over_gmd": {}, "mixture_hmd_over_pcf": {}}
    for row in rows:
        if row["case"] == "gaussian" and row["strategy"] == "hmd":
            base = lookup("gaussian", "gmd", row["size"])
            if base:
                out["gaussian_hmd_over_gmd"][row["size"]] = row["mean_s"] / base
        if row["case"] == "mixture" and row["strategy"] == "hmd":
            base = lookup("mixture", "pcf", row["size"])
            if base:
                out["mixture_hmd_over_pcf"][row["size"]] = row["mean_s"] / base
    return out


def bench_csv_text(rows: list[dict]) -> str:
    lines = [BENCH_CSV_HEADER]
    for row in rows:
        lines.append(f"{row['case']},{row['strategy']},{row['size']},"
                     f"{row['mean_s']:.9e},{row['repeats']}")
    return "\n".join(lines) + "\n"
