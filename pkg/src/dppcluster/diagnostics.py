"""Approximation diagnostics and the simulation benchmark loop.

These produce the rows behind the CLI's ``diag`` and ``bench`` commands:
Frobenius distances of the sparse approximations, spectral KL divergences,
eigen-extraction timings, DPP-versus-uniform log-probabilities, and ARI
aggregates over a scenario grid.
"""

import time
import warnings

import numpy as np

from .consensus import ConsensusConfig, consensus_cluster
from .datagen import MixtureSpec, generate_dataset
from .dpp import diversity_histogram
from .eigen import DENSE_CAP, LanczosConfig, dense_eigh, lanczos_topk
from .kernel import estimate_bandwidth, rbf_kernel
from .metrics import adjusted_rand, kde, symmetrized_kl
from .nngp import NNGPApproximation, frobenius_distance, mnn_for_sparseness, mnn_matrix

__all__ = [
    "SPARSENESS_LEVELS",
    "kernel_of",
    "full_spectrum",
    "nngp_spectrum",
    "frobenius_table",
    "kl_table",
    "timing_table",
    "diversity_values",
    "run_bench",
    "aggregate",
]

SPARSENESS_LEVELS = (0.2, 0.4, 0.6, 0.8)


def kernel_of(X):
    return rbf_kernel(X, estimate_bandwidth(X))


def full_spectrum(L, cap=DENSE_CAP):
    if L.order > cap:
        raise ValueError(f"dense spectrum of order {L.order} exceeds cap {cap}; raise --cap")
    return dense_eigh(L, cap=cap).values


def _fit(X, L, sparseness, ridge=None, permute=False, seed=0):
    return NNGPApproximation(sparseness=sparseness, ridge=ridge, permute=permute,
                             random_state=seed).fit(X, kernel=L)


def nngp_spectrum(X, L, sparseness, t, seed=0, tol=1e-8):
    """Top ``t`` eigenvalues of the NNGP approximation at a sparseness level."""
    approx = _fit(X, L, sparseness, seed=seed)
    return lanczos_topk(approx.operator_, LanczosConfig(t=t, tol=tol, seed=seed)).values


def frobenius_table(X, L, levels=SPARSENESS_LEVELS):
    """``||L - L_nngp||_F`` and ``||L - L_mnn||_F`` at matched sparseness."""
    rows = []
    for s in levels:
        approx = _fit(X, L, s)
        f_nngp, _ = frobenius_distance(L, approx.operator_)
        m_nn = mnn_for_sparseness(L, s)
        Lc = mnn_matrix(L, m_nn)
        f_mnn, _ = frobenius_distance(L, Lc)
        rows.append({
            "sparseness": s, "m": approx.m_, "frobenius_nngp": f_nngp,
            "m_nn": m_nn, "mnn_sparseness": Lc.sparseness, "frobenius_mnn": f_mnn,
        })
    return rows


def kl_table(X, L, levels=SPARSENESS_LEVELS, ts=(10, 25, 50), reference="full", full=None):
    """Symmetrized KL between KDEs of approximate and exact spectra.

    ``reference="full"`` compares the ``t`` extracted values with all ``n``
    eigenvalues of ``L``; ``reference="top"`` compares with the top ``t``.
    """
    if reference not in ("full", "top"):
        raise ValueError("reference must be 'full' or 'top'")
    full = full_spectrum(L) if full is None else full
    rows = []
    for s in levels:
        approx = _fit(X, L, s)
        for t in ts:
            vals = lanczos_topk(approx.operator_, LanczosConfig(t=t)).values
            ref = full if reference == "full" else full[:t]
            rows.append({"sparseness": s, "t": t, "reference": reference,
                         "kl": symmetrized_kl(kde(vals), kde(ref))})
    return rows


def timing_table(X, L, levels=SPARSENESS_LEVELS, ts=(10, 25, 50), repeats=5):
    """Median wall time of NNGP eigen-extraction (factor build plus Lanczos).

    Each cell runs once untimed before the ``repeats`` timed calls.
    """
    rows = []
    for s in levels:
        for t in ts:
            times = []
            for rep in range(repeats + 1):
                start = time.perf_counter()
                approx = _fit(X, L, s)
                lanczos_topk(approx.operator_, LanczosConfig(t=t))
                if rep:  # the first call only warms caches
                    times.append(time.perf_counter() - start)
            rows.append({"sparseness": s, "t": t, "seconds": float(np.median(times)),
                         "repeats": repeats})
    return rows


def diversity_values(L, pairs, n_draws=1000, seed=0):
    dpp_vals, uni_vals = diversity_histogram(L, pairs, n_draws, random_state=seed)
    return dpp_vals, uni_vals


def run_bench(scenarios, replicas, n, configs, seed=0, progress=None):
    """ARI of every config on every (scenario, replica) dataset.

    Parameters
    ----------
    scenarios : list of (p, K)
    configs : list of dict
        ConsensusConfig keyword sets (seed is filled in per replica).

    Returns
    -------
    list of dict, one per cell; failed cells carry ``ari = None`` and an
    ``error`` message.
    """
    rows = []
    for p, K in scenarios:
        for rep in range(replicas):
            data_seed = int(seed) * 1000 + rep
            _, data = generate_dataset(MixtureSpec(p=p, K=K, n=n, seed=data_seed))
            L = kernel_of(data.points)
            for cfg_kw in configs:
                cell = {"p": p, "K": K, "replica": rep, "data_seed": data_seed, **cfg_kw}
                start = time.perf_counter()
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        cfg = ConsensusConfig(seed=data_seed, **cfg_kw)
                        res = consensus_cluster(data.points, cfg, kernel=L)
                    cell.update(ari=adjusted_rand(res.final.labels, data.labels), k=res.final.k,
                                threshold=res.chosen_threshold, error="")
                except Exception as exc:  # noqa: BLE001 - a failed cell is recorded, not fatal
                    cell.update(ari=None, k=None, threshold=None, error=f"{type(exc).__name__}: {exc}")
                cell["seconds"] = time.perf_counter() - start
                rows.append(cell)
                if progress is not None:
                    progress(cell)
    return rows


def aggregate(rows, keys):
    """Mean and standard deviation of ARI and time grouped by ``keys``."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r.get(k) for k in keys), []).append(r)
    out = []
    for key, members in groups.items():
        ari = np.array([m["ari"] for m in members if m["ari"] is not None], dtype=float)
        secs = np.array([m["seconds"] for m in members], dtype=float)
        out.append({
            **dict(zip(keys, key)),
            "cells": len(members),
            "failed": sum(m["ari"] is None for m in members),
            "ari_mean": float(ari.mean()) if ari.size else None,
            "ari_sd": float(ari.std(ddof=1)) if ari.size > 1 else None,
            "seconds_mean": float(secs.mean()),
        })
    return out
