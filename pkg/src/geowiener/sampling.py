"""Deterministic chunked random streams and an order-preserving worker pool.

Samples are split into chunks of fixed size; chunk ``k`` always draws from
the stream ``SeedSequence(seed, spawn_key=(tag, k))``.  Results therefore do
not depend on how many workers process the chunks, and reductions run over
the concatenated per-chunk arrays in chunk order.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SIZE = 1024
WORKERS_ENV = "GEOWIENER_WORKERS"


def chunk_plan(samples, chunk_size=CHUNK_SIZE):
    """List of ``(chunk_index, size)`` covering ``samples`` draws."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    full, rest = divmod(int(samples), chunk_size)
    plan = [(k, chunk_size) for k in range(full)]
    if rest:
        plan.append((full, rest))
    return plan


def chunk_rng(seed, chunk_index, tag=0):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(chunk_index)))
    return np.random.Generator(np.random.PCG64(ss))


def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def map_chunks(fn, plan, workers=None):
    """Apply ``fn(chunk_index, size)`` to every chunk; results keep plan order."""
    w = worker_count(workers)
    if w == 1 or len(plan) == 1:
        return [fn(k, size) for k, size in plan]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(lambda item: fn(*item), plan))
