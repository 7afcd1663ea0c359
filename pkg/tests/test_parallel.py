import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conehit.parallel import WORKERS_ENV, Welford, chunk_sizes, merge_all, resolve_workers, run_chunks


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 300), cut=st.integers(1, 299), seed=st.integers(0, 1000))
def test_welford_merge_matches_batch(n, cut, seed):
    x = np.random.default_rng(seed).normal(size=(n, 2))
    cut = min(cut, n - 1)
    merged = Welford.of(x[:cut]).merge(Welford.of(x[cut:]))
    np.testing.assert_allclose(merged.mean, x.mean(axis=0), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(merged.m2, ((x - x.mean(0)) ** 2).sum(0), rtol=1e-10)


def test_empty_merge_is_identity():
    w = Welford.of(np.arange(5.0)[:, None])
    assert w.merge(Welford.empty(1)) is w
    assert Welford.empty(1).merge(w) is w


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 10_000), chunk=st.integers(1, 3000))
def test_chunk_sizes_partition(n, chunk):
    sizes = chunk_sizes(n, chunk)
    assert sum(sizes) == n and max(sizes) <= chunk


def test_results_independent_of_workers():
    task = lambda size, rng, i: Welford.of(rng.normal(size=(size, 1)))
    ref = merge_all(run_chunks(task, 10_000, 42, workers=1, chunk=700))
    for w in (2, 4, 8):
        got = merge_all(run_chunks(task, 10_000, 42, workers=w, chunk=700))
        assert got.mean[0] == ref.mean[0] and got.m2[0] == ref.m2[0]


def test_env_overrides_worker_argument(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert resolve_workers(1) == 3
    monkeypatch.delenv(WORKERS_ENV)
    assert resolve_workers(None) == 1
    assert resolve_workers(5) == 5
