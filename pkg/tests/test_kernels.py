import numpy as np
import pytest

from lculab import _kernels
from lculab._kernels import (
    counter_uniforms,
    derive_key,
    make_rng,
    pair_accumulate,
    pair_draws,
)


class TestCounterHash:
    def test_deterministic(self):
        a = counter_uniforms(derive_key(7, 1, 2), 0, 100)
        b = counter_uniforms(derive_key(7, 1, 2), 0, 100)
        assert np.array_equal(a, b)

    def test_uniform_range(self):
        u = counter_uniforms(derive_key(1, 2, 3), 0, 100000)
        assert np.all((0 <= u) & (u < 1))
        assert abs(float(u.mean()) - 0.5) < 0.01

    def test_offset_consistency(self):
        # the draw at absolute index i never depends on where a chunk starts
        key = derive_key(42, 0)
        whole = counter_uniforms(key, 0, 1000)
        pieces = np.concatenate([counter_uniforms(key, s, 100)
                                 for s in range(0, 1000, 100)])
        assert np.array_equal(whole, pieces)

    def test_key_separation(self):
        a = counter_uniforms(derive_key(7, 0, 0, 1), 0, 1000)
        b = counter_uniforms(derive_key(7, 0, 0, 2), 0, 1000)
        assert not np.array_equal(a, b)

    def test_derive_key_sensitivity(self):
        keys = {derive_key(s, e, p) for s in range(3) for e in range(3)
                for p in range(3)}
        assert len(keys) == 27


class TestPairKernel:
    @pytest.fixture()
    def case(self):
        rng = np.random.default_rng(5)
        m, dim = 13, 4
        u = rng.standard_normal((m, dim)) + 1j * rng.standard_normal((m, dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        o = rng.standard_normal((dim, dim))
        o = o + o.T
        ou = u @ o.T
        probs = rng.random(m)
        probs /= probs.sum()
        return u, ou, probs

    def test_chunk_independence(self, case):
        # the sample set is a pure function of the counter index, so chunk
        # boundaries never change the draws; only the floating-point
        # accumulation order may differ
        u, ou, probs = case
        k1, k2 = derive_key(3, 0, 0, 1), derive_key(3, 0, 0, 2)
        full = pair_accumulate(u, ou, probs, k1, k2, 5000)
        a = pair_draws(probs, k1, k2, 0, 5000)
        saved = _kernels.CHUNK
        try:
            _kernels.CHUNK = 777
            chunked = pair_accumulate(u, ou, probs, k1, k2, 5000)
            b = pair_draws(probs, k1, k2, 0, 5000)
        finally:
            _kernels.CHUNK = saved
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert full[0] == pytest.approx(chunked[0], rel=1e-13, abs=1e-12)
        assert full[1] == pytest.approx(chunked[1], rel=1e-13)

    def test_numba_and_numpy_paths_identical(self, case):
        u, ou, probs = case
        k1, k2 = derive_key(9, 0, 0, 1), derive_key(9, 0, 0, 2)
        a = pair_accumulate(u, ou, probs, k1, k2, 20000)
        b = pair_accumulate(u, ou, probs, k1, k2, 20000, force_numpy=True)
        # identical draws; only the accumulation rounding may differ
        assert a[0] == pytest.approx(b[0], rel=1e-13, abs=1e-12)
        assert a[1] == pytest.approx(b[1], rel=1e-13)

    def test_matches_explicit_draws(self, case):
        u, ou, probs = case
        k1, k2 = derive_key(11, 0, 0, 1), derive_key(11, 0, 0, 2)
        total = 3000
        s, s2 = pair_accumulate(u, ou, probs, k1, k2, total)
        j1, j2 = pair_draws(probs, k1, k2, 0, total)
        vals = np.einsum("id,id->i", ou[j1], np.conj(u[j2])).real
        assert s == pytest.approx(float(vals.sum()), abs=1e-9)
        assert s2 == pytest.approx(float((vals * vals).sum()), abs=1e-9)

    def test_draw_frequencies(self, case):
        u, ou, probs = case
        j1, _ = pair_draws(probs, derive_key(2, 0, 0, 1),
                           derive_key(2, 0, 0, 2), 0, 200000)
        freq = np.bincount(j1, minlength=len(probs)) / 200000
        assert np.max(np.abs(freq - probs)) < 0.005


class TestMakeRng:
    def test_independent_streams(self):
        a = make_rng(5, 1).random(10)
        b = make_rng(5, 2).random(10)
        c = make_rng(5, 1).random(10)
        assert np.array_equal(a, c)
        assert not np.array_equal(a, b)
