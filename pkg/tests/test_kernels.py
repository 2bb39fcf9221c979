import os
import subprocess
import sys

import numpy as np
import pytest

from adprior import kernels
from adprior.kernels import compiled_backend, python_backend

BACKENDS = [python_backend] + ([compiled_backend] if compiled_backend is not None else [])
needs_compiled = pytest.mark.skipif(compiled_backend is None, reason="extension not built")


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("data,expected", [
    (b"", 0xCBF29CE484222325),
    (b"a", 0xAF63DC4C8601EC8C),
    (b"foobar", 0x85944171F73967E8),
])
def test_fnv_reference_vectors(backend, data, expected):
    assert backend.fnv1a64(data) == expected
    assert backend.fnv1a64_batch([data, data]) == [expected, expected]


@pytest.mark.parametrize("backend", BACKENDS)
def test_assign_nearest_matches_brute_force(backend):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(300, 5))
    cents = rng.normal(size=(17, 5))
    codes, dist = backend.assign_nearest(pts, cents)
    for i in range(len(pts)):
        d = [float(((pts[i] - c) ** 2).sum()) for c in cents]
        assert codes[i] == int(np.argmin(d))
        assert dist[i] == pytest.approx(min(d), rel=1e-12)


@needs_compiled
def test_backends_agree_exactly_on_hash_and_assign():
    rng = np.random.default_rng(1)
    keys = [bytes(rng.integers(0, 256, size=int(rng.integers(0, 40))).tolist())
            for _ in range(500)]
    assert compiled_backend.fnv1a64_batch(keys) == python_backend.fnv1a64_batch(keys)
    pts = rng.normal(size=(2000, 32))
    cents = rng.normal(size=(64, 32))
    # duplicated centroids exercise the lowest-index tie rule
    cents[40] = cents[3]
    pts[:5] = cents[3]
    c1, d1 = compiled_backend.assign_nearest(pts, cents)
    c2, d2 = python_backend.assign_nearest(pts, cents)
    np.testing.assert_array_equal(c1, c2)
    np.testing.assert_array_equal(d1, d2)
    assert set(c1[:5]) == {3}


def _sgd_case(seed=2, n=400, buckets=64, dim=4):
    rng = np.random.default_rng(seed)
    user = rng.normal(0, 0.1, size=(buckets, dim))
    item = rng.normal(0, 0.1, size=(buckets, dim))
    lens_u = rng.integers(0, 4, size=n)
    lens_i = rng.integers(1, 3, size=n)
    u_ptr = np.r_[0, np.cumsum(lens_u)].astype(np.int64)
    i_ptr = np.r_[0, np.cumsum(lens_i)].astype(np.int64)
    u_idx = rng.integers(buckets, size=int(u_ptr[-1])).astype(np.int64)
    i_idx = rng.integers(buckets, size=int(i_ptr[-1])).astype(np.int64)
    labels = (rng.random(n) < 0.3).astype(np.float64)
    weights = rng.random(n) * 2
    order = rng.permutation(n).astype(np.int64)
    return user, item, u_idx, u_ptr, i_idx, i_ptr, labels, weights, order


@needs_compiled
def test_sgd_backends_agree():
    user, item, *rest = _sgd_case()
    u1, i1, u2, i2 = user.copy(), item.copy(), user.copy(), item.copy()
    l1 = compiled_backend.sgd_epoch(u1, i1, *rest, 0.1)
    l2 = python_backend.sgd_epoch(u2, i2, *rest, 0.1)
    assert l1 == pytest.approx(l2, rel=1e-9)
    np.testing.assert_allclose(u1, u2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(i1, i2, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_sgd_lowers_loss(backend):
    user, item, *rest = _sgd_case(seed=3)
    losses = [backend.sgd_epoch(user, item, *rest, 0.5) for _ in range(5)]
    assert losses[-1] < losses[0]


def test_env_forces_python_backend():
    env = dict(os.environ, ADPRIOR_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import adprior.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_label():
    assert kernels.BACKEND in ("compiled", "python")
    if os.environ.get("ADPRIOR_PURE_PYTHON") != "1" and compiled_backend is not None:
        assert kernels.BACKEND == "compiled"
