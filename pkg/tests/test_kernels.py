import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lapcap import _kernels_py, kernels
from lapcap.rng import make_rng

compiled = pytest.importorskip("lapcap._kernels")


def _brute_mmd2(x, y, h):
    k = lambda a, b: np.exp(-np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1) / (2 * h * h))  # noqa: E731
    kxx, kyy, kxy = k(x, x), k(y, y), k(x, y)
    m, n = len(x), len(y)
    return ((kxx.sum() - np.trace(kxx)) / (m * (m - 1)) + (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
            - 2 * kxy.mean())


@pytest.mark.parametrize("dim", [1, 3])
def test_backends_agree_with_brute_force(dim):
    rng = make_rng(0, "kernels", dim)
    for _ in range(5):
        x = rng.normal(size=(int(rng.integers(2, 40)), dim))
        y = rng.normal(0.3, 1.2, size=(int(rng.integers(2, 40)), dim))
        h = float(rng.uniform(0.2, 3))
        want = _brute_mmd2(x, y, h)
        assert compiled.mmd2_unbiased(x, y, h) == pytest.approx(want, rel=1e-12, abs=1e-14)
        assert _kernels_py.mmd2_unbiased(x, y, h) == pytest.approx(want, rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(compiled.pairwise_distances(x), _kernels_py.pairwise_distances(x), rtol=1e-14)


def test_identical_samples_give_small_mmd():
    z = make_rng(1, "same").normal(size=(200, 2))
    assert abs(kernels.mmd2_unbiased(z, z.copy(), 1.0)) < 0.01


def test_too_few_samples():
    for impl in (compiled, _kernels_py):
        with pytest.raises(ValueError):
            impl.mmd2_unbiased(np.zeros((1, 1)), np.zeros((3, 1)), 1.0)
    with pytest.raises(ValueError):
        kernels.mmd2_unbiased(np.zeros((3, 1)), np.zeros((3, 1)), 0.0)


def test_median_bandwidth_ties():
    assert kernels.median_bandwidth(np.zeros(5)) == 1.0
    assert kernels.median_bandwidth([0.0, 0.0, 1.0]) == 1.0


def test_env_forces_fallback():
    code = "import lapcap.kernels as k, json; print(json.dumps(k.BACKEND))"
    env = dict(os.environ, LAPCAP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert json.loads(out.stdout) == "python"
    assert kernels.BACKEND == ("python" if os.environ.get("LAPCAP_PURE_PYTHON") == "1" else "cython")


def test_stochastic_scenario_same_verdicts_on_both_backends(tmp_path):
    from lapcap.cli import bundled_corpus
    path = str(bundled_corpus() / "cap-stochastic-mismatch.json")
    docs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, LAPCAP_PURE_PYTHON=flag)
        out = tmp_path / flag
        subprocess.run([sys.executable, "-m", "lapcap.cli", "run", path, "--out", str(out)], env=env, check=True,
                       capture_output=True)
        docs[flag] = json.loads((out / "cap-stochastic-mismatch.report.json").read_text())
    assert [c["verdict"] for c in docs["0"]["checks"]] == [c["verdict"] for c in docs["1"]["checks"]]
    for key, value in docs["0"]["metrics"].items():
        assert docs["1"]["metrics"][key] == pytest.approx(value, rel=1e-9, abs=1e-12)
