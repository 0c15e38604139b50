import json
import os
import subprocess
import sys

import numpy as np

from sigmmd import _backend
from sigmmd.sigkernel import SigKernelConfig, StaticKernelConfig, gram_array, gram_vjp

SCRIPT = """
import json, numpy as np
from sigmmd import _backend
from sigmmd.sigkernel import SigKernelConfig, StaticKernelConfig, gram_array, gram_vjp
X = np.random.default_rng(0).normal(size=(3, 6, 2)) * 0.2
cfg = SigKernelConfig(StaticKernelConfig("rational_quadratic", 1.0, 0.3), 4)
G = gram_array(X, X, cfg, symmetric=True)
dX, _ = gram_vjp(X, X, np.ones((3, 3)), cfg, symmetric=True)
print(json.dumps({"backend": _backend.backend(), "G": G.tolist(), "dX": dX.tolist()}))
"""


def _run(env_value):
    env = dict(os.environ, SIGMMD_BACKEND=env_value)
    return subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True)


def test_numpy_fallback_selected_and_agrees():
    proc = _run("numpy")
    assert proc.returncode == 0, proc.stderr
    out = json.loads(proc.stdout)
    assert out["backend"] == "numpy"
    X = np.random.default_rng(0).normal(size=(3, 6, 2)) * 0.2
    cfg = SigKernelConfig(StaticKernelConfig("rational_quadratic", 1.0, 0.3), 4)
    G = gram_array(X, X, cfg, symmetric=True)
    dX, _ = gram_vjp(X, X, np.ones((3, 3)), cfg, symmetric=True)
    assert np.allclose(out["G"], G, rtol=1e-13)
    assert np.allclose(out["dX"], dX, rtol=1e-11, atol=1e-14)


def test_bad_backend_value_fails():
    proc = _run("fortran")
    assert proc.returncode != 0 and "SIGMMD_BACKEND" in proc.stderr


def test_default_backend():
    assert _backend.backend() == ("numba" if _backend.HAVE_NUMBA else "numpy")
