import json
import os
import subprocess
import sys

import numpy as np
import pytest

from harvest_sa.analysis import simulate_power
from harvest_sa.errors import ConfigError, TaskError
from harvest_sa.integrator import IntegratorSettings
from harvest_sa.model import HarvesterParams
from harvest_sa.parallel import parallel_map, resolve_workers
from harvest_sa.uq import HarvesterQoI, build_input_space, mc_first_order

SHORT = IntegratorSettings(t1=100, n_out=1001)


def _power(f):
    return simulate_power(HarvesterParams(f=f).to_array(), np.array([1.0, 0, 0]), SHORT).power


def _fails_on_three(i):
    if i == 3:
        raise ValueError("boom")
    return i


def test_empty_task_list():
    assert parallel_map(_power, [], workers=4) == []


def test_worker_count_does_not_change_results():
    tasks = np.linspace(0.01, 0.2, 100).tolist()
    one = np.array(parallel_map(_power, tasks, workers=1))
    eight = np.array(parallel_map(_power, tasks, workers=8))
    assert one.tobytes() == eight.tobytes()


def test_failing_task_reports_index():
    for workers in (1, 2):
        with pytest.raises(TaskError) as info:
            parallel_map(_fails_on_three, range(6), workers=workers)
        assert info.value.index == 3


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("HARVEST_SA_WORKERS", raising=False)
    assert resolve_workers() == 1
    monkeypatch.setenv("HARVEST_SA_WORKERS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv("HARVEST_SA_WORKERS", "lots")
    with pytest.raises(ConfigError):
        resolve_workers()
    with pytest.raises(ConfigError):
        resolve_workers(0)


def test_mc_report_independent_of_workers():
    nominal = HarvesterParams(f=0.147)
    spec = build_input_space("classical", nominal, 0.2)
    reports = [mc_first_order(HarvesterQoI(spec, nominal, SHORT, workers=w), spec, 64, 8)
               for w in (1, 4)]
    assert reports[0].indices == reports[1].indices
    assert reports[0].metadata == reports[1].metadata


_FALLBACK_SCRIPT = """
import json, numpy as np
from harvest_sa._jit import JIT_ENABLED
from harvest_sa.integrator import IntegratorSettings, integrate
from harvest_sa.model import HarvesterParams, State3
ts = integrate(HarvesterParams(f=0.147, beta=1.0, delta=0.1, phi=-0.2), State3(1, 0, 0),
               IntegratorSettings(t1=20, n_out=201))
print(json.dumps({"jit": JIT_ENABLED, "states": ts.states.tolist()}))
"""


def test_pure_python_fallback_matches_jit():
    from harvest_sa._jit import JIT_ENABLED
    from harvest_sa.integrator import integrate
    from harvest_sa.model import State3

    env = dict(os.environ, HARVEST_SA_JIT="0")
    out = subprocess.run([sys.executable, "-c", _FALLBACK_SCRIPT], env=env, capture_output=True,
                         text=True, check=True, timeout=600)
    res = json.loads(out.stdout)
    assert res["jit"] is False
    ref = integrate(HarvesterParams(f=0.147, beta=1.0, delta=0.1, phi=-0.2), State3(1, 0, 0),
                    IntegratorSettings(t1=20, n_out=201))
    assert JIT_ENABLED
    np.testing.assert_allclose(np.array(res["states"]), ref.states, rtol=1e-12, atol=1e-13)
