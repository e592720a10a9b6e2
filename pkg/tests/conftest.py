import numpy as np
import pytest

from simcal.simenv import exciter_actions, get_spec, make_env, rollout
from simcal.simenv.backend import compiled_kernel, python_kernel

PENDULUM_TRUTH = np.array([0.3, 0.7])

KERNELS = [pytest.param(python_kernel, id="python")]
if compiled_kernel is not None:
    KERNELS.append(pytest.param(compiled_kernel, id="cython"))


def exciter_refs(env_id, theta, n=5, seed=0):
    """Reference trajectories driven by the exciter from ``n`` canonical starts."""
    spec = get_spec(env_id)
    out = []
    for i in range(n):
        model = make_env(env_id, np.asarray(theta, dtype=float), seed=seed * 1000 + i)
        tau = rollout(model, model.start_state(0), exciter_actions(env_id), spec.horizon, source="reference")
        out.append(tau)
    return out


@pytest.fixture(params=KERNELS)
def kernel(request):
    return request.param


@pytest.fixture(scope="session")
def pendulum_refs():
    return exciter_refs("pendulum", PENDULUM_TRUTH)


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    if rep.when == "call" or rep.failed:
        _, ok, dur = _CRITERIA.get(number, (title, True, 0.0))
        _CRITERIA[number] = (title, ok and rep.passed, dur + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, dur = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {title}  ({dur:.1f} s)")
