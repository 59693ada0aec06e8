import numpy as np
import pytest

from scenefuse.geometry import Frame, Intrinsics, Pose, pose_from_yaw_pitch


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def small_intrinsics(n=64, focal=80.0) -> Intrinsics:
    return Intrinsics(fx=focal, fy=focal, cx=n / 2, cy=n / 2, width=n, height=n)


def random_pose(rng) -> Pose:
    return pose_from_yaw_pitch(rng.uniform(-2.5, 2.5), rng.uniform(-1.0, 1.0),
                               rng.uniform(-4.0, 4.0, 3))


def smooth_frame(rng, n=64, base=2.0, pose=None, intr=None) -> Frame:
    """Random colored frame over a smooth depth field (no dropped faces)."""
    intr = intr or small_intrinsics(n)
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    phase = rng.uniform(0, 6.28)
    depth = (base + 0.25 * np.sin(xx / 9.0 + phase) + 0.2 * np.cos(yy / 7.0)).astype(np.float32)
    image = rng.uniform(0, 1, (n, n, 3)).astype(np.float32)
    mask = np.ones((n, n), np.uint8)
    return Frame(image, depth, mask, pose or random_pose(rng), intr)


# ---- acceptance reporting: one pass/fail line per criterion -----------------

_ACCEPTANCE_RESULTS = {}


def record_acceptance(item, outcome):
    _ACCEPTANCE_RESULTS[item] = outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    result = yield
    report = result.get_result()
    if report.when == "call" and "test_acceptance" in str(item.fspath):
        record_acceptance(item.name, report.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        outcome = _ACCEPTANCE_RESULTS[name]
        mark = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"[{mark}] {name}")
