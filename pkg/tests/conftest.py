import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record_acceptance(name, passed, detail=""):
    line = f"ACCEPTANCE {'PASS' if passed else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_unit(rng, n):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def textured_image(shape, seed=0, exponent=2.0):
    from msr.synth import natural_texture

    field = natural_texture(shape, np.random.default_rng(seed), exponent=exponent)
    return (field - field.min()) / np.ptp(field)
