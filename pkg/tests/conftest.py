import numpy as np
import pytest

from hdkernel.hdda import HddaClassModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_orthonormal(rng, d, p):
    Q, R = np.linalg.qr(rng.standard_normal((d, p)))
    return Q * np.sign(np.diag(R))


def exact_model(rng, d, p, noise=None):
    """HDDA model with known (lambda, Q, b) and its dense covariance."""
    Q = random_orthonormal(rng, d, p)
    b = rng.uniform(0.1, 1.0) if noise is None else noise
    lam = np.sort(rng.uniform(1.5, 20.0, p) * b)[::-1]
    model = HddaClassModel.from_covariance_parts(lam, Q, b)
    sigma = (Q * (lam - b)) @ Q.T + b * np.eye(d)
    return model, sigma


def toy_binary(rng, n=30, d=6, shift=1.0, noise=0.5):
    X = rng.standard_normal((n, d))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] + noise * rng.standard_normal(n) > 0, 1.0, -1.0)
    X[:, 0] += shift * y
    return X, y


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE = {}


def record(number, title, ok, detail):
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"criterion {number:>2} {status}: {title} ({detail})"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
