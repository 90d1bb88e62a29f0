import numpy as np
import pytest

from afomrestart import FistaEngine, OptimumCertificate, QfgCertificate, quadratic


@pytest.fixture
def ill_quadratic():
    """0.5 x' diag(1, 100) x: f* = 0 at the origin, mu = 1, L = 100."""
    f = quadratic(np.diag([1.0, 100.0]))
    cert = OptimumCertificate.unique(f, np.zeros(2))
    return f, cert, QfgCertificate(level=np.inf, mu=1.0)


@pytest.fixture
def scalar_quadratic():
    f = quadratic([[1.0]])
    return f, OptimumCertificate.unique(f, np.zeros(1))


@pytest.fixture
def ill_engine(ill_quadratic):
    return FistaEngine(ill_quadratic[0])
