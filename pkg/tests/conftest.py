import math
import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ONES = dict(gamma1=1.0, gamma2=1.0, r1=1.0, r2=1.0, c11=1.0, c22=1.0, c12=0.0, c21=0.0)


def coeffs(**changes):
    d = dict(ONES)
    d.update(changes)
    return d


COMPETITION_SETS = {
    "ones": coeffs(c12=1.0, c21=1.0),
    "gamma2": coeffs(gamma2=2.0, c12=1.0, c21=2.0),
    "r1": coeffs(r1=2.0, c12=0.5, c21=0.5),
}

COOPERATIVE_SETS = {
    "c03": coeffs(c12=-0.3, c21=-0.3),
    "c06": coeffs(c12=-0.6, c21=-0.6),
    "gamma2": coeffs(gamma2=2.0, c12=-0.25, c21=-0.5),
}


@pytest.fixture
def ones():
    return dict(ONES)


@pytest.fixture(autouse=True)
def _fixed_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


PI = math.pi
