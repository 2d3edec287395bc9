import math

import numpy as np
import pytest

from decotime.vanhove import (
    VanHoveObservable,
    VanHoveState,
    constant_kernel,
    gaussian_nu,
    gaussian_packet,
    lorentzian_nu,
    normalized_density,
    zero_kernel,
)

W = 50.0
ACCEPTANCE_LINES = []


def exp_density(omega_max=W):
    return normalized_density(lambda w: math.exp(-w), omega_max)


def unit_observable(omega_max=W):
    return VanHoveObservable(lambda w: 1.0, constant_kernel(1.0, omega_max))


def make_state(kernel):
    return VanHoveState(exp_density(kernel.omega_max), kernel)


@pytest.fixture(scope="session")
def lorentz_pair():
    return make_state(lorentzian_nu(0.1, 10.0, 1.0)), unit_observable()


@pytest.fixture(scope="session")
def gauss_pair():
    return make_state(gaussian_nu(0.2, 10.0, 1.0)), unit_observable()


@pytest.fixture(scope="session")
def packet_pair():
    return make_state(gaussian_packet(10.0, 0.1)), unit_observable()


@pytest.fixture(scope="session")
def free_pair():
    return make_state(zero_kernel()), unit_observable()


def random_rational(rng, n_max=4, m_max=2, lo=0.0, hi=1.0, sep=0.05):
    """c / prod (z - p_i)^m_i with well separated poles in the square [lo, hi]^2."""
    k = int(rng.integers(1, n_max + 1))
    poles = []
    while len(poles) < k:
        p = complex(rng.uniform(lo, hi), rng.uniform(lo, hi))
        if all(abs(p - q) > sep for q in poles):
            poles.append(p)
    mults = [int(m) for m in rng.integers(1, m_max + 1, size=k)]
    c = complex(*rng.normal(size=2))

    def f(z):
        out = c
        for p, m in zip(poles, mults):
            out = out / (z - p) ** m
        return out

    def closed_residue(j):
        p, m = poles[j], mults[j]
        others = [(q, mq) for i, (q, mq) in enumerate(zip(poles, mults)) if i != j]
        h = c
        for q, mq in others:
            h = h / (p - q) ** mq
        if m == 1:
            return h
        # m == 2: derivative of c / prod_{others}(z - q)^mq at p
        return h * sum(-mq / (p - q) for q, mq in others)

    return f, poles, mults, closed_residue


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
