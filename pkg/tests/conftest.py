import numpy as np
import pytest

from chainlab import ChainSpec, TransitionKernel, build_chain


def identity_kernel(n: int, mu=None) -> TransitionKernel:
    """The do-nothing chain; valid as a kernel (stationary, reversible)
    but reducible, so it cannot come out of build_chain."""
    if mu is None:
        mu = np.full(n, 1.0 / n)
    return TransitionKernel(rows=np.eye(n), mu=np.asarray(mu, dtype=float))


def averaging_kernel(mu) -> TransitionKernel:
    """The i.i.d. chain whose every row is mu (the rank-one averaging map)."""
    mu = np.asarray(mu, dtype=float)
    rows = np.tile(mu, (len(mu), 1))
    return TransitionKernel(rows=rows, mu=mu)


def random_reversible_kernel(n_states: int, seed: int) -> TransitionKernel:
    """Generic reversible chain: Metropolis filter of a cycle proposal
    targeting a random strictly positive distribution."""
    rng = np.random.default_rng(seed)
    target = rng.random(n_states) + 0.2
    spec = ChainSpec.metropolis(target, ChainSpec.cycle(n_states, 0.8))
    return build_chain(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
