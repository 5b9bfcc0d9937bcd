"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from marlcert import ProductPolicy, SoftmaxPolicy, random_instance


def small_instances(count, start_seed=0, n=3, state_size=2, action_size=2,
                    scope_radius=1):
    """Deterministic list of (mdp, softmax policy) pairs for sweeps."""
    out = []
    for k in range(count):
        sc = random_instance(seed=start_seed + k, n=n, state_size=state_size,
                             action_size=action_size, scope_radius=scope_radius)
        out.append((sc.mdp, sc.policy))
    return out


def random_product_policy(mdp, rng, scopes=None):
    """Product policy with Dirichlet-ish rows drawn from a numpy Generator."""
    if scopes is None:
        scopes = tuple((k,) for k in range(mdp.n_agents))
    tables = []
    for k, scope in enumerate(scopes):
        rows = mdp.state_space.sub(scope).size
        t = rng.random((rows, mdp.action_sizes[k])) + 0.05
        tables.append(t / t.sum(axis=1, keepdims=True))
    return ProductPolicy(scopes=tuple(scopes), tables=tuple(tables))


def random_softmax_policy(mdp, rng, temperature, scopes=None):
    if scopes is None:
        scopes = tuple((k,) for k in range(mdp.n_agents))
    logits = []
    for k, scope in enumerate(scopes):
        rows = mdp.state_space.sub(scope).size
        logits.append(rng.uniform(-1.0, 1.0, size=(rows, mdp.action_sizes[k])))
    return SoftmaxPolicy(scopes=tuple(scopes), logits=tuple(logits),
                         temperature=temperature)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
