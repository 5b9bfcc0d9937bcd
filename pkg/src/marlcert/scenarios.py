"""Worked example systems with known closed forms, plus a seeded generator.

Three hand-analyzed instances exercise the influence machinery from
different angles: `sleepy` couples two agents purely through one policy,
`leader-follower` couples them through the environment so strongly that no
policy can loosen it, and `hub-spoke` routes everything through one hub
agent whose softmax temperature tunes the coupling.  `random_instance`
produces portable pseudo-random instances for property tests.

Every closed form stored in a Scenario's `expected` table is reproduced by
the analysis pipeline in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mdp import (
    AgentKernel,
    FactoredMDP,
    Policy,
    ProductPolicy,
    SoftmaxPolicy,
    Space,
)

__all__ = [
    "SplitMix64",
    "Scenario",
    "scenario_sleepy",
    "scenario_leader_follower",
    "scenario_hub_spoke",
    "random_instance",
    "build_scenario",
    "SCENARIO_NAMES",
]


class SplitMix64:
    """Minimal splitmix64 stream: identical output on every platform.

    The update adds the 64-bit golden-ratio constant 0x9E3779B97F4A7C15 to
    the state; the output stage xors and multiplies by 0xBF58476D1CE4E5B9
    and 0x94D049BB133111EB (the standard finalizer).  `uniform` keeps the
    top 53 bits, so draws are exact binary64 values in [0, 1).
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniforms(self, *shape: int) -> np.ndarray:
        count = 1
        for z in shape:
            count *= int(z)
        out = np.array([self.uniform() for _ in range(count)])
        return out.reshape(shape)


@dataclass
class Scenario:
    """A ready-to-analyze instance with its hand-derived expected values.

    `expected` maps quantity names (matching report field names where
    possible) to closed-form values; `notes` says where they come from.
    """

    name: str
    mdp: FactoredMDP
    policy: Policy
    expected: dict = field(default_factory=dict)
    notes: str = ""


def _coin_kernel() -> AgentKernel:
    """Scope-free kernel: the agent's next state is a fair coin."""
    return AgentKernel(state_scope=(), action_scope=(),
                       table=np.array([[[0.5, 0.5]]]))


def _copy_bit_table() -> np.ndarray:
    """(1, 2, 2) table: next state deterministically equals the scoped bit."""
    return np.array([[[1.0, 0.0], [0.0, 1.0]]])


def _state_coordinate_reward(sizes: tuple[int, ...], action_sizes: tuple[int, ...],
                             weights: np.ndarray) -> np.ndarray:
    """Reward r(s, a) = sum_i weights[i] * s_i, independent of actions."""
    digits = Space(sizes).enumerate()
    r_s = digits @ np.asarray(weights, dtype=float)
    return np.repeat(r_s[:, None], Space(action_sizes).size, axis=1)


def scenario_sleepy(alpha: float) -> Scenario:
    """Two agents; agent 2's next state simply copies agent 1's action.

    Agent 1's own next state is a fair coin, so the only cross-agent path
    runs through agent 1's policy: it plays a state-dependent Bernoulli
    whose action law shifts by exactly alpha in total variation when s_1
    flips.  The closed-loop influence of s_1 on agent 2 is then exactly
    alpha, the environment bound is tight, and the influence matrix is
    nilpotent.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    mdp = FactoredMDP(
        state_sizes=(2, 2),
        action_sizes=(2, 2),
        kernels=(
            _coin_kernel(),
            AgentKernel(state_scope=(), action_scope=(0,), table=_copy_bit_table()),
        ),
        reward=_state_coordinate_reward((2, 2), (2, 2), np.array([0.0, 1.0])),
    )
    lo, hi = 0.5 - alpha / 2.0, 0.5 + alpha / 2.0
    policy = ProductPolicy(
        scopes=((0,), ()),
        tables=(np.array([[hi, lo], [lo, hi]]), np.array([[0.5, 0.5]])),
    )
    h_mat = np.array([[0.0, 0.0], [alpha, 0.0]])
    expected = {
        "state_sensitivity": np.zeros((2, 2)),
        "action_sensitivity": np.array([[0.0, 0.0], [1.0, 0.0]]),
        "policy_sensitivity": np.array([[alpha, 0.0], [0.0, 0.0]]),
        "interdependence": h_mat.copy(),
        "influence_bound": h_mat.copy(),
        "rho": 0.0,
        "certified": alpha < 1.0,
        "d": np.full(4, 0.25),
        "rbar": 0.5,
        "h": np.array([0.0, 1.0, alpha, 1.0 + alpha]),
        "b": np.array([0.0, 1.0]),
        "cert_radius_1": np.array([alpha, 1.0]),
        "async_uniform_matrix": np.array([[0.5, 0.0], [alpha / 2.0, 0.5]]),
        "async_uniform_rho": 0.5,
    }
    notes = ("All closed forms follow by hand: the chain mixes in two steps, "
             "the stationary law is uniform, and the anchored bias is "
             "alpha*s1 + s2.  The influence matrix has the single entry "
             "(2<-1) = alpha, so the certificate series terminates after one "
             "propagation round.")
    return Scenario(name="sleepy", mdp=mdp, policy=policy, expected=expected,
                    notes=notes)


def scenario_leader_follower() -> Scenario:
    """Two agents; agent 2's next state copies agent 1's current state.

    Actions are irrelevant, so no policy choice can weaken the coupling:
    the closed-loop influence of s_1 on agent 2 is exactly 1 under every
    policy, a single hop carrying undiminished influence.  The truncation
    machinery still runs (the matrix is nilpotent), but the certified flag
    stays false because oscillations pass through that hop at full
    strength.
    """
    mdp = FactoredMDP(
        state_sizes=(2, 2),
        action_sizes=(2, 2),
        kernels=(
            _coin_kernel(),
            AgentKernel(state_scope=(0,), action_scope=(),
                        table=np.moveaxis(_copy_bit_table(), 0, 1)),
        ),
        reward=_state_coordinate_reward((2, 2), (2, 2), np.array([0.0, 1.0])),
    )
    policy = ProductPolicy(
        scopes=((), ()),
        tables=(np.array([[0.5, 0.5]]), np.array([[0.5, 0.5]])),
    )
    h_mat = np.array([[0.0, 0.0], [1.0, 0.0]])
    expected = {
        "state_sensitivity": h_mat.copy(),
        "action_sensitivity": np.zeros((2, 2)),
        "policy_sensitivity": np.zeros((2, 2)),
        "interdependence": h_mat.copy(),
        "influence_bound": h_mat.copy(),
        "rho": 0.0,
        "certified": False,
        "d": np.full(4, 0.25),
        "rbar": 0.5,
        "h": np.array([0.0, 1.0, 1.0, 2.0]),
        "b": np.array([0.0, 1.0]),
        "cert_radius_1": np.array([1.0, 1.0]),
    }
    notes = ("The copy edge makes C(2<-1) = 1 for every policy; the reward "
             "tracks the follower's state so the bias oscillates by 1 in "
             "each coordinate, matching the radius-1 certificate exactly.")
    return Scenario(name="leader-follower", mdp=mdp, policy=policy,
                    expected=expected, notes=notes)


def scenario_hub_spoke(n: int, beta: float, tau: float) -> Scenario:
    """One hub agent drives every spoke; temperature controls the feedback.

    Spoke j's next state copies the hub's action bit; the hub's next state
    is a fair coin.  The hub plays a softmax over the parity of the full
    state with logit scale beta, so flipping any single coordinate moves
    the hub's logits by exactly beta.  Influence through the environment
    alone is maximal (each spoke row of the action-supremum baseline sums
    to 1), yet the policy-aware matrix has every entry equal to
    0.5*tanh(beta/(2 tau)) in the spoke rows and spectral radius
    (n-1) times that, which the temperature can bring far below 1.
    """
    n = int(n)
    if n < 3:
        raise ValidationError("hub-spoke needs n >= 3 agents")
    beta = float(beta)
    if beta < 0.0:
        raise ValidationError("beta must be nonnegative")
    tau = float(tau)
    if tau <= 0.0:
        raise ValidationError("temperature must be positive")
    state_sizes = (2,) * n
    action_sizes = (2,) * n
    kernels = [_coin_kernel()]
    for _ in range(1, n):
        kernels.append(AgentKernel(state_scope=(), action_scope=(0,),
                                   table=_copy_bit_table()))
    weights = np.concatenate([[0.0], np.full(n - 1, 1.0 / (n - 1))])
    mdp = FactoredMDP(
        state_sizes=state_sizes,
        action_sizes=action_sizes,
        kernels=tuple(kernels),
        reward=_state_coordinate_reward(state_sizes, action_sizes, weights),
    )
    parity = Space(state_sizes).enumerate().sum(axis=1) % 2
    hub_logits = np.stack([np.zeros(2 ** n), beta * parity], axis=1)
    scopes = [tuple(range(n))] + [()] * (n - 1)
    logits = [hub_logits] + [np.zeros((1, 2))] * (n - 1)
    policy = SoftmaxPolicy(scopes=tuple(scopes), logits=tuple(logits),
                           temperature=tau)
    pi_entry = 0.5 * math.tanh(beta / (2.0 * tau))
    e_a = np.zeros((n, n))
    e_a[1:, 0] = 1.0
    pi_mat = np.zeros((n, n))
    pi_mat[0, :] = pi_entry
    h_mat = np.zeros((n, n))
    h_mat[1:, :] = pi_entry
    rho = (n - 1) * pi_entry
    expected = {
        "state_sensitivity": np.zeros((n, n)),
        "action_sensitivity": e_a,
        "policy_sensitivity": pi_mat,
        "influence_bound": h_mat,
        "rho": rho,
        "rho_bound": (n - 1) * beta / (2.0 * tau),
        "logit_lipschitz_row_0": beta,
        "baseline_inf_norm": 1.0 if n > 1 else 0.0,
        "certified": rho < 1.0,
        # The hub's own state is an independent fair coin, so the parity it
        # reads is fair in stationarity and each spoke bit carries the mixed
        # action law: rbar = 1/4 + sigmoid(beta/tau)/2.
        "rbar": 0.25 + 0.5 / (1.0 + math.exp(-beta / tau)),
    }
    notes = ("Flipping one coordinate flips the parity, so the hub's action "
             "law shifts by |sigmoid(beta/tau) - 1/2| = 0.5*tanh(beta/(2 tau)) "
             "in total variation; the influence matrix is rank one with "
             "identical spoke rows, giving rho = (n-1)*0.5*tanh(beta/(2 tau)). "
             "The action-supremum baseline sees only the deterministic "
             "action-to-state copy and reports full influence regardless of "
             "temperature.")
    return Scenario(name="hub-spoke", mdp=mdp, policy=policy,
                    expected=expected, notes=notes)


def _ring_scope(center: int, n: int, radius: int) -> tuple[int, ...]:
    if radius >= (n - 1) // 2 + 1 or 2 * radius + 1 >= n:
        return tuple(range(n))
    return tuple(sorted((center + d) % n for d in range(-radius, radius + 1)))


def random_instance(seed: int, n: int, state_size: int, action_size: int,
                    scope_radius: int) -> Scenario:
    """Deterministic pseudo-random instance: ring-coupled agents.

    Agent j's kernel and policy read the radius-`scope_radius` ring
    neighborhood around j.  Kernel rows are floored at 0.1 before
    normalization so every transition has positive probability (the induced
    chain is then irreducible and aperiodic for free); rewards are uniform
    in [0, 1), policy logits uniform in [-1, 1) at temperature 1.  Equal
    seeds give bitwise-equal instances on any platform.
    """
    n = int(n)
    if n < 1:
        raise ValidationError("need at least one agent")
    state_size = int(state_size)
    action_size = int(action_size)
    if state_size < 1 or action_size < 1:
        raise ValidationError("state and action sizes must be >= 1")
    scope_radius = int(scope_radius)
    if scope_radius < 0:
        raise ValidationError("scope radius must be >= 0")
    rng = SplitMix64(seed)
    state_sizes = (state_size,) * n
    action_sizes = (action_size,) * n
    kernels = []
    for j in range(n):
        scope = _ring_scope(j, n, scope_radius)
        rows = state_size ** len(scope)
        cols = action_size ** len(scope)
        table = 0.1 + rng.uniforms(rows, cols, state_size)
        table /= table.sum(axis=2, keepdims=True)
        kernels.append(AgentKernel(state_scope=scope, action_scope=scope,
                                   table=table))
    reward = rng.uniforms(state_size ** n, action_size ** n)
    logits = []
    scopes = []
    for j in range(n):
        scope = _ring_scope(j, n, scope_radius)
        scopes.append(scope)
        logits.append(2.0 * rng.uniforms(state_size ** len(scope), action_size) - 1.0)
    mdp = FactoredMDP(state_sizes=state_sizes, action_sizes=action_sizes,
                      kernels=tuple(kernels), reward=reward)
    policy = SoftmaxPolicy(scopes=tuple(scopes), logits=tuple(logits),
                           temperature=1.0)
    return Scenario(
        name="random",
        mdp=mdp,
        policy=policy,
        expected={"seed": int(seed)},
        notes="No closed forms; used for property and regression tests.",
    )


SCENARIO_NAMES = ("sleepy", "leader-follower", "hub-spoke", "random")


def build_scenario(name: str, params: dict) -> Scenario:
    """Dispatch a scenario by CLI name, with defaults for omitted params."""
    params = dict(params)
    if name == "sleepy":
        out = scenario_sleepy(params.pop("alpha", 0.3))
    elif name == "leader-follower":
        out = scenario_leader_follower()
    elif name == "hub-spoke":
        out = scenario_hub_spoke(params.pop("n", 3), params.pop("beta", 1.0),
                                 params.pop("tau", 2.0))
    elif name == "random":
        out = random_instance(params.pop("seed", 1), params.pop("n", 3),
                              params.pop("state_size", 2),
                              params.pop("action_size", 2),
                              params.pop("scope_radius", 1))
    else:
        raise ValidationError(f"unknown scenario {name!r}; "
                              f"known: {', '.join(SCENARIO_NAMES)}")
    if params:
        raise ValidationError(f"unknown parameters for scenario {name!r}: "
                              f"{sorted(params)}")
    return out
