"""Sensitivity and interdependence matrices for factored MDPs.

All matrices share one orientation: entry (j, i) measures how strongly
coordinate i influences coordinate j.  Oscillation therefore propagates
through the transpose: after one step of the closed-loop operator,
delta_i(T f) <= sum_j H[j, i] * delta_j(f).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mdp as mdp_mod
from .errors import ValidationError
from .mdp import FactoredMDP, Policy, ProductPolicy, SoftmaxPolicy, Space, as_product_policy
from .measures import oscillation, spectral_radius

__all__ = [
    "InfluenceReport",
    "AsyncInfluence",
    "env_state_sensitivity",
    "env_action_sensitivity",
    "policy_sensitivity",
    "logit_lipschitz",
    "softmax_pi_bound",
    "interdependence_exact",
    "worst_case_interdependence",
    "influence_bound",
    "propagate_oscillation",
    "one_step_oscillation_check",
    "influence_report",
    "async_influence",
    "async_kernel",
]


def _max_pairwise_tv(groups: np.ndarray) -> float:
    """groups: (G, m, d) rows of distributions; max TV over same-group pairs."""
    m = groups.shape[1]
    best = 0.0
    for x in range(m):
        for y in range(x + 1, m):
            d = 0.5 * np.abs(groups[:, x] - groups[:, y]).sum(axis=-1).max()
            best = max(best, float(d))
    return best


def _max_pairwise_sup(groups: np.ndarray) -> float:
    """Same scan but with the sup-norm of row differences (for logit tables)."""
    m = groups.shape[1]
    best = 0.0
    for x in range(m):
        for y in range(x + 1, m):
            d = np.abs(groups[:, x] - groups[:, y]).max()
            best = max(best, float(d))
    return best


def _pin_rows(table: np.ndarray, space: Space, scope: tuple[int, ...]) -> np.ndarray:
    """Reduce a densely stored first axis to its scope by pinning the rest to 0."""
    shaped = table.reshape(space.sizes + table.shape[1:])
    idx = tuple(slice(None) if c in scope else 0 for c in range(space.n))
    return shaped[idx].reshape((space.sub(scope).size,) + table.shape[1:])


def _scoped_table(kernel, state_space: Space, action_space: Space) -> np.ndarray:
    """Kernel table reduced to (scope states, scope actions, S_j)."""
    t = kernel.table
    if kernel.rows_dense(state_space):
        t = _pin_rows(t, state_space, kernel.state_scope)
    if kernel.cols_dense(action_space):
        t = np.moveaxis(_pin_rows(np.moveaxis(t, 1, 0), action_space, kernel.action_scope), 0, 1)
    return t


def _pair_axis(table: np.ndarray, sizes: tuple[int, ...], pos: int, last_dim: int) -> np.ndarray:
    """View (prod(sizes), ..., last_dim) as (groups, sizes[pos], last_dim).

    Everything except the flipped coordinate and the final distribution axis
    is folded into the group axis.
    """
    z = sizes[pos]
    pre = 1
    for s in sizes[:pos]:
        pre *= s
    post = 1
    for s in sizes[pos + 1:]:
        post *= s
    mid = table.size // (pre * z * post * last_dim)
    v = table.reshape(pre, z, post * mid, last_dim)
    v = v.swapaxes(1, 2).reshape(pre * post * mid, z, last_dim)
    return v


def _regroup_state(t: np.ndarray, scope_sizes: tuple[int, ...], pos: int, sj: int) -> np.ndarray:
    """(scope states, actions, sj) -> (groups, flip values, sj) for a state flip."""
    na = t.shape[1]
    z = scope_sizes[pos] if scope_sizes else 1
    pre = 1
    for s in scope_sizes[:pos]:
        pre *= s
    post = 1
    for s in scope_sizes[pos + 1:]:
        post *= s
    v = t.reshape(pre, z, post, na, sj)
    v = np.moveaxis(v, 1, 3)  # (pre, post, na, z, sj)
    return v.reshape(pre * post * na, z, sj)


def env_state_sensitivity(mdp: FactoredMDP) -> np.ndarray:
    """E^s: worst one-step TV of agent j's kernel under a single state flip."""
    n = mdp.n_agents
    out = np.zeros((n, n))
    for j, kern in enumerate(mdp.kernels):
        t = _scoped_table(kern, mdp.state_space, mdp.action_space)
        scope_sizes = tuple(mdp.state_sizes[c] for c in kern.state_scope)
        sj = t.shape[2]
        for pos, i in enumerate(kern.state_scope):
            out[j, i] = _max_pairwise_tv(_regroup_state(t, scope_sizes, pos, sj))
    return np.clip(out, 0.0, 1.0)


def _regroup_action(t: np.ndarray, ascope_sizes: tuple[int, ...], pos: int, sj: int) -> np.ndarray:
    na_pre = 1
    for s in ascope_sizes[:pos]:
        na_pre *= s
    z = ascope_sizes[pos]
    na_post = 1
    for s in ascope_sizes[pos + 1:]:
        na_post *= s
    ns = t.shape[0]
    v = t.reshape(ns, na_pre, z, na_post, sj)
    v = np.moveaxis(v, 2, 3)  # (ns, na_pre, na_post, z, sj)
    return v.reshape(ns * na_pre * na_post, z, sj)


def env_action_sensitivity(mdp: FactoredMDP) -> np.ndarray:
    """E^a: worst one-step TV of agent j's kernel under a single action flip."""
    n = mdp.n_agents
    out = np.zeros((n, n))
    for j, kern in enumerate(mdp.kernels):
        t = _scoped_table(kern, mdp.state_space, mdp.action_space)
        ascope_sizes = tuple(mdp.action_sizes[c] for c in kern.action_scope)
        sj = t.shape[2]
        for pos, k in enumerate(kern.action_scope):
            out[j, k] = _max_pairwise_tv(_regroup_action(t, ascope_sizes, pos, sj))
    return np.clip(out, 0.0, 1.0)


def policy_sensitivity(mdp: FactoredMDP, pi: Policy) -> np.ndarray:
    """Pi: worst TV of agent k's action rule under a single observed-state flip."""
    pi = as_product_policy(pi)
    pi.check(mdp)
    n = mdp.n_agents
    out = np.zeros((n, n))
    for k in range(n):
        scope = pi.scopes[k]
        table = pi.tables[k]
        scope_sizes = tuple(mdp.state_sizes[c] for c in scope)
        for pos, i in enumerate(scope):
            groups = _pair_axis(table, scope_sizes, pos, table.shape[1])
            out[k, i] = _max_pairwise_tv(groups)
    return np.clip(out, 0.0, 1.0)


def logit_lipschitz(sp: SoftmaxPolicy, mdp: FactoredMDP) -> np.ndarray:
    """L: worst sup-norm change of agent k's logit row under a state flip.

    Entry (k, i) is zero whenever i is outside agent k's observation scope.
    """
    if not isinstance(sp, SoftmaxPolicy):
        raise ValidationError("logit_lipschitz needs a softmax policy")
    n = mdp.n_agents
    out = np.zeros((n, n))
    for k in range(n):
        scope = sp.scopes[k]
        g = sp.logits[k]
        scope_sizes = tuple(mdp.state_sizes[c] for c in scope)
        for pos, i in enumerate(scope):
            groups = _pair_axis(g, scope_sizes, pos, g.shape[1])
            out[k, i] = _max_pairwise_sup(groups)
    return out


def softmax_pi_bound(lipschitz: np.ndarray, temperature: float) -> np.ndarray:
    """Closed-form bound Pi <= min(1, L / (2 tau)) for softmax policies."""
    lipschitz = np.asarray(lipschitz, dtype=float)
    temperature = float(temperature)
    if temperature <= 0:
        raise ValidationError("temperature must be positive")
    return np.minimum(1.0, lipschitz / (2.0 * temperature))


def _policy_marginals(mdp: FactoredMDP, pi: ProductPolicy) -> list[np.ndarray]:
    """Closed-loop per-agent marginals P^pi_j(. | s), each (|S|, S_j)."""
    w = pi.joint_table(mdp)
    return [np.einsum("sa,say->sy", w, mdp.dense_kernel(j)) for j in range(mdp.n_agents)]


def interdependence_exact(mdp: FactoredMDP, pi: Policy) -> np.ndarray:
    """C^pi: worst TV of the closed-loop marginal of j under a state-i flip."""
    pi = as_product_policy(pi)
    pi.check(mdp)
    n = mdp.n_agents
    out = np.zeros((n, n))
    for j, marg in enumerate(_policy_marginals(mdp, pi)):
        for i in range(n):
            if mdp.state_sizes[i] == 1:
                continue
            groups = _pair_axis(marg, mdp.state_sizes, i, marg.shape[1])
            out[j, i] = _max_pairwise_tv(groups)
    return np.clip(out, 0.0, 1.0)


def worst_case_interdependence(mdp: FactoredMDP) -> np.ndarray:
    """Policy-free baseline: flip coordinate i's state and action together.

    Entry (j, i) is the worst TV of agent j's kernel when both s_i and a_i
    may change, every other coordinate held fixed.  This is the classical
    action-supremum certificate; it ignores how any actual policy reacts.
    """
    n = mdp.n_agents
    out = np.zeros((n, n))
    for j, kern in enumerate(mdp.kernels):
        t = _scoped_table(kern, mdp.state_space, mdp.action_space)
        sscope, ascope = kern.state_scope, kern.action_scope
        s_sizes = tuple(mdp.state_sizes[c] for c in sscope)
        a_sizes = tuple(mdp.action_sizes[c] for c in ascope)
        sj = t.shape[2]
        arr = t.reshape(*s_sizes, *a_sizes, sj)
        for i in range(n):
            pair_axes = []
            if i in sscope:
                pair_axes.append(sscope.index(i))
            if i in ascope:
                pair_axes.append(len(s_sizes) + ascope.index(i))
            if not pair_axes:
                continue
            dest = range(arr.ndim - 1 - len(pair_axes), arr.ndim - 1)
            v = np.moveaxis(arr, pair_axes, dest)
            pair = 1
            for z in v.shape[arr.ndim - 1 - len(pair_axes):-1]:
                pair *= z
            out[j, i] = _max_pairwise_tv(v.reshape(-1, pair, sj))
    return np.minimum(out, 1.0)


def influence_bound(e_s: np.ndarray, e_a: np.ndarray, pi_mat: np.ndarray) -> np.ndarray:
    """H = E^s + E^a Pi, the one-step oscillation propagation bound."""
    e_s = np.asarray(e_s, dtype=float)
    e_a = np.asarray(e_a, dtype=float)
    pi_mat = np.asarray(pi_mat, dtype=float)
    if e_s.shape != e_a.shape or e_s.shape != pi_mat.shape:
        raise ValidationError("sensitivity matrices must share one shape")
    return e_s + e_a @ pi_mat


def propagate_oscillation(h: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """One propagation step: entry i collects sum_j H[j, i] * delta_j."""
    return np.asarray(h, dtype=float).T @ np.asarray(delta, dtype=float)


def one_step_oscillation_check(mdp: FactoredMDP, pi: Policy, f: np.ndarray):
    """Exact delta(T^pi f) next to its propagated bound.  Returns (lhs, rhs)."""
    pi = as_product_policy(pi)
    kernel = mdp_mod.induced_kernel(mdp, pi)
    lhs = oscillation(kernel @ np.asarray(f, dtype=float), mdp.state_sizes)
    h = influence_bound(env_state_sensitivity(mdp), env_action_sensitivity(mdp),
                        policy_sensitivity(mdp, pi))
    rhs = propagate_oscillation(h, oscillation(f, mdp.state_sizes))
    return lhs, rhs


@dataclass
class InfluenceReport:
    """Every sensitivity matrix for one (mdp, policy) pair, plus summaries.

    For softmax policies the report also carries the temperature-driven
    closed forms: the entrywise bound min(1, L/(2 tau)) on the policy
    sensitivity and the spectral radius of H built from that bound.
    """

    state_sensitivity: np.ndarray
    action_sensitivity: np.ndarray
    policy_sensitivity: np.ndarray
    interdependence: np.ndarray
    influence_bound: np.ndarray
    action_supremum: np.ndarray
    rho: float
    decomposition_slack: float
    policy_sensitivity_bound: np.ndarray | None = None
    rho_bound: float | None = None

    @property
    def certified(self) -> bool:
        """True when influence decays: rho < 1 and no single hop carries TV 1."""
        return bool(self.rho < 1.0 and self.influence_bound.max() < 1.0)


def influence_report(mdp: FactoredMDP, pi: Policy) -> InfluenceReport:
    pi_bound = None
    rho_bound = None
    if isinstance(pi, SoftmaxPolicy):
        pi_bound = softmax_pi_bound(logit_lipschitz(pi, mdp), pi.temperature)
    pi = as_product_policy(pi)
    e_s = env_state_sensitivity(mdp)
    e_a = env_action_sensitivity(mdp)
    pi_mat = policy_sensitivity(mdp, pi)
    c = interdependence_exact(mdp, pi)
    h = influence_bound(e_s, e_a, pi_mat)
    if pi_bound is not None:
        rho_bound = spectral_radius(influence_bound(e_s, e_a, pi_bound))
    return InfluenceReport(
        state_sensitivity=e_s,
        action_sensitivity=e_a,
        policy_sensitivity=pi_mat,
        interdependence=c,
        influence_bound=h,
        action_supremum=worst_case_interdependence(mdp),
        rho=spectral_radius(h),
        decomposition_slack=float((c - h).max()),
        policy_sensitivity_bound=pi_bound,
        rho_bound=rho_bound,
    )


@dataclass
class AsyncInfluence:
    """Influence bound for single-site updates drawn from `site_probs`."""

    site_probs: np.ndarray
    matrix: np.ndarray
    rho: float


def _check_site_probs(nu, n: int) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (n,):
        raise ValidationError("site distribution length must equal the agent count")
    if (nu <= 0).any() or abs(nu.sum() - 1.0) > 1e-12:
        raise ValidationError("site distribution must have full support and sum to 1")
    return nu


def async_influence(e_s: np.ndarray, e_a: np.ndarray, pi_mat: np.ndarray,
                    nu) -> AsyncInfluence:
    """M = (I - diag nu) + diag nu (E^s + E^a Pi) for one-site-at-a-time updates."""
    h = influence_bound(e_s, e_a, pi_mat)
    nu = _check_site_probs(nu, h.shape[0])
    m = np.diag(1.0 - nu) + nu[:, None] * h
    return AsyncInfluence(site_probs=nu, matrix=m, rho=spectral_radius(m))


def async_kernel(mdp: FactoredMDP, pi: Policy, nu) -> np.ndarray:
    """Exact asynchronous chain: draw site j ~ nu, resample only coordinate j."""
    pi = as_product_policy(pi)
    pi.check(mdp)
    nu = _check_site_probs(nu, mdp.n_agents)
    space = mdp.state_space
    S = space.size
    digits = space.enumerate()
    k = np.zeros((S, S))
    rows = np.arange(S)
    for j, marg in enumerate(_policy_marginals(mdp, pi)):
        stride = space.strides[j]
        base = rows - digits[:, j] * stride
        for y in range(mdp.state_sizes[j]):
            np.add.at(k, (rows, base + y * stride), nu[j] * marg[:, y])
    return k
