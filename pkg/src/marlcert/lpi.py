"""Localized policy improvement with truncated advantage estimates.

One outer iteration solves the chain once, builds a radius-kappa truncated
bias, and then updates every agent's block by a KL-proximal step against the
iteration-start policy.  Block updates are audited: the average-reward gain
of a one-block deviation must cover the expected KL movement minus the
truncation penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mdp as mdp_mod
from .errors import NumericalError, ReducibilityError, ValidationError
from .influence import InfluenceReport, influence_report
from .mdp import FactoredMDP, Policy, ProductPolicy, as_product_policy
from .poisson import (
    LocalityCertificate,
    PoissonSolution,
    locality_certificate,
    solve_poisson,
    stationary_distribution,
    truncated_poisson,
)

__all__ = [
    "AdvantageTable",
    "BlockUpdateRecord",
    "CyclicPassRecord",
    "IterationRecord",
    "LPITrace",
    "exact_advantage",
    "surrogate_advantage",
    "expected_local_logits",
    "kl_prox_update",
    "prox_duality_value",
    "kl_rows",
    "kl_anchored_objective",
    "entropy_objective",
    "block_improvement_check",
    "cyclic_pass_check",
    "lpi_iterate",
]

MEAN_ZERO_TOL = 1e-9
BLOCK_SLACK_TOL = 1e-9
DUALITY_TOL = 1e-10


@dataclass
class AdvantageTable:
    """Joint-action advantage values with the average reward they refer to."""

    values: np.ndarray
    flavor: str
    rbar_used: float


def _advantage_values(mdp: FactoredMDP, h: np.ndarray, rbar: float) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape != (mdp.state_space.size,):
        raise ValidationError("bias length does not match the state space")
    trans = mdp_mod.joint_transition(mdp)
    return mdp.reward - rbar + trans @ h - h[:, None]


def exact_advantage(mdp: FactoredMDP, pi: Policy, sol: PoissonSolution) -> AdvantageTable:
    """Exact advantage r - rbar + P h - h; policy-mean zero at every state."""
    pi = as_product_policy(pi)
    values = _advantage_values(mdp, sol.h, sol.rbar)
    w = pi.joint_table(mdp)
    worst = float(np.abs((w * values).sum(axis=1)).max())
    if worst > MEAN_ZERO_TOL:
        raise NumericalError(f"exact advantage mean {worst:.3e} above {MEAN_ZERO_TOL:.0e}")
    return AdvantageTable(values=values, flavor="exact", rbar_used=sol.rbar)


def surrogate_advantage(mdp: FactoredMDP, pi: Policy, cert, rbar: float) -> AdvantageTable:
    """Advantage built from a certificate's truncated bias.

    Mean-zero holds only approximately; the gap to the exact advantage is
    at most twice the aligned truncation error.  `cert` may be a full
    LocalityCertificate or anything exposing `h_hat`.
    """
    as_product_policy(pi).check(mdp)
    values = _advantage_values(mdp, cert.h_hat, float(rbar))
    return AdvantageTable(values=values, flavor="surrogate", rbar_used=float(rbar))


def expected_local_logits(mdp: FactoredMDP, pi: Policy, adv: AdvantageTable,
                          k: int) -> np.ndarray:
    """g_k(s, a_k): advantage averaged over the other agents' current actions."""
    pi = as_product_policy(pi)
    pi.check(mdp)
    n = mdp.n_agents
    if not 0 <= k < n:
        raise ValidationError(f"agent index {k} out of range")
    S = mdp.state_space.size
    g = adv.values.reshape((S,) + mdp.action_sizes)
    remaining = list(range(n))
    for j in reversed(range(n)):
        if j == k:
            continue
        ax = 1 + remaining.index(j)
        w = pi.state_rows(mdp, j)
        shape = [S] + [1] * (g.ndim - 1)
        shape[ax] = mdp.action_sizes[j]
        g = (g * w.reshape(shape)).sum(axis=ax)
        remaining.remove(j)
    return g.reshape(S, mdp.action_sizes[k])


def _check_rows(rows: np.ndarray, name: str) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValidationError(f"{name} must be 2-D")
    if (rows < 0).any() or np.abs(rows.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValidationError(f"{name} rows must be distributions")
    return rows


def kl_prox_update(pi_rows: np.ndarray, g_rows: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise KL-proximal step: new row proportional to pi * exp(g / tau).

    Zero entries stay zero; the exponent is shifted by the per-row support
    maximum so large logits cannot overflow.
    """
    pi_rows = _check_rows(pi_rows, "policy rows")
    g_rows = np.asarray(g_rows, dtype=float)
    if g_rows.shape != pi_rows.shape:
        raise ValidationError("logit rows must match policy rows")
    if not np.isfinite(g_rows).all():
        raise ValidationError("logit rows must be finite")
    tau = float(tau)
    if tau <= 0:
        raise ValidationError("tau must be positive")
    z = g_rows / tau
    support = pi_rows > 0
    shift = np.where(support, z, -np.inf).max(axis=1, keepdims=True)
    w = np.zeros_like(pi_rows)
    w[support] = pi_rows[support] * np.exp((z - shift)[support])
    return w / w.sum(axis=1, keepdims=True)


def prox_duality_value(q: np.ndarray, g: np.ndarray, tau: float):
    """Optimal value and maximizer of <p, g> - tau KL(p || q) over the simplex.

    Returns (tau * log sum_a q_a exp(g_a / tau), maximizer row); the
    maximizer is verified to clear <p - q, g> >= tau KL(p || q).
    """
    q = _check_rows(np.asarray(q, dtype=float)[None, :], "anchor")[0]
    g = np.asarray(g, dtype=float)
    if g.shape != q.shape:
        raise ValidationError("logits must match the anchor length")
    tau = float(tau)
    if tau <= 0:
        raise ValidationError("tau must be positive")
    z = g / tau
    support = q > 0
    m = float(z[support].max())
    value = tau * (m + np.log((q[support] * np.exp(z[support] - m)).sum()))
    p = kl_prox_update(q[None, :], g[None, :], tau)[0]
    gap = float((p - q) @ g - tau * kl_rows(p[None, :], q[None, :])[0])
    if gap < -DUALITY_TOL:
        raise NumericalError(f"prox maximizer failed its duality check by {gap:.3e}")
    return value, p


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q); +inf where p charges a q-null action."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2:
        raise ValidationError("kl_rows needs two equal-shape 2-D arrays")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=1)


def _entropy_rows(rows: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0, rows * np.log(rows), 0.0)
    return -terms.sum(axis=1)


def kl_anchored_objective(mdp: FactoredMDP, mu: Policy, pi: Policy, tau: float) -> float:
    """Average reward of mu minus tau times its stationary KL drift from pi.

    Returns -inf when mu charges an action that the anchor policy rules out
    at a visited state.
    """
    mu = as_product_policy(mu)
    pi = as_product_policy(pi)
    tau = float(tau)
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    kernel = mdp_mod.induced_kernel(mdp, mu)
    d = stationary_distribution(kernel)
    value = float(d @ mdp_mod.policy_reward(mdp, mu))
    for k in range(mdp.n_agents):
        kl = kl_rows(mu.state_rows(mdp, k), pi.state_rows(mdp, k))
        visited = d > 0
        if np.isinf(kl[visited]).any():
            return float("-inf")
        value -= tau * float(d[visited] @ kl[visited])
    return value


def entropy_objective(mdp: FactoredMDP, pi: Policy, tau: float) -> float:
    """Average reward plus tau times the stationary policy entropy."""
    pi = as_product_policy(pi)
    tau = float(tau)
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    kernel = mdp_mod.induced_kernel(mdp, pi)
    d = stationary_distribution(kernel)
    value = float(d @ mdp_mod.policy_reward(mdp, pi))
    for k in range(mdp.n_agents):
        value += tau * float(d @ _entropy_rows(pi.state_rows(mdp, k)))
    return value


@dataclass
class BlockUpdateRecord:
    """One audited KL-prox block update."""

    agent: int
    kappa: int
    tau: float
    logits: np.ndarray
    old_rows: np.ndarray
    new_rows: np.ndarray
    kl_per_state: np.ndarray
    expected_kl: float
    truncation_penalty: float
    improvement_lhs: float
    improvement_rhs: float
    kl_anchored_gain: float
    rbar_before: float
    rbar_after: float
    updated_policy: ProductPolicy

    @property
    def slack(self) -> float:
        return self.improvement_lhs - self.improvement_rhs


def _full_scope_policy(mdp: FactoredMDP, pi: ProductPolicy, k: int,
                       new_rows: np.ndarray) -> ProductPolicy:
    """Replace agent k's block with a table over the full joint state."""
    scopes = list(pi.scopes)
    tables = list(pi.tables)
    scopes[k] = tuple(range(mdp.n_agents))
    tables[k] = new_rows
    return ProductPolicy(scopes=tuple(scopes), tables=tuple(tables))


def block_improvement_check(mdp: FactoredMDP, pi: Policy, k: int, kappa: int,
                            tau: float) -> BlockUpdateRecord:
    """Update one agent's block and audit the improvement inequality.

    The updated block is the per-state KL-prox maximizer of the truncated
    advantage logits, so it generally depends on the whole joint state and
    is stored with full scope.  The audit demands

        rbar(mu) - rbar(pi) >= tau E_KL - 2 ||h_hat - h||_aligned

    with the exact bias on the right; violations beyond 1e-9 raise.
    """
    pi = as_product_policy(pi)
    pi.check(mdp)
    if not 0 <= k < mdp.n_agents:
        raise ValidationError(f"agent index {k} out of range")
    tau = float(tau)
    if tau <= 0:
        raise ValidationError("tau must be positive")
    kernel = mdp_mod.induced_kernel(mdp, pi)
    r_pi = mdp_mod.policy_reward(mdp, pi)
    sol = solve_poisson(kernel, r_pi)
    h_hat = truncated_poisson(kernel, r_pi, sol.rbar, kappa)
    adv = AdvantageTable(values=_advantage_values(mdp, h_hat, sol.rbar),
                         flavor="surrogate", rbar_used=sol.rbar)
    g_k = expected_local_logits(mdp, pi, adv, k)
    old_rows = pi.state_rows(mdp, k)
    new_rows = kl_prox_update(old_rows, g_k, tau)
    mu = _full_scope_policy(mdp, pi, k, new_rows)
    d_mu = stationary_distribution(mdp_mod.induced_kernel(mdp, mu))
    rbar_mu = float(d_mu @ mdp_mod.policy_reward(mdp, mu))
    kl_per_state = kl_rows(new_rows, old_rows)
    expected_kl = float(d_mu @ kl_per_state)
    err = h_hat - sol.h
    penalty = float(err.max() - err.min())  # 2x aligned sup distance
    lhs = rbar_mu - sol.rbar
    rhs = tau * expected_kl - penalty
    record = BlockUpdateRecord(
        agent=k,
        kappa=int(kappa),
        tau=tau,
        logits=g_k,
        old_rows=old_rows,
        new_rows=new_rows,
        kl_per_state=kl_per_state,
        expected_kl=expected_kl,
        truncation_penalty=penalty,
        improvement_lhs=lhs,
        improvement_rhs=rhs,
        kl_anchored_gain=(rbar_mu - tau * expected_kl) - sol.rbar,
        rbar_before=sol.rbar,
        rbar_after=rbar_mu,
        updated_policy=mu,
    )
    if record.slack < -BLOCK_SLACK_TOL:
        raise NumericalError(f"block improvement audit failed for agent {k}: "
                             f"lhs {lhs:.6e} < rhs {rhs:.6e}")
    return record


@dataclass
class CyclicPassRecord:
    """One full cycle of fresh block updates with the summed audit."""

    blocks: list[BlockUpdateRecord]
    improvement_lhs: float
    improvement_rhs: float
    final_policy: ProductPolicy

    @property
    def slack(self) -> float:
        return self.improvement_lhs - self.improvement_rhs


def cyclic_pass_check(mdp: FactoredMDP, pi: Policy, kappa: int, tau: float) -> CyclicPassRecord:
    """Sweep the agents once, refreshing the solve before every block.

    Summing the per-block audits telescopes into a bound for the whole pass:
    the total gain covers tau times the KL movement minus the per-block
    truncation penalties.
    """
    current = as_product_policy(pi)
    blocks: list[BlockUpdateRecord] = []
    for k in range(mdp.n_agents):
        rec = block_improvement_check(mdp, current, k, kappa, tau)
        blocks.append(rec)
        current = rec.updated_policy
    lhs = blocks[-1].rbar_after - blocks[0].rbar_before
    rhs = sum(b.tau * b.expected_kl for b in blocks) - sum(b.truncation_penalty
                                                           for b in blocks)
    record = CyclicPassRecord(blocks=blocks, improvement_lhs=lhs,
                              improvement_rhs=rhs, final_policy=current)
    if record.slack < -BLOCK_SLACK_TOL:
        raise NumericalError(f"cyclic pass audit failed: lhs {lhs:.6e} < rhs {rhs:.6e}")
    return record


@dataclass
class IterationRecord:
    """Snapshot of one outer iteration: stale certificate, fresh block audits."""

    index: int
    policy: ProductPolicy
    report: InfluenceReport
    certificate: LocalityCertificate
    average_reward: float
    entropy_value: float
    blocks: list[BlockUpdateRecord] = field(default_factory=list)


@dataclass
class LPITrace:
    iterations: list[IterationRecord]
    final_policy: ProductPolicy
    final_average_reward: float
    final_entropy_value: float


def lpi_iterate(mdp: FactoredMDP, pi0: Policy, kappa: int, tau: float,
                outer_iters: int) -> LPITrace:
    """Run the localized improvement loop for `outer_iters` iterations.

    Phase 1 of an iteration prices the iteration-start policy: influence
    matrices, message-passing certificate, truncated bias.  Phase 2 sweeps
    the agents; every block's logits are expectations under the
    iteration-start policy (stale within the sweep, by construction), and
    every block is audited before the sweep is assembled into the next
    policy.  Chains are re-checked each pass, so a policy that breaks unique
    recurrence aborts with a diagnostic.
    """
    if outer_iters < 0:
        raise ValidationError("iteration count must be >= 0")
    current = as_product_policy(pi0)
    iterations: list[IterationRecord] = []
    for it in range(int(outer_iters)):
        try:
            report = influence_report(mdp, current)
            cert = locality_certificate(mdp, current, kappa)
            rec = IterationRecord(
                index=it,
                policy=current,
                report=report,
                certificate=cert,
                average_reward=cert.solution.rbar,
                entropy_value=entropy_objective(mdp, current, tau),
            )
            new_tables = []
            for k in range(mdp.n_agents):
                block = block_improvement_check(mdp, current, k, kappa, tau)
                rec.blocks.append(block)
                new_tables.append(block.new_rows)
        except ReducibilityError as exc:
            raise ReducibilityError(f"iteration {it}: {exc}") from exc
        iterations.append(rec)
        current = ProductPolicy(
            scopes=tuple(tuple(range(mdp.n_agents)) for _ in range(mdp.n_agents)),
            tables=tuple(new_tables),
        )
    sol = solve_poisson(mdp_mod.induced_kernel(mdp, current),
                        mdp_mod.policy_reward(mdp, current))
    return LPITrace(
        iterations=iterations,
        final_policy=current,
        final_average_reward=sol.rbar,
        final_entropy_value=entropy_objective(mdp, current, tau),
    )
