"""Average-reward Poisson solutions and truncated locality certificates.

The closed-loop chain is solved exactly (dense linear algebra) and the
certificate side truncates the oscillation propagation series after kappa
rounds.  Certificates come in two bitwise-identical flavours: a dense matrix
recursion and a message-passing sweep over the influence support graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import mdp as mdp_mod
from .errors import NumericalError, ReducibilityError, ValidationError
from .influence import influence_bound, influence_report, propagate_oscillation
from .mdp import FactoredMDP, Policy, as_product_policy
from .measures import oscillation, power_norm_constant, spectral_radius

__all__ = [
    "PoissonSolution",
    "SupportGraph",
    "LocalityCertificate",
    "stationary_distribution",
    "solve_poisson",
    "support_graph",
    "truncated_certificate",
    "certificate_message_passing",
    "truncated_poisson",
    "bias_and_cert_bounds",
    "neumann_oscillation_bound",
    "locality_certificate",
    "decay_table",
    "discounted_rate",
    "required_radius",
    "discounted_contraction_check",
]

STATIONARY_TOL = 1e-10
POISSON_TOL = 1e-9
LAMBDA_PAD = 1e-9
POWER_T_MAX = 64


def _check_kernel(kernel: np.ndarray) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValidationError("state kernel must be square")
    if (kernel < 0).any() or not np.isfinite(kernel).all():
        raise ValidationError("state kernel entries must be finite and nonnegative")
    if np.abs(kernel.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValidationError("state kernel rows must sum to 1")
    return kernel


def _class_period(adj: np.ndarray, states: np.ndarray) -> int:
    """Period of a strongly connected class: gcd of level defects over edges."""
    inside = np.zeros(adj.shape[0], dtype=bool)
    inside[states] = True
    level = {int(states[0]): 0}
    frontier = [int(states[0])]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                v = int(v)
                if inside[v] and v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u in states:
        for v in np.flatnonzero(adj[int(u)]):
            v = int(v)
            if inside[v]:
                g = math.gcd(g, level[int(u)] + 1 - level[v])
    return g


def recurrent_class(kernel: np.ndarray) -> np.ndarray:
    """States of the unique closed communicating class, aperiodicity checked.

    Raises ReducibilityError naming the failing check when the chain has
    several closed classes (no unique stationary law) or a periodic
    recurrent class.  Transient states outside the class are fine; they
    carry zero stationary mass.
    """
    kernel = _check_kernel(kernel)
    adj = kernel > 0.0
    n_comp, labels = connected_components(csr_matrix(adj), directed=True,
                                          connection="strong")
    closed = np.ones(n_comp, dtype=bool)
    src, dst = np.nonzero(adj)
    for s, t in zip(src, dst):
        if labels[s] != labels[t]:
            closed[labels[s]] = False
    hits = np.flatnonzero(closed)
    if len(hits) != 1:
        raise ReducibilityError(
            f"unique-recurrent-class check failed: found {len(hits)} closed "
            f"communicating classes, need exactly 1")
    states = np.flatnonzero(labels == hits[0])
    period = _class_period(adj, states)
    if period != 1:
        raise ReducibilityError(
            f"aperiodicity check failed: recurrent class has period {period}")
    return states


def stationary_distribution(kernel: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of the closed-loop chain.

    Dense linear solve of d^T P = d^T with a normalization row; the result
    is checked to residual 1e-10.
    """
    kernel = _check_kernel(kernel)
    recurrent_class(kernel)
    n = kernel.shape[0]
    a = kernel.T - np.eye(n)
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    d = np.linalg.solve(a, rhs)
    d = np.where(d < 0.0, 0.0, d)
    d = d / d.sum()
    residual = float(np.abs(d @ kernel - d).sum())
    if residual > STATIONARY_TOL:
        raise NumericalError(f"stationary solve residual {residual:.3e} above "
                             f"{STATIONARY_TOL:.0e}")
    return d


@dataclass
class PoissonSolution:
    """Stationary law d, average reward rbar, and anchored bias h."""

    d: np.ndarray
    rbar: float
    h: np.ndarray
    residual: float
    anchor: int


def solve_poisson(kernel: np.ndarray, r_pi: np.ndarray, anchor: int = 0) -> PoissonSolution:
    """Solve h - P h = r - rbar with h(anchor) = 0.

    The average reward comes from the stationary law; the bias solve stacks
    the Poisson equations with the anchor row and is verified to residual
    1e-9.  Solutions for two anchors differ by a constant.
    """
    kernel = _check_kernel(kernel)
    r_pi = np.asarray(r_pi, dtype=float)
    n = kernel.shape[0]
    if r_pi.shape != (n,):
        raise ValidationError("reward vector length does not match kernel")
    if not 0 <= anchor < n:
        raise ValidationError(f"anchor state {anchor} out of range")
    d = stationary_distribution(kernel)
    rbar = float(d @ r_pi)
    g = r_pi - rbar
    a = np.vstack([np.eye(n) - kernel, np.zeros((1, n))])
    a[-1, anchor] = 1.0
    rhs = np.concatenate([g, [0.0]])
    h = np.linalg.lstsq(a, rhs, rcond=None)[0]
    h = h - h[anchor]
    residual = float(np.abs(h - kernel @ h - g).max())
    if residual > POISSON_TOL:
        raise NumericalError(f"Poisson residual {residual:.3e} above {POISSON_TOL:.0e}")
    return PoissonSolution(d=d, rbar=rbar, h=h, residual=residual, anchor=anchor)


@dataclass(frozen=True)
class SupportGraph:
    """Directed influence support: edge i -> j when H[j, i] clears the threshold."""

    n: int
    threshold: float
    out_neighbors: tuple[tuple[int, ...], ...]
    in_neighbors: tuple[tuple[int, ...], ...]

    def ball(self, i: int, radius: int, direction: str = "in") -> tuple[int, ...]:
        """Nodes within `radius` hops of i.

        direction="in" collects ancestors (nodes whose influence can reach i
        within the radius); "out" collects descendants instead.
        """
        if not 0 <= i < self.n:
            raise ValidationError(f"node {i} out of range")
        if direction not in ("in", "out"):
            raise ValidationError("direction must be 'in' or 'out'")
        neigh = self.in_neighbors if direction == "in" else self.out_neighbors
        seen = {i}
        frontier = [i]
        for _ in range(int(radius)):
            nxt = []
            for u in frontier:
                for v in neigh[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            if not nxt:
                break
            frontier = nxt
        return tuple(sorted(seen))


def support_graph(h: np.ndarray, threshold: float = 0.0) -> SupportGraph:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError("influence matrix must be square")
    if (h < 0).any():
        raise ValidationError("influence matrix must be nonnegative")
    n = h.shape[0]
    outs = tuple(tuple(int(j) for j in np.flatnonzero(h[:, i] > threshold))
                 for i in range(n))
    ins = tuple(tuple(int(i) for i in np.flatnonzero(h[j, :] > threshold))
                for j in range(n))
    return SupportGraph(n=n, threshold=float(threshold),
                        out_neighbors=outs, in_neighbors=ins)


def _check_cert_inputs(h: np.ndarray, b: np.ndarray, kappa: int):
    h = np.asarray(h, dtype=float)
    b = np.asarray(b, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError("influence matrix must be square")
    if b.shape != (h.shape[0],):
        raise ValidationError("oscillation vector length does not match matrix")
    if (h < 0).any() or (b < 0).any():
        raise ValidationError("certificate inputs must be nonnegative")
    if kappa < 0:
        raise ValidationError("kappa must be >= 0")
    return h, b, int(kappa)


def _pull_round(h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One propagation round with a fixed left-to-right summation order."""
    n = len(u)
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += h[j, i] * u[j]
        out[i] = acc
    return out


def truncated_certificate(h: np.ndarray, b: np.ndarray, kappa: int) -> np.ndarray:
    """Propagated oscillation budget: sum of the first kappa+1 series terms.

    Term t+1 pulls term t through the influence matrix; summation order is
    fixed so the message-passing variant can reproduce it bit for bit.
    """
    h, b, kappa = _check_cert_inputs(h, b, kappa)
    u = b.copy()
    total = b.copy()
    for _ in range(kappa):
        u = _pull_round(h, u)
        total = total + u
    return total


def certificate_message_passing(graph: SupportGraph, h: np.ndarray, b: np.ndarray,
                                kappa: int) -> np.ndarray:
    """Certificate via local message exchange on the support graph.

    Each round, node i pulls the current value of every node it influences
    (its out-neighbors, ascending) and reweights by the edge strength, so
    entry i only ever reads data within its radius-kappa reach.  With the
    default zero threshold the output is bitwise identical to
    `truncated_certificate`.
    """
    h, b, kappa = _check_cert_inputs(h, b, kappa)
    if graph.n != h.shape[0]:
        raise ValidationError("graph size does not match influence matrix")
    for i in range(graph.n):
        edges = set(graph.out_neighbors[i])
        support = set(int(j) for j in np.flatnonzero(h[:, i] > graph.threshold))
        if edges != support:
            raise ValidationError(f"support graph is inconsistent with the matrix at "
                                  f"node {i}: edges {sorted(edges)} vs support "
                                  f"{sorted(support)}")
    u = b.copy()
    total = b.copy()
    for _ in range(kappa):
        new = np.zeros(graph.n)
        for i in range(graph.n):
            acc = 0.0
            for j in graph.out_neighbors[i]:
                acc += h[j, i] * u[j]
            new[i] = acc
        u = new
        total = total + u
    return total


def truncated_poisson(kernel: np.ndarray, r_pi: np.ndarray, rbar: float,
                      kappa: int, anchor: int = 0) -> np.ndarray:
    """Truncated bias: sum_{t<=kappa} T^t (r - rbar), re-anchored exactly."""
    kernel = _check_kernel(kernel)
    r_pi = np.asarray(r_pi, dtype=float)
    if r_pi.shape != (kernel.shape[0],):
        raise ValidationError("reward vector length does not match kernel")
    if kappa < 0:
        raise ValidationError("kappa must be >= 0")
    g = r_pi - float(rbar)
    term = g.copy()
    acc = g.copy()
    for _ in range(int(kappa)):
        term = kernel @ term
        acc = acc + term
    return acc - acc[anchor]


def bias_and_cert_bounds(c_est: float, lam: float, kappa: int, b: np.ndarray,
                         delta_r: np.ndarray) -> tuple[float, float]:
    """Truncation bounds from the measured power constant.

    Returns (bias_bound, cert_gap_bound): the first controls the aligned
    sup-distance between truncated and exact bias via the l1 norm of the
    reward oscillation delta_r, the second the sup norm of the dropped
    certificate tail via the max entry of b.  In practice b and delta_r are
    the same vector; both are accepted so each bound reads exactly as
    stated.
    """
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValidationError("decay rate must lie in (0, 1) for finite bounds")
    if c_est < 1.0:
        raise ValidationError("power constant below 1 is impossible (t = 0 term)")
    b = np.asarray(b, dtype=float)
    delta_r = np.asarray(delta_r, dtype=float)
    tail = lam ** (int(kappa) + 1) / (1.0 - lam)
    bias_bound = 0.5 * c_est * tail * float(np.abs(delta_r).sum())
    gap_bound = c_est * tail * float(b.max()) if b.size else 0.0
    return bias_bound, gap_bound


def neumann_oscillation_bound(h: np.ndarray, reward_oscillation: np.ndarray) -> np.ndarray:
    """Closed-form bound on delta(bias): (I - H^T)^{-1} delta(r^pi).

    Only meaningful when rho(H) < 1; otherwise the series diverges and this
    raises.
    """
    h = np.asarray(h, dtype=float)
    if spectral_radius(h) >= 1.0:
        raise ValidationError("Neumann bound needs rho(H) < 1")
    b = np.asarray(reward_oscillation, dtype=float)
    return np.linalg.solve(np.eye(h.shape[0]) - h.T, b)


@dataclass
class LocalityCertificate:
    """Truncated certificate plus the decay data that justifies it.

    When rho >= 1 the finite sums are still present but the geometric
    bounds are unavailable (None) and `certified` is False.
    """

    kappa: int
    cert: np.ndarray
    h_hat: np.ndarray
    b: np.ndarray
    rho: float
    lam: float
    certified: bool
    c_est: Optional[float]
    bias_bound: Optional[float]
    cert_gap_bound: Optional[float]
    solution: PoissonSolution


def locality_certificate(mdp: FactoredMDP, pi: Policy, kappa: int,
                         threshold: float = 0.0) -> LocalityCertificate:
    """Full certificate pipeline for one policy at truncation radius kappa."""
    pi = as_product_policy(pi)
    report = influence_report(mdp, pi)
    h_mat = report.influence_bound
    kernel = mdp_mod.induced_kernel(mdp, pi)
    r_pi = mdp_mod.policy_reward(mdp, pi)
    sol = solve_poisson(kernel, r_pi)
    b = oscillation(r_pi, mdp.state_sizes)
    graph = support_graph(h_mat, threshold)
    cert = certificate_message_passing(graph, h_mat, b, kappa)
    h_hat = truncated_poisson(kernel, r_pi, sol.rbar, kappa)
    lam = report.rho + LAMBDA_PAD
    if lam < 1.0:
        c_est = max(power_norm_constant(h_mat, lam, POWER_T_MAX),
                    power_norm_constant(h_mat.T, lam, POWER_T_MAX))
        bias_bound, gap_bound = bias_and_cert_bounds(c_est, lam, kappa, b, b)
    else:
        c_est = bias_bound = gap_bound = None
    return LocalityCertificate(
        kappa=int(kappa),
        cert=cert,
        h_hat=h_hat,
        b=b,
        rho=report.rho,
        lam=lam,
        certified=report.certified,
        c_est=c_est,
        bias_bound=bias_bound,
        cert_gap_bound=gap_bound,
        solution=sol,
    )


def decay_table(mdp: FactoredMDP, pi: Policy, kappa: int) -> list[dict]:
    """Per-radius decay rows for reporting and plotting.

    Each row carries the certificate sup norm, the geometric bounds (when
    available), and the measured truncation errors against the exact
    solution.
    """
    pi = as_product_policy(pi)
    report = influence_report(mdp, pi)
    h_mat = report.influence_bound
    kernel = mdp_mod.induced_kernel(mdp, pi)
    r_pi = mdp_mod.policy_reward(mdp, pi)
    sol = solve_poisson(kernel, r_pi)
    b = oscillation(r_pi, mdp.state_sizes)
    delta_h = oscillation(sol.h, mdp.state_sizes)
    lam = report.rho + LAMBDA_PAD
    c_est = None
    if lam < 1.0:
        c_est = max(power_norm_constant(h_mat, lam, POWER_T_MAX),
                    power_norm_constant(h_mat.T, lam, POWER_T_MAX))
    rows = []
    for k in range(int(kappa) + 1):
        cert = truncated_certificate(h_mat, b, k)
        h_hat = truncated_poisson(kernel, r_pi, sol.rbar, k)
        diff = h_hat - sol.h
        measured_bias = 0.5 * float(diff.max() - diff.min())
        measured_gap = float(np.maximum(delta_h - cert, 0.0).max())
        if c_est is not None:
            bias_bound, gap_bound = bias_and_cert_bounds(c_est, lam, k, b, b)
        else:
            bias_bound = gap_bound = None
        rows.append({
            "kappa": k,
            "certificate_sup": float(cert.max()) if cert.size else 0.0,
            "measured_bias": measured_bias,
            "bias_bound": bias_bound,
            "measured_gap": measured_gap,
            "cert_gap_bound": gap_bound,
        })
    return rows


def discounted_rate(gamma: float, rho: float) -> float:
    """Decay rate of the discounted variant: gamma * rho."""
    gamma = float(gamma)
    rho = float(rho)
    if not 0.0 < gamma <= 1.0:
        raise ValidationError("discount factor must lie in (0, 1]")
    if rho < 0.0:
        raise ValidationError("spectral radius cannot be negative")
    return gamma * rho


def required_radius(lam: float, eps: float) -> int:
    """Smallest integer kappa with lam^kappa <= eps."""
    lam = float(lam)
    eps = float(eps)
    if not 0.0 < lam < 1.0:
        raise ValidationError("decay rate must lie in (0, 1) for a finite radius")
    if not 0.0 < eps < 1.0:
        raise ValidationError("tolerance must lie in (0, 1)")
    k = max(1, math.ceil(math.log(eps) / math.log(lam)))
    while lam ** k > eps:
        k += 1
    while k > 0 and lam ** (k - 1) <= eps:
        k -= 1
    return k


def discounted_contraction_check(mdp: FactoredMDP, pi: Policy, gamma: float,
                                 f: np.ndarray):
    """delta(gamma T f) next to the gamma-scaled propagated bound."""
    from .influence import env_action_sensitivity, env_state_sensitivity, policy_sensitivity

    gamma = float(gamma)
    if not 0.0 < gamma <= 1.0:
        raise ValidationError("discount factor must lie in (0, 1]")
    pi = as_product_policy(pi)
    kernel = mdp_mod.induced_kernel(mdp, pi)
    lhs = gamma * oscillation(kernel @ np.asarray(f, dtype=float), mdp.state_sizes)
    h = influence_bound(env_state_sensitivity(mdp), env_action_sensitivity(mdp),
                        policy_sensitivity(mdp, pi))
    rhs = gamma * propagate_oscillation(h, oscillation(f, mdp.state_sizes))
    return lhs, rhs
