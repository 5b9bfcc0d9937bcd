"""Finite factored MDPs with per-agent kernels and product-form policies.

Joint states and actions are flat indices in mixed-radix order with agent 0
as the most significant digit.  Kernels and policy tables may be stored over
a declared coordinate scope only; expanding a scoped table to the full joint
space is a pure gather, so scoped and dense representations produce
bitwise-identical numbers everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import CapExceededError, ValidationError

__all__ = [
    "DEFAULT_EVAL_CAP",
    "Space",
    "AgentKernel",
    "FactoredMDP",
    "ProductPolicy",
    "SoftmaxPolicy",
    "ValidationReport",
    "StateFunction",
    "as_product_policy",
    "validate",
    "induced_kernel",
    "joint_transition",
    "policy_reward",
    "materialize_softmax",
    "apply_operator",
]

# Joint |S| * |A| budget: ops refuse instances that would enumerate more
# kernel evaluations than this.
DEFAULT_EVAL_CAP = 10**6

# A state function is a plain float vector over joint state indices.
StateFunction = np.ndarray

ROW_SUM_TOL = 1e-12


def _as_sizes(sizes: Iterable[int]) -> tuple[int, ...]:
    out = tuple(int(z) for z in sizes)
    if any(z < 1 for z in out):
        raise ValidationError(f"coordinate sizes must be >= 1, got {out}")
    return out


class Space:
    """Mixed-radix indexer for a product of finite coordinates.

    Coordinate 0 is the most significant digit, so flat indices agree with
    numpy's C-order raveling of an array of shape ``sizes``.
    """

    __slots__ = ("sizes", "size", "strides", "_digits")

    def __init__(self, sizes: Iterable[int]):
        self.sizes = _as_sizes(sizes)
        size = 1
        strides = []
        for z in reversed(self.sizes):
            strides.append(size)
            size *= z
        self.size = size
        self.strides = tuple(reversed(strides))
        self._digits = None

    @property
    def n(self) -> int:
        return len(self.sizes)

    def index(self, digits: Sequence[int]) -> int:
        if len(digits) != self.n:
            raise ValidationError("digit count does not match coordinate count")
        idx = 0
        for d, z, stride in zip(digits, self.sizes, self.strides):
            if not 0 <= d < z:
                raise ValidationError(f"digit {d} out of range for size {z}")
            idx += d * stride
        return idx

    def digits(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ValidationError(f"index {index} out of range for size {self.size}")
        out = []
        for z, stride in zip(self.sizes, self.strides):
            out.append((index // stride) % z)
        return tuple(out)

    def enumerate(self) -> np.ndarray:
        """All digit tuples as an int array of shape (size, n)."""
        if self._digits is None:
            cols = [
                (np.arange(self.size) // stride) % z
                for z, stride in zip(self.sizes, self.strides)
            ]
            if cols:
                self._digits = np.stack(cols, axis=1)
            else:
                self._digits = np.zeros((1, 0), dtype=int)
        return self._digits

    def sub(self, coords: Sequence[int]) -> "Space":
        return Space([self.sizes[c] for c in coords])

    def project(self, coords: Sequence[int]) -> np.ndarray:
        """Map every full index to its flat index over `coords` (ascending)."""
        for c in coords:
            if not 0 <= c < self.n:
                raise ValidationError(f"scope coordinate {c} out of range")
        digits = self.enumerate()
        idx = np.zeros(self.size, dtype=int)
        for c in coords:
            idx = idx * self.sizes[c] + digits[:, c]
        return idx


def _check_scope(scope: Sequence[int], n: int, what: str) -> tuple[int, ...]:
    out = tuple(int(c) for c in scope)
    if any(not 0 <= c < n for c in out):
        raise ValidationError(f"{what} scope {out} has coordinates outside 0..{n - 1}")
    if len(set(out)) != len(out) or list(out) != sorted(out):
        raise ValidationError(f"{what} scope {out} must be sorted and duplicate-free")
    return out


@dataclass(eq=False)
class AgentKernel:
    """Next-state law of one agent: a table over its declared scopes.

    ``table`` has shape (rows, cols, S_j): rows index joint states over
    ``state_scope`` (or over the full state space when stored densely), cols
    likewise for actions, and the last axis is a distribution over the
    agent's own next state.  A densely stored table with a narrower declared
    scope is legal; `validate` then checks that the table really is constant
    in the out-of-scope coordinates.
    """

    state_scope: tuple[int, ...]
    action_scope: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 3:
            raise ValidationError("kernel table must have 3 axes (states, actions, next)")

    def rows_dense(self, space: Space) -> bool:
        return self.table.shape[0] == space.size

    def cols_dense(self, space: Space) -> bool:
        return self.table.shape[1] == space.size

    def expand(self, state_space: Space, action_space: Space) -> np.ndarray:
        """Gather the table up to shape (|S|, |A|, S_j).  No arithmetic."""
        t = self.table
        if not self.rows_dense(state_space):
            t = t[state_space.project(self.state_scope)]
        if not self.cols_dense(action_space):
            t = t[:, action_space.project(self.action_scope)]
        return t


def _scoped_shape_ok(kernel: AgentKernel, state_space: Space, action_space: Space) -> bool:
    srows = state_space.sub(kernel.state_scope).size
    acols = action_space.sub(kernel.action_scope).size
    rows_ok = kernel.table.shape[0] in (srows, state_space.size)
    cols_ok = kernel.table.shape[1] in (acols, action_space.size)
    return rows_ok and cols_ok


@dataclass(eq=False)
class FactoredMDP:
    """Per-agent state/action sizes, one scoped kernel per agent, joint reward."""

    state_sizes: tuple[int, ...]
    action_sizes: tuple[int, ...]
    kernels: tuple[AgentKernel, ...]
    reward: np.ndarray
    eval_cap: int = DEFAULT_EVAL_CAP

    def __post_init__(self):
        self.state_sizes = _as_sizes(self.state_sizes)
        self.action_sizes = _as_sizes(self.action_sizes)
        if len(self.action_sizes) != self.n_agents:
            raise ValidationError("state_sizes and action_sizes must have equal length")
        self.kernels = tuple(self.kernels)
        if len(self.kernels) != self.n_agents:
            raise ValidationError("need exactly one kernel per agent")
        cap = int(self.eval_cap)
        if self.state_space.size * self.action_space.size > cap:
            raise CapExceededError(
                f"joint space needs {self.state_space.size * self.action_space.size} "
                f"kernel evaluations, cap is {cap}"
            )
        for j, k in enumerate(self.kernels):
            _check_scope(k.state_scope, self.n_agents, f"kernel {j} state")
            _check_scope(k.action_scope, self.n_agents, f"kernel {j} action")
            if not _scoped_shape_ok(k, self.state_space, self.action_space):
                raise ValidationError(f"kernel {j} table shape {k.table.shape} matches neither "
                                      "its scope nor the full joint space")
            if k.table.shape[2] != self.state_sizes[j]:
                raise ValidationError(f"kernel {j} next-state axis has size "
                                      f"{k.table.shape[2]}, expected {self.state_sizes[j]}")
        self.reward = np.asarray(self.reward, dtype=float)
        if self.reward.shape != (self.state_space.size, self.action_space.size):
            raise ValidationError(f"reward shape {self.reward.shape} does not match joint "
                                  f"({self.state_space.size}, {self.action_space.size})")

    @property
    def n_agents(self) -> int:
        return len(self.state_sizes)

    @cached_property
    def state_space(self) -> Space:
        return Space(self.state_sizes)

    @cached_property
    def action_space(self) -> Space:
        return Space(self.action_sizes)

    def dense_kernel(self, j: int) -> np.ndarray:
        return self.kernels[j].expand(self.state_space, self.action_space)


@dataclass(eq=False)
class ProductPolicy:
    """Product policy: agent k draws its action from a table over scope O_k."""

    scopes: tuple[tuple[int, ...], ...]
    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        self.scopes = tuple(tuple(int(c) for c in sc) for sc in self.scopes)
        self.tables = tuple(np.asarray(t, dtype=float) for t in self.tables)
        if len(self.scopes) != len(self.tables):
            raise ValidationError("need one scope per policy table")
        for t in self.tables:
            if t.ndim != 2:
                raise ValidationError("policy tables must be 2-D (scope states, actions)")

    @property
    def n_agents(self) -> int:
        return len(self.tables)

    def violations(self, mdp: FactoredMDP) -> list[str]:
        out = []
        if self.n_agents != mdp.n_agents:
            return [f"policy has {self.n_agents} agents, mdp has {mdp.n_agents}"]
        for k, (scope, table) in enumerate(zip(self.scopes, self.tables)):
            try:
                _check_scope(scope, mdp.n_agents, f"policy {k}")
            except ValidationError as exc:
                out.append(str(exc))
                continue
            want = (mdp.state_space.sub(scope).size, mdp.action_sizes[k])
            if table.shape != want:
                out.append(f"policy {k} table shape {table.shape}, expected {want}")
                continue
            if not np.isfinite(table).all() or (table < 0).any():
                out.append(f"policy {k} table has negative or non-finite entries")
            bad = np.abs(table.sum(axis=1) - 1.0) > ROW_SUM_TOL
            if bad.any():
                out.append(f"policy {k} rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        return out

    def check(self, mdp: FactoredMDP) -> None:
        problems = self.violations(mdp)
        if problems:
            raise ValidationError("; ".join(problems))

    def state_rows(self, mdp: FactoredMDP, k: int) -> np.ndarray:
        """Agent k's action distribution at every joint state, shape (|S|, A_k)."""
        return self.tables[k][mdp.state_space.project(self.scopes[k])]

    def joint_table(self, mdp: FactoredMDP) -> np.ndarray:
        """Joint action weights W(s, a) = prod_k pi_k(a_k | s), shape (|S|, |A|)."""
        S = mdp.state_space.size
        w = np.ones((S, 1))
        for k in range(self.n_agents):
            rows = self.state_rows(mdp, k)
            w = (w[:, :, None] * rows[:, None, :]).reshape(S, -1)
        return w


@dataclass(eq=False)
class SoftmaxPolicy:
    """Per-agent logits over scoped states; rows are softmaxed at temperature tau."""

    scopes: tuple[tuple[int, ...], ...]
    logits: tuple[np.ndarray, ...]
    temperature: float = 1.0

    def __post_init__(self):
        self.scopes = tuple(tuple(int(c) for c in sc) for sc in self.scopes)
        self.logits = tuple(np.asarray(g, dtype=float) for g in self.logits)
        self.temperature = float(self.temperature)
        if self.temperature <= 0:
            raise ValidationError("softmax temperature must be positive")
        for g in self.logits:
            if g.ndim != 2 or not np.isfinite(g).all():
                raise ValidationError("logit tables must be finite 2-D arrays")

    @property
    def n_agents(self) -> int:
        return len(self.logits)

    def materialize(self) -> ProductPolicy:
        return materialize_softmax(self)


Policy = Union[ProductPolicy, SoftmaxPolicy]


def as_product_policy(pi: Policy) -> ProductPolicy:
    return pi.materialize() if isinstance(pi, SoftmaxPolicy) else pi


def softmax_rows(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of logits / temperature, stabilized by a row max shift."""
    z = np.asarray(logits, dtype=float) / float(temperature)
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def materialize_softmax(pi: SoftmaxPolicy) -> ProductPolicy:
    """Turn a softmax policy into explicit tables.  Deterministic arithmetic."""
    tables = tuple(softmax_rows(g, pi.temperature) for g in pi.logits)
    return ProductPolicy(scopes=pi.scopes, tables=tables)


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __str__(self) -> str:
        return "clean" if self.ok else "\n".join(self.problems)


def _constancy_violations(dense: np.ndarray, space: Space, scope: tuple[int, ...],
                          axis_name: str, j: int) -> list[str]:
    """Check a densely stored table is constant off its declared scope."""
    out = []
    shaped = dense.reshape(space.sizes + dense.shape[1:])
    for c in range(space.n):
        if c in scope or space.sizes[c] == 1:
            continue
        ref = np.take(shaped, [0], axis=c)
        if not (shaped == ref).all():
            out.append(f"kernel {j} varies with out-of-scope {axis_name} coordinate {c}")
    return out


def validate(mdp: FactoredMDP) -> ValidationReport:
    """Structural checks: stochastic rows, nonnegativity, scope constancy.

    Returns a report listing every violation; an empty report certifies the
    instance clean.
    """
    problems: list[str] = []
    for j, k in enumerate(mdp.kernels):
        t = k.table
        if not np.isfinite(t).all():
            problems.append(f"kernel {j} has non-finite entries")
            continue
        if (t < 0).any():
            problems.append(f"kernel {j} has negative entries")
        sums = t.sum(axis=2)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            where = np.argwhere(bad)[0]
            problems.append(f"kernel {j} row (state={where[0]}, action={where[1]}) "
                            f"sums to {sums[tuple(where)]!r}")
        if k.rows_dense(mdp.state_space) and len(k.state_scope) < mdp.n_agents:
            problems += _constancy_violations(t, mdp.state_space, k.state_scope, "state", j)
        if k.cols_dense(mdp.action_space) and len(k.action_scope) < mdp.n_agents:
            moved = np.moveaxis(t, 1, 0)
            problems += _constancy_violations(moved, mdp.action_space, k.action_scope,
                                              "action", j)
    if not np.isfinite(mdp.reward).all():
        problems.append("reward table has non-finite entries")
    return ValidationReport(problems)


def joint_transition(mdp: FactoredMDP) -> np.ndarray:
    """Joint next-state law P(s' | s, a) as an (|S|, |A|, |S|) array.

    The product over agents is accumulated most-significant-first so the
    flattened next-state axis follows the mixed-radix order.
    """
    S, A = mdp.state_space.size, mdp.action_space.size
    out = np.ones((S, A, 1))
    for j in range(mdp.n_agents):
        d = mdp.dense_kernel(j)
        out = (out[:, :, :, None] * d[:, :, None, :]).reshape(S, A, -1)
    return out


def induced_kernel(mdp: FactoredMDP, pi: Policy) -> np.ndarray:
    """Closed-loop state kernel P^pi(s' | s) = sum_a pi(a|s) P(s'|s,a)."""
    pi = as_product_policy(pi)
    pi.check(mdp)
    w = pi.joint_table(mdp)
    return np.einsum("sa,sax->sx", w, joint_transition(mdp))


def policy_reward(mdp: FactoredMDP, pi: Policy) -> np.ndarray:
    """Expected one-step reward under the policy, r^pi(s)."""
    pi = as_product_policy(pi)
    pi.check(mdp)
    return np.einsum("sa,sa->s", pi.joint_table(mdp), mdp.reward)


def apply_operator(kernel: np.ndarray, f: StateFunction) -> np.ndarray:
    """One application of the transition operator, (T f)(s) = E[f(S') | s]."""
    kernel = np.asarray(kernel, dtype=float)
    f = np.asarray(f, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValidationError("kernel must be a square matrix")
    if f.shape != (kernel.shape[0],):
        raise ValidationError("function length does not match kernel size")
    return kernel @ f
