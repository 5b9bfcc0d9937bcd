"""Strict JSON schemas for instances and analysis reports, plus CSV export.

An instance file fully describes one factored MDP and one policy.  Parsing
is strict: unknown keys are rejected at every level so typos cannot be
silently skipped, and every table is shape-checked against the declared
sizes.  Serialization relies on Python's shortest-round-trip float repr, so
parse -> serialize -> parse is the identity bit for bit.

All matrices are written row-major inside a wrapper that names the
orientation (rows = influenced coordinate, columns = influencing
coordinate); reports carry a provenance block with the input hash and tool
version so outputs are reproducible and attributable.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import InstanceFormatError
from .mdp import AgentKernel, FactoredMDP, Policy, ProductPolicy, SoftmaxPolicy

__all__ = [
    "INSTANCE_SCHEMA",
    "REPORT_SCHEMA",
    "TOOL_VERSION",
    "InstanceDoc",
    "parse_instance",
    "load_instance",
    "instance_to_dict",
    "policy_to_dict",
    "dump_instance",
    "matrix_to_dict",
    "matrix_from_dict",
    "provenance_block",
    "write_report",
    "write_matrices_csv",
    "write_rows_csv",
]

INSTANCE_SCHEMA = "factored-mdp-instance/1"
REPORT_SCHEMA = "factored-mdp-report/1"
MATRIX_ORIENTATION = "rows=influenced, cols=influencing"

try:
    TOOL_VERSION = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    TOOL_VERSION = "0.1.0"


def _require_keys(d: dict, what: str, required: tuple[str, ...],
                  optional: tuple[str, ...] = ()) -> None:
    if not isinstance(d, dict):
        raise InstanceFormatError(f"{what} must be a JSON object")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise InstanceFormatError(f"{what} has unknown keys {unknown}")
    missing = sorted(set(required) - set(d))
    if missing:
        raise InstanceFormatError(f"{what} is missing keys {missing}")


def _int_list(x, what: str) -> list[int]:
    if not isinstance(x, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                          for v in x):
        raise InstanceFormatError(f"{what} must be a list of integers")
    return list(x)


def _table(x, what: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{what} is not a numeric table: {exc}") from None
    if arr.shape != shape:
        raise InstanceFormatError(f"{what} has shape {arr.shape}, expected {shape}")
    if not np.isfinite(arr).all():
        raise InstanceFormatError(f"{what} contains non-finite entries")
    return arr


@dataclass
class InstanceDoc:
    """One parsed instance file: the system, the policy, and loose metadata."""

    mdp: FactoredMDP
    policy: Policy
    name: str = ""
    expected: dict = field(default_factory=dict)
    notes: str = ""


def _parse_policy(d: dict, mdp: FactoredMDP) -> Policy:
    _require_keys(d, "policy", ("type", "scopes"),
                  ("tables", "logits", "temperature"))
    scopes_raw = d["scopes"]
    if not isinstance(scopes_raw, list) or len(scopes_raw) != mdp.n_agents:
        raise InstanceFormatError("policy scopes must list one scope per agent")
    scopes = tuple(tuple(_int_list(sc, f"policy scope {k}"))
                   for k, sc in enumerate(scopes_raw))
    shapes = []
    for k, sc in enumerate(scopes):
        if any(not 0 <= c < mdp.n_agents for c in sc):
            raise InstanceFormatError(f"policy scope {k} out of range")
        rows = 1
        for c in sc:
            rows *= mdp.state_sizes[c]
        shapes.append((rows, mdp.action_sizes[k]))
    if d["type"] == "product":
        if "tables" not in d or "logits" in d or "temperature" in d:
            raise InstanceFormatError("a product policy needs exactly the 'tables' key")
        tables = d["tables"]
        if not isinstance(tables, list) or len(tables) != mdp.n_agents:
            raise InstanceFormatError("policy tables must list one table per agent")
        return ProductPolicy(scopes=scopes, tables=tuple(
            _table(t, f"policy table {k}", shapes[k]) for k, t in enumerate(tables)))
    if d["type"] == "softmax":
        if "logits" not in d or "temperature" not in d or "tables" in d:
            raise InstanceFormatError(
                "a softmax policy needs exactly the 'logits' and 'temperature' keys")
        logits = d["logits"]
        if not isinstance(logits, list) or len(logits) != mdp.n_agents:
            raise InstanceFormatError("policy logits must list one table per agent")
        return SoftmaxPolicy(
            scopes=scopes,
            logits=tuple(_table(g, f"policy logits {k}", shapes[k])
                         for k, g in enumerate(logits)),
            temperature=float(d["temperature"]),
        )
    raise InstanceFormatError(f"unknown policy type {d['type']!r}")


def parse_instance(doc: dict, eval_cap: int | None = None) -> InstanceDoc:
    """Build the in-memory instance from a decoded JSON document."""
    _require_keys(doc, "instance", ("schema", "agents", "kernels", "reward", "policy"),
                  ("name", "expected", "notes", "provenance"))
    if doc["schema"] != INSTANCE_SCHEMA:
        raise InstanceFormatError(f"unsupported schema {doc['schema']!r}, "
                                  f"expected {INSTANCE_SCHEMA!r}")
    agents = doc["agents"]
    _require_keys(agents, "agents", ("state_sizes", "action_sizes"))
    state_sizes = _int_list(agents["state_sizes"], "state_sizes")
    action_sizes = _int_list(agents["action_sizes"], "action_sizes")
    n = len(state_sizes)
    if len(action_sizes) != n:
        raise InstanceFormatError("state_sizes and action_sizes must have equal length")
    if any(z < 1 for z in state_sizes + action_sizes):
        raise InstanceFormatError("all sizes must be >= 1")

    kernels_raw = doc["kernels"]
    if not isinstance(kernels_raw, list) or len(kernels_raw) != n:
        raise InstanceFormatError("kernels must list one entry per agent")
    kernels = []
    for j, kd in enumerate(kernels_raw):
        _require_keys(kd, f"kernel {j}", ("state_scope", "action_scope", "table"))
        sscope = tuple(_int_list(kd["state_scope"], f"kernel {j} state_scope"))
        ascope = tuple(_int_list(kd["action_scope"], f"kernel {j} action_scope"))
        rows = 1
        for c in sscope:
            if not 0 <= c < n:
                raise InstanceFormatError(f"kernel {j} state_scope out of range")
            rows *= state_sizes[c]
        cols = 1
        for c in ascope:
            if not 0 <= c < n:
                raise InstanceFormatError(f"kernel {j} action_scope out of range")
            cols *= action_sizes[c]
        table = _table(kd["table"], f"kernel {j} table", (rows, cols, state_sizes[j]))
        kernels.append(AgentKernel(state_scope=sscope, action_scope=ascope, table=table))

    S = int(np.prod(state_sizes))
    A = int(np.prod(action_sizes))
    reward_raw = doc["reward"]
    _require_keys(reward_raw, "reward", (), ("table", "summands"))
    if ("table" in reward_raw) == ("summands" in reward_raw):
        raise InstanceFormatError("reward needs exactly one of 'table' or 'summands'")
    if "table" in reward_raw:
        reward = _table(reward_raw["table"], "reward table", (S, A))
    else:
        parts = reward_raw["summands"]
        if not isinstance(parts, list) or not parts:
            raise InstanceFormatError("reward summands must be a non-empty list")
        reward = np.zeros((S, A))
        for idx, part in enumerate(parts):
            reward = reward + _table(part, f"reward summand {idx}", (S, A))

    kwargs = {} if eval_cap is None else {"eval_cap": int(eval_cap)}
    mdp = FactoredMDP(state_sizes=tuple(state_sizes), action_sizes=tuple(action_sizes),
                      kernels=tuple(kernels), reward=reward, **kwargs)
    policy = _parse_policy(doc["policy"], mdp)

    name = doc.get("name", "")
    if not isinstance(name, str):
        raise InstanceFormatError("name must be a string")
    notes = doc.get("notes", "")
    if not isinstance(notes, str):
        raise InstanceFormatError("notes must be a string")
    expected = doc.get("expected", {})
    if not isinstance(expected, dict):
        raise InstanceFormatError("expected must be an object")
    return InstanceDoc(mdp=mdp, policy=policy, name=name, expected=expected,
                       notes=notes)


def load_instance(path, eval_cap: int | None = None) -> InstanceDoc:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"not valid JSON: {exc}") from None
    return parse_instance(doc, eval_cap=eval_cap)


def _listify(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def policy_to_dict(policy: Policy) -> dict:
    if isinstance(policy, SoftmaxPolicy):
        return {
            "type": "softmax",
            "scopes": [list(sc) for sc in policy.scopes],
            "logits": [_listify(g) for g in policy.logits],
            "temperature": policy.temperature,
        }
    return {
        "type": "product",
        "scopes": [list(sc) for sc in policy.scopes],
        "tables": [_listify(t) for t in policy.tables],
    }


def _expected_to_jsonable(expected: dict) -> dict:
    out = {}
    for key, value in expected.items():
        if isinstance(value, np.ndarray):
            out[key] = value.tolist()
        elif isinstance(value, (np.floating, np.integer)):
            out[key] = value.item()
        elif isinstance(value, (bool, np.bool_)):
            out[key] = bool(value)
        else:
            out[key] = value
    return out


def instance_to_dict(mdp: FactoredMDP, policy: Policy, name: str = "",
                     expected: dict | None = None, notes: str = "") -> dict:
    doc = {
        "schema": INSTANCE_SCHEMA,
        "agents": {
            "state_sizes": list(mdp.state_sizes),
            "action_sizes": list(mdp.action_sizes),
        },
        "kernels": [
            {
                "state_scope": list(k.state_scope),
                "action_scope": list(k.action_scope),
                "table": _listify(k.table),
            }
            for k in mdp.kernels
        ],
        "reward": {"table": _listify(mdp.reward)},
        "policy": policy_to_dict(policy),
    }
    if name:
        doc["name"] = name
    if expected:
        doc["expected"] = _expected_to_jsonable(expected)
    if notes:
        doc["notes"] = notes
    return doc


def dump_instance(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def matrix_to_dict(m: np.ndarray) -> dict:
    """Wrap a matrix with its orientation so transposes cannot drift."""
    return {"orientation": MATRIX_ORIENTATION, "rows": _listify(m)}


def matrix_from_dict(d: dict) -> np.ndarray:
    _require_keys(d, "matrix", ("orientation", "rows"))
    if d["orientation"] != MATRIX_ORIENTATION:
        raise InstanceFormatError(f"unknown matrix orientation {d['orientation']!r}")
    return np.asarray(d["rows"], dtype=float)


def provenance_block(input_path=None, seed: int | None = None) -> dict:
    """Input hash + tool version (+ seed) for report reproducibility."""
    out = {"tool": "marlcert", "version": TOOL_VERSION}
    if input_path is not None:
        digest = hashlib.sha256(Path(input_path).read_bytes()).hexdigest()
        out["input_sha256"] = digest
        out["input_path"] = str(input_path)
    if seed is not None:
        out["seed"] = int(seed)
    return out


def write_report(report: dict, path) -> None:
    """Write a report document; refuses non-finite numbers."""
    doc = dict(report)
    doc.setdefault("schema", REPORT_SCHEMA)
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def write_matrices_csv(matrices: dict[str, np.ndarray], path) -> None:
    """Long-format CSV: one line per matrix entry."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["matrix", "influenced", "influencing", "value"])
        for name, m in matrices.items():
            m = np.asarray(m, dtype=float)
            for j in range(m.shape[0]):
                for i in range(m.shape[1]):
                    writer.writerow([name, j, i, repr(float(m[j, i]))])


def write_rows_csv(rows: list[dict], path) -> None:
    """CSV from a list of uniform dicts (e.g. the per-radius decay table)."""
    if not rows:
        Path(path).write_text("")
        return
    names = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow(["" if row[k] is None else
                             (repr(float(row[k])) if isinstance(row[k], float)
                              else row[k])
                             for k in names])
