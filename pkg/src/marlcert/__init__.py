"""Influence-aware analysis of factored multi-agent average-reward MDPs.

The package measures how strongly agents influence one another through
the environment and through their policies, certifies when that influence
decays fast enough for truncated local computations to be accurate, and
runs a KL-regularized block policy improvement loop whose per-block gains
are checked against the certified truncation error.
"""

from .errors import (
    CapExceededError,
    InstanceFormatError,
    MarlcertError,
    NumericalError,
    ReducibilityError,
    ValidationError,
)
from .influence import (
    AsyncInfluence,
    InfluenceReport,
    async_influence,
    async_kernel,
    env_action_sensitivity,
    env_state_sensitivity,
    influence_bound,
    influence_report,
    interdependence_exact,
    logit_lipschitz,
    one_step_oscillation_check,
    policy_sensitivity,
    propagate_oscillation,
    softmax_pi_bound,
    worst_case_interdependence,
)
from .instance_io import (
    INSTANCE_SCHEMA,
    REPORT_SCHEMA,
    TOOL_VERSION,
    InstanceDoc,
    dump_instance,
    instance_to_dict,
    load_instance,
    matrix_from_dict,
    matrix_to_dict,
    parse_instance,
    policy_to_dict,
    provenance_block,
    write_matrices_csv,
    write_report,
    write_rows_csv,
)
from .lpi import (
    AdvantageTable,
    BlockUpdateRecord,
    CyclicPassRecord,
    IterationRecord,
    LPITrace,
    block_improvement_check,
    cyclic_pass_check,
    entropy_objective,
    exact_advantage,
    expected_local_logits,
    kl_anchored_objective,
    kl_prox_update,
    kl_rows,
    lpi_iterate,
    prox_duality_value,
    surrogate_advantage,
)
from .mdp import (
    DEFAULT_EVAL_CAP,
    AgentKernel,
    FactoredMDP,
    Policy,
    ProductPolicy,
    SoftmaxPolicy,
    Space,
    ValidationReport,
    apply_operator,
    as_product_policy,
    induced_kernel,
    joint_transition,
    materialize_softmax,
    policy_reward,
    validate,
)
from .measures import (
    aligned_sup_distance,
    global_oscillation,
    inf_norm,
    oscillation,
    power_norm_constant,
    spectral_radius,
    tv,
)
from .poisson import (
    LocalityCertificate,
    PoissonSolution,
    SupportGraph,
    bias_and_cert_bounds,
    certificate_message_passing,
    decay_table,
    discounted_contraction_check,
    discounted_rate,
    locality_certificate,
    neumann_oscillation_bound,
    recurrent_class,
    required_radius,
    solve_poisson,
    stationary_distribution,
    support_graph,
    truncated_certificate,
    truncated_poisson,
)
from .scenarios import (
    SCENARIO_NAMES,
    Scenario,
    SplitMix64,
    build_scenario,
    random_instance,
    scenario_hub_spoke,
    scenario_leader_follower,
    scenario_sleepy,
)

__version__ = TOOL_VERSION

__all__ = [
    "__version__",
    # errors
    "MarlcertError",
    "ValidationError",
    "InstanceFormatError",
    "CapExceededError",
    "ReducibilityError",
    "NumericalError",
    # mdp
    "DEFAULT_EVAL_CAP",
    "Space",
    "AgentKernel",
    "FactoredMDP",
    "ProductPolicy",
    "SoftmaxPolicy",
    "Policy",
    "ValidationReport",
    "validate",
    "as_product_policy",
    "materialize_softmax",
    "joint_transition",
    "induced_kernel",
    "policy_reward",
    "apply_operator",
    # measures
    "tv",
    "oscillation",
    "global_oscillation",
    "aligned_sup_distance",
    "spectral_radius",
    "inf_norm",
    "power_norm_constant",
    # influence
    "InfluenceReport",
    "AsyncInfluence",
    "env_state_sensitivity",
    "env_action_sensitivity",
    "policy_sensitivity",
    "interdependence_exact",
    "worst_case_interdependence",
    "influence_bound",
    "influence_report",
    "logit_lipschitz",
    "softmax_pi_bound",
    "propagate_oscillation",
    "one_step_oscillation_check",
    "async_influence",
    "async_kernel",
    # poisson
    "PoissonSolution",
    "LocalityCertificate",
    "SupportGraph",
    "recurrent_class",
    "stationary_distribution",
    "solve_poisson",
    "support_graph",
    "truncated_certificate",
    "certificate_message_passing",
    "truncated_poisson",
    "neumann_oscillation_bound",
    "bias_and_cert_bounds",
    "locality_certificate",
    "decay_table",
    "discounted_rate",
    "required_radius",
    "discounted_contraction_check",
    # lpi
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
    # scenarios
    "Scenario",
    "SplitMix64",
    "SCENARIO_NAMES",
    "scenario_sleepy",
    "scenario_leader_follower",
    "scenario_hub_spoke",
    "random_instance",
    "build_scenario",
    # io
    "INSTANCE_SCHEMA",
    "REPORT_SCHEMA",
    "TOOL_VERSION",
    "InstanceDoc",
    "parse_instance",
    "load_instance",
    "instance_to_dict",
    "dump_instance",
    "matrix_from_dict",
    "matrix_to_dict",
    "policy_to_dict",
    "provenance_block",
    "write_matrices_csv",
    "write_rows_csv",
    "write_report",
]
