"""Quantitative protocol composition logic toolkit.

Modules:

* ``lang``    — protocol DSL: terms, values, patterns, parsing.
* ``runtime`` — probabilistic operational semantics and execution trees.
* ``logic``   — trace formulas, conditional (belief) formulas, evaluation.
* ``bounds``  — symbolic error expressions and concrete evaluation.
* ``proof``   — the derivation checker (trusted kernel).
* ``monitor`` — executable soundness monitors and experiments.
* ``scenario``/``cli`` — artifact plumbing.
"""

from .bounds import (
    BoundParams,
    BoundTable,
    EpsilonExpr,
    eps_fs2,
    eps_ver,
    eval_epsilon,
    parse_epsilon,
)
from .lang import parse_protocol
from .logic import (
    check_conditional,
    erase,
    holds,
    measure,
    parse_conditional,
    parse_formula,
    prob,
    universal_closure,
)
from .monitor import (
    ExperimentReport,
    InstrumentedSetup,
    instrument_fs2,
    instrument_ver,
    monitor_biconditional,
    run_experiment,
)
from .proof import Verdict, check_axiom_instance, check_proof, check_proof_text, parse_script
from .runtime import build_tree, initial_config, sample_traces, trace_prob, traces, tree_measure
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = [
    "BoundParams", "BoundTable", "EpsilonExpr", "eps_fs2", "eps_ver",
    "eval_epsilon", "parse_epsilon", "parse_protocol",
    "check_conditional", "erase", "holds", "measure", "parse_conditional",
    "parse_formula", "prob", "universal_closure",
    "ExperimentReport", "InstrumentedSetup", "instrument_fs2",
    "instrument_ver", "monitor_biconditional", "run_experiment",
    "Verdict", "check_axiom_instance", "check_proof", "check_proof_text",
    "parse_script", "build_tree", "initial_config", "sample_traces",
    "trace_prob", "traces", "tree_measure",
    "Scenario", "load_scenario", "parse_scenario",
]

__version__ = "0.1.0"
