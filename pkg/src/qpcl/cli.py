"""Command-line front end.

One binary, six subcommands:

    qpcl parse PROTOCOL            validate a protocol file
    qpcl simulate SCENARIO         exhaustive tree statistics
    qpcl eval SCENARIO -f SRC      evaluate a (conditional) formula
    qpcl check-proof PROOF -p ...  run the proof checker
    qpcl bounds SCENARIO           concrete bound evaluation
    qpcl monitor SCENARIO ...      soundness-monitor experiments

Exit codes: 0 success / accepted / true, 1 rejected / false / bound
violated, 2 usage or parse errors (diagnostics on standard error).
All output is deterministic given identical inputs and seeds.
"""

from __future__ import annotations

import json
import sys
from fractions import Fraction
from pathlib import Path

import click

from .bounds import BoundError, eps_fs2, eps_ver, eval_epsilon, parse_epsilon
from .lang import LangError, parse_protocol, render_value
from .logic import (
    LogicError,
    check_conditional,
    conclusion_bound,
    erase,
    parse_conditional,
    prob,
    render_conditional,
    universal_closure,
)
from .monitor import MonitorError, run_experiment
from .proof import ProofError, check_proof_text, initial_segments, nonce_preserving
from .runtime import ExecError, build_tree, trace_runtime, traces, tree_measure
from .scenario import Scenario, ScenarioError, load_scenario

_USAGE_ERRORS = (LangError, LogicError, ProofError, BoundError,
                 ScenarioError, MonitorError, ExecError)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _emit(pairs, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(dict(pairs), indent=2, sort_keys=True))
    else:
        for key, value in pairs:
            click.echo(f"{key}: {value}")


def _scenario(path: str) -> Scenario:
    return load_scenario(path)


def _scenario_tree(sc: Scenario, node_cap: int):
    setup = sc.make_setup()
    return build_tree(sc.initial(setup), setup, sc.tb, node_cap=node_cap)


@click.group()
@click.option("--threads", type=int, default=1, show_default=True,
              help="Parallelism cap (evaluation is sequential and "
                   "deterministic; values above 1 are accepted and ignored).")
@click.pass_context
def main(ctx, threads):
    """Protocol logic toolkit: interpreter, evaluator, proof checker,
    bound calculator, soundness monitors."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = max(1, threads)


@main.command("parse")
@click.argument("protocol_file", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def cmd_parse(protocol_file, as_json):
    """Parse and validate a protocol file."""
    try:
        proto = parse_protocol(Path(protocol_file).read_text())
        np_ok, witness = nonce_preserving(proto)
        pairs = [
            ("protocol", proto.name),
            ("roles", ", ".join(r.name for r in proto.roles)),
            ("statements", sum(1 for r in proto.roles for _ in _stmts(r))),
            ("initial-segments", len(initial_segments(proto))),
            ("nonce-preserving", np_ok),
        ]
        if not np_ok and witness is not None:
            pairs.append(("violating-statement", witness.label))
        _emit(pairs, as_json)
    except _USAGE_ERRORS as e:
        _fail(str(e))


def _stmts(role):
    from .lang import statements
    return statements(role.body)


@main.command("simulate")
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--mode", default=None, help="Override the scenario mode.")
@click.option("--node-cap", type=int, default=500_000, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def cmd_simulate(scenario_file, mode, node_cap, as_json):
    """Build the exhaustive execution tree and report its statistics."""
    try:
        sc = _scenario(scenario_file)
        mode = mode or sc.mode
        if mode != "exhaustive" and not mode.startswith("sample:"):
            raise ScenarioError(f"unknown mode {mode!r}")
        if mode.startswith("sample:"):
            from .runtime import sample_traces
            _, n_s, seed_s = mode.split(":")
            walks = sample_traces(sc.initial(), sc.make_setup(), sc.tb,
                                  int(n_s), int(seed_s))
            _emit([("mode", mode), ("samples", len(walks)),
                   ("max-runtime", max(trace_runtime(t) for t in walks)),
                   ("max-steps", max(len(t.steps) for t in walks))], as_json)
            return
        tree = _scenario_tree(sc, node_cap)
        all_traces = list(traces(tree))
        _emit([
            ("mode", "exhaustive"),
            ("eta", sc.eta), ("tb", sc.tb),
            ("traces", len(all_traces)),
            ("measure", str(tree_measure(tree))),
            ("max-runtime", max(trace_runtime(t) for t in all_traces)),
            ("max-steps", max(len(t.steps) for t in all_traces)),
        ], as_json)
    except _USAGE_ERRORS as e:
        _fail(str(e))


@main.command("eval")
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--formula", "-f", required=True,
              help="A conditional formula, e.g. 'B{0} true'.")
@click.option("--node-cap", type=int, default=500_000, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def cmd_eval(scenario_file, formula, node_cap, as_json):
    """Evaluate a conditional formula on the scenario's execution tree.
    Exits 0 when it holds, 1 when it does not."""
    try:
        sc = _scenario(scenario_file)
        cond = parse_conditional(formula, sc.protocol)
        tree = _scenario_tree(sc, node_cap)
        params = sc.bound_params()
        eps_value = eval_epsilon(conclusion_bound(cond), params)
        verdict = check_conditional(cond, tree, lambda e: eval_epsilon(e, params))
        p = prob(universal_closure(erase(cond)), tree)
        _emit([
            ("formula", render_conditional(cond)),
            ("epsilon", str(eps_value)),
            ("erased-probability", str(p)),
            ("verdict", verdict),
        ], as_json)
        sys.exit(0 if verdict else 1)
    except _USAGE_ERRORS as e:
        _fail(str(e))


@main.command("check-proof")
@click.argument("proof_file", type=click.Path(exists=True))
@click.option("--protocol", "-p", "protocol_file", required=True,
              type=click.Path(exists=True), help="Protocol the proof is about.")
@click.option("--scenario", "scenario_file", type=click.Path(exists=True),
              help="Optional scenario for numeric bound evaluation.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def cmd_check_proof(proof_file, protocol_file, scenario_file, as_json):
    """Check a derivation script.  Exits 0 when accepted, 1 otherwise."""
    try:
        proto = parse_protocol(Path(protocol_file).read_text())
        verdict = check_proof_text(Path(proof_file).read_text(), proto)
        pairs = [
            ("accepted", verdict.accepted),
            ("bound", str(verdict.bound) if verdict.bound is not None else "-"),
            ("safety-certified", verdict.safety_certified),
        ]
        if verdict.conclusion is not None:
            pairs.append(("conclusion", render_conditional(verdict.conclusion)))
        if scenario_file and verdict.accepted and verdict.bound is not None:
            sc = _scenario(scenario_file)
            pairs.append(("numeric-bound",
                          str(eval_epsilon(verdict.bound, sc.bound_params()))))
        if verdict.diagnostics:
            pairs.append(("diagnostics", "; ".join(verdict.diagnostics)))
        _emit(pairs, as_json)
        sys.exit(0 if verdict.accepted else 1)
    except _USAGE_ERRORS as e:
        _fail(str(e))


@main.command("bounds")
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--expr", default="eVER + 2*eFS2", show_default=True,
              help="Symbolic bound expression to evaluate.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def cmd_bounds(scenario_file, expr, as_json):
    """Evaluate the primitive bounds and a symbolic expression at the
    scenario's parameters."""
    try:
        sc = _scenario(scenario_file)
        e = parse_epsilon(expr)
        params = sc.bound_params()
        _emit([
            ("eta", sc.eta), ("tb", sc.tb),
            ("q_sign", params.q_sign), ("q_new", params.q_new),
            ("q_recv", params.q_recv), ("l", params.l),
            ("eps_ver", str(eps_ver(params))),
            ("eps_fs2", str(eps_fs2(params))),
            ("expression", str(e)),
            ("value", str(eval_epsilon(e, params))),
        ], as_json)
    except _USAGE_ERRORS as e:
        _fail(str(e))


@main.command("monitor")
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--axiom", type=click.Choice(["ver", "fs2"]), required=True)
@click.option("--rng", default=None,
              help="random | counter | constant (default: from the scenario).")
@click.option("--mode", default=None,
              help="exhaustive | sample:N:SEED (default: from the scenario).")
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Also write the key/value report to this file.")
@click.option("--node-cap", type=int, default=500_000, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def cmd_monitor(scenario_file, axiom, rng, mode, report_path, node_cap, as_json):
    """Run an instrumented soundness experiment.  Exits 1 when the
    observed bad-probability exceeds the computed bound."""
    try:
        sc = _scenario(scenario_file)
        rep = run_experiment(
            sc.protocol, sc.make_adversary(), axiom, rng or sc.rng,
            sc.eta, sc.tb, mode=mode or sc.mode,
            instances=sc.instances, l=sc.l_effective,
            verify_kind=sc.verify_kind, new_opts=dict(sc.new_opts),
            table=sc.table, poly=sc.overhead, node_cap=node_cap)
        d = rep.to_dict()
        pairs = sorted(d.items())
        if as_json:
            click.echo(json.dumps(d, indent=2, sort_keys=True))
        else:
            for key, value in pairs:
                click.echo(f"{key}: {value}")
        if report_path:
            Path(report_path).write_text(
                "".join(f"{k}: {v}\n" for k, v in pairs))
        sys.exit(1 if rep.violated else 0)
    except _USAGE_ERRORS as e:
        _fail(str(e))


if __name__ == "__main__":
    main()
