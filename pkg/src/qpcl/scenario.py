"""Scenario files: one experiment's worth of plumbing in a small
key = value format.

    # challenge-response over a lossy wire
    protocol  = cr.qpcl
    adversary = dropper
    adversary.p = 1/2
    instances = Init(B) as A; Resp() as B
    eta  = 2
    tb   = 400
    new  = counter            # counter | uniform | constant
    verify = toy              # toy | accept_any
    l    = 2                  # longest-message length, in nonces-of-eta-bits * eta
    bounds = bounds_toy.txt   # optional primitive-bound table
    overhead = 0,1,1          # set-operation cost polynomial c2,c1,c0
    mode = exhaustive         # exhaustive | sample:N:SEED

Relative paths resolve against the scenario file's directory.  The
instance list doubles as the n-vector: the number of sessions per role.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .bounds import BoundParams, BoundTable, count_actions, parse_bound_table
from .lang import LangError, Protocol, parse_protocol, principal
from .monitor import OverheadPoly
from .runtime import Configuration, Setup, initial_config


class ScenarioError(Exception):
    pass


_INSTANCE = re.compile(
    r"^\s*(?P<role>[A-Za-z_][A-Za-z_0-9]*)\s*\(\s*(?P<args>[^)]*)\)\s*"
    r"(?:as\s+(?P<principal>[A-Za-z_][A-Za-z_0-9]*))?\s*$")


@dataclass
class Scenario:
    path: Optional[Path]
    protocol_path: Path
    protocol: Protocol
    adversary_name: str
    adversary_opts: Dict[str, str]
    instances: List[tuple]
    eta: int
    tb: int
    new_kind: str = "counter"
    new_opts: Dict[str, str] = field(default_factory=dict)
    verify_kind: str = "toy"
    l: Optional[int] = None
    table: BoundTable = field(default_factory=BoundTable)
    table_path: Optional[Path] = None
    overhead: OverheadPoly = field(default_factory=OverheadPoly)
    mode: str = "exhaustive"
    tvec: Tuple[int, ...] = ()

    # -- derived ------------------------------------------------------------

    @property
    def nvec(self) -> Tuple[int, ...]:
        per = self.instances_per_role
        return tuple(per.get(r.name, 0) for r in self.protocol.roles)

    @property
    def instances_per_role(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for inst in self.instances:
            out[inst[0]] = out.get(inst[0], 0) + 1
        return out

    @property
    def rng(self) -> str:
        """The monitor-facing generator name: uniform nonces are the
        random mode, everything else names a toy prg."""
        return "random" if self.new_kind == "uniform" else self.new_kind

    @property
    def l_effective(self) -> int:
        return self.l if self.l is not None else self.eta

    def counts(self) -> Dict[str, int]:
        return count_actions(self.protocol, self.instances_per_role)

    def bound_params(self) -> BoundParams:
        c = self.counts()
        return BoundParams(eta=self.eta, tb=Fraction(self.tb),
                           q_sign=c["sign"], q_new=c["new"], q_recv=c["receive"],
                           l=self.l_effective, table=self.table)

    def make_adversary(self):
        from .impls import make_adversary
        return make_adversary(self.adversary_name, self.eta, dict(self.adversary_opts))

    def make_setup(self) -> Setup:
        from .impls import make_setup
        return make_setup(self.make_adversary(), self.eta, new_kind=self.new_kind,
                          new_opts=dict(self.new_opts), verify_kind=self.verify_kind)

    def initial(self, setup: Optional[Setup] = None) -> Configuration:
        return initial_config(self.protocol, self.instances, setup or self.make_setup())


def _parse_instances(src: str) -> List[tuple]:
    out = []
    for part in src.split(";"):
        part = part.strip()
        if not part:
            continue
        m = _INSTANCE.match(part)
        if m is None:
            raise ScenarioError(f"bad instance {part!r} (expected Role(args) as Name)")
        args = tuple(principal(a.strip())
                     for a in m.group("args").split(",") if a.strip())
        pname = m.group("principal")
        out.append((m.group("role"), args, pname) if pname else (m.group("role"), args))
    if not out:
        raise ScenarioError("scenario declares no instances")
    return out


def parse_scenario(text: str, base: Optional[Path] = None,
                   path: Optional[Path] = None) -> Scenario:
    base = base or (path.parent if path else Path("."))
    fields: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in fields:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value

    def need(key: str) -> str:
        if key not in fields:
            raise ScenarioError(f"scenario is missing required key {key!r}")
        return fields.pop(key)

    proto_path = base / need("protocol")
    if not proto_path.exists():
        raise ScenarioError(f"protocol file {proto_path} does not exist")
    try:
        protocol = parse_protocol(proto_path.read_text())
    except LangError as e:
        raise ScenarioError(f"protocol {proto_path}: {e}") from e

    eta = int(need("eta"))
    if eta < 1:
        raise ScenarioError("eta must be at least 1")
    tb = int(need("tb"))
    if tb < 0:
        raise ScenarioError("tb must be non-negative")

    adversary = need("adversary")
    instances = _parse_instances(need("instances"))
    role_names = {r.name for r in protocol.roles}
    for inst in instances:
        if inst[0] not in role_names:
            raise ScenarioError(f"instance names unknown role {inst[0]!r}")

    adv_opts = {}
    new_opts = {}
    for key in list(fields):
        if key.startswith("adversary."):
            adv_opts[key.split(".", 1)[1]] = fields.pop(key)
        elif key.startswith("new."):
            new_opts[key.split(".", 1)[1]] = fields.pop(key)

    table = BoundTable()
    table_path = None
    if "bounds" in fields:
        table_path = base / fields.pop("bounds")
        if not table_path.exists():
            raise ScenarioError(f"bound table {table_path} does not exist")
        table = parse_bound_table(table_path.read_text())

    overhead = OverheadPoly()
    if "overhead" in fields:
        parts = [p.strip() for p in fields.pop("overhead").split(",")]
        if len(parts) != 3:
            raise ScenarioError("overhead must be three coefficients c2,c1,c0")
        overhead = OverheadPoly(int(parts[0]), int(parts[1]), int(parts[2]))

    tvec: Tuple[int, ...] = ()
    if "tvec" in fields:
        tvec = tuple(int(p) for p in fields.pop("tvec").split(",") if p.strip())

    sc = Scenario(
        path=path, protocol_path=proto_path, protocol=protocol,
        adversary_name=adversary, adversary_opts=adv_opts,
        instances=instances, eta=eta, tb=tb,
        new_kind=fields.pop("new", "counter"),
        new_opts=new_opts,
        verify_kind=fields.pop("verify", "toy"),
        l=int(fields.pop("l")) if "l" in fields else None,
        table=table, table_path=table_path,
        overhead=overhead,
        mode=fields.pop("mode", "exhaustive"),
        tvec=tvec)
    if fields:
        raise ScenarioError(f"unknown scenario keys: {sorted(fields)}")
    # Fail fast on a broken adversary / generator combination.
    try:
        sc.make_setup()
    except ValueError as e:
        raise ScenarioError(str(e)) from e
    return sc


def load_scenario(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file {p} does not exist")
    return parse_scenario(p.read_text(), path=p)
