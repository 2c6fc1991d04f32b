"""Command-line entry point: ``dtds <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus
from .decide import find_countermodel, sat
from .lasso import LassoSystem, ResourceError, audit_window, is_strictly_super_additive
from .premodel import (
    InvalidModelError, MalformedModelError, Premodel, audit, check_side_conditions,
)
from .proofkit import ProofFormatError, check as check_proof, load_proof
from .syntax import ParseError, closure, modal_reach, parse, render, size
from .transforms import PMorphismError, filtrate, tag_name, to_additive, unravel


def _emit(args, data: dict, text: str) -> None:
    if args.json:
        print(json.dumps(data, indent=2, default=str))
    else:
        print(text)


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _load_model(path, allow_invalid=False):
    """A premodel or a lasso system, depending on the file's shape.

    Premodels are audited on load and rejected on violations unless
    ``allow_invalid`` is set.
    """
    d = _load_json(path)
    if "histories" in d:
        return LassoSystem.from_dict(d, root=Path(path).parent)
    m = Premodel.from_dict(d)
    if not allow_invalid:
        rep = audit(m)
        if not rep.ok:
            raise InvalidModelError(rep)
    return m


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def cmd_parse(args):
    f = parse(args.formula, args.agents)
    cl = closure(f, args.agents)
    data = {"formula": render(f), "abbreviated": render(f, True), "size": size(f),
            "closure_size": len(cl), "modal_reach": modal_reach(f)}
    _emit(args, data, f"{render(f, True)}\nprimitive: {render(f)}\nsize={size(f)} closure={len(cl)}")
    return 0


def cmd_audit(args):
    m = _load_model(args.model, allow_invalid=True)
    if isinstance(m, LassoSystem):
        rep = audit_window(m, super_additive=args.super_additive)
        head = f"lasso system: {len(m)} histories, window t<={m.horizon}"
    else:
        rep = audit(m)
        head = f"premodel: {len(m.states)} states, {m.agents} agents"
    lines = [head, "ok" if rep.ok else f"{len(rep)} violation(s)"]
    lines += [f"  {v.tag}{'' if v.agent is None else f' (agent {v.agent})'}: {list(v.witness)}" for v in rep.violations]
    _emit(args, {"ok": rep.ok, "violations": rep.to_json()}, "\n".join(lines))
    return 0 if rep.ok else 1


def cmd_check(args):
    m = _load_model(args.model, args.allow_invalid)
    f = parse(args.formula, m.agents)
    if isinstance(m, LassoSystem):
        value = m.eval_at(args.history, args.time, f)
        _emit(args, {"history": args.history, "time": args.time, "value": value},
              f"{'true' if value else 'false'}")
        return 0
    if args.state is None:
        ext = sorted(m.truth_set(f), key=m.idx)
        _emit(args, {"true_at": ext}, "true at: " + (", ".join(ext) or "(none)"))
        return 0
    value = m.eval(args.state, f)
    _emit(args, {"state": args.state, "value": value}, "true" if value else "false")
    return 0


def cmd_sides(args):
    m = _load_model(args.model, args.allow_invalid)
    f = parse(args.formula, m.agents)
    fails = check_side_conditions(m, closure(f, m.agents))
    data = {"ok": not fails, "failures": [{"kind": x.kind, "formula": render(x.formula), "state": x.state}
                                          for x in fails]}
    _emit(args, data, "ok" if not fails else "\n".join(str(x) for x in fails))
    return 0 if not fails else 1


def cmd_unravel(args):
    m = _load_model(args.model, args.allow_invalid)
    f = parse(args.formula, m.agents)
    seeds = args.seeds.split(",") if args.seeds else None
    sys_ = unravel(m, closure(f, m.agents), seeds=seeds, horizon=args.horizon, max_histories=args.max_histories)
    data = sys_.to_dict(base_ref=str(args.model) if args.output else None)
    if args.output:
        _write_json(args.output, data)
    print(f"# histories={len(sys_)} horizon={sys_.horizon} period={sys_.period()}")
    if not args.output:
        print(json.dumps(data, indent=2))
    return 0


def cmd_filtrate(args):
    m = _load_model(args.model, args.allow_invalid)
    f = parse(args.formula, m.agents)
    mf = filtrate(m, closure(f, m.agents))
    if args.output:
        _write_json(args.output, mf.to_dict())
    rep = audit(mf)
    print(f"# {len(m.states)} states -> {len(mf.states)} classes; audit {'ok' if rep.ok else 'FAILED'}")
    if not args.output:
        print(json.dumps(mf.to_dict(), indent=2))
    return 0 if rep.ok else 1


def cmd_additive(args):
    base = _load_model(args.model, args.allow_invalid)
    if not isinstance(base, LassoSystem):
        raise MalformedModelError("additive expects a lasso system file")
    refined, witness = to_additive(base, horizon=args.horizon, max_histories=args.max_histories)
    rep = audit_window(refined)
    data = {
        "base_histories": len(base), "refined_histories": len(refined),
        "strictly_super_additive": is_strictly_super_additive(base),
        "horizon": witness.horizon, "additive": rep.ok,
        "checked": {tag_name(t): n for t, n in witness.checked.items()},
    }
    text = (f"# refinement horizon={witness.horizon}\n{len(base)} -> {len(refined)} histories; "
            f"additive={'yes' if rep.ok else 'no'}; p-morphism verified for "
            + ", ".join(data["checked"]))
    _emit(args, data, text)
    return 0 if rep.ok else 1


def _sat_report(args, res, header):
    if args.emit_witness and res.is_sat:
        _write_json(args.emit_witness, res.witness.to_dict())
    lines = [header, res.summary()] + [f"note: {n}" for n in res.notes]
    if res.is_sat:
        lines.append(json.dumps(res.witness.to_dict()))
    _emit(args, res.to_json(), "\n".join(lines))


def cmd_sat(args):
    f = parse(args.formula, args.agents)
    res = sat(f, args.states, args.agents, seed=args.seed, time_limit=args.time_limit)
    _sat_report(args, res, f"# sat {render(f, True)} states<={args.states} agents={args.agents} seed={args.seed}")
    return 0 if res.is_sat else 1


def cmd_valid(args):
    f = parse(args.formula, args.agents)
    res = find_countermodel(f, args.states, args.agents, seed=args.seed, time_limit=args.time_limit)
    _sat_report(args, res, f"# valid {render(f, True)} states<={args.states} agents={args.agents} seed={args.seed}")
    if not args.json:
        print("countermodel found" if res.is_sat else "no countermodel up to the bound")
    return 1 if res.is_sat else 0


def cmd_prove(args):
    script = load_proof(args.file, args.agents)
    goal = parse(args.goal, args.agents) if args.goal else None
    res = check_proof(script, args.agents, goal)
    _emit(args, {"ok": res.ok, "line": res.line, "reason": res.reason, "lines": len(script.lines)},
          f"{len(script.lines)} lines: {res}")
    return 0 if res.ok else 1


def cmd_examples(args):
    if args.action == "list":
        rows = [{"name": k, "formula": t, "gloss": g} for k, (t, g) in corpus.HOHFELD.items()]
        _emit(args, {"examples": rows},
              "\n".join(f"{r['name']:<18} {render(parse(r['formula'], 2), True):<40} {r['gloss']}" for r in rows))
        return 0
    if args.name not in corpus.HOHFELD:
        raise KeyError(f"unknown example {args.name!r}; try 'examples list'")
    text, gloss = corpus.HOHFELD[args.name]
    f = parse(text, 2)
    data = {"name": args.name, "formula": render(f, True), "primitive": render(f), "gloss": gloss,
            "size": size(f), "closure_size": len(closure(f, 2))}
    _emit(args, data, f"{args.name}: {render(f, True)}\nprimitive: {render(f)}\n{gloss}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtds", description="Temporal deontic STIT logic toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.add_argument("--allow-invalid", action="store_true", help="skip the premodel audit on load")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("parse", cmd_parse, "parse and pretty-print a formula")
    sp.add_argument("formula")
    sp.add_argument("--agents", type=int, default=None)

    sp = add("audit", cmd_audit, "check the structural conditions of a model file")
    sp.add_argument("model")
    sp.add_argument("--super-additive", action="store_true", help="lasso systems: allow (D3*)")

    sp = add("check", cmd_check, "evaluate a formula on a model")
    sp.add_argument("model")
    sp.add_argument("--formula", required=True)
    sp.add_argument("--state")
    sp.add_argument("--history", type=int, default=0)
    sp.add_argument("--time", type=int, default=0)

    sp = add("sides", cmd_sides, "check XFunc/UFix over the closure of a formula")
    sp.add_argument("model")
    sp.add_argument("--formula", required=True)

    sp = add("unravel", cmd_unravel, "unravel a premodel into a lasso system")
    sp.add_argument("model")
    sp.add_argument("--formula", required=True)
    sp.add_argument("--seeds")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--max-histories", type=int, default=2000)
    sp.add_argument("-o", "--output")

    sp = add("filtrate", cmd_filtrate, "filtrate a premodel through the closure of a formula")
    sp.add_argument("model")
    sp.add_argument("--formula", required=True)
    sp.add_argument("-o", "--output")

    sp = add("additive", cmd_additive, "refine a lasso system into an additive one")
    sp.add_argument("model")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--max-histories", type=int, default=20000)

    for name, fn, help_ in (("sat", cmd_sat, "bounded satisfiability search"),
                            ("valid", cmd_valid, "bounded countermodel search")):
        sp = add(name, fn, help_)
        sp.add_argument("formula")
        sp.add_argument("--states", type=int, default=3)
        sp.add_argument("--agents", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--time-limit", type=float)
        sp.add_argument("--emit-witness")

    sp = add("prove", cmd_prove, "proof scripts")
    sp.add_argument("action", choices=["check"])
    sp.add_argument("file")
    sp.add_argument("--agents", type=int, default=1)
    sp.add_argument("--goal")

    sp = add("examples", cmd_examples, "bundled Hohfeld examples")
    sp.add_argument("action", choices=["list", "show"])
    sp.add_argument("name", nargs="?")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, MalformedModelError, InvalidModelError, ProofFormatError, PMorphismError,
            ResourceError, KeyError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
