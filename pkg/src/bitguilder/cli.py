"""Batch command-line interface: scenario runner and inspection tools.

Subcommands:

* ``run-scenario CONFIG --seed N --out DIR`` runs a scenario or attack
  study from a JSON config and writes JSON-lines metrics plus a chain
  dump; the trace digest prints for reproducibility.
* ``inspect-chain DUMP --profile NAME --validate`` replays a chain dump
  and reports either a summary or the first violated rule.
* ``eval EXPR --env FILE`` evaluates a money-of-account expression.
* ``wealth --ledger FILE --access FILE --agent NAME`` prints wealth and
  taxation rows as CSV.

Exit codes: 0 success, 1 invalid input, 2 runtime assertion failure.
All randomness flows from a single seed (``--seed`` beats the config
value; without either, seed 0 is used and noted).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import attacks, ledger, netsim
from .accounting import (
    AccessRelation,
    Demonstration,
    SelfConfirmation,
    SharedAssertion,
    taxation,
    wealth1,
    wealth2,
)
from .consensus import ChainView
from .expr import ExprSyntaxError, UnboundVariable, eval_expr, parse_expr
from .ledger import BlockRejected, decode_block
from .meadow import Rat
from .profiles import get_profile
from .units import DimensionMismatch, parse_quantity
from .wire import WireError, read_chain_dump, write_chain_dump

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _fail(message: str, code: int = EXIT_INVALID) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# -- run-scenario ------------------------------------------------------------------


def _load_json(path: str):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _study_point(args):
    q, k_c, runs, seed, horizon = args
    point = attacks.double_spend_point(q, k_c, runs, seed=seed, horizon=horizon)
    return (q, k_c, point.successes)


def _run_double_spend_study(data: dict, seed: int, out_dir: Path | None, parallel: int) -> int:
    qs = data.get("q", [0.3])
    if not isinstance(qs, list):
        qs = [qs]
    k_cs = data.get("k_c", [0, 1, 2, 3, 4, 5, 6])
    if not isinstance(k_cs, list):
        k_cs = [k_cs]
    runs = int(data.get("runs", 10_000))
    horizon = int(data.get("horizon", attacks.DEFAULT_HORIZON))

    if parallel > 1:
        jobs = [(float(q), int(k), runs, seed, horizon) for q in qs for k in k_cs]
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            raw = list(pool.map(_study_point, jobs))
        results = [(q, k, s) for q, k, s in sorted(raw)]
    else:
        points = attacks.double_spend_study(qs, k_cs, runs, seed=seed, horizon=horizon)
        results = sorted((p.q, p.k_c, p.successes) for p in points)

    lines = []
    for q, k_c, successes in results:
        record = {
            "kind": "double-spend-rate",
            "q": q,
            "k_c": k_c,
            "runs": runs,
            "successes": successes,
            "success-rate": successes / runs,
        }
        lines.append(json.dumps(record, sort_keys=True))
        print(lines[-1])
    if out_dir is not None:
        (out_dir / "metrics.jsonl").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _run_majority_rewrite_study(data: dict, seed: int, out_dir: Path | None) -> int:
    point = attacks.majority_rewrite_study(
        q=float(data.get("q", 0.55)),
        suffix_len=int(data.get("suffix_len", 5)),
        runs=int(data.get("runs", 100)),
        seed=seed,
        horizon=int(data.get("horizon", 2000)),
    )
    record = {
        "kind": "majority-rewrite-rate",
        "q": point.q,
        "suffix_len": int(data.get("suffix_len", 5)),
        "runs": point.runs,
        "successes": point.successes,
        "success-rate": point.rate,
    }
    line = json.dumps(record, sort_keys=True)
    print(line)
    if out_dir is not None:
        (out_dir / "metrics.jsonl").write_text(line + "\n")
    return EXIT_OK


def cmd_run_scenario(args) -> int:
    try:
        data = _load_json(args.config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    seed = args.seed
    if seed is None:
        seed = data.get("seed")
        if seed is None:
            seed = 0
            print("seed: 0 (default; none supplied)")
        else:
            print(f"seed: {seed} (from config)")
    else:
        print(f"seed: {seed}")

    out_dir = None
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

    kind = data.get("kind", "scenario")
    try:
        if kind == "double_spend_study":
            return _run_double_spend_study(data, int(seed), out_dir, args.parallel)
        if kind == "majority_rewrite_study":
            return _run_majority_rewrite_study(data, int(seed), out_dir)
        if kind != "scenario":
            return _fail(f"unknown config kind {kind!r}")

        data = dict(data)
        data["seed"] = int(seed)
        config = netsim.ScenarioConfig.from_dict(data)
    except netsim.InvalidConfig as exc:
        return _fail(str(exc))

    try:
        result = netsim.run(config)
    except AssertionError as exc:  # pragma: no cover - defensive
        return _fail(f"runtime assertion: {exc}", EXIT_RUNTIME)

    majority = result.majority_view()
    print(f"blocks: {len(majority)} | total difficulty: {majority.total_difficulty}")
    print(f"trace digest: {result.trace_digest}")
    if out_dir is not None:
        (out_dir / "metrics.jsonl").write_text(result.metrics.to_jsonl())
        records = [ledger.block_bytes(b, config.profile.digest_len) for b in majority.blocks]
        with open(out_dir / "chain.dump", "wb") as handle:
            write_chain_dump(handle, records)
        with open(out_dir / "trace.jsonl", "w") as handle:
            for record in result.trace:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
        print(f"wrote {out_dir}/metrics.jsonl, chain.dump, trace.jsonl")
    return EXIT_OK


# -- inspect-chain ------------------------------------------------------------------


def cmd_inspect_chain(args) -> int:
    profile = get_profile(args.profile)
    try:
        with open(args.dump, "rb") as handle:
            records = read_chain_dump(handle)
    except OSError as exc:
        return _fail(str(exc))
    except WireError as exc:
        return _fail(f"corrupt dump: {exc}")

    if not records:
        return _fail("genesis-missing: the dump holds no blocks")

    view = ChainView(profile)
    for height, record in enumerate(records):
        try:
            block = decode_block(record, profile)
        except (WireError, ValueError) as exc:
            return _fail(f"record {height}: corrupt block: {exc}")
        try:
            view.append(block)
        except BlockRejected as exc:
            return _fail(f"block {height} violates {exc}")
    print(f"OK, {len(view)} blocks, total difficulty {view.total_difficulty}")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    env = {}
    if args.env:
        try:
            data = _load_json(args.env)
            env = {name: parse_quantity(text) for name, text in data.items()}
        except (OSError, ValueError) as exc:
            return _fail(str(exc))
    try:
        tree = parse_expr(args.expr)
        result = eval_expr(tree, env)
    except ExprSyntaxError as exc:
        return _fail(str(exc))
    except (UnboundVariable, DimensionMismatch) as exc:
        return _fail(str(exc))
    print(str(result))
    return EXIT_OK


# -- wealth ---------------------------------------------------------------------------


def _parse_assertions(items) -> list:
    out = []
    for item in items:
        kind = item["kind"]
        if kind == "self-confirmation":
            out.append(SelfConfirmation(item["agent"], bytes.fromhex(item["address"])))
        elif kind == "demonstration":
            out.append(Demonstration(item["agent"], bytes.fromhex(item["address"])))
        elif kind == "shared":
            out.append(SharedAssertion(item["by"], item["with"], bytes.fromhex(item["address"])))
        else:
            raise ValueError(f"unknown assertion kind {kind!r}")
    return out


def cmd_wealth(args) -> int:
    try:
        snapshot = _load_json(args.ledger)
        access_data = _load_json(args.access)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    try:
        profile = get_profile(snapshot.get("profile", "desk"))
        state = ledger.LedgerState(
            balances={bytes.fromhex(addr): int(amount) for addr, amount in snapshot.get("balances", {}).items()}
        )
        t = snapshot.get("t", 0)
        access = AccessRelation(
            (entry["agent"], bytes.fromhex(entry["address"])) for entry in access_data.get("access", ())
        )
        assertions = _parse_assertions(access_data.get("assertions", ()))
    except (KeyError, ValueError) as exc:
        return _fail(f"bad input: {exc}")

    print("kind,agent,t,value,unit")
    w1 = wealth1(args.agent, state, access, profile)
    print(f"wealth1,{args.agent},{t},{w1.value},{w1.dim}")
    tax = taxation(args.agent, state, access, profile)
    print(f"taxation,{args.agent},{t},{tax.value},{tax.dim}")
    if assertions:
        w2 = wealth2(args.agent, state, assertions, profile)
        print(f"wealth2,{args.agent},{t},{w2.value},{w2.dim}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bitguilder", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run-scenario", help="run a scenario or attack study from a JSON config")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None, help="directory for metrics.jsonl, chain.dump, trace.jsonl")
    run_p.add_argument("--parallel", type=int, default=1, help="fan independent Monte Carlo points over processes")
    run_p.set_defaults(func=cmd_run_scenario)

    inspect_p = sub.add_parser("inspect-chain", help="validate and summarize a chain dump")
    inspect_p.add_argument("dump")
    inspect_p.add_argument("--profile", default="desk")
    inspect_p.add_argument("--validate", action="store_true", help="accepted for compatibility; validation always runs")
    inspect_p.set_defaults(func=cmd_inspect_chain)

    eval_p = sub.add_parser("eval", help="evaluate a money-of-account expression")
    eval_p.add_argument("expr")
    eval_p.add_argument("--env", default=None, help="JSON file of variable bindings, e.g. {\"q\": \"3 BGU\"}")
    eval_p.set_defaults(func=cmd_eval)

    wealth_p = sub.add_parser("wealth", help="wealth and taxation report over a ledger snapshot")
    wealth_p.add_argument("--ledger", required=True)
    wealth_p.add_argument("--access", required=True)
    wealth_p.add_argument("--agent", required=True)
    wealth_p.set_defaults(func=cmd_wealth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
