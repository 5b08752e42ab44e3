"""Operator command line: simulate, bootstrap, al, report, eval-serve, play."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .agents import (
    DecodeConfig,
    DecodeMode,
    NoisyUser,
    RemoteAgent,
    ScriptedAssistant,
    ScriptedUser,
)
from .bootstrap import ExemplarTrainer, ExternalTrainer, run_bootstrap
from .core import ParseError, parse_call, parse_schema
from .errors import AgentUnavailable, TodsimError, TrainerFailed
from .exemplar import ExemplarAssistant, ExemplarStore, ExemplarUser
from .metrics import build_report, error_reduction
from .mock_api import load_table_file
from .orchestrator import SimConfig, run_batch

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_AGENT = 4
EXIT_TRAINER = 5

log = logging.getLogger(__name__)


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _load_goals(path: str):
    return [parse_call(line) for line in _read_lines(path)]


def _load_schemas(path: str):
    schemas = [parse_schema(line) for line in _read_lines(path)]
    return {schema.intent: schema for schema in schemas}


def _agent_factory(spec: str, role: str):
    """Parse 'scripted[:noise=E]' | 'exemplar[:store.json]' | 'remote:URL'."""
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        noise = 0.0
        if arg.startswith("noise="):
            noise = float(arg.split("=", 1)[1])
        if role == "user":
            if noise > 0:
                return lambda: NoisyUser(ScriptedUser(), noise)
            return ScriptedUser
        return ScriptedAssistant
    if kind == "exemplar":
        store = ExemplarStore.load(arg) if arg else ExemplarStore()
        if role == "user":
            return lambda: ExemplarUser(store)
        return lambda: ExemplarAssistant(store)
    if kind == "remote":
        return lambda: RemoteAgent(arg)
    raise ValueError(f"unknown agent spec {spec!r}")


def _write_manifest(out_dir: Path, args: argparse.Namespace) -> None:
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "timestamp": time.time(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def cmd_simulate(args) -> int:
    goals = _load_goals(args.goals)
    api = load_table_file(args.api_table)
    schemas = _load_schemas(args.schemas) if args.schemas else None
    cfg = SimConfig(
        max_rounds=args.max_rounds,
        rollouts_per_goal=args.rollouts,
        decode=DecodeConfig(
            mode=DecodeMode.NUCLEUS if args.decode == "nucleus" else DecodeMode.GREEDY,
            p=args.p,
            seed=args.seed,
        ),
        schema_aware=args.schema_aware,
        errors_fail=not args.strict_agents,
    )
    user_factory = _agent_factory(args.user_agent, "user")
    assistant_factory = _agent_factory(args.assistant_agent, "assistant")
    episodes = run_batch(goals, user_factory, assistant_factory, api, cfg, schemas=schemas)
    out = Path(args.out)
    _write_manifest(out, args)
    from .data_io import write_episodes

    write_episodes(out / "episodes.jsonl", episodes)
    report = build_report(episodes)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(episodes)} episodes, tsr={report.tsr:.3f}")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    from .data_io import load_episodes

    goals = _load_goals(args.goals)
    schemas = _load_schemas(args.schemas)
    api = load_table_file(args.api_table)
    in_domain = load_episodes(args.in_domain) if args.in_domain else []
    trainer = (
        ExternalTrainer(args.trainer[len("cmd:") :])
        if args.trainer.startswith("cmd:")
        else ExemplarTrainer()
    )
    cfg = SimConfig(
        max_rounds=args.max_rounds,
        rollouts_per_goal=args.rollouts,
        decode=DecodeConfig(mode=DecodeMode.NUCLEUS, p=args.p, seed=args.seed),
        schema_aware=True,
    )
    out = Path(args.out)
    _write_manifest(out, args)
    state = run_bootstrap(
        args.iterations, goals, schemas, api, in_domain, cfg,
        trainer=trainer, out_dir=out, resume=not args.no_resume,
    )
    print(f"completed iteration {state.iteration}; "
          f"{len(state.synthetic_train)} train / {len(state.synthetic_valid)} valid synthetic episodes")
    return EXIT_OK


def cmd_al(args) -> int:
    from .active_learning import AlLedger, rank_schemas, select_al_batch
    from .data_io import load_episodes

    simulated = load_episodes(args.episodes)
    pool_train = load_episodes(args.pool_train)
    pool_valid = load_episodes(args.pool_valid)
    table = rank_schemas(simulated)
    selection = select_al_batch(
        table, pool_train, pool_valid,
        k_schemas=args.k_schemas, k_convs=args.k_convs, seed=args.seed,
    )
    out = Path(args.out)
    _write_manifest(out, args)
    ledger = AlLedger()
    ledger.record(args.iteration, selection, args.seed)
    ledger.save(out / "al_ledger.json")
    from .data_io import write_episodes

    write_episodes(out / "train_adds.jsonl", selection["train_adds"])
    write_episodes(out / "valid_adds.jsonl", selection["valid_adds"])
    print(f"selected intents: {', '.join(selection['intents'])}")
    return EXIT_OK


def cmd_report(args) -> int:
    metrics_files = sorted(Path(args.run_dir).glob("iter_*/metrics.json"))
    if not metrics_files:
        raise FileNotFoundError(f"no iter_*/metrics.json under {args.run_dir}")
    with open(metrics_files[-1], encoding="utf-8") as fh:
        history = json.load(fh)
    rows = []
    base_jga = None
    base_tsr = None
    for entry in history:
        ood = entry.get("ood", {})
        row = {
            "iteration": entry["iteration"],
            "n_successes": entry.get("n_successes", 0),
            "ood_tsr": ood.get("tsr"),
            "ood_jga": ood.get("jga"),
            "ood_bleu4": ood.get("bleu4"),
            "in_domain_tsr": entry.get("in_domain", {}).get("tsr"),
        }
        if entry["iteration"] == 0:
            base_jga = ood.get("jga")
            base_tsr = ood.get("tsr")
        if base_jga is not None and row["ood_jga"] is not None and base_jga < 1:
            row["jga_error_reduction"] = error_reduction(base_jga, row["ood_jga"])
        if base_tsr is not None and row["ood_tsr"] is not None and base_tsr < 1:
            row["tsr_error_reduction"] = error_reduction(base_tsr, row["ood_tsr"])
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2, sort_keys=True))
        return EXIT_OK
    columns = ["iteration", "n_successes", "ood_tsr", "ood_jga", "ood_bleu4",
               "in_domain_tsr", "jga_error_reduction", "tsr_error_reduction"]
    print("\t".join(columns))
    for row in rows:
        print("\t".join(_fmt(row.get(c)) for c in columns))
    return EXIT_OK


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def cmd_eval_serve(args) -> int:
    import uvicorn

    from .data_io import load_episodes
    from .eval_service import EvalStore, build_tasks, create_app

    store = EvalStore(args.data_dir, controls_per_annotator=args.controls_per_annotator)
    if not store.tasks:
        if not args.runs:
            raise ValueError("no existing tasks; provide --runs name=episodes.jsonl")
        runs = {}
        for item in args.runs:
            name, _, path = item.partition("=")
            runs[name] = load_episodes(path)
        controls = load_episodes(args.controls) if args.controls else []
        store.set_tasks(build_tasks(runs, controls=controls, seed=args.seed))
    app = create_app(store, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def cmd_play(args) -> int:
    """Debug REPL: you type User turns against a chosen assistant."""
    from .core import Speaker, Turn, serialize_response
    from .mock_api import invoke
    from .agents import Observation, Role
    from .orchestrator import _try_parse_call

    api = load_table_file(args.api_table)
    assistant = _agent_factory(args.assistant_agent, "assistant")()
    schema_text = None
    if args.schema:
        schema_text = args.schema
    turns = []
    first = True
    print("type User turns; [DONE] or EOF ends the session")
    for line in sys.stdin:
        text = line.rstrip("\n")
        turns.append(Turn(Speaker.USER, text))
        if text.strip() == "[DONE]":
            break
        reply = assistant.act(
            Observation(Role.ASSISTANT, schema_text if first else None,
                        tuple(turns), DecodeConfig())
        )
        first = False
        call = _try_parse_call(reply)
        if call is not None:
            turns.append(Turn(Speaker.ASSISTANT_CALL, reply))
            print(f"  [call] {reply}")
            resp = serialize_response(invoke(api, call))
            turns.append(Turn(Speaker.API_RESP, resp))
            print(f"  [api]  {resp}")
            reply = assistant.act(
                Observation(Role.ASSISTANT, None, tuple(turns), DecodeConfig())
            )
        turns.append(Turn(Speaker.ASSISTANT_UTT, reply))
        print(f"  [assistant] {reply}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="todsim")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a rollout batch and report metrics")
    sim.add_argument("--goals", required=True)
    sim.add_argument("--api-table", required=True)
    sim.add_argument("--schemas")
    sim.add_argument("--user-agent", default="scripted")
    sim.add_argument("--assistant-agent", default="scripted")
    sim.add_argument("--schema-aware", action="store_true")
    sim.add_argument("--strict-agents", action="store_true",
                     help="abort on agent outages instead of scoring them failed")
    sim.add_argument("--rollouts", type=int, default=20)
    sim.add_argument("--max-rounds", type=int, default=10)
    sim.add_argument("--decode", choices=["greedy", "nucleus"], default="greedy")
    sim.add_argument("--p", type=float, default=0.9)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    boot = sub.add_parser("bootstrap", help="run the success-filtered bootstrap loop")
    boot.add_argument("--goals", required=True)
    boot.add_argument("--schemas", required=True)
    boot.add_argument("--api-table", required=True)
    boot.add_argument("--in-domain")
    boot.add_argument("--iterations", type=int, default=4)
    boot.add_argument("--trainer", default="exemplar",
                      help="'exemplar' or 'cmd:<trainer command>'")
    boot.add_argument("--rollouts", type=int, default=20)
    boot.add_argument("--max-rounds", type=int, default=10)
    boot.add_argument("--p", type=float, default=0.9)
    boot.add_argument("--seed", type=int, default=0)
    boot.add_argument("--no-resume", action="store_true")
    boot.add_argument("--out", required=True)
    boot.set_defaults(func=cmd_bootstrap)

    al = sub.add_parser("al", help="rank schemas and select an injection batch")
    al.add_argument("--episodes", required=True, help="simulated episodes JSONL")
    al.add_argument("--pool-train", required=True)
    al.add_argument("--pool-valid", required=True)
    al.add_argument("--k-schemas", type=int, default=8)
    al.add_argument("--k-convs", type=int, default=8)
    al.add_argument("--iteration", type=int, default=1)
    al.add_argument("--seed", type=int, default=0)
    al.add_argument("--out", required=True)
    al.set_defaults(func=cmd_al)

    rep = sub.add_parser("report", help="summarize bootstrap iteration metrics")
    rep.add_argument("--run-dir", required=True)
    rep.add_argument("--json", action="store_true")
    rep.set_defaults(func=cmd_report)

    serve = sub.add_parser("eval-serve", help="host the pairwise evaluation service")
    serve.add_argument("--data-dir", required=True)
    serve.add_argument("--runs", action="append", default=[],
                       help="system=episodes.jsonl (repeatable)")
    serve.add_argument("--controls", help="gold episodes JSONL for control pairs")
    serve.add_argument("--controls-per-annotator", type=int, default=1)
    serve.add_argument("--static", help="directory with the built annotation UI")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8700)
    serve.add_argument("--seed", type=int, default=0)
    serve.set_defaults(func=cmd_eval_serve)

    play = sub.add_parser("play", help="interactive debug session (no manifest)")
    play.add_argument("--api-table", required=True)
    play.add_argument("--assistant-agent", default="scripted")
    play.add_argument("--schema", help="serialized SCHEMA grounding string")
    play.set_defaults(func=cmd_play)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (FileNotFoundError, OSError, ParseError) as exc:
        _fail(exc)
        return EXIT_DATA
    except TrainerFailed as exc:
        _fail(exc)
        return EXIT_TRAINER
    except AgentUnavailable as exc:
        _fail(exc)
        return EXIT_AGENT
    except (TodsimError, ValueError) as exc:
        _fail(exc)
        return EXIT_DATA


def _fail(exc: Exception) -> None:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
