"""Command-line client for the toolkit.

Every subcommand builds the same request model the HTTP service accepts and
prints the JSON response with sorted keys.  By default requests execute
in-process; `--server URL` sends them to a running service instead.

Exit codes: 0 success / check passed, 1 check failure, fidelity violation,
or interface violation, 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .machines import MachineError
from .protocols import ProtocolError
from .runtime import EmissionRefused, ScheduleError
from .service import handlers, models

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _load(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(_usage_error(f"cannot read {path}: {exc}"))


def _usage_error(message: str) -> int:
    print(json.dumps({"error": message}, sort_keys=True), file=sys.stderr)
    return EXIT_USAGE


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dispatch(args, endpoint: str, handler, request) -> tuple[dict, int]:
    """Run in-process or against `--server`; returns (response dict, exit code
    suggested by transport-level errors)."""
    if args.server:
        import httpx

        response = httpx.post(
            args.server.rstrip("/") + endpoint,
            json=json.loads(request.model_dump_json()),
            timeout=300.0,
        )
        if response.status_code == 409:
            return response.json().get("detail", {}), EXIT_FAILED
        if response.status_code >= 400:
            return response.json(), EXIT_USAGE
        return response.json(), EXIT_OK
    try:
        return json.loads(handler(request).model_dump_json()), EXIT_OK
    except handlers.DomainError as exc:
        payload = {"message": str(exc), **exc.payload}
        return payload, EXIT_USAGE if exc.usage else EXIT_FAILED
    except (ProtocolError, MachineError, ScheduleError, EmissionRefused) as exc:
        return {"message": str(exc)}, EXIT_USAGE


def cmd_check(args) -> int:
    request = models.CheckRequest(
        protocol=_load(args.protocol),
        subscription=_load(args.subscription),
        components=[_load(p) for p in args.components] if args.components else None,
    )
    payload, code = _dispatch(args, "/check", handlers.handle_check, request)
    _emit(payload, args.out)
    if code != EXIT_OK:
        return code
    return EXIT_OK if payload["report"]["passed"] else EXIT_FAILED


def cmd_compose(args) -> int:
    request = models.ComposeRequest(
        protocols=[_load(p) for p in args.protocols],
        roles=args.roles.split(",") if args.roles else None,
    )
    payload, code = _dispatch(args, "/compose", handlers.handle_compose, request)
    _emit(payload, args.out)
    return code


def cmd_subscribe(args) -> int:
    request = models.SubscribeRequest(
        protocols=[_load(p) for p in args.protocols],
        subscriptions=[_load(p) for p in args.subs] if args.subs else None,
        mode=args.mode,
    )
    payload, code = _dispatch(args, "/subscribe", handlers.handle_subscribe, request)
    _emit(payload, args.out)
    return code


def cmd_project(args) -> int:
    request = models.ProjectRequest(
        protocol=_load(args.protocol),
        role=args.role,
        subscription=_load(args.subscription),
    )
    payload, code = _dispatch(args, "/project", handlers.handle_project, request)
    _emit(payload, args.out)
    return code


def cmd_adapt(args) -> int:
    request = models.AdaptRequest(
        machine=_load(args.machine),
        protocols=[_load(p) for p in args.protocols],
        role=args.role,
        index=args.index,
        subscriptions=[_load(p) for p in args.subs] if args.subs else None,
    )
    payload, code = _dispatch(args, "/adapt", handlers.handle_adapt, request)
    _emit(payload, args.out)
    return code


def cmd_simulate(args) -> int:
    request = models.SimulateRequest(
        swarm=_load(args.swarm),
        steps=args.steps,
        seed=args.seed,
        legacy=args.legacy,
    )
    payload, code = _dispatch(args, "/simulate", handlers.handle_simulate, request)
    _emit(payload, args.out)
    return code


def cmd_fidelity(args) -> int:
    request = models.FidelityRequest(
        trace=_load(args.trace),
        protocol=_load(args.protocol) if args.protocol else None,
        subscription=_load(args.subscription) if args.subscription else None,
        eachStep=args.each_step,
    )
    payload, code = _dispatch(args, "/fidelity", handlers.handle_fidelity, request)
    _emit(payload, args.out)
    if code != EXIT_OK:
        return code
    return EXIT_OK if payload["passed"] else EXIT_FAILED


def cmd_bench(args) -> int:
    request = models.BenchRequest(
        n=args.n,
        seed=args.seed,
        protocolsPerInstance=args.protocols,
        repetitions=args.repetitions,
        branchProb=args.branch_prob,
        loopProb=args.loop_prob,
    )
    if args.server:
        payload, code = _dispatch(args, "/bench", handlers.handle_bench, request)
    else:
        from . import bench as benchmod

        records = benchmod.run_benchmark(
            instances=request.n,
            seed=request.seed,
            protocols_per_instance=request.protocolsPerInstance,
            repetitions=request.repetitions,
            branch_prob=request.branchProb,
            loop_prob=request.loopProb,
            parallel=args.parallel,
        )
        response = handlers.models.BenchResponse(
            records=[
                handlers.models.BenchRecordModel(
                    instance=r.instance,
                    transitions=r.transitions,
                    alg1Us=r.alg1_us,
                    exactUs=r.exact_us,
                    alg1Efrac=r.alg1_efrac,
                    exactEfrac=r.exact_efrac,
                    exactSkipped=r.exact_skipped,
                )
                for r in records
            ],
            csv=benchmod.records_to_csv(records),
        )
        payload, code = json.loads(response.model_dump_json()), EXIT_OK
    if args.out:
        Path(args.out).write_text(payload["csv"])
        summary = {k: v for k, v in payload.items() if k != "csv"}
        _emit(summary, None)
    else:
        _emit(payload, None)
    return code


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("swarmkit.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmkit",
        description="compose, verify, project, and simulate swarm protocols",
    )
    parser.add_argument(
        "--server",
        metavar="URL",
        default=None,
        help="send requests to a running swarmkit service instead of running in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="verify well-formedness of a protocol for a subscription")
    p.add_argument("--protocol", required=True, help="protocol JSON file")
    p.add_argument("--subscription", required=True, help="subscription JSON file")
    p.add_argument("--components", nargs="*", help="component protocol JSON files")
    p.add_argument("--out", help="write the report JSON here instead of stdout")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("compose", help="compose protocols into their synchronised product")
    p.add_argument("protocols", nargs="+", help="protocol JSON files, in order")
    p.add_argument("--roles", help="comma-separated override of the synchronising role set")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("subscribe", help="generate a well-formed subscription")
    p.add_argument("protocols", nargs="+", help="protocol JSON files")
    p.add_argument("--subs", nargs="*", help="per-protocol subscription JSON files")
    p.add_argument("--mode", choices=["alg1", "exact"], default="alg1")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_subscribe)

    p = sub.add_parser("project", help="project a protocol onto a role")
    p.add_argument("--protocol", required=True)
    p.add_argument("--role", required=True)
    p.add_argument("--subscription", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("adapt", help="adapt a machine into a composed swarm")
    p.add_argument("protocols", nargs="+", help="protocol JSON files of the composition")
    p.add_argument("--machine", required=True, help="machine JSON file to adapt")
    p.add_argument("--role", required=True)
    p.add_argument("--index", type=int, required=True, help="index of the machine's protocol")
    p.add_argument("--subs", nargs="*", help="per-protocol subscription JSON files")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("simulate", help="run a seeded swarm simulation")
    p.add_argument("--swarm", required=True, help="swarm spec JSON (protocol, subscription, members)")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--legacy", action="store_true", help="disable branch tracking")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("fidelity", help="replay a trace and check eventual fidelity")
    p.add_argument("--trace", required=True, help="trace JSON produced by simulate")
    p.add_argument("--protocol", help="protocol JSON (defaults to the trace's)")
    p.add_argument("--subscription", help="subscription JSON (defaults to the trace's)")
    p.add_argument("--each-step", action="store_true", help="check every intermediate state")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fidelity)

    p = sub.add_parser("bench", help="benchmark subscription generation on random instances")
    p.add_argument("--n", type=int, default=10, help="number of instances")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--protocols", type=int, default=2, help="protocols per instance")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--branch-prob", type=float, default=0.3)
    p.add_argument("--loop-prob", type=float, default=0.3)
    p.add_argument("--parallel", action="store_true", help="benchmark instances on a worker pool")
    p.add_argument("--out", help="write CSV here; summary JSON goes to stdout")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
