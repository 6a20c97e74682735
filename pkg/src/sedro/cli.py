"""Operator command line: run sessions, evaluations, replays, inspections.

Exit codes: 0 success, 2 configuration/usage problems, 3 agent-runtime
failures (timeouts, disconnects). All commands honor --seed; identical
flags produce identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import socket
import subprocess
import sys
from pathlib import Path

from . import protocol
from .agents import POLICIES, run_client
from .body import BodySpec, data_dir
from .caregiver import CaregiverScript
from .development import Schedule
from .errors import ProtocolError, ReplayError, SceneValidationError, SessionAborted
from .evaluation import SCENARIOS, controller_for, write_report
from .scene import load_scene_file
from .session import (
    STATUS_CLEAN,
    PipeTransport,
    RunConfig,
    Session,
    SessionLog,
    SocketTransport,
    replay,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_AGENT = 3


def resolve_scene(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    candidate = data_dir() / "scenes" / f"{arg}.json"
    if candidate.exists():
        return candidate
    raise SceneValidationError("scene", f"scene file not found: {arg}")


def _add_run_args(p: argparse.ArgumentParser, default_ticks: int = 1000) -> None:
    p.add_argument("--scene", required=True, help="scene file path or shipped scene name")
    p.add_argument("--schedule", default=None, help="stage schedule JSON (default: shipped)")
    p.add_argument("--script", default=None, help="caregiver script override (rarely needed)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--time-scale", type=float, default=1.0)
    p.add_argument("--max-ticks", type=int, default=default_ticks)
    p.add_argument("--listen", default="127.0.0.1:0", help="host:port to listen on (port 0 = ephemeral)")
    p.add_argument("--out", default=None, help="output path (session log / report)")
    p.add_argument("--timeout-s", type=float, default=30.0)
    p.add_argument("--agent-cmd", default=None, help="run this command as the agent over stdio framing")


def _config_from_args(args, scenario=None, scenario_config=None) -> RunConfig:
    scene = resolve_scene(args.scene)
    spec = load_scene_file(scene)  # validation before the session starts
    if args.script is not None:
        spec.raw["caregiver_script_ref"] = args.script
    if args.schedule is not None:
        Schedule.load(args.schedule)
    return RunConfig(
        scene_path=str(scene),
        schedule_path=args.schedule,
        seed=args.seed,
        time_scale=args.time_scale,
        max_ticks=args.max_ticks,
        timeout_s=args.timeout_s,
        out_path=args.out,
        scenario=scenario,
        scenario_config=scenario_config or {},
    )


def _serve(config: RunConfig, args, controller=None) -> SessionLog:
    """Run one session over stdio subprocess or a TCP listener."""
    session = Session(config, controller=controller)
    if args.agent_cmd is not None:
        child = subprocess.Popen(
            args.agent_cmd,
            shell=True,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        transport = PipeTransport(child.stdout, child.stdin)
        try:
            log = session.run(transport)
        finally:
            transport.close()
            child.wait(timeout=10)
        return log

    host, _, port = args.listen.rpartition(":")
    host = host or "127.0.0.1"
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, int(port)))
    srv.listen(1)
    print(f"listening on {srv.getsockname()[0]}:{srv.getsockname()[1]}", flush=True)
    srv.settimeout(config.timeout_s)
    try:
        conn, _ = srv.accept()
    except socket.timeout:
        raise TimeoutError(f"no agent connected within {config.timeout_s}s")
    finally:
        srv.close()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    transport = SocketTransport(conn, timeout_s=config.timeout_s)
    try:
        return session.run(transport)
    finally:
        transport.close()


def cmd_run(args) -> int:
    try:
        config = _config_from_args(args)
    except SceneValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        log = _serve(config, args)
    except TimeoutError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_AGENT
    if config.out_path:
        log.save(config.out_path)
    ticks = log.tick_count
    print(f"session finished: {ticks} ticks, status {log.status}")
    return EXIT_OK if log.status == STATUS_CLEAN else EXIT_AGENT


def cmd_eval(args) -> int:
    if args.scenario not in SCENARIOS:
        print(
            f"error: unknown scenario {args.scenario!r}; registered: {', '.join(sorted(SCENARIOS))}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    scenario_config = {}
    if args.config is not None:
        try:
            scenario_config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            print(f"error: cannot read scenario config: {e}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        config = _config_from_args(args, scenario=args.scenario, scenario_config=scenario_config)
    except SceneValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    seed = config.seed if config.seed is not None else 0
    controller = controller_for(args.scenario, scenario_config, seed=seed)
    log_out = config.out_path
    config.out_path = None
    try:
        log = _serve(config, args, controller=controller)
    except TimeoutError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_AGENT
    if log.status != STATUS_CLEAN and not controller.done:
        print(f"error: session aborted (status {log.status})", file=sys.stderr)
        return EXIT_AGENT

    report = controller.report()
    out = Path(log_out) if log_out else Path(f"{args.scenario}_report.json")
    written = write_report(report, out, gaze_traces=controller.gaze_traces)
    if report.habituated_at is None:
        print(f"report written to {written} (NotHabituated: criterion never fired)")
    else:
        print(f"report written to {written}")
        print(f"novelty_preference: {report.novelty_preference}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        log = SessionLog.load(args.log)
    except ReplayError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        divergent, verified = replay(log)
    except ReplayError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if divergent is None:
        print(f"verified, 0 divergences ({verified} ticks)")
        return EXIT_OK
    print(f"divergence at tick {divergent} (after {verified} verified ticks)")
    return 1


def cmd_inspect(args) -> int:
    path = Path(args.path)
    try:
        if args.kind == "scene":
            spec = load_scene_file(resolve_scene(args.path))
            print(f"scene {spec.scene_id!r}: {len(spec.objects)} objects, seed {spec.seed}")
            for o in spec.objects:
                kind = "static" if o.static else ("kinematic" if o.kinematic else f"{o.mass} kg")
                print(f"  {o.id:16s} {o.shape:8s} {kind:10s} tags={sorted(o.tags)}")
        elif args.kind == "schedule":
            sched = Schedule.load(path)
            for r in sched.records:
                print(
                    f"  {r.stage_id:14s} [{r.start:+7.1f}, {r.end:+7.1f})d "
                    f"acuity {r.acuity[0]:.2f}->{r.acuity[1]:.2f} strength {r.strength[0]:.3f}->{r.strength[1]:.3f} "
                    f"scene={r.scene_id}"
                )
        elif args.kind == "script":
            script = CaregiverScript.load(path)
            print(f"{len(script.routines)} routines, {len(script.utterances)} utterances")
            for r in script.routines:
                print(f"  {r.id:14s} {r.behavior.name:9s} period={r.period_s}s offset={r.offset_s}s")
        else:
            BodySpec.load(path)
            print("body spec OK")
    except SceneValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_agent(args) -> int:
    policy = POLICIES[args.mode](args.seed)
    if args.stdio:
        return _agent_stdio(policy, args)
    host, _, port = args.connect.rpartition(":")
    try:
        steps = run_client(host or "127.0.0.1", int(port), policy, max_steps=args.max_steps, timeout_s=args.timeout_s)
    except (ConnectionError, ProtocolError, TimeoutError, OSError) as e:
        print(f"agent error: {e}", file=sys.stderr)
        return EXIT_AGENT
    print(f"agent completed {steps} steps", file=sys.stderr)
    return EXIT_OK


def _agent_stdio(policy, args) -> int:
    """Agent side of the stdio framing (used with `run --agent-cmd`)."""
    from .agents import SessionEnded, WireClient

    client = WireClient.__new__(WireClient)
    client._buf = bytearray()
    client.tick = 0
    client.version = None
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    client._send = lambda data: (stdout.write(data), stdout.flush())
    client.sock = None

    def recv():
        chunk = stdin.read1(65536)
        if not chunk:
            raise SessionEnded("stdin closed", client.tick)
        return chunk

    def recv_frame():
        while True:
            res = protocol.parse_frame(client._buf)
            if res is not None:
                ftype, tick, payload, consumed = res
                del client._buf[:consumed]
                return ftype, tick, payload
            client._buf.extend(recv())

    client._recv_frame = recv_frame
    steps = 0
    try:
        client.handshake()
        while args.max_steps is None or steps < args.max_steps:
            try:
                obs, events = client.recv_observation()
            except SessionEnded:
                break
            client.send_action(policy(obs, events))
            steps += 1
        else:
            client._send(protocol.encode_frame(protocol.BYE, client.tick))
    except (SessionAborted, ProtocolError, BrokenPipeError) as e:
        print(f"agent error: {e}", file=sys.stderr)
        return EXIT_AGENT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sedro", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="serve one lockstep session")
    _add_run_args(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_eval = sub.add_parser("eval", help="run an evaluation scenario")
    p_eval.add_argument("scenario", help="scenario id (e.g. rod_and_box)")
    p_eval.add_argument("--config", default=None, help="scenario config JSON file")
    _add_run_args(p_eval, default_ticks=60000)
    p_eval.set_defaults(fn=cmd_eval)

    p_replay = sub.add_parser("replay", help="verify a session log by re-simulation")
    p_replay.add_argument("log")
    p_replay.set_defaults(fn=cmd_replay)

    p_inspect = sub.add_parser("inspect", help="validate and summarize an asset file")
    p_inspect.add_argument("kind", choices=["scene", "schedule", "script", "body"])
    p_inspect.add_argument("path")
    p_inspect.set_defaults(fn=cmd_inspect)

    p_agent = sub.add_parser("agent", help="run a built-in test client")
    p_agent.add_argument("--mode", choices=sorted(POLICIES), default="zero")
    p_agent.add_argument("--connect", default="127.0.0.1:0", help="host:port of a running server")
    p_agent.add_argument("--stdio", action="store_true", help="speak frames on stdin/stdout instead")
    p_agent.add_argument("--seed", type=int, default=0)
    p_agent.add_argument("--max-steps", type=int, default=None)
    p_agent.add_argument("--timeout-s", type=float, default=30.0)
    p_agent.set_defaults(fn=cmd_agent)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
