"""The girp command-line tool: inspect, run, serve, client, migrate, bench.

Configuration precedence per key: CLI flag > GIRP_* environment variable >
config file (`key = value` lines) > built-in default. Every effective value is
logged at startup; log timestamps are milliseconds since process start so logs
from UE and server roles line up.
"""

from __future__ import annotations

import argparse
import logging
import socket
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

from . import bench, wire
from .client import OffloadClient
from .errors import GirpError
from .executor import InterpreterExecutor
from .reflect import SpirvModule, parse_header, reflect
from .script import ClientTarget, SessionTarget, run_script
from .server import Server
from .session import Session

log = logging.getLogger("girp")

CONFIG_DEFAULTS = {
    "listen_addr": f"127.0.0.1:{wire.DEFAULT_PORT}",
    "connect_addr": f"127.0.0.1:{wire.DEFAULT_PORT}",
    "backend": "interp",
    "heartbeat_interval_ms": "100",
    "miss_threshold": "3",
    "frame_size_cap": str(wire.MAX_PAYLOAD),
    "log_level": "INFO",
}


@dataclass
class Config:
    listen_addr: str
    connect_addr: str
    backend: str
    heartbeat_interval_ms: int
    miss_threshold: int
    frame_size_cap: int
    log_level: str


def _read_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(args: argparse.Namespace, env: dict) -> Config:
    file_values = _read_config_file(getattr(args, "config", None)
                                    or env.get("GIRP_CONFIG"))
    resolved = {}
    for key, default in CONFIG_DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = str(flag)
            source = "flag"
        elif f"GIRP_{key.upper()}" in env:
            resolved[key] = env[f"GIRP_{key.upper()}"]
            source = "env"
        elif key in file_values:
            resolved[key] = file_values[key]
            source = "file"
        else:
            resolved[key] = default
            source = "default"
        del source
    config = Config(
        listen_addr=resolved["listen_addr"],
        connect_addr=resolved["connect_addr"],
        backend=resolved["backend"],
        heartbeat_interval_ms=int(resolved["heartbeat_interval_ms"]),
        miss_threshold=int(resolved["miss_threshold"]),
        frame_size_cap=int(resolved["frame_size_cap"]),
        log_level=resolved["log_level"],
    )
    return config


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


# --- subcommands -------------------------------------------------------------


def cmd_inspect(args, config) -> int:
    data = Path(args.file).read_bytes()
    version, _generator, _bound = parse_header(data)
    module = SpirvModule.from_bytes(data)
    info = reflect(module)
    print(f"version: {version[0]}.{version[1]}")
    for ep in info.entry_points:
        print(f"entry_point: {ep.name}")
        print(f"execution_model: {ep.execution_model.value}")
        if ep.local_size is not None:
            print(f"local_size: {ep.local_size[0]},{ep.local_size[1]},{ep.local_size[2]}")
    for slot in info.bindings:
        print(f"binding: set={slot.set} binding={slot.binding} kind={slot.kind.value}")
    print(f"content_hash: {module.content_hash.hex()}")
    return 0


def cmd_run(args, config) -> int:
    module = SpirvModule.from_bytes(Path(args.file).read_bytes())
    executor = InterpreterExecutor()
    executor.load(module)
    handle = executor.create_pipeline(module.content_hash, args.entry)
    groups = tuple(int(x) for x in args.groups.split(","))
    if len(groups) != 3:
        print("--groups requires X,Y,Z", file=sys.stderr)
        return 2
    buffers = {}
    paths = {}
    for spec in args.buffer or []:
        dset, binding, path = spec.split(":", 2)
        slot = (int(dset), int(binding))
        buffers[slot] = bytearray(Path(path).read_bytes())
        paths[slot] = Path(path)
    timing = executor.dispatch(handle, groups, buffers)
    for slot, path in paths.items():
        path.write_bytes(bytes(buffers[slot]))
    log.info("dispatch done: prepare=%dns execute=%dns readback=%dns",
             timing.prepare_ns, timing.execute_ns, timing.readback_ns)
    return 0


def cmd_serve(args, config) -> int:
    host, port = _parse_addr(config.listen_addr)
    server = Server(host=host, port=port, backend=config.backend)
    log.info("serving on %s:%d (backend=%s)", host, port, config.backend)
    server.serve_forever()
    return 0


def cmd_client(args, config) -> int:
    client = OffloadClient(
        _parse_addr(config.connect_addr),
        heartbeat_interval_ms=config.heartbeat_interval_ms,
        miss_threshold=config.miss_threshold,
    )
    log.info("session %s", client.session_id.hex())
    try:
        if args.client_command == "run":
            script = Path(args.script)
            run_script(script.read_text(), ClientTarget(client),
                       base_dir=script.parent, out=sys.stdout)
        return 0
    finally:
        client.close()


def _session_request(addr: tuple[str, int], session_id: bytes, message):
    sock = socket.create_connection(addr, timeout=30.0)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    conn = wire.Connection(sock, session_id=session_id)
    try:
        _frame, response = conn.request(message, timeout_s=60.0)
        if isinstance(response, wire.Error):
            raise GirpError(f"server error 0x{response.code:04x}: {response.message}")
        return response
    finally:
        conn.close()


def cmd_migrate(args, config) -> int:
    source = _parse_addr(args.source)
    target = _parse_addr(args.target)
    session_id = bytes.fromhex(args.session)

    t0 = time.perf_counter_ns()
    snap = _session_request(source, session_id, wire.ExportSession())
    t1 = time.perf_counter_ns()

    # fresh session on the target, then import into it
    sock = socket.create_connection(target, timeout=30.0)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    conn = wire.Connection(sock)
    try:
        conn.send(wire.Hello(client_kind=wire.CLIENT_KIND_SERVER))
        _f, ack = conn.recv(30.0)
        conn.session_id = ack.session_id
        t2 = time.perf_counter_ns()
        _f, response = conn.request(wire.ImportSession(snapshot=snap.snapshot),
                                    timeout_s=60.0)
        t3 = time.perf_counter_ns()
        if isinstance(response, wire.Error):
            raise GirpError(f"import failed 0x{response.code:04x}: {response.message}")
        print(f"export_ms {(t1 - t0) / 1e6:.3f}")
        print(f"transfer_ms {(t2 - t1) / 1e6:.3f}")
        print(f"import_ms {(t3 - t2) / 1e6:.3f}")
        print(f"total_ms {(t3 - t0) / 1e6:.3f}")
        print(f"target_session {ack.session_id.hex()}")
    finally:
        conn.close()
    return 0


def _bench_target(target: str, config):
    """Returns (script-style target, cleanup)."""
    if target == "local":
        session = Session()
        return SessionTarget(session), lambda: None
    client = OffloadClient(_parse_addr(target), start_heartbeat=False)
    return ClientTarget(client), client.close


def cmd_bench(args, config) -> int:
    reports = []
    if args.scenario == "cold-start":
        target, cleanup = _bench_target(args.target, config)
        try:
            reports = [bench.run_cold_start(target, iterations=args.iterations,
                                            warmup=args.warmup)]
        finally:
            cleanup()
    elif args.scenario == "frame-draw":
        w, h = (int(x) for x in args.resolution.split("x"))
        target, cleanup = _bench_target(args.target, config)
        try:
            reports = [bench.run_frame_draw(target, frames=args.iterations,
                                            resolution=(w, h), warmup=args.warmup)]
        finally:
            cleanup()
    elif args.scenario == "migrate":
        session = Session()
        st = SessionTarget(session)
        from . import fixtures

        module_hash = st.load_module(fixtures.multiply_kernel())
        st.create_pipeline(module_hash, "main")
        st.alloc(1, 128 * 1024)
        st.alloc(2, 128 * 1024)
        result = bench.run_migration_bench(session, iterations=args.iterations,
                                           warmup=args.warmup)
        reports = result.reports()
        if result.failures:
            print(f"failed_iterations: {result.failures}", file=sys.stderr)
    elif args.scenario == "rtt":
        if args.target == "local":
            print("rtt requires a remote --target", file=sys.stderr)
            return 2
        sock = socket.create_connection(_parse_addr(args.target), timeout=10.0)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn = wire.Connection(sock)
        conn.send(wire.Hello())
        _f, ack = conn.recv(10.0)
        conn.session_id = ack.session_id
        try:
            reports = [bench.run_rtt(conn, iterations=args.iterations,
                                     warmup=args.warmup)]
        finally:
            conn.close()

    if args.json:
        for report in reports:
            print(report.to_json(raw=args.raw))
    else:
        print(bench.render_table(reports))
    if args.budget:
        verdict = bench.check_budget(reports[-1], bench.BudgetModel())
        print(verdict.table())
    return 0


# --- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="girp",
        description="GPU-IR remoting runtime: SPIR-V offload, migration, benchmarks",
    )
    parser.add_argument("--config", help="config file path (key = value lines)")
    parser.add_argument("--log-level", dest="log_level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print reflected metadata of a SPIR-V binary")
    p.add_argument("file")
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("run", help="execute a kernel locally on the interpreter")
    p.add_argument("file")
    p.add_argument("--entry", default="main")
    p.add_argument("--groups", default="1,1,1")
    p.add_argument("--buffer", action="append",
                   help="set:binding:file (raw little-endian, written back)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("serve", help="host sessions over TCP")
    p.add_argument("--listen", dest="listen_addr", default=None)
    p.add_argument("--backend", dest="backend", default=None,
                   choices=["interp", "gpu"])
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("client", help="drive a remote server")
    p.add_argument("--server", dest="connect_addr", default=None)
    csub = p.add_subparsers(dest="client_command", required=True)
    crun = csub.add_parser("run", help="run a .girpscript file")
    crun.add_argument("script")
    p.set_defaults(fn=cmd_client)

    p = sub.add_parser("migrate", help="move a session between servers")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--to", dest="target", required=True)
    p.add_argument("--session", required=True, help="hex session id")
    p.set_defaults(fn=cmd_migrate)

    p = sub.add_parser("bench", help="latency scenarios")
    p.add_argument("scenario", choices=["cold-start", "frame-draw", "migrate", "rtt"])
    p.add_argument("--target", default="local", help="local or host:port")
    p.add_argument("--iterations", type=int, default=bench.DEFAULT_ITERATIONS)
    p.add_argument("--warmup", type=int, default=bench.DEFAULT_WARMUP)
    p.add_argument("--resolution", default="1280x720")
    p.add_argument("--json", action="store_true")
    p.add_argument("--table", action="store_true")
    p.add_argument("--raw", action="store_true", help="include samples in --json")
    p.add_argument("--budget", action="store_true",
                   help="append the 120 Hz device-budget decomposition")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    import os

    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level="INFO",
        format="%(relativeCreated)dms %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    config = load_config(args, dict(os.environ))
    logging.getLogger().setLevel(config.log_level.upper())
    for f in fields(config):
        log.info("config: %s = %s", f.name, getattr(config, f.name))
    try:
        return args.fn(args, config)
    except GirpError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
