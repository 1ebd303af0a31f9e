"""Command-line entry points: the service runner and the latency bench."""

from __future__ import annotations

import csv
import io
import signal
import statistics
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import click
import numpy as np
import requests
from PIL import Image

from .config import ConfigError, load_config

INTERCEPT_HOSTNAME_DEFAULT = "osn.local"

BENCH_ACTIONS = (
    "login",
    "chat_send",
    "post",
    "image_upload",
    "profile_visit",
    "video_visit",
)


def _healthy(url: str) -> bool:
    try:
        return requests.get(f"{url}/health", timeout=1).status_code == 200
    except requests.RequestException:
        return False


@click.group()
def main() -> None:
    """Cybersafety family advice suite services."""


@main.command()
@click.option("--all", "run_all", is_flag=True, help="Run every component.")
@click.option("--iwp", "run_iwp", is_flag=True, help="Run the in-home worker + proxy.")
@click.option("--backend", "run_backend", is_flag=True, help="Run the family back-end.")
@click.option("--mocks", "run_mocks", is_flag=True, help="Run the mock OSN and external APIs.")
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file.")
def run(run_all: bool, run_iwp: bool, run_backend: bool, run_mocks: bool, config_path) -> None:
    """Start the selected components and block until interrupted.

    Already-running components (healthy at their configured port) are left
    alone, so repeated invocations are idempotent.
    """
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if run_all:
        run_iwp = run_backend = run_mocks = True
    if not (run_iwp or run_backend or run_mocks):
        click.echo("error: nothing to run; pass --all or a component flag", err=True)
        sys.exit(2)

    from .backend.core import Backend, DetectorBundle
    from .backend.service import BackendService
    from .detectors.rules import load_rule_tables
    from .ingest import UpstreamTarget
    from .iwp import BackendClient, Iwp, IwpService
    from .mocks import MockApiService, MockOsnService

    started = []
    osn = apis = backend_svc = iwp_svc = None

    if run_mocks:
        if _healthy(f"http://127.0.0.1:{cfg.osn_port}"):
            click.echo(f"mock OSN already running on port {cfg.osn_port}")
        else:
            osn = MockOsnService(port=cfg.osn_port).start()
            started.append(osn)
            click.echo(f"mock OSN listening on {osn.base_url}")
        if _healthy(f"http://127.0.0.1:{cfg.api_port}"):
            click.echo(f"mock APIs already running on port {cfg.api_port}")
        else:
            apis = MockApiService(port=cfg.api_port).start()
            started.append(apis)
            click.echo(f"mock APIs listening on {apis.base_url}")

    backend_url = f"http://127.0.0.1:{cfg.backend_port}"
    if run_backend:
        if _healthy(backend_url):
            click.echo(f"back-end already running on port {cfg.backend_port}")
        else:
            core = Backend()
            core.publish_bundle(DetectorBundle.from_tables(load_rule_tables(), "baseline-1"))
            backend_svc = BackendService(core, port=cfg.backend_port).start()
            started.append(backend_svc)
            click.echo(f"back-end listening on {backend_svc.base_url}")

    if run_iwp:
        if _healthy(f"http://127.0.0.1:{cfg.iwp_port}"):
            click.echo(f"IWP already running on port {cfg.iwp_port}")
        else:
            client = None
            if _healthy(backend_url):
                client = BackendClient(backend_url)
            intercept = {
                h.hostname: UpstreamTarget("127.0.0.1", cfg.osn_port, h.platform)
                for h in cfg.intercept_hosts
            }
            iwp = Iwp(
                household_id=cfg.household_id,
                backend=client,
                bot_api_url=f"http://127.0.0.1:{cfg.api_port}",
                video_api_url=f"http://127.0.0.1:{cfg.api_port}",
                intercept=intercept,
                blocklist=frozenset(cfg.blocklist),
                hold_deadline_ms=cfg.hold_deadline_ms,
                heartbeat_interval_s=cfg.heartbeat_interval_s,
                proxy_port=cfg.proxy_port,
            )
            iwp_svc = IwpService(iwp, port=cfg.iwp_port).start()
            started.append(iwp_svc)
            click.echo(f"IWP API listening on {iwp_svc.base_url}")
            click.echo(f"proxy listening on {iwp.proxy.host}:{iwp.proxy.port}")
            click.echo(f"CA certificate: {iwp.ca.ca_cert_path}")

    if not started:
        click.echo("all requested components already running; nothing to do")
        return

    stop = {"flag": False}
    signal.signal(signal.SIGINT, lambda *a: stop.update(flag=True))
    signal.signal(signal.SIGTERM, lambda *a: stop.update(flag=True))
    click.echo("running; press Ctrl+C to stop")
    while not stop["flag"]:
        time.sleep(0.2)
    for svc in reversed(started):
        svc.stop()
    click.echo("stopped")


def _bench_image() -> bytes:
    pixels = np.full((64, 64, 3), 128, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return buf.getvalue()


def _run_action(session: requests.Session, base: str, action: str, image: bytes) -> None:
    if action == "login":
        session.post(f"{base}/login", data={"user": "casey"}, timeout=10).raise_for_status()
    elif action == "chat_send":
        session.post(
            f"{base}/chat", data={"to": "bob", "text": "see you after school"}, timeout=10
        ).raise_for_status()
    elif action == "post":
        session.post(
            f"{base}/post", data={"text": "what a nice day outside"}, timeout=10
        ).raise_for_status()
    elif action == "image_upload":
        session.post(f"{base}/upload", data=image, timeout=10).raise_for_status()
    elif action == "profile_visit":
        session.get(f"{base}/profile/alice", timeout=10).raise_for_status()
    elif action == "video_visit":
        session.get(f"{base}/watch", params={"v": "v123"}, timeout=10).raise_for_status()
    else:
        raise ValueError(f"unknown bench action {action!r}")


def _measure(session: requests.Session, base: str, action: str, reps: int, warmup: int, image: bytes) -> list[float]:
    timings = []
    for i in range(warmup + reps):
        t0 = time.perf_counter()
        _run_action(session, base, action, image)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        if i >= warmup:  # warmup reps are discarded
            timings.append(elapsed_ms)
    return timings


def _p95(timings: list[float]) -> float:
    return float(np.percentile(timings, 95))


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), required=False)
@click.option("--out", "out_path", type=click.Path(), required=True)
def bench(scenario_path, out_path) -> None:
    """Measure per-action latency with and without CFAS in the path.

    Spins up a private mock OSN plus a full IWP proxy, runs each scenario
    action serially direct-to-origin and through the proxy, and writes a CSV
    of mean and p95 latencies.
    """
    actions: tuple[str, ...] = BENCH_ACTIONS
    reps, warmup = 100, 10
    if scenario_path:
        doc = tomllib.loads(Path(scenario_path).read_text())
        actions = tuple(doc.get("actions", BENCH_ACTIONS))
        reps = int(doc.get("reps", reps))
        warmup = int(doc.get("warmup", warmup))
    unknown = [a for a in actions if a not in BENCH_ACTIONS]
    if unknown:
        click.echo(f"error: unknown actions {unknown}", err=True)
        sys.exit(2)

    from .ingest import UpstreamTarget
    from .iwp import Iwp
    from .mocks import MockApiService, MockOsnService

    osn = MockOsnService().start()
    apis = MockApiService().start()
    iwp = Iwp(
        bot_api_url=apis.base_url,
        video_api_url=apis.base_url,
        intercept={
            INTERCEPT_HOSTNAME_DEFAULT: UpstreamTarget("127.0.0.1", osn.http.port, "facebook_like")
        },
    ).start()
    image = _bench_image()
    rows = []
    try:
        direct = requests.Session()
        proxied = requests.Session()
        proxied.proxies = {"http": f"http://{iwp.proxy.host}:{iwp.proxy.port}"}
        for action in actions:
            baseline = _measure(direct, osn.base_url, action, reps, warmup, image)
            rows.append((action, 0, statistics.fmean(baseline), _p95(baseline), reps))
            with_cfas = _measure(
                proxied, f"http://{INTERCEPT_HOSTNAME_DEFAULT}", action, reps, warmup, image
            )
            rows.append((action, 1, statistics.fmean(with_cfas), _p95(with_cfas), reps))
            click.echo(
                f"{action}: direct {rows[-2][2]:.2f}ms mean, with cfas {rows[-1][2]:.2f}ms mean"
            )
    finally:
        iwp.stop()
        apis.stop()
        osn.stop()

    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["action", "with_cfas", "mean_ms", "p95_ms", "n"])
        for action, flag, mean_ms, p95_ms, n in rows:
            writer.writerow([action, flag, f"{mean_ms:.3f}", f"{p95_ms:.3f}", n])
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
