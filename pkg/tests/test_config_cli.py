"""Configuration loading and the CLI entry points."""

from __future__ import annotations

import csv
import signal
import socket
import subprocess
import sys
import time

import pytest
import requests
from click.testing import CliRunner

from cfas.cli import BENCH_ACTIONS, main
from cfas.config import CfasConfig, ConfigError, load_config


def _write(tmp_path, text: str) -> str:
    path = tmp_path / "cfas.toml"
    path.write_text(text)
    return str(path)


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg == CfasConfig()
        assert cfg.iwp_port == 8710
        assert cfg.intercept_hosts[0].hostname == "osn.local"

    def test_full_valid_file(self, tmp_path):
        cfg = load_config(
            _write(
                tmp_path,
                """
                iwp_port = 9001
                backend_port = 9002
                hold_deadline_ms = 500
                heartbeat_interval_s = 2.5
                household_id = "smith-house"
                blocklist = ["Bad.Example", "worse.example"]
                [[intercept_hosts]]
                hostname = "osn.local"
                platform = "facebook_like"
                [[intercept_hosts]]
                hostname = "tube.local"
                platform = "youtube_like"
                """,
            )
        )
        assert cfg.iwp_port == 9001
        assert cfg.hold_deadline_ms == 500
        assert cfg.heartbeat_interval_s == 2.5
        assert cfg.household_id == "smith-house"
        assert cfg.blocklist == ["bad.example", "worse.example"]  # normalized
        assert [h.hostname for h in cfg.intercept_hosts] == ["osn.local", "tube.local"]

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/cfas.toml")

    @pytest.mark.parametrize(
        "snippet, key",
        [
            ('iwp_port = "eight"', "iwp_port"),
            ("backend_port = 700000", "backend_port"),
            ("hold_deadline_ms = 0", "hold_deadline_ms"),
            ("heartbeat_interval_s = -1", "heartbeat_interval_s"),
            ('household_id = ""', "household_id"),
            ('blocklist = [1, 2]', "blocklist"),
            ('intercept_hosts = ["osn.local"]', "intercept_hosts[0]"),
            (
                '[[intercept_hosts]]\nhostname = "x"\nplatform = "myspace"',
                "intercept_hosts[0].platform",
            ),
            ("ca_dir = 5", "ca_dir"),
        ],
    )
    def test_invalid_values_name_the_key(self, tmp_path, snippet, key):
        with pytest.raises(ConfigError) as excinfo:
            load_config(_write(tmp_path, snippet))
        assert excinfo.value.key == key
        assert key in str(excinfo.value)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class TestRunCommand:
    def test_no_component_flags_exits_2(self):
        result = CliRunner().invoke(main, ["run"])
        assert result.exit_code == 2
        assert "nothing to run" in result.output

    def test_invalid_config_exits_2(self, tmp_path):
        path = _write(tmp_path, "iwp_port = -4")
        result = CliRunner().invoke(main, ["run", "--all", "--config", path])
        assert result.exit_code == 2
        assert "iwp_port" in result.output

    def test_run_all_serves_and_stops_cleanly(self, tmp_path):
        ports = {name: _free_port() for name in
                 ("iwp_port", "backend_port", "osn_port", "api_port", "proxy_port")}
        config = _write(
            tmp_path, "".join(f"{k} = {v}\n" for k, v in ports.items())
        )
        proc = subprocess.Popen(
            [sys.executable, "-m", "cfas.cli", "run", "--all", "--config", config],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
        )
        try:
            deadline = time.monotonic() + 30
            healthy = False
            while time.monotonic() < deadline:
                try:
                    ok = all(
                        requests.get(
                            f"http://127.0.0.1:{ports[name]}/health", timeout=1
                        ).status_code == 200
                        for name in ("iwp_port", "backend_port", "osn_port", "api_port")
                    )
                    if ok:
                        healthy = True
                        break
                except requests.RequestException:
                    pass
                time.sleep(0.2)
            assert healthy, "services never became healthy"
            proc.send_signal(signal.SIGTERM)
            assert proc.wait(timeout=15) == 0
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()


class TestBenchCommand:
    def test_unknown_action_exits_2(self, tmp_path):
        scenario = tmp_path / "scenario.toml"
        scenario.write_text('actions = ["teleport"]\nreps = 1\n')
        result = CliRunner().invoke(
            main, ["bench", "--scenario", str(scenario), "--out", str(tmp_path / "x.csv")]
        )
        assert result.exit_code == 2

    def test_bench_writes_csv(self, tmp_path):
        scenario = tmp_path / "scenario.toml"
        scenario.write_text('actions = ["login", "chat_send"]\nreps = 3\nwarmup = 1\n')
        out = tmp_path / "bench.csv"
        result = CliRunner().invoke(
            main, ["bench", "--scenario", str(scenario), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        # one direct and one proxied row per action
        assert [(r["action"], r["with_cfas"]) for r in rows] == [
            ("login", "0"), ("login", "1"), ("chat_send", "0"), ("chat_send", "1"),
        ]
        for row in rows:
            assert float(row["mean_ms"]) > 0
            assert float(row["p95_ms"]) >= float(row["mean_ms"]) * 0.0
            assert int(row["n"]) == 3

    def test_default_actions_cover_the_matrix(self):
        assert set(BENCH_ACTIONS) == {
            "login", "chat_send", "post", "image_upload", "profile_visit", "video_visit",
        }
