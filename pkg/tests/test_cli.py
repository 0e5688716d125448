import io
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collisim import cli
from collisim.cli import (
    ConfigError,
    CsvTable,
    emit_plot_data,
    main,
    parse_angle,
    parse_config,
    run_preset,
)
from collisim.engine import Strategy


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV, raising=False)


def read_rows(path):
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    assert lines[-1] == "" and "\r" not in text
    return lines[0].split(","), np.array([[float(v) for v in line.split(",")] for line in lines[1:-1]])


class TestAngles:
    @pytest.mark.parametrize(
        "text, value",
        [("1.5708", 1.5708), ("pi/2", math.pi / 2), ("0.95pi/2", 0.95 * math.pi / 2),
         ("2pi", 2 * math.pi), ("0.5*pi", math.pi / 2), ("-pi/4", -math.pi / 4), (0.3, 0.3)],
    )
    def test_parse(self, text, value):
        assert parse_angle(text) == pytest.approx(value, rel=1e-15)

    @pytest.mark.parametrize("text", ["pie", "pi/0", "", "1/2"])
    def test_reject(self, text):
        with pytest.raises(ValueError):
            parse_angle(text)


class TestParseConfig:
    def test_defaults(self):
        c = parse_config([])
        m = c.model
        assert c.preset == "trajectory"
        assert (m.gamma, m.delta, m.steps, m.strategy) == (0.05, math.pi / 2, 30_000, Strategy.RETAIN)
        assert (m.collision_probability, m.seed, c.grid) == (1.0, 0, 64)
        assert m.env_prep[0, 0] == 1.0
        assert c.output_path == "trajectory.csv" and c.pairs == "orthogonal"

    def test_headline_run(self):
        c = parse_config("run --gamma 0.05 --delta 1.5708 --steps 30000 --strategy 2".split())
        assert c.model.gamma == 0.05 and c.model.delta == 1.5708 and c.model.steps == 30_000

    def test_shorthand(self):
        c = parse_config(["--delta", "0.95pi/2"])
        assert c.model.delta == pytest.approx(0.95 * math.pi / 2)

    def test_subcommand_presets(self):
        for cmd, preset in cli.COMMANDS.items():
            assert parse_config([cmd]).preset == preset
        assert parse_config(["homogenize"]).model.delta == 0.0

    def test_precedence(self, tmp_path, monkeypatch):
        f = tmp_path / "c.cfg"
        f.write_text("# comment\ngamma = 0.2\nseed=5  # trailing\nsteps=10\n")
        monkeypatch.setenv(cli.SEED_ENV, "3")
        assert parse_config([]).model.seed == 3
        c = parse_config(["--config", str(f)])
        assert (c.model.gamma, c.model.seed, c.model.steps) == (0.2, 5, 10)
        c = parse_config(["--config", str(f), "--seed", "8", "--gamma", "pi/2"])
        assert c.model.seed == 8 and c.model.gamma == pytest.approx(math.pi / 2)
        c = parse_config([], file=str(f))
        assert c.model.steps == 10

    def test_file_preset(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("preset=sweep-threshold\npoints=3\n")
        c = parse_config([], file=str(f))
        assert c.preset == "threshold-sweep" and c.points == 3

    @pytest.mark.parametrize(
        "content, match",
        [("colour=red\n", "unknown key"), ("gamma\n", "key=value"), ("steps=abc\n", "bad value"),
         ("optimize=maybe\n", "bad value")],
    )
    def test_file_errors(self, tmp_path, content, match):
        f = tmp_path / "bad.cfg"
        f.write_text(content)
        with pytest.raises(ConfigError, match=match):
            parse_config([], file=str(f))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(["--config", str(tmp_path / "nope.cfg")])

    @pytest.mark.parametrize(
        "args, key",
        [(["--steps", "0"], "steps"), (["--prob", "1.5"], "prob"), (["--grid", "1"], "grid"),
         (["--strategy", "3"], "strategy"), (["--env-excited", "-0.1"], "env_excited"),
         (["--seed", "-1"], "seed"), (["--downsample", "0"], "downsample"),
         (["oracle-check", "--steps", "14"], "steps")],
    )
    def test_out_of_range_names_key_and_range(self, args, key):
        with pytest.raises(ConfigError, match=key) as info:
            parse_config(args)
        assert "range" in str(info.value) or "valid" in str(info.value)

    def test_missing_output(self):
        with pytest.raises(ConfigError, match="output"):
            parse_config(["--out", ""])

    def test_bad_tokens(self):
        with pytest.raises(ConfigError):
            parse_config(["frobnicate"])
        with pytest.raises(ConfigError):
            parse_config(["run", "--gamma", "abc"])
        with pytest.raises(ConfigError):
            parse_config(["run", "--pairs", "some"])

    def test_bad_env_seed(self, monkeypatch):
        monkeypatch.setenv(cli.SEED_ENV, "x")
        with pytest.raises(ConfigError, match=cli.SEED_ENV):
            parse_config([])


def run(args, tmp_path, name="out.csv"):
    out = tmp_path / name
    stream = io.StringIO()
    table = run_preset(parse_config(list(args) + ["--out", str(out), "--workers", "1"]), stream)
    return table, out, stream.getvalue()


class TestPresets:
    def test_trajectory(self, tmp_path):
        table, out, summary = run(["run", "--steps", "200"], tmp_path)
        header, rows = read_rows(out)
        assert header == ["step", "trace_distance"] and rows.shape == (201, 2)
        np.testing.assert_allclose(rows[:, 1], np.cos(np.arange(201) * 0.05) ** 2, atol=1e-12)
        assert summary.startswith("N=") and "pair=(" in summary and "steps=200 elapsed=" in summary

    def test_homogenize(self, tmp_path):
        _, out, _ = run(["homogenize"], tmp_path)
        header, rows = read_rows(out)
        assert header == ["step", "trace_distance", "fidelity"] and len(rows) == 2001
        assert np.all(np.diff(rows[:, 1]) <= 1e-12)
        assert rows[-1, 2] >= 0.99

    def test_sec_bound(self, tmp_path):
        _, out, _ = run(["sec-bound", "--steps", "100"], tmp_path)
        header, rows = read_rows(out)
        assert header == ["step", "dD", "env_term", "sec_term"] and len(rows) == 101

    def test_delta_sweep(self, tmp_path):
        _, out, _ = run(["sweep-delta", "--points", "3", "--steps", "300", "--grid", "4"], tmp_path)
        header, rows = read_rows(out)
        assert header == ["delta", "n_measure_s1", "n_measure_s2", "best_theta1_s1",
                          "best_theta2_s1", "best_theta1_s2", "best_theta2_s2"]
        np.testing.assert_allclose(rows[:, 0], [0, math.pi / 4, math.pi / 2])

    def test_threshold_sweep(self, tmp_path):
        _, out, _ = run(["sweep-threshold", "--points", "3", "--steps", "300", "--grid", "4"], tmp_path)
        header, rows = read_rows(out)
        assert header == ["p", "n_measure"]
        assert rows[0, 1] == 0.0

    def test_oracle_check(self, tmp_path):
        _, out, _ = run(["oracle-check", "--points", "5"], tmp_path)
        header, rows = read_rows(out)
        assert header == ["step", "max_abs_deviation"] and len(rows) == 9
        assert rows[:, 1].max() < 1e-10

    def test_optimize_flag(self, tmp_path):
        _, _, summary = run(["run", "--steps", "200", "--optimize", "--grid", "4"], tmp_path)
        assert "pair=(0," in summary

    def test_downsample_file(self, tmp_path):
        table, out, _ = run(["run", "--steps", "200", "--downsample", "10"], tmp_path)
        _, rows = read_rows(out)
        assert len(table) == 201 and len(rows) < 201
        assert rows[:, 1].max() == table.column("trace_distance").max()

    def test_values_round_trip(self, tmp_path):
        table, out, _ = run(["run", "--steps", "50", "--delta", "1.1"], tmp_path)
        _, rows = read_rows(out)
        np.testing.assert_array_equal(rows, table.rows)


class TestEmitPlotData:
    def make(self, d):
        return CsvTable(("step", "trace_distance"), np.column_stack([np.arange(len(d)), d]))

    def test_raw_identity(self):
        t = self.make(np.linspace(1, 0, 11))
        assert emit_plot_data(t, "raw") is t

    def test_constant_column(self):
        t = self.make(np.full(30_001, 0.5))
        assert len(emit_plot_data(t, 10)) == math.ceil(30_001 / 10)

    def test_oscillation_keeps_extrema(self):
        n = np.arange(30_001)
        d = np.cos(n * 0.05) ** 2
        out = emit_plot_data(self.make(d), 10)
        kept = out.column("trace_distance")
        assert len(out) <= 3001 + 2 * 30_001 * 0.05 / math.pi + 4
        assert kept.max() == d.max() and kept.min() == d.min()

    def test_errors(self):
        with pytest.raises(ValueError):
            emit_plot_data(self.make(np.array([])), 2)
        with pytest.raises(ValueError):
            emit_plot_data(self.make(np.ones(3)), 0)

    @given(st.integers(1, 20), st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_local_extrema_survive(self, k, seed):
        d = np.random.default_rng(seed).uniform(size=200)
        out = emit_plot_data(self.make(d), k)
        steps = set(out.column("step").astype(int))
        interior = np.flatnonzero((d[1:-1] > d[:-2]) & (d[1:-1] > d[2:])) + 1
        assert set(interior) <= steps and set(range(0, 200, k)) <= steps


class TestMain:
    def test_no_args(self, capsys):
        assert main([]) == 0
        assert "usage" in capsys.readouterr().out

    def test_config_error_exit(self, capsys):
        assert main(["run", "--steps", "0"]) == 2
        assert "steps" in capsys.readouterr().err

    def test_success(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        assert main(["run", "--steps", "20", "--out", str(out)]) == 0
        assert out.exists() and capsys.readouterr().out.startswith("N=")

    def test_unwritable_path(self, tmp_path):
        assert main(["run", "--steps", "5", "--out", str(tmp_path / "missing" / "t.csv")]) == 1

    def test_failure_leaves_no_partial_output(self, tmp_path, monkeypatch):
        def boom(config):
            raise RuntimeError("worker died")

        monkeypatch.setitem(cli._RUNNERS, "trajectory", boom)
        out = tmp_path / "t.csv"
        assert main(["run", "--out", str(out)]) == 1
        assert os.listdir(tmp_path) == []

    def test_invalid_table_is_not_written(self, tmp_path, monkeypatch):
        def bad(config):
            table = CsvTable(("step", "trace_distance"), np.array([[0, np.nan]]))
            return table, 0.0, (0.0, 0.0), None

        monkeypatch.setitem(cli._RUNNERS, "trajectory", bad)
        assert main(["run", "--steps", "5", "--out", str(tmp_path / "t.csv")]) == 1
        assert os.listdir(tmp_path) == []

    def test_module_entry_point(self, tmp_path):
        out = tmp_path / "t.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "collisim", "run", "--steps", "10", "--out", str(out)],
            capture_output=True, text=True, env={**os.environ, cli.SEED_ENV: "4"},
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.startswith("N=")


class TestDeterminism:
    @pytest.mark.parametrize(
        "args",
        [["run", "--steps", "300", "--prob", "0.5", "--delta", "1.2"],
         ["sweep-threshold", "--points", "3", "--steps", "200", "--grid", "4"],
         ["sweep-delta", "--points", "2", "--steps", "200", "--grid", "4"]],
    )
    def test_byte_identical_across_workers(self, tmp_path, args):
        blobs = []
        for workers in ("1", "1", "3"):
            out = tmp_path / f"w{len(blobs)}.csv"
            run_preset(parse_config(args + ["--out", str(out), "--workers", workers]), io.StringIO())
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]
