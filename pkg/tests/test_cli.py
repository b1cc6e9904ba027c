import json
import textwrap

import pytest

from kflow import cli
from kflow.errors import ConfigError, PropertyViolation, SolverError

DISK = """
[scenario]
kind = flow
name = small-disk

[kernel]
type = fractional
s = 0.5
radius = 4

[grid]
shape = 32, 32

[shape]
kind = disk
center = 0, 0
radius = 8

[run]
h = 1
t_max = 50
"""


def write(tmp_path, text, name="scn.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def run(argv):
    return cli.main([str(a) for a in argv])


def test_flow_scenario(tmp_path, capsys):
    cfg = write(tmp_path, DISK)
    out = tmp_path / "out"
    assert run(["run", cfg, "--out", out, "--verify"]) == cli.EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    res = manifest["results"]
    assert res["termination"] == "extinction"
    assert res["monotone_inclusion"] and res["monotone_perimeter"] and res["verified"]
    assert manifest["config"]["shape"]["radius"] == 8
    assert "numpy" in manifest["versions"]
    assert (out / "results.csv").is_file()
    assert any((out / "snapshots").glob("*.pbm"))
    assert json.loads(capsys.readouterr().out)["termination"] == "extinction"


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, DISK)
    run(["run", cfg, "--out", tmp_path / "a", "--seed", 7])
    run(["run", cfg, "--out", tmp_path / "b", "--seed", 7])
    for name in ("results.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_results_reproducible_from_manifest(tmp_path):
    cfg = write(tmp_path, DISK)
    run(["run", cfg, "--out", tmp_path / "a"])
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    cfg2 = tmp_path / "again.ini"
    lines = []
    for sec, vals in manifest["config"].items():
        lines.append(f"[{sec}]")
        for k, v in vals.items():
            if isinstance(v, list):
                v = ", ".join(map(str, v))
            lines.append(f"{k} = {v}")
    cfg2.write_text("\n".join(lines) + "\n")
    run(["run", cfg2, "--out", tmp_path / "b"])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_negative_h_no_output(tmp_path, capsys):
    cfg = write(tmp_path, DISK.replace("h = 1", "h = -1"))
    out = tmp_path / "out"
    assert run(["run", cfg, "--out", out]) == cli.EXIT_CONFIG
    assert not out.exists()
    assert not any(p.name.startswith(".kflow-") for p in tmp_path.iterdir())
    assert "config error" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path):
    cfg = write(tmp_path, DISK.replace("radius = 8", "raduis = 8"))
    assert run(["run", cfg, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG
    with pytest.raises(ConfigError, match="raduis"):
        cli.load_config(cfg)


def test_unknown_section_rejected(tmp_path):
    cfg = write(tmp_path, DISK + "\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="extra"):
        cli.load_config(cfg)


def test_missing_file(tmp_path):
    assert run(["run", tmp_path / "nope.ini"]) == cli.EXIT_CONFIG


def test_shape_clearance(tmp_path):
    cfg = write(tmp_path, DISK.replace("radius = 8", "radius = 15"))
    assert run(["run", cfg, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG


def test_h_sweep_needs_three_values(tmp_path):
    text = DISK.replace("kind = flow", "kind = h-sweep").replace("h = 1", "h_list = 1")
    with pytest.raises(ConfigError, match="at least 3"):
        cli.load_config(write(tmp_path, text))
    bad_order = DISK.replace("kind = flow", "kind = h-sweep").replace("h = 1", "h_list = 1, 2, 0.5")
    with pytest.raises(ConfigError):
        cli.load_config(write(tmp_path, bad_order, "b.ini"))


def test_h_sweep_table(tmp_path):
    text = DISK.replace("kind = flow", "kind = h-sweep").replace("h = 1", "h_list = 2, 1, 0.5")
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    assert run(["run", cfg, "--out", out, "--threads", 2]) == cli.EXIT_OK
    rows = (out / "results.csv").read_text().splitlines()
    assert rows[0].startswith("h,steps,termination,integrated_perimeter,jk_arrival,abs_difference")
    assert len(rows) == 4
    assert (out / "volumes.csv").is_file()
    for row in rows[1:]:
        f = row.split(",")
        # the arrival-time functional equals the time-integrated perimeter
        assert float(f[4]) == pytest.approx(float(f[3]), rel=1e-9)


def test_certify_half_plane(tmp_path):
    text = """
    [scenario]
    kind = certify

    [kernel]
    s = 0.5
    radius = 4

    [grid]
    shape = 40, 40

    [shape]
    kind = half-plane
    normal = 1, 0

    [run]
    omega_radius = 12
    """
    out = tmp_path / "o"
    assert run(["run", write(tmp_path, text), "--out", out]) == cli.EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["results"]["verdict"] == "minimizing"


def test_threads_env(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli._threads(None) == 3
    assert cli._threads(1) == 1
    monkeypatch.setenv(cli.THREADS_ENV, "x")
    with pytest.raises(ConfigError):
        cli._threads(None)


@pytest.mark.parametrize(
    "exc, code",
    [(SolverError("boom"), cli.EXIT_SOLVER), (PropertyViolation("boom"), cli.EXIT_PROPERTY)],
)
def test_error_exit_codes(tmp_path, monkeypatch, exc, code):
    def fail(*args, **kwargs):
        raise exc

    monkeypatch.setattr(cli, "run_scenario", fail)
    assert run(["run", write(tmp_path, DISK)]) == code


def test_failure_mid_run_leaves_nothing(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise PropertyViolation("late failure")

    monkeypatch.setitem(cli.EXPERIMENTS, "flow", fail)
    out = tmp_path / "o"
    assert run(["run", write(tmp_path, DISK), "--out", out]) == cli.EXIT_PROPERTY
    assert not out.exists()
    assert [p.name for p in tmp_path.iterdir()] == ["scn.ini"]


def test_bad_seed(tmp_path):
    assert run(["run", write(tmp_path, DISK), "--seed", -1]) == cli.EXIT_CONFIG


def test_inline_comments(tmp_path):
    cfg = cli.load_config(write(tmp_path, DISK.replace("kind = flow", "kind = flow  ; one flow run")))
    assert cfg["scenario"]["kind"] == "flow"
