import csv
import io

import pytest

from fedchain.cli import bench_ckks, main
from fedchain.config import ConfigError, RunConfig, load_config, parse_config
from fedchain.ledger import parse_snapshot
from fedchain.simnet import Mode, parse_summary

SMOKE = """\
# tiny encrypted run
n_clients = 4
rounds = 3
selection_count = 2
encryption = true
ckks_preset = test
dataset = synthetic
train_size = 400
test_size = 100
classes = 4
feature_dim = 8
output_dir = out
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("FEDCHAIN_OUT", raising=False)
    return tmp_path


def test_defaults():
    cfg = parse_config("")
    assert (cfg.learning_rate, cfg.batch_size, cfg.n_clients, cfg.rounds) == (0.01, 10, 30, 20)
    assert cfg.gas_price_avg == 23.49 and cfg.gas_price_min == 11.27
    plan = RunConfig(dataset="synthetic").to_plan()
    assert plan.selection_mode is Mode.OPTIMIZED and plan.k == 6


def test_parse_values_and_comments():
    cfg = parse_config("selection_mode = RANDOM  # upper case is fine\nhidden = 16, 8\nencryption = yes\n")
    assert cfg.selection_mode == "random" and cfg.hidden == (16, 8) and cfg.encryption is True


@pytest.mark.parametrize("text,match", [
    ("\nbogus = 1", "line 2: unknown key 'bogus'"),
    ("rounds = many", "line 1: bad value for rounds"),
    ("encryption = maybe", "bad value for encryption"),
    ("selection_mode = greedy", "bad value for selection_mode"),
    ("dataset = cifar", "bad value for dataset"),
    ("just words", "expected 'key = value'"),
])
def test_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_validation_errors(workdir):
    with pytest.raises(ConfigError, match="ckks_preset"):
        parse_config("ckks_preset = huge").validate()
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("mnist_dir = nowhere").validate()
    with pytest.raises(ConfigError, match="selection count"):
        parse_config("n_clients = 3\nselection_count = 5").validate()
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(workdir / "absent.cfg")


def test_run_writes_parseable_outputs(workdir, capsys):
    (workdir / "smoke.cfg").write_text(SMOKE)
    assert main(["run", "smoke.cfg"]) == 0
    out = workdir / "out"
    rows = list(csv.DictReader(io.StringIO((out / "trace.csv").read_text())))
    assert [r["round"] for r in rows] == ["0", "1", "2"]
    assert all(r["encrypted"] == "1" and r["wall_time_s"] == "nan" for r in rows)
    summary = parse_summary((out / "summary.txt").read_text())
    assert summary["rounds_completed"] == "3" and summary["chain_valid"] == "true"
    snap = parse_snapshot((out / "ledger_snapshot.txt").read_text())
    assert snap
    assert "final_accuracy" in capsys.readouterr().out


def test_run_is_byte_identical(workdir):
    (workdir / "smoke.cfg").write_text(SMOKE)
    names = ("trace.csv", "summary.txt", "ledger_snapshot.txt")
    assert main(["run", "smoke.cfg"]) == 0
    first = {n: (workdir / "out" / n).read_bytes() for n in names}
    assert main(["run", "smoke.cfg"]) == 0
    assert first == {n: (workdir / "out" / n).read_bytes() for n in names}


def test_env_overrides_output_dir(workdir, monkeypatch):
    (workdir / "smoke.cfg").write_text(SMOKE.replace("rounds = 3", "rounds = 1"))
    monkeypatch.setenv("FEDCHAIN_OUT", str(workdir / "elsewhere"))
    assert main(["run", "smoke.cfg"]) == 0
    assert (workdir / "elsewhere" / "trace.csv").exists()
    assert not (workdir / "out").exists()


def test_bad_config_exits_2_without_output(workdir, capsys):
    (workdir / "bad.cfg").write_text(SMOKE + "mnist_dir = missing\n")
    assert main(["run", "bad.cfg"]) == 2
    assert not (workdir / "out").exists()
    assert "mnist_dir does not exist" in capsys.readouterr().err


def test_gas_report(workdir, capsys):
    (workdir / "g.cfg").write_text("output_dir = gas\n")
    assert main(["gas-report", "g.cfg"]) == 0
    text = (workdir / "gas" / "gas_report.csv").read_text()
    assert text == capsys.readouterr().out
    lines = text.splitlines()
    assert lines[0] == "op,gas_used,cost_min_gwei,cost_avg_gwei"
    assert lines[1] == "add_model_hash,381546,4300023.42,8962515.54"


def test_auction_demo(workdir, capsys):
    (workdir / "d.cfg").write_text("output_dir = demo\nseed = 2\n")
    assert main(["auction-demo", "d.cfg"]) == 0
    out = workdir / "demo"
    assert {p.name for p in out.iterdir()} == {"scenario.txt", "auction_outcomes.txt", "ledger_snapshot.txt"}
    outcomes = (out / "auction_outcomes.txt").read_text()
    assert "settlement fees[" in outcomes and "forfeited=10000000" in outcomes
    assert outcomes == capsys.readouterr().out


def test_auction_demo_custom_script(workdir):
    (workdir / "s.txt").write_text("0 a account 5\n0 a frobnicate\n")
    (workdir / "d.cfg").write_text("scenario = s.txt\n")
    assert main(["auction-demo", "d.cfg"]) == 2


def test_bench_ckks_rows():
    rows, ratio, err = bench_ckks("test", repeats=1, clients=3)
    assert [name for name, _ in rows] == ["encode", "encrypt", "add", "mul_plain", "rescale", "decrypt"]
    assert all(t > 0 for _, t in rows)
    assert ratio > 1 and err < 1e-3


def test_bench_ckks_cli(capsys):
    assert main(["bench-ckks", "test", "--repeats", "1"]) == 0
    out = capsys.readouterr().out
    assert "aggregation_ratio_encrypted_vs_plain," in out
    assert sum(1 for line in out.splitlines() if line and not line.startswith("#")) == 1 + 6 + 1
