import csv
import json

import pytest

from horizon_calc.cli import EXIT_OK, EXIT_USAGE, fmt, main

CONFIG = """
[market]
s0 = 1.0
x0 = 1.0
mu_star = 0.08
sigma = [0.2, 0.25]
a = [1.0, 2.0]
b = 2.0
[market.exit_law]
kind = "exponential"
rate = 0.6931471805599453
[simulation]
paths = 120
steps_per_unit = 32
seed = 3
csv_paths = 2
[optimize]
w_min = 0.0
w_max = 4.0
w_step = 1.0
[verify]
n_steps = 8
n_paths = 30
n_sets = 2
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(CONFIG)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fmt_round_trips():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(True) == "1" and fmt(3) == "3" and fmt(float("nan")) == ""


def test_simulate_writes_schemas(tmp_path, config):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(config), "--out", str(out)]) == EXIT_OK
    assert rows(out / "stock.csv")[0] == ["path_id", "node", "time", "price", "in_set"]
    assert rows(out / "wealth.csv")[0] == ["path_id", "node", "time", "wealth", "fraction"]
    stock = rows(out / "stock.csv")[1:]
    assert len(stock) == 2 * (64 + 1)
    for r in stock:
        assert (r[3] == "") == (r[4] == "0")
    strat = rows(out / "strategy.csv")
    assert strat[0] == ["period", "start", "end", "mu", "sigma", "fraction"]
    assert float(strat[1][5]) == pytest.approx(3.0)
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["seed"] == 3
    assert set(man["outputs"]) >= {"stock.csv", "wealth.csv", "strategy.csv"}


def test_flags_override_config(tmp_path, config):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(config), "--out", str(out), "--seed", "5", "--paths", "10",
                 "--steps", "8", "--periods", "1"]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 5 and man["sizes"]["n_paths"] == 10 and man["sizes"]["n_steps"] == 8
    assert len(rows(out / "strategy.csv")) == 2


def test_optimize(tmp_path, config):
    out = tmp_path / "opt"
    assert main(["optimize", "--config", str(config), "--out", str(out)]) == EXIT_OK
    r = rows(out / "optimize.csv")
    assert r[0] == ["period", "closed_form_w", "oracle_w", "elu_at_closed_form", "elu_at_oracle", "stderr"]
    assert len(r) == 3
    assert float(r[1][1]) == pytest.approx(3.0)


def test_verify_is_repeatable(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--config", str(config), "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert main(["verify", "--config", str(config), "--seed", "7", "--out", str(b)]) == EXIT_OK
    assert (a / "verify.csv").read_bytes() == (b / "verify.csv").read_bytes()
    r = rows(a / "verify.csv")
    assert r[0] == ["law", "max_residual", "tolerance", "pass"]
    assert all(x[3] == "1" for x in r[1:])


def test_gallery(tmp_path):
    assert main(["gallery", "--out", str(tmp_path)]) == EXIT_OK
    assert rows(tmp_path / "gallery.csv")[0] == ["item", "value", "reference", "pass"]


def test_usage_errors(tmp_path, config, capsys):
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as ei:
        main(["verify", "--seed", "-1"])
    assert ei.value.code == EXIT_USAGE
    assert main(["simulate", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["simulate", "--config", str(config), "--periods", "5", "--out", str(tmp_path)]) == EXIT_USAGE
    bad = tmp_path / "bad.toml"
    bad.write_text(CONFIG.replace("[0.2, 0.25]", "[-0.2, 0.25]"))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "market.sigma" in capsys.readouterr().err
