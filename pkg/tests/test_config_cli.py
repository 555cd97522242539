import json
import subprocess
import sys

import numpy as np
import pytest

from cflit.allocation import AllocationGrid
from cflit.channel import ChannelGrid
from cflit.cli import main
from cflit.config import ExperimentConfig, dump_config, load_config
from cflit.errors import InvalidConfigError
from cflit.io import read_table, write_manifest, write_table

# small enough to run in about a second: ~90 rounds on 200 symbols
FAST = ["--preset", "desk", "--set", "learning.epsilon=3.6", "--set", "system.n_symbols=200",
        "--set", "learning.channel_term_samples=20000"]


def test_presets():
    p, d = ExperimentConfig.paper(), ExperimentConfig.desk()
    assert p.system.n_subcarriers == 512 and p.system.n_symbols == 2000 and p.upload_dim == 610
    assert d.system.n_fl_devices == 10 and d.upload_dim == 61
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.preset_named("huge")


def test_with_values_coerces_and_validates():
    cfg = ExperimentConfig.desk().with_values(**{"system.n_symbols": "900", "learning.epsilon": "0.5",
                                                 "seed": "7"})
    assert cfg.system.n_symbols == 900 and cfg.learning.epsilon == 0.5 and cfg.seed == 7
    for bad in ({"system.n_symbols": "0"}, {"system.nope": 1}, {"other.x": 1},
                {"learning.epsilon": "abc"}, {"allocation.scheme": "greedy"}, {"colour": 1}):
        with pytest.raises(InvalidConfigError):
            ExperimentConfig.desk().with_values(**bad)


def test_ini_round_trip(tmp_path):
    cfg = ExperimentConfig.desk().with_values(**{"system.n_symbols": 1234, "learning.gamma": 999.5,
                                                 "trials": 3, "seed": 9, "allocation.scheme": "rsca"})
    p = tmp_path / "c.ini"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[system]\nwidth = 3\n",
    "[system]\nn_symbols = many\n",
    "[run]\npreset = giant\n",
    "not an ini file",
])
def test_bad_ini(tmp_path, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(InvalidConfigError):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(InvalidConfigError):
        load_config(tmp_path / "nope.ini")


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_tables(tmp_path, fmt):
    out = write_table(tmp_path / "t", ("a", "b"), [(1, np.float64(0.5)), (2, 1.25)], fmt)
    rows = read_table(out)
    assert [float(r["b"]) for r in rows] == [0.5, 1.25]
    m = write_manifest(tmp_path / "m.json", seeds=[1, 2])
    body = json.loads(m.read_text())
    assert body["seeds"] == [1, 2] and "package_version" in body and "git_describe" in body


# ---------------------------------------------------------------- CLI


def test_cli_hyperopt(capsys):
    assert main(["hyperopt"]) == 0
    out = capsys.readouterr().out
    assert "tau_star=6" in out and "T_star=1141" in out
    assert main(["--format", "json", "hyperopt", "--epsilon", "0.34"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["T_star"] == 1208 and len(body["zeta"]) == 20


def test_cli_rates(capsys):
    assert main(["--format", "json", "rates", "--p-it", "0.280390625"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["q"] == pytest.approx(2.7537, abs=1e-4)
    assert body["rate_improvement"] == pytest.approx(body["rate_threshold"] - body["rate_rsca"])


def test_cli_allocate_exports(tmp_path, capsys):
    out = tmp_path / "alloc"
    rc = main(FAST + ["--out", str(out), "allocate", "--scheme", "online",
                      "--dump-channels", str(out / "it.bin")])
    assert rc == 0
    grid = AllocationGrid.load(out / "allocation.rle")
    summary = json.loads((out / "allocation.json").read_text())
    assert grid.fl_count == summary["fl_rbs"]
    assert ChannelGrid.load(out / "it.bin").gains.shape == (5, 200, 64)


def test_cli_simulate_writes_transcripts(tmp_path, capsys):
    out = tmp_path / "sim"
    ds = tmp_path / "ds.npz"
    args = FAST + ["--trials", "2", "--out", str(out), "simulate", "--save-dataset", str(ds)]
    assert main(args) == 0
    manifest = json.loads((out / "simulate_manifest.json").read_text())
    assert len(manifest["trials"]) == 2 and len(manifest["timings"]["per_trial_s"]) == 2
    first = (out / "transcript_trial0.csv").read_bytes()
    # same seed, loaded dataset: byte-identical transcript
    out2 = tmp_path / "sim2"
    assert main(FAST + ["--trials", "2", "--out", str(out2), "simulate",
                        "--load-dataset", str(ds)]) == 0
    assert (out2 / "transcript_trial0.csv").read_bytes() == first


def test_cli_reproduce(tmp_path, capsys):
    rc = main(["--preset", "desk", "--out", str(tmp_path), "--format", "json",
               "reproduce", "fig4", "--param", "taus=1,5"])
    assert rc == 0
    rows = json.loads((tmp_path / "fig4.json").read_text())
    assert [r["tau"] for r in rows] == [1, 5]
    assert (tmp_path / "fig4_manifest.json").exists()


def test_cli_exit_codes(tmp_path, capsys):
    # infeasible: tau = 1 needs more RBs than the full-size grid has
    assert main(["allocate", "--tau", "1"]) == 3
    assert "at least S=" in capsys.readouterr().err
    assert main(FAST + ["simulate", "--tau", "1", "--set", "learning.epsilon=0.01"]) == 3
    assert main(["reproduce", "fig99"]) == 2
    assert main(["--set", "system.n_symbols=-4", "rates"]) == 2
    assert main(["--config", str(tmp_path / "missing.ini"), "rates"]) == 2
    assert main(["rates", "--theta", "-1"]) == 2
    assert main(["rates", "--p-it", "0"]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["--seed", "-3", "rates"])
    assert exc.value.code == 2


def test_cli_config_file(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[run]\npreset = paper\n[learning]\nepsilon = 0.34\n")
    assert main(["--config", str(p), "hyperopt"]) == 0
    assert "T_star=1208" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cflit", "rates", "--n", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "q_star=" in res.stdout
    res = subprocess.run([sys.executable, "-m", "cflit", "rates", "--bogus"],
                         capture_output=True, text=True)
    assert res.returncode == 2
