import json
import subprocess
import sys
from pathlib import Path

import pytest

from nakasim.cli import main
from nakasim.config import EXPERIMENTS, load_config, parse_config
from nakasim.errors import ConfigError, NakasimError
from nakasim.experiments import run_experiment
from nakasim.results import HEADER, ResultRow, emit_results, format_csv, format_json, parse_csv, parse_json

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """\
[experiment]
name = lambda-h
delta = 1.0
horizon = 2000
n_trials = 4
root_seed = 42

[block_type.0]
score = 1.0
honest_rate = 1.0
"""

NAKAMOTO = """\
[experiment]
name = nakamoto-prob
delta = 0.5
horizon = 40
n_trials = 300
root_seed = 3
n_miners = 4

[block_type.0]
score = 1.0
honest_rate = 1.0
adversary_rate = 0.2

[params]
tau_q = 10
"""


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --------------------------------------------------------------------- parsing


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.experiment == "lambda-h"
    assert cfg.n_miners == 10 and cfg.confidence == 0.95
    assert cfg.block_types[0].adversary_rate == 0.0
    assert len(cfg.config_hash) == 12


def test_q_defaults_to_delta():
    assert parse_config(NAKAMOTO).param("q") == 0.5


def test_hash_tracks_content_not_layout():
    a = parse_config(MINIMAL)
    b = parse_config("# comment\n" + MINIMAL.replace("delta = 1.0", "delta=1"))
    c = parse_config(MINIMAL.replace("root_seed = 42", "root_seed = 43"))
    assert a.config_hash == b.config_hash != c.config_hash


def test_negative_delta_rejected_with_location():
    with pytest.raises(ConfigError, match=r"c\.ini:3:1: field 'delta'"):
        parse_config(MINIMAL.replace("delta = 1.0", "delta = -0.5"), "c.ini")


def test_misspelled_param_reported_with_line():
    text = NAKAMOTO.replace("tau_q = 10", "tau_q = 10\nlamda_h = 0.5")
    with pytest.raises(ConfigError, match=r"c\.ini:16:1: unknown key 'lamda_h'"):
        parse_config(text, "c.ini")


@pytest.mark.parametrize("old,new,pattern", [
    ("name = lambda-h", "name = lambda", "unknown experiment"),
    ("n_trials = 4", "n_trials = 0", "n_trials"),
    ("n_trials = 4", "n_trials = 2.5", "cannot parse"),
    ("score = 1.0", "score = 0", "score"),
    ("honest_rate = 1.0", "honest_rate = 1.0\ncolour = red", "unknown key 'colour'"),
    ("[block_type.0]", "[blocktype.0]", "unknown section"),
    ("root_seed = 42\n", "", "root_seed"),
])
def test_config_errors(old, new, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(MINIMAL.replace(old, new))


def test_required_params_per_experiment():
    text = MINIMAL.replace("name = lambda-h", "name = phase-diagram")
    with pytest.raises(ConfigError, match="ratios"):
        parse_config(text)
    ok = parse_config(text + "\n[params]\nratios = 0.5, 2\n")
    assert ok.param("ratios") == [0.5, 2.0]


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/x.ini")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    assert load_config(path).experiment in EXPERIMENTS


# --------------------------------------------------------------------- results


def _rows():
    return [ResultRow("cfg=abc;q=0.5", "p_L", 0.1 + 0.2, 0.25, 0.35, 100, 7),
            ResultRow("cfg=abc;q=0.5", "p_E1", 1.0, 0.99, 1.0, 100, 7)]


def test_csv_layout_and_roundtrip():
    text = format_csv(_rows())
    lines = text.splitlines()
    assert lines[0] == ",".join(HEADER)
    assert lines[1] == "cfg=abc;q=0.5,p_L,0.3,0.25,0.35,100,7"
    back = parse_csv(text)
    assert back[1] == _rows()[1]
    assert back[0].estimate == pytest.approx(0.3, abs=1e-9)


def test_json_roundtrip_exact():
    assert parse_json(format_json(_rows())) == _rows()


def test_rows_reject_bad_values():
    with pytest.raises(ValueError):
        ResultRow("p", "m", float("nan"), 0, 1, 1, 1)
    with pytest.raises(ValueError):
        ResultRow("p", "m", 2.0, 0, 1, 1, 1)
    with pytest.raises(NakasimError):
        emit_results([], "csv")
    with pytest.raises(NakasimError):
        emit_results(_rows(), "xml")


# ------------------------------------------------------------------------ CLI


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", "--config", str(_write(tmp_path, MINIMAL))]) == 0
    assert capsys.readouterr().out.startswith("ok lambda-h config=")


def test_cli_bad_config_exit_code(tmp_path, capsys):
    path = _write(tmp_path, MINIMAL.replace("delta = 1.0", "delta = -1"))
    assert main(["validate", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert f"{path}:3:1" in err


def test_cli_run_csv_and_json(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["-q", "run", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    rows = parse_csv(out)
    assert rows[0].metric == "lambda_h"
    assert rows[0].param_point.startswith("cfg=" + load_config(cfg).config_hash)
    target = tmp_path / "r.json"
    assert main(["-q", "run", "--config", str(cfg), "--format", "json", "--out", str(target)]) == 0
    assert parse_json(target.read_text())[0].estimate == pytest.approx(rows[0].estimate, rel=1e-8)


def test_cli_timing_stays_off_stdout(tmp_path, capsys):
    assert main(["run", "--config", str(_write(tmp_path, MINIMAL))]) == 0
    cap = capsys.readouterr()
    assert " s (" not in cap.out
    assert " s (" in cap.err


def test_cli_unwritable_output(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["-q", "run", "--config", str(cfg), "--out", str(tmp_path / "no" / "such" / "dir.csv")]) == 1


def test_cli_threads_identical_bytes(tmp_path):
    cfg = _write(tmp_path, NAKAMOTO)
    one, eight = tmp_path / "1.csv", tmp_path / "8.csv"
    assert main(["-q", "run", "--config", str(cfg), "--threads", "1", "--out", str(one)]) == 0
    assert main(["-q", "run", "--config", str(cfg), "--threads", "8", "--out", str(eight)]) == 0
    assert one.read_bytes() == eight.read_bytes()
    metrics = [r.metric for r in parse_csv(one.read_text())]
    assert metrics == ["p_joint", "p_L", "p_E1", "p_E2", "p_product", "independence_gap"]


def test_cli_capture_then_replay(tmp_path):
    cfg = _write(tmp_path, NAKAMOTO)
    trace, tree = tmp_path / "t.tsv", tmp_path / "tree.tsv"
    assert main(["-q", "capture", "--config", str(cfg), "--trial", "2", "--out", str(trace)]) == 0
    assert main(["-q", "replay", "--trace", str(trace), "--config", str(cfg), "--out", str(tree)]) == 0
    first = tree.read_text()
    assert first.splitlines()[0].startswith("0\t-\tgenesis")
    assert main(["-q", "replay", "--trace", str(trace), "--config", str(cfg), "--out", str(tree)]) == 0
    assert tree.read_text() == first


def test_cli_replay_bad_trace(tmp_path):
    bad = _write(tmp_path, "# horizon=5\n1.0\t0\tnobody\t0\n", "t.tsv")
    assert main(["-q", "replay", "--trace", str(bad)]) == 1


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "nakasim.cli", "-q", "run", "--config", str(_write(tmp_path, MINIMAL)),
                          "--format", "json"], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)[0]["metric"] == "lambda_h"


# ---------------------------------------------------------------- experiments


def test_lambda_h_experiment_single_row():
    rows = run_experiment(load_config(CONFIGS / "lambda_h.ini"))
    assert len(rows) == 1
    assert rows[0].estimate == pytest.approx(0.5, rel=0.01)


def test_counterexample_experiment_rows():
    rows = run_experiment(load_config(CONFIGS / "counterexample.ini"))
    assert [r.metric for r in rows] == ["p_cond", "p_marg"]
    assert rows[0].estimate >= 0.6


def test_phase_diagram_experiment_nondecreasing():
    text = MINIMAL.replace("name = lambda-h", "name = phase-diagram").replace("horizon = 2000", "horizon = 600")
    text = text.replace("n_trials = 4", "n_trials = 40") + "\n[params]\nratios = 0.5, 0.8, 1.0, 1.2, 1.5\nlambda_h = 0.5\n"
    rows = [r for r in run_experiment(parse_config(text)) if r.metric == "attack_success"]
    assert len(rows) == 5
    est = [r.estimate for r in rows]
    assert est == sorted(est)


def test_estimator_errors_carry_experiment_name():
    text = MINIMAL.replace("name = lambda-h", "name = stay-above") + "\n[params]\nB = 10\nlambda_h = 5\n"
    with pytest.raises(NakasimError, match="^stay-above: "):
        run_experiment(parse_config(text))
