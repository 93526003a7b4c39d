import json
import re
import subprocess
import sys

import pytest

from warmnet import cli
from warmnet.dynamics import parse_json

# Output of `distance --a 3 --beta 1.5 --gamma 0.2 --n 729 --reps 200 --seed 7`,
# frozen from a pilot run.
GOLDEN_DISTANCE = (
    b"N,replications,censored,uncertified,mean_H,std_H,ci95_H,mean_ratio,ci95_ratio\n"
    b"729,200,0,0,16.120000,2.108990,0.292291,2.686667,0.048715\n"
)


@pytest.fixture
def call(capfdbinary, monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV, raising=False)

    def _call(*argv):
        code = cli.main(list(argv))
        out, err = capfdbinary.readouterr()
        return code, out, err.decode("utf-8")

    return _call


def test_golden_distance_subprocess():
    argv = [sys.executable, "-m", "warmnet", "distance", "--a", "3", "--beta", "1.5", "--gamma", "0.2",
            "--n", "729", "--reps", "200", "--seed", "7"]
    out = subprocess.run(argv, capture_output=True, check=True).stdout
    assert out == GOLDEN_DISTANCE


def test_simulate_figure_one_dot(call):
    code, out, _ = call("simulate", "--a", "3", "--beta", "1.5", "--gamma", "0.2", "--steps", "20", "--layers", "4", "--format", "dot")
    assert code == 0
    text = out.decode("utf-8")
    assert text.startswith("digraph warm {")
    assert sum(int(w) - 1 for w in re.findall(r"\[weight=(\d+)\]", text)) == 20
    assert call("simulate", "--steps", "20", "--layers", "4", "--format", "dot")[1] == out


def test_simulate_threshold_and_formats(call):
    _, full, _ = call("simulate", "--steps", "200", "--layers", "3", "--format", "csv")
    _, kept, _ = call("simulate", "--steps", "200", "--layers", "3", "--format", "csv", "--threshold", "0.5")
    full_rows, kept_rows = full.decode().splitlines(), kept.decode().splitlines()
    assert kept_rows[0] == full_rows[0] == "from_x,from_h,to_x,to_h,weight"
    assert set(kept_rows) < set(full_rows)
    _, js, _ = call("simulate", "--steps", "200", "--layers", "3", "--format", "json")
    assert parse_json(js).t == 200


def test_missing_required_flag(call):
    code, out, err = call("distance", "--reps", "3")
    assert code == 1 and out == b""
    assert "usage:" in err and "--n" in err
    assert call("sweep")[0] == 1
    assert call("tail")[0] == 1


def test_unknown_subcommand_or_flag(call):
    assert call("bogus")[0] == 1
    assert call("distance", "--n", "3", "--nope")[0] == 1
    assert call()[0] == 1


@pytest.mark.parametrize("flag,value,needle", [
    ("--beta", "1", "beta > 1"),
    ("--a", "1", "a > 1"),
    ("--a", "abc", "a > 1"),
    ("--gamma", "1.2", "0 < gamma < 1"),
    ("--reps", "0", "--reps"),
    ("--n", "0", "N must be >= 1"),
    ("--beta", "x", "--beta"),
])
def test_invalid_values(call, flag, value, needle):
    args = {"--n": "9", "--reps": "2"}
    args[flag] = value
    argv = ["distance"] + [t for kv in args.items() for t in kv]
    code, out, err = call(*argv)
    assert code == 1 and out == b""
    assert needle in err


def test_help_documents_every_flag_and_default():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == {"simulate", "distance", "sweep", "tail", "urn", "pareto", "export"}
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            if not action.option_strings or action.dest == "help":
                continue
            assert action.option_strings[0] in text, (name, action.dest)
            assert re.search(r"\((default: .+|required)\)", action.help or ""), (name, action.dest)


def test_help_exits_zero(call):
    for name in ("simulate", "distance", "sweep", "tail", "urn", "pareto", "export"):
        code, out, _ = call(name, "--help")
        assert code == 0 and b"usage: warmnet " + name.encode() in out


def test_same_argv_same_bytes(call):
    argv = ("sweep", "--n-list", "9,27", "--reps", "20", "--seed", "3")
    first = call(*argv)
    assert first[0] == 0
    assert call(*argv)[1] == first[1]
    assert call(*argv[:-1], "4")[1] != first[1]


def test_workers_do_not_change_output(call):
    argv = ("distance", "--n", "81", "--reps", "16", "--seed", "5")
    assert call(*argv, "--workers", "1")[1] == call(*argv, "--workers", "3")[1]


def test_config_precedence(call, tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# pareto run\nseed = 5\nreps = 50\nm-list = 10,100\n")
    _, from_cfg, _ = call("pareto", "--config", str(cfg))
    _, flags, _ = call("pareto", "--seed", "5", "--reps", "50", "--m-list", "10,100")
    assert from_cfg == flags
    _, override, _ = call("pareto", "--config", str(cfg), "--seed", "6")
    _, direct6, _ = call("pareto", "--seed", "6", "--reps", "50", "--m-list", "10,100")
    assert override == direct6 != flags
    # the environment only supplies the seed when nothing else does
    monkeypatch.setenv(cli.SEED_ENV, "6")
    assert call("pareto", "--reps", "50", "--m-list", "10,100")[1] == direct6
    assert call("pareto", "--config", str(cfg))[1] == from_cfg


def test_bad_config(call, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n")
    assert call("pareto", "--config", str(cfg))[0] == 1
    cfg.write_text("just words\n")
    assert call("pareto", "--config", str(cfg))[0] == 1


def test_out_and_manifest(call, tmp_path):
    out = tmp_path / "res.csv"
    code, stdout, _ = call("distance", "--n", "9", "--reps", "5", "--seed", "2", "--out", str(out))
    assert code == 0 and stdout == b""
    assert out.read_bytes() == call("distance", "--n", "9", "--reps", "5", "--seed", "2")[1]
    manifest = json.loads((tmp_path / "res.csv.manifest.json").read_text())
    assert manifest["config"]["command"] == "distance"
    assert manifest["config"]["params"]["seed"] == 2
    assert manifest["config"]["replications"] == 5
    assert "build" in manifest and manifest["wall_time_s"] >= 0


def test_runtime_failure_exit_two(call, tmp_path):
    code, _, err = call("pareto", "--reps", "5", "--m-list", "10", "--out", str(tmp_path / "no" / "such" / "file.csv"))
    assert code == 2 and err


def test_uncertified_exit_two(call, monkeypatch):
    def boom(*args, **kwargs):
        raise cli.UncertifiedWinnerError("budget exhausted")

    monkeypatch.setattr(cli, "sample_winner_rubin", boom)
    code, _, err = call("urn", "--fitnesses", "2,1", "--reps", "3")
    assert code == 2 and "budget exhausted" in err


def test_tail_command(call):
    code, out, err = call("tail", "--n", "27", "--reps", "300", "--seed", "1")
    assert code == 0
    lines = out.decode().splitlines()
    assert lines[0] == "x,count,survival,log_survival,ci95"
    assert err.startswith("slope: ")
    code, out, _ = call("tail", "--n", "27", "--reps", "300", "--seed", "1", "--x-max", "3")
    assert [l.split(",")[0] for l in out.decode().splitlines()[1:]] == ["0.000000", "1.000000", "2.000000", "3.000000"]


def test_urn_fitness_mode(call):
    code, out, _ = call("urn", "--fitnesses", "8,1,1", "--reps", "200", "--steps", "500", "--seed", "1")
    assert code == 0
    rows = out.decode().splitlines()
    assert rows[0] == "color,fitness,rubin_count,rubin_freq,direct_count,direct_freq"
    assert len(rows) == 5 and rows[-1].startswith("undecided,")
    assert sum(int(r.split(",")[2]) for r in rows[1:4]) == 200
    code, out, _ = call("urn", "--fitnesses", "8,1,1", "--reps", "20")
    assert out.decode().splitlines()[0] == "color,fitness,rubin_count,rubin_freq"
    assert call("urn", "--fitnesses", "0.5,1")[0] == 1


def test_urn_layer_mode(call):
    code, out, _ = call("urn", "--layers", "1", "--reps", "100", "--eps", "0.5", "--seed", "2")
    assert code == 0
    header, row = out.decode().splitlines()
    assert header == "layer,colors,replications,eps,rate,se,q_eps,p_dominant,bound"
    assert row.startswith("1,7,100,0.500000,")


def test_pareto_command(call):
    code, out, _ = call("pareto", "--gamma", "0.2", "--m-list", "10,100", "--reps", "200")
    assert code == 0
    lines = out.decode().splitlines()
    assert lines[0] == "m,replications,median,p95,min" and len(lines) == 3
    assert call("pareto", "--m-list", "1")[0] == 1


def test_export_command(call, tmp_path):
    src = tmp_path / "g.json"
    assert call("simulate", "--steps", "30", "--layers", "3", "--format", "json", "--out", str(src))[0] == 0
    _, dot, _ = call("simulate", "--steps", "30", "--layers", "3", "--format", "dot")
    assert call("export", str(src), "--format", "dot")[1] == dot
    assert call("export", str(src), "--format", "json")[1] == src.read_bytes()
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert call("export", str(bad))[0] == 1
    assert call("export", str(tmp_path / "missing.json"))[0] == 2


def test_version(call):
    code, out, _ = call("--version")
    assert code == 0 and out.startswith(b"warmnet ")
