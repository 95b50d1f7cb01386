import csv
import subprocess
import sys

import pytest

from replex import cli
from replex.config import ConfigError, build_config, parse_config_text

TINY = """\
# small enough to train in a second
profile = desk
synthetic_dialogues = 80
synthetic_valid = 16
synthetic_hard_tokens = 6
hidden_size = 8
embedding_size = 6
batch_size = 16
epochs = 1
valid_interval = 0.5
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY, encoding="utf-8")
    return path


def test_gradcurve_csv(tmp_path, capsys):
    out = tmp_path / "curves.csv"
    assert cli.main(["gradcurve", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["p", "ce", "tfl", "tldr", "grad_ce", "grad_tfl", "grad_tldr"]
    assert len(rows) == 200
    half = next(r for r in rows[1:] if float(r[0]) == 0.5)
    assert float(half[4]) == -2.0
    assert float(half[6]) == pytest.approx(-4.1776, abs=1e-3)


def test_gradcurve_unwritable(tmp_path):
    assert cli.main(["gradcurve", str(tmp_path / "missing" / "x.csv")]) == 3


def test_metrics_three_distinct_words(tmp_path, capsys):
    path = tmp_path / "hyp.txt"
    path.write_text("hello\nworld\nagain\n", encoding="utf-8")
    assert cli.main(["metrics", str(path), "--n", "1", "--alpha", "1.0"]) == 0
    report = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    # pooled unigrams: 3 unique over max(3 - 1, 1) = 2, clamped to 1
    assert float(report["l_dimen"]) == 1.0
    assert report["hist"] == "[0,0,0,0,0,0,0,0,0,3]"

    assert cli.main(["metrics", str(path)]) == 0
    report = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    # default n=4: orders 2 and 3 find no k-grams inside any line (0 over 1),
    # order 4 exceeds the pooled token count and scores 1
    assert float(report["l_dimen"]) == 0.5


def test_metrics_with_references(tmp_path, capsys):
    hyp = tmp_path / "hyp.txt"
    hyp.write_text("the cat sat on the mat\n", encoding="utf-8")
    assert cli.main(["metrics", str(hyp), "--refs", str(hyp)]) == 0
    out = capsys.readouterr().out
    assert "bleu4=1.000000" in out


def test_metrics_errors(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("\n", encoding="utf-8")
    assert cli.main(["metrics", str(empty)]) == 3
    assert cli.main(["metrics", str(tmp_path / "nope.txt")]) == 3
    good = tmp_path / "g.txt"
    good.write_text("a b\n", encoding="utf-8")
    assert cli.main(["metrics", str(good), "--n", "2", "--alpha", "0.5,0.6"]) == 2


def test_config_parsing():
    values = parse_config_text("scheme = tldr  # inline comment\n\nepochs = 3\n")
    assert values == {"scheme": "tldr", "epochs": 3.0}
    with pytest.raises(ConfigError):
        parse_config_text("bogus_key = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("scheme = median\n")
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign\n")
    with pytest.raises(ConfigError):
        parse_config_text("hidden_size = big\n")


def test_flags_beat_file_beat_profile(tiny_cfg):
    cfg = build_config(tiny_cfg)
    assert cfg.hidden_size == 8 and cfg.attention == "post"
    cfg = build_config(tiny_cfg, overrides={"hidden_size": None, "scheme": "tldr"})
    assert cfg.scheme == "tldr" and cfg.hidden_size == 8
    cfg = build_config(tiny_cfg, profile="paper", overrides={"attention": "if"})
    assert cfg.attention == "if" and cfg.encoder_layers == 2


def test_train_writes_artifacts(tiny_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["-q", "train", "--config", str(tiny_cfg), "--scheme", "tldr",
                     "--seed", "7", "--out", str(out)])
    assert code == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,step,wl2,l_dimen,bleu4,mean_u_dimen"
    assert len(lines) == 3
    assert (out / "best.ckpt").exists() and (out / "last.ckpt").exists()
    assert "scheme = tldr" in (out / "config.cfg").read_text()
    assert "seed = 7" in (out / "config.cfg").read_text()

    capsys.readouterr()
    assert cli.main(["-q", "eval", str(out / "best.ckpt"), "--config", str(tiny_cfg),
                     "--seed", "7"]) == 0
    report = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert set(report) == {"wl2", "l_dimen", "mean_u_dimen", "bleu4", "hist"}


def test_train_is_deterministic_across_invocations(tiny_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("REPLEX_SEED", "3")
    for name in ("a", "b"):
        assert cli.main(["-q", "train", "--config", str(tiny_cfg),
                         "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert "seed = 3" in (tmp_path / "a" / "config.cfg").read_text()


def test_missing_corpus_is_a_data_error(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("train_corpus = nowhere.txt\nvalid_corpus = nowhere.txt\n", encoding="utf-8")
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "nowhere.txt" in err[0]


def test_config_errors_exit_two(tmp_path, monkeypatch):
    bad = tmp_path / "bad.cfg"
    bad.write_text("learning_rate = -1\n", encoding="utf-8")
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "absent.cfg")]) == 2
    monkeypatch.setenv("REPLEX_SEED", "abc")
    assert cli.main(["train", "--profile", "desk"]) == 2


def test_training_abort_exit_one(tiny_cfg, tmp_path, monkeypatch):
    from replex.training import TrainingAborted

    def boom(*args, **kwargs):
        raise TrainingAborted("non-finite loss nan at step 1")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["-q", "train", "--config", str(tiny_cfg), "--out", str(tmp_path / "o")]) == 1


def test_real_corpus_files(tmp_path, capsys):
    train = tmp_path / "train.tsv"
    train.write_text("hi there\thello\nhow are you ?\tfine , thanks .\n" * 4, encoding="utf-8")
    cfg = tmp_path / "real.cfg"
    cfg.write_text("profile = desk\ntrain_corpus = train.tsv\nvalid_corpus = train.tsv\n"
                   "hidden_size = 8\nepochs = 1\nbatch_size = 4\n", encoding="utf-8")
    assert cli.main(["-q", "train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_gencorpus(tmp_path, tiny_cfg):
    out = tmp_path / "corpus.txt"
    assert cli.main(["gencorpus", str(out), "--config", str(tiny_cfg)]) == 0
    from replex.training import read_corpus
    assert len(read_corpus(out)) == 80


def test_help_lists_every_flag_with_default():
    result = subprocess.run([sys.executable, "-m", "replex.cli", "train", "--help"],
                            capture_output=True, text=True, check=True)
    text = " ".join(result.stdout.split())
    for flag in ("--config", "--scheme", "--gamma", "--uniform-w", "--attention", "--seed",
                 "--out", "--epochs", "--valid-interval", "--profile"):
        assert flag in text
    for default in ("(default: ce)", "(default: 2.0)", "(default: 0.5)", "(default: 100.0)"):
        assert default in text
