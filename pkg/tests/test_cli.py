import pytest

from persona_dialog.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from persona_dialog.corpus import SPLITS, read_dialogs, split_filename


@pytest.fixture(scope="module")
def small_pt3(tmp_path_factory):
    out = tmp_path_factory.mktemp("pt3")
    assert main(["generate", "--task", "3", "--variant", "small", "--seed", "7", "--out", str(out)]) == EXIT_OK
    return out


def test_generate_small_set(small_pt3):
    for split in SPLITS:
        path = small_pt3 / split_filename("PT3", split)
        assert len(read_dialogs(path)) == 1000
    assert sorted(p.name for p in small_pt3.glob("personalized-dialog-task3-*.txt")) == sorted(
        split_filename("PT3", s) for s in SPLITS)
    assert (small_pt3 / "candidates.txt").exists() and (small_pt3 / "kb-A.txt").exists()


def test_verify_and_oracle_eval(small_pt3, capsys):
    assert main(["verify", str(small_pt3)]) == EXIT_OK
    assert "100.00% oracle agreement" in capsys.readouterr().out
    assert main(["eval", "--task", "3", "--data", str(small_pt3)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("100.00") == 2


def test_full_profile_flag(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["generate", "--task", "1,4", "--dialogs", "20", "--full-profile", "--out", str(data)]) == EXIT_OK
    for task in ("PT1", "PT4"):
        dialogs = read_dialogs(data / split_filename(task, "trn"))
        assert all(len(d.turns[0].text.split()) == 4 for d in dialogs)
    assert main(["verify", str(data)]) == EXIT_OK


def test_train_eval_inspect(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["generate", "--task", "1", "--dialogs", "10", "--out", str(data)]) == EXIT_OK
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dim=6\nnegatives=10\n")
    runs = tmp_path / "runs"
    args = ["train", "--config", str(cfg), "--task", "1", "--max-epochs", "1", "--data", str(data), "--out", str(runs)]
    assert main(args) == EXIT_OK
    out = capsys.readouterr().out
    assert "epoch 1" in out and "test_accuracy" in out
    ckpt = runs / "PT1-memnn-standard-small" / "model.ckpt"
    assert ckpt.exists()
    assert main(["eval", "--task", "1", "--data", str(data), "--checkpoint", str(ckpt), "--split", "tst"]) == EXIT_OK
    capsys.readouterr()
    stem = tmp_path / "attn"
    assert main(["inspect", "--checkpoint", str(ckpt), "--task", "1", "--data", str(data),
                 "--dialog", "1", "--turn", "2", "--out", str(stem)]) == EXIT_OK
    assert (tmp_path / "attn.csv").read_text().startswith("block,time,locutor,text,hop1")
    # a checkpoint refuses a corpus built over a different vocabulary
    other = tmp_path / "other"
    main(["generate", "--task", "1", "--dialogs", "10", "--out", str(other)])
    with open(other / "candidates.txt", "a", encoding="utf-8") as fh:
        fh.write("zebra crossing\n")
    assert main(["eval", "--task", "1", "--data", str(other), "--checkpoint", str(ckpt)]) == EXIT_DATA
    assert "vocabulary" in capsys.readouterr().err


def test_train_refuses_inconsistent_corpus(tmp_path, capsys):
    main(["generate", "--task", "2", "--dialogs", "3", "--out", str(tmp_path)])
    path = tmp_path / split_filename("PT2", "trn")
    text = path.read_text(encoding="utf-8")
    path.write_text(text.replace("\t", "\tapi_call broken ", 1), encoding="utf-8")
    assert main(["train", "--task", "2", "--data", str(tmp_path), "--max-epochs", "1"]) == EXIT_DATA
    assert main(["verify", str(tmp_path)]) == EXIT_DATA
    assert "first mismatch" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["generate", "--bogus"],
    ["generate", "--task", "7"],
    ["train", "--task", "9"],
    ["train", "--dim", "many"],
    ["eval", "--task", "0"],
    ["inspect", "--checkpoint", "x.ckpt", "--task", "six", "--dialog", "1", "--turn", "2"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_missing_data_is_a_data_error(tmp_path):
    assert main(["eval", "--task", "1", "--data", str(tmp_path)]) == EXIT_DATA
    assert main(["verify", str(tmp_path)]) == EXIT_DATA
