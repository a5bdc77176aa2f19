import csv

import numpy as np
import pytest

from carefulness.cli import main
from carefulness.evalstats import classification_report, pair_by_subject, wilcoxon_signed_rank
from carefulness.seqnet import ModelParams, save_model


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "fast.cfg").write_text("train.max_epochs = 4\ntrain.hidden_units = 4\n")
    assert main(["gen", "profiles", str(d / "ds"), "-n", "40", "--seed", "2"]) == 0
    assert main(["train", str(d / "ds"), "-o", str(d / "m.txt"), "--config", str(d / "fast.cfg")]) == 0
    return d


def test_train_outputs(workdir):
    log = rows(workdir / "train_log.csv")
    assert [int(r["epoch"]) for r in log] == [1, 2, 3, 4]
    rep = workdir / "test_report"
    for name in ("report.txt", "report.csv", "predictions.csv", "md_box.csv", "admd_box.csv",
                 "wilcoxon.csv", "confusion.png", "md_box.png"):
        assert (rep / name).exists(), name
    assert "stopped_epoch: 4" in (rep / "report.txt").read_text()


def test_train_is_byte_deterministic(workdir):
    assert main(["train", str(workdir / "ds"), "-o", str(workdir / "m2.txt"), "--config",
                 str(workdir / "fast.cfg"), "--report-dir", str(workdir / "r2"), "--no-figures"]) == 0
    assert (workdir / "m.txt").read_bytes() == (workdir / "m2.txt").read_bytes()


def test_eval_matches_evalstats_on_dumped_csv(workdir):
    out = workdir / "ev"
    assert main(["eval", "--model", str(workdir / "m.txt"), "--dataset", str(workdir / "ds"),
                 "-o", str(out), "--no-figures"]) == 0
    preds = rows(out / "predictions.csv")
    assert len(preds) == 80
    rep = classification_report([r["predicted"] for r in preds], [r["true"] for r in preds])
    got = {r["metric"]: r["value"] for r in rows(out / "report.csv")}
    assert int(got["TP"]) == rep.TP and int(got["FN"]) == rep.FN and int(got["TN"]) == rep.TN
    assert float(got["accuracy"]) == pytest.approx(rep.accuracy, abs=1e-6)

    md = [float(r["MD"]) for r in preds]
    c, nc, _ = pair_by_subject(md, [r["true"] for r in preds], [r["subject"] for r in preds])
    w = wilcoxon_signed_rank(c, nc)
    (md_row,) = [r for r in rows(out / "wilcoxon.csv") if r["metric"] == "MD"]
    assert float(md_row["p_value"]) == pytest.approx(w.p_value, rel=1e-8)
    assert float(md_row["W"]) == w.W and int(md_row["n"]) == w.n

    box = {r["class"]: r for r in rows(out / "md_box.csv")}
    assert float(box["C"]["median"]) == pytest.approx(np.median([m for m, r in zip(md, preds)
                                                                  if r["true"] == "C"]), rel=1e-6)


def test_trial_pairing_option(workdir):
    out = workdir / "ev_trial"
    assert main(["eval", "--model", str(workdir / "m.txt"), "--dataset", str(workdir / "ds"),
                 "-o", str(out), "--pairing", "trial", "--no-figures"]) == 0
    (row,) = [r for r in rows(out / "wilcoxon.csv") if r["metric"] == "MD"]
    assert row["pairing"] == "trial" and int(row["n"]) == 40


def test_perfect_model_run(workdir, tmp_path):
    # a model that always says NC on an all-NC dataset scores accuracy 1
    p = ModelParams.zeros(2)
    p.weights["out_b"][:] = [-3.0, 3.0]
    save_model(tmp_path / "nc.txt", p)
    idx = (workdir / "ds" / "index.csv").read_text().splitlines()
    nc_only = tmp_path / "nc_ds"
    nc_only.mkdir()
    keep = [idx[0]] + [ln for ln in idx[1:] if ln.split(",")[1] == "NC"]
    for ln in keep[1:]:
        name = ln.split(",")[0]
        (nc_only / name).write_bytes((workdir / "ds" / name).read_bytes())
    (nc_only / "index.csv").write_text("\n".join(keep) + "\n")
    assert main(["eval", "--model", str(tmp_path / "nc.txt"), "--dataset", str(nc_only),
                 "-o", str(tmp_path / "o"), "--no-figures"]) == 0
    got = {r["metric"]: r["value"] for r in rows(tmp_path / "o" / "report.csv")}
    assert float(got["accuracy"]) == 1.0 and got["precision"] == ""


def test_gen_run_and_eval_stream(workdir, tmp_path):
    vid = tmp_path / "s.cfvid"
    assert main(["gen", "scenes", str(vid), "-n", "1", "--seed", "4", "--width", "160", "--height", "120", "--radius", "8"]) == 0
    truth = tmp_path / "s_truth.csv"
    assert len(rows(truth)) == 2
    ev = tmp_path / "ev.csv"
    assert main(["run", str(vid), "--model", str(workdir / "m.txt"), "-o", str(ev),
                 "--series", str(tmp_path / "ser.csv"), "--figure", str(tmp_path / "v.png")]) == 0
    events = rows(ev)
    assert len(events) == 2 and all(r["recognition_ms"] == "" for r in events)
    assert (tmp_path / "v.png").stat().st_size > 0
    assert main(["eval", "--model", str(workdir / "m.txt"), "--stream", str(vid), "--truth", str(truth),
                 "-o", str(tmp_path / "out")]) == 0
    text = (tmp_path / "out" / "report.txt").read_text()
    assert "missed: 0" in text and "recognition time" in text


def test_flow_check(capsys):
    assert main(["flow-check", "--width", "64", "--height", "48", "--max-shift", "1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("dx,dy,rms_px")
    assert len(out.strip().splitlines()) == 1 + 9 + 1


def test_exit_codes(workdir, tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.cfvid"), "--model", str(workdir / "m.txt")]) == 3
    assert main(["run", str(tmp_path / "none.cfvid"), "--model", str(tmp_path / "none.txt")]) == 2
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("segmenter.tau = -1\n")
    assert main(["train", str(workdir / "ds"), "-o", str(tmp_path / "m.txt"), "--config", str(bad_cfg)]) == 2
    assert main(["train", str(tmp_path / "nowhere"), "-o", str(tmp_path / "m.txt")]) == 4
    one = tmp_path / "one"
    one.mkdir()
    (one / "index.csv").write_text("file,label,subject\n")
    assert main(["train", str(one), "-o", str(tmp_path / "m.txt")]) == 4
    lines = (workdir / "ds" / "index.csv").read_text().splitlines()
    single = tmp_path / "single"
    single.mkdir()
    keep = [lines[0]] + [ln for ln in lines[1:] if ln.split(",")[1] == "C"]
    for ln in keep[1:]:
        (single / ln.split(",")[0]).write_bytes((workdir / "ds" / ln.split(",")[0]).read_bytes())
    (single / "index.csv").write_text("\n".join(keep) + "\n")
    assert main(["train", str(single), "-o", str(tmp_path / "m.txt")]) == 4
    err = capsys.readouterr().err
    assert "both classes" in err


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert "segmenter.tau = 5.25" in out and "train.patience = 5" in out
