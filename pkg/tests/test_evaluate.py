import numpy as np
import pytest

from mpcsbm import ExperimentConfig, ParameterError, SbmParams, accuracy, emit_plotdata, run_cell, run_experiment
from mpcsbm.evaluate import CSV_COLUMNS, RunSettings, read_reports


def test_accuracy_examples():
    truth = np.repeat([0, 1, 2], 4)
    assert accuracy(truth, truth).exact
    swapped = np.array([2, 0, 1])[truth]
    a = accuracy(swapped, truth)
    assert (a.exact, a.misclassified) == (True, 0)
    flipped = truth.copy()
    flipped[5] = 0
    a = accuracy(flipped, truth)
    assert (a.exact, a.misclassified) == (False, 1)


def test_accuracy_large_k_and_mismatch():
    truth = np.repeat(np.arange(10), 3)
    a = accuracy(truth[::-1].copy(), truth)
    assert a.exact and a.lower_bound
    merged = np.minimum(truth, 1)
    a = accuracy(merged, truth)
    assert a.label_mismatch and a.misclassified == 24
    with pytest.raises(ParameterError):
        accuracy(truth[:5], truth)


def cfg(**kw):
    base = dict(algorithm="mpc-commnbr", grid=[{"n": 100, "k": 2, "p": 0.5, "q": 0.05}], seeds=[0])
    base.update(kw)
    return ExperimentConfig.from_mapping(base)


def test_one_cell_one_row(tmp_path):
    reps = list(run_experiment(cfg(), tmp_path / "r.csv"))
    rows = read_reports(tmp_path / "r.csv")
    assert len(reps) == len(rows) == 1
    assert tuple(rows[0]) == CSV_COLUMNS


def test_rerun_is_byte_identical(tmp_path):
    c = cfg(seeds=[0, 1], s=[24, 64])
    list(run_experiment(c, tmp_path / "a.csv", ledger_dir=tmp_path / "la"))
    list(run_experiment(c, tmp_path / "b.csv", ledger_dir=tmp_path / "lb"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    la = sorted(p.name for p in (tmp_path / "la").iterdir())
    assert len(la) == 4
    for name in la:
        assert (tmp_path / "la" / name).read_bytes() == (tmp_path / "lb" / name).read_bytes()


def test_rounds_non_increasing_in_s():
    rounds = [r.rounds for r in run_experiment(cfg(seeds=[1], s=[16, 64, 256]))]
    assert rounds == sorted(rounds, reverse=True)


def test_failures_are_rows_not_exceptions():
    c = cfg(grid=[{"n": 30, "k": 2, "p": 0.2, "q": 0.2}], seeds=[0, 1, 2])
    reps = list(run_experiment(c))
    assert len(reps) == 3
    for r in reps:
        assert not r.recovered or r.misclassified == 0
        assert r.recovered or r.fail_stage or r.misclassified > 0


def test_offset_and_override():
    reps = list(run_experiment(cfg(seeds=[0]), seed_offset=5, algorithm="commnbr"))
    assert reps[0].seed == 5 and reps[0].algorithm == "commnbr" and reps[0].rounds == 0


@pytest.mark.parametrize("bad", [dict(algorithm="nope"), dict(grid=[]), dict(seeds=[]),
                                 dict(grid=[{"n": 5, "k": 2}]), dict(threshold_mode="x"), dict(extra=1)])
def test_config_errors(bad):
    with pytest.raises(ParameterError):
        cfg(**bad)


def test_constants_override_reach_the_fleet():
    c = cfg(constants={"c_sort": 3, "C": 2.0, "c_sample": 5.0})
    st = c.settings(3, None)
    assert st.mpc.c_sort == 3 and st.C == 2.0 and st.commnbr.c_sample == 5.0
    with pytest.raises(ParameterError):
        cfg(constants={"bogus": 1}).settings(3, None)


def test_plotdata_empty_and_series(tmp_path):
    files = emit_plotdata([], tmp_path / "empty")
    assert [f.read_text() for f in files] == ["x y series\n"] * 3
    ok, _ = run_cell("mpc-commnbr", SbmParams(100, 2, 0.5, 0.05, 0), RunSettings())
    bad, _ = run_cell("mpc-commnbr", SbmParams(30, 2, 0.2, 0.2, 0), RunSettings())
    files = emit_plotdata([ok, bad], tmp_path / "two")
    rec, rounds, space = (f.read_text().splitlines() for f in files)
    assert rec[0] == "x y series" and {ln.split()[-1] for ln in rec[1:]} == {"mpc-commnbr"}
    assert len(rec) == 3
    assert len(rounds) - 1 == (1 if bad.fail_stage else 2)
    assert space[1].split() == ["2", str(ok.peak_words), "mpc-commnbr"]
