import numpy as np
import pandas as pd
import pytest

from tacklepep.gamlss.bootstrap import (BootstrapDistribution, drive_bootstrap, drive_weights,
                                        rank_players)
from tacklepep.gamlss.mixed import build_design, fit_gamlss
from tacklepep.synth.records import RecordSimConfig, simulate_records

REF = {"tackler_position": "ILB", "pass_result": "", "ball_carrier_position": "RB"}


@pytest.fixture(scope="module")
def sim():
    return simulate_records(RecordSimConfig(n_records=600, n_tacklers=20, n_carriers=15,
                                            n_teams=6), seed=8)


def test_drive_weights_total(rng):
    codes = np.array([0, 0, 1, 2, 2, 2])
    w = drive_weights(codes, 3, rng)
    assert w.shape == (6,)
    # records of one drive share a weight; weights are drive multiplicities summing to n_drives
    assert w[0] == w[1] and w[3] == w[4] == w[5]
    assert w[0] + w[2] + w[3] == 3


def test_unit_weights_reproduce_full_fit(sim):
    d = build_design(sim.records, reference=REF)
    full = fit_gamlss(design=d, family="normal")
    again = fit_gamlss(design=d, family="normal", weights=np.ones(d.n), init=full, nest=False)
    np.testing.assert_allclose(again.T, full.T, atol=1e-6)


def test_bootstrap_shapes_and_determinism(sim):
    a = drive_bootstrap(sim.records, B=6, seed=3, family="normal", reference=REF)
    b = drive_bootstrap(sim.records, B=6, seed=3, family="normal", reference=REF, n_jobs=2)
    assert a.intercepts.shape == (6, 20)
    assert not a.flagged and a.failed == []
    assert a.intercepts.to_numpy().tobytes() == b.intercepts.to_numpy().tobytes()
    assert list(a.long().columns) == ["replicate", "tackler_id", "intercept"]
    assert len(a.long()) == 6 * 20
    c = drive_bootstrap(sim.records, B=6, seed=4, family="normal", reference=REF)
    assert not np.array_equal(a.intercepts.to_numpy(), c.intercepts.to_numpy())


def test_absent_tackler_sits_at_group_mean():
    sim = simulate_records(RecordSimConfig(n_records=400, n_tacklers=12, n_carriers=10, n_teams=4,
                                           planted_counts=(1,)), seed=2)
    rec = sim.records
    bs = drive_bootstrap(rec, B=20, seed=0, family="normal", reference=REF)
    # replay the replicate weights to see which replicates dropped that tackler's only drive
    codes, drives = pd.factorize(rec["drive_id"].astype(str), sort=True)
    mine = rec["tackler_id"].to_numpy() == "t0000"
    absent = []
    for b, seq in enumerate(np.random.SeedSequence(0).spawn(20)):
        w = drive_weights(codes, len(drives), np.random.default_rng(seq))
        absent.append(w[mine].sum() == 0)
    absent = np.array(absent)
    assert absent.any() and not absent.all()
    col = bs.intercepts["t0000"].to_numpy()
    assert np.all(col[absent] == 0.0)
    assert np.all(col[~absent] != 0.0)


def test_missing_drive_id_rejected(sim):
    rec = sim.records.copy()
    rec.loc[0, "drive_id"] = None
    with pytest.raises(ValueError, match="drive_id"):
        drive_bootstrap(rec, B=2)


def _toy_bootstrap():
    ic = pd.DataFrame({"a": [0.1, 0.3, 0.2], "b": [0.5, 0.4, 0.6], "c": [-0.1, 0.0, 0.1]})
    return BootstrapDistribution(ic, pd.Series({"a": 11, "b": 12, "c": 10}), 3, [], False)


def _toy_records():
    rows = [("a", 0.1)] * 11 + [("b", 0.2)] * 12 + [("c", 0.3)] * 10
    return pd.DataFrame({"tackler_id": [r[0] for r in rows], "pep": [r[1] for r in rows],
                         "tackler_position": "ILB"})


def test_ranking_threshold_is_strict():
    tab = rank_players(_toy_bootstrap(), _toy_records(), min_tackles=10)
    assert list(tab["player"]) == ["b", "a"]
    assert "c" not in set(tab["player"])
    assert list(tab["rank"]) == [1, 2]
    assert tab.loc[0, "median_intercept"] == 0.5
    assert tab.loc[1, "sum_pep"] == pytest.approx(1.1)


def test_ranking_names_and_ties():
    bs = _toy_bootstrap()
    bs.intercepts["a"] = bs.intercepts["b"]
    names = pd.DataFrame({"nflId": ["a", "b"], "displayName": ["Ann", "Bo"]})
    tab = rank_players(bs, _toy_records(), min_tackles=10, names=names)
    assert list(tab["player"]) == ["a", "b"]
    assert list(tab["name"]) == ["Ann", "Bo"]


def test_sd_and_median():
    bs = _toy_bootstrap()
    assert bs.median()["a"] == pytest.approx(0.2)
    assert bs.sd()["c"] == pytest.approx(0.1)
