import numpy as np
import pandas as pd
import pytest

from tacklepep.ep_model import (OUTCOMES, STATE_COLUMNS, EpClassifier, GameState,
                                derive_next_state, evaluate_ep, expected_points,
                                fit_ep_classifier, g, is_valid_distribution, load_pbp,
                                score_weight)
from tacklepep.synth.pbp import bayes_expected_points, generate_pbp

SMALL_GRID = ({"max_depth": 3, "learning_rate": 0.2, "n_estimators": 40},)


class LinearStub:
    """P(+7) falls linearly with yard line, P(-7) takes the rest."""

    def predict_proba(self, states):
        yl = np.asarray(states["yardline"], dtype=float)
        p = np.zeros((len(yl), 7))
        p[:, 6] = 1 - yl / 100
        p[:, 0] = yl / 100
        return p


def stub_ep(yl):
    return 7.0 * (1 - 2 * yl / 100)


def ctx(down=1, ytg=10, yl=40, diff=3, home=1, t_off=3, t_def=1, quarter=2):
    return GameState(yl, ytg, down, quarter, diff, bool(home), t_off, t_def)


# -- distributions -----------------------------------------------------------

def test_uniform_is_exactly_zero():
    assert expected_points(np.full(7, 1 / 7)) == 0.0


def test_point_masses():
    for k, v in enumerate(OUTCOMES):
        p = np.zeros(7)
        p[k] = 1.0
        assert expected_points(p) == float(v)


def test_two_point_mixture():
    p = np.zeros(7)
    p[6], p[5] = 0.6, 0.4
    assert expected_points(p) == pytest.approx(5.4, abs=1e-12)
    p = np.zeros(7)
    p[6], p[3] = 0.6, 0.4
    assert expected_points(p) == pytest.approx(4.2, abs=1e-12)
    p = np.zeros(7)
    p[6], p[0] = 0.6, 0.4
    assert expected_points(p) == pytest.approx(1.4, abs=1e-12)
    p = np.zeros(7)
    p[5], p[3] = 0.6, 0.4
    assert expected_points(p) == pytest.approx(1.8, abs=1e-12)
    p = np.zeros(7)
    p[6], p[4] = 0.2, 0.8
    assert expected_points(p) == pytest.approx(3.0, abs=1e-12)


def test_expected_points_is_linear(rng):
    a, b = rng.dirichlet(np.ones(7), 2)
    lam = 0.3
    lhs = expected_points(lam * a + (1 - lam) * b)
    assert lhs == pytest.approx(lam * expected_points(a) + (1 - lam) * expected_points(b), abs=1e-12)


def test_expected_points_bounds(rng):
    ep = expected_points(rng.dirichlet(np.ones(7), 1000))
    assert ep.min() >= -7 and ep.max() <= 7


def test_wrong_width():
    with pytest.raises(ValueError):
        expected_points(np.ones(6) / 6)


def test_validity_check():
    assert is_valid_distribution(np.full(7, 1 / 7)).all()
    assert not is_valid_distribution(np.r_[np.full(6, 0.2), -0.2]).any()
    assert not is_valid_distribution(np.full(7, 0.2)).any()


def test_state_validation():
    with pytest.raises(ValueError):
        GameState(0, 1, 1, 1, 0, True)
    with pytest.raises(ValueError):
        GameState(5, 10, 1, 1, 0, True)
    with pytest.raises(ValueError):
        GameState(50, 10, 5, 1, 0, True)
    GameState(50, 10, 1, 5, 0, True)  # overtime


# -- transitions -------------------------------------------------------------

TRANSITIONS = [
    # (down, ytg, draw, terminal, yardline, yards_to_go, next_down, sign)
    (1, 10, 0.0, 7.0, None, None, None, 1),
    (3, 10, -4.0, 7.0, None, None, None, 1),
    (4, 10, 0.0, 7.0, None, None, None, 1),
    (1, 10, 100.0, -2.0, None, None, None, 1),
    (4, 10, 103.0, -2.0, None, None, None, 1),
    (1, 10, 30.0, None, 30, 10, 1, 1),
    (1, 10, 35.0, None, 35, 5, 2, 1),
    (2, 5, 35.0, None, 35, 10, 1, 1),
    (2, 6, 35.0, None, 35, 1, 3, 1),
    (2, 10, 35.0, None, 35, 5, 3, 1),
    (3, 10, 35.0, None, 35, 5, 4, 1),
    (3, 10, 31.0, None, 31, 1, 4, 1),
    (3, 10, 30.5, None, 30.5, 1, 4, 1),
    (4, 10, 30.0, None, 30, 10, 1, 1),
    (4, 10, 35.0, None, 65, 10, 1, -1),
    (4, 2, 45.0, None, 55, 10, 1, -1),
    (1, 10, 45.0, None, 45, 15, 2, 1),
    (1, 10, 5.0, None, 5, 5, 1, 1),
    (1, 10, 0.5, None, 1, 1, 1, 1),
    (1, 10, 99.5, None, 99, 69.5, 2, 1),
    (4, 10, 99.5, None, 1, 1, 1, -1),
]


@pytest.mark.parametrize("down,ytg,draw,term,yl,togo,nd,sign", TRANSITIONS)
def test_transition_table(down, ytg, draw, term, yl, togo, nd, sign):
    nxt = derive_next_state(draw, ctx(down=down, ytg=ytg))
    if term is not None:
        assert nxt.terminal[0] == term
        return
    assert np.isnan(nxt.terminal[0])
    s = nxt.states.iloc[0]
    assert s["yardline"] == yl
    assert s["yards_to_go"] == togo
    assert s["down"] == nd
    assert nxt.sign[0] == sign


def test_turnover_mirrors_context():
    c = ctx(down=4, diff=3, home=1, t_off=3, t_def=1, quarter=4)
    s = derive_next_state(42.0, c).states.iloc[0]
    assert s["score_differential"] == -3
    assert s["home_possession"] == 0
    assert (s["timeouts_off"], s["timeouts_def"]) == (1, 3)
    assert s["quarter"] == 4
    s = derive_next_state(42.0, ctx(down=2, diff=3)).states.iloc[0]
    assert s["score_differential"] == 3 and s["home_possession"] == 1


def test_g_terminal_values_are_exact():
    out = g(np.array([0.0, -10.0, 100.0, 130.0]), ctx(), LinearStub())
    np.testing.assert_array_equal(out, [7.0, 7.0, -2.0, -2.0])


def test_g_uses_classifier_and_sign():
    out = g(np.array([30.0, 35.0]), ctx(down=4), LinearStub())
    assert out[0] == pytest.approx(stub_ep(30))
    assert out[1] == pytest.approx(-stub_ep(65))


def test_g_bounded(rng):
    draws = rng.uniform(-20, 120, 500)
    out = g(draws, ctx(down=3), LinearStub())
    assert np.all((out >= -7) & (out <= 7))


def test_g_accepts_frame_context():
    frame = pd.DataFrame({**{c: [v] * 3 for c, v in ctx().as_row().items()}})
    out = g(np.array([0.0, 30.0, 100.0]), frame, LinearStub())
    np.testing.assert_allclose(out, [7.0, stub_ep(30), -2.0])


# -- weights and fitting ----------------------------------------------------

def test_score_weight():
    np.testing.assert_allclose(score_weight([0, 1, -3]), [1.0, 0.5, 0.25])
    np.testing.assert_array_equal(score_weight([5, -9], "none"), [1.0, 1.0])
    with pytest.raises(ValueError):
        score_weight([1], "bogus")


@pytest.fixture(scope="module")
def pbp():
    return generate_pbp(n_seasons=3, rows_per_season=3000, seed=4)


@pytest.fixture(scope="module")
def fitted(pbp):
    return fit_ep_classifier(pbp, grid=SMALL_GRID, seed=1)


def test_fit_outputs_are_distributions(fitted, pbp):
    p = fitted.predict_proba(pbp.head(500))
    assert is_valid_distribution(p).all()


def test_field_position_ordering(fitted):
    near = pd.DataFrame([ctx(yl=5, ytg=5).as_row()])
    far = pd.DataFrame([ctx(yl=95).as_row()])
    assert fitted.expected_points(near)[0] > fitted.expected_points(far)[0]


def test_refit_is_byte_identical(fitted, pbp):
    again = fit_ep_classifier(pbp, grid=SMALL_GRID, seed=1)
    assert again.to_bytes() == fitted.to_bytes()


def test_serialization_round_trip(fitted, pbp, tmp_path):
    path = tmp_path / "ep.bin"
    fitted.save(path)
    back = EpClassifier.load(path)
    x = pbp.head(50)
    assert back.predict_proba(x).tobytes() == fitted.predict_proba(x).tobytes()
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        EpClassifier.load(path)


def test_cv_records_every_season(fitted):
    cv = fitted.meta["cv"]
    assert len(cv) == 1 and len(cv[0]["fold_logloss"]) == 3
    assert fitted.meta["seasons"] == [2011, 2012, 2013]


def test_single_season_rejected(pbp):
    with pytest.raises(ValueError, match="2 seasons"):
        fit_ep_classifier(pbp[pbp["season"] == 2011], grid=SMALL_GRID)


def test_degenerate_all_touchdown_labels(pbp):
    rows = pbp.head(2000).copy()
    rows["next_score"] = 7
    rows["season"] = np.where(np.arange(len(rows)) < 1000, 1, 2)
    clf = fit_ep_classifier(rows, grid=SMALL_GRID)
    p = clf.predict_proba(rows.head(20))
    assert is_valid_distribution(p).all()
    assert p[:, 6].min() > 0.99


def test_bad_labels_rejected(pbp):
    rows = pbp.groupby("season").head(50).reset_index(drop=True)
    rows.loc[0, "next_score"] = 6
    with pytest.raises(ValueError, match="outside"):
        fit_ep_classifier(rows, grid=SMALL_GRID)


def test_mae_arithmetic():
    class Zero:
        def expected_points(self, rows):
            return np.zeros(len(rows))
    rows = pd.DataFrame({"next_score": [7, -7]})
    assert evaluate_ep(Zero(), rows) == 7.0


def test_bayes_ep_matches_combination():
    states = generate_pbp(2, 50, seed=0)[STATE_COLUMNS]
    from tacklepep.synth.pbp import true_probabilities
    np.testing.assert_allclose(bayes_expected_points(states),
                               expected_points(true_probabilities(states)), atol=1e-12)


def test_load_pbp_checks_columns(pbp, tmp_path):
    p = tmp_path / "pbp.csv"
    pbp.drop(columns=["down"]).to_csv(p, index=False)
    with pytest.raises(ValueError, match="down"):
        load_pbp(p)
    pbp.to_csv(p, index=False)
    assert len(load_pbp(p)) == len(pbp)
