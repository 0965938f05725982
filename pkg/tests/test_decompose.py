import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causal_disparity import scm
from causal_disparity.decompose import (
    EFFECTS, EffectEstimate, compare_to_truth, decomposition_report, estimate_decomposition, format_cell,
    total_variation, write_report,
)
from causal_disparity.learners import LOGISTIC, LearnerSpec
from causal_disparity.tabular import DataError

FAST = LearnerSpec.boosted_stumps(30, 0.3, 3)
FAST_LOGIT = FAST.with_objective(LOGISTIC)
LINEAR = LearnerSpec.regularized_linear()


def additive_gap(result):
    p = result.points()
    return abs(p["tv"] - (p["ctf_de"] - p["ctf_ie"] - p["ctf_se"]))


def test_constant_outcome_has_zero_tv(cpt_a, make_roled):
    data = make_roled(cpt_a, 500, 0)
    flat = data.take(np.arange(data.n))
    object.__setattr__(flat, "y", np.ones(data.n))
    assert total_variation(flat).point == 0.0


def test_tv_within_three_sigma(cpt_a, make_roled):
    data = make_roled(cpt_a, 100_000, 1)
    truth = scm.true_effects(cpt_a).tv
    s2 = data.s == 1
    p2, p1 = data.y[s2].mean(), data.y[~s2].mean()
    sigma = math.sqrt(p2 * (1 - p2) / s2.sum() + p1 * (1 - p1) / (~s2).sum())
    assert abs(total_variation(data).point - truth) <= 3 * sigma


@pytest.mark.parametrize("seed", range(5))
def test_exact_additivity_discrete(cpt_a, make_roled, seed):
    data = make_roled(cpt_a, 2000, seed)
    result = estimate_decomposition(data, FAST_LOGIT, FAST, k=3, b=0, seed=seed)
    assert additive_gap(result) <= 1e-12
    assert result.tv.point == total_variation(data).point


@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 1000))
def test_exact_additivity_linear(a, b, d, seed):
    spec = scm.LinearScm(a=a, b=b, d=d, x_dim=2, s_link=(0.5, -0.5), t=(0.3, 0.1))
    data = scm_roled(spec, 300, seed)
    assert additive_gap(estimate_decomposition(data, LINEAR, LINEAR, k=3, b=0, seed=seed)) <= 1e-12


def scm_roled(spec, n, seed):
    from causal_disparity.tabular import bind_roles
    return bind_roles(scm.sample(spec, n, seed), scm.scm_schema(spec))


def test_linear_closed_form_with_linear_learners():
    spec = scm.LinearScm(a=0.5, b=0.3, d=0.4)
    data = scm_roled(spec, 20_000, 0)
    p = estimate_decomposition(data, LINEAR, LINEAR, k=5, b=0, seed=0).points()
    assert p["nde"] == pytest.approx(0.30, abs=0.02)
    assert p["nie"] == pytest.approx(0.20, abs=0.02)
    assert p["ctf_se"] == pytest.approx(0.0, abs=0.02)


def test_bootstrap_is_deterministic(cpt_a, make_roled):
    data = make_roled(cpt_a, 600, 2)
    a = estimate_decomposition(data, FAST_LOGIT, FAST, k=3, b=5, seed=7)
    b = estimate_decomposition(data, FAST_LOGIT, FAST, k=3, b=5, seed=7)
    threaded = estimate_decomposition(data, FAST_LOGIT, FAST, k=3, b=5, seed=7, n_jobs=3)
    assert a.to_dict() == b.to_dict() == threaded.to_dict()
    c = estimate_decomposition(data, FAST_LOGIT, FAST, k=3, b=5, seed=8)
    assert c.to_dict() != a.to_dict()


def test_intervals_contain_points(cpt_a, make_roled):
    result = estimate_decomposition(make_roled(cpt_a, 600, 3), FAST_LOGIT, FAST, k=3, b=8, seed=1)
    for name in EFFECTS:
        e = result.effect(name)
        assert e.n_bootstrap == 8 and e.ci_low <= e.point <= e.ci_high and e.std_error >= 0


@settings(max_examples=100)
@given(st.floats(-1, 1), st.lists(st.floats(-1, 1), min_size=2, max_size=50))
def test_from_replicates_contains_point(point, reps):
    e = EffectEstimate.from_replicates(point, np.array(reps))
    assert e.ci_low <= point <= e.ci_high


def test_estimate_rejects_point_outside_interval():
    with pytest.raises(ValueError):
        EffectEstimate(0.5, 0.0, 0.1, 0.01, 10)


def test_baseline_swap_negates_tv(cpt_a, make_roled):
    data = make_roled(cpt_a, 1000, 4)
    assert total_variation(data.swap_groups()).point == -total_variation(data).point
    a = estimate_decomposition(data, FAST_LOGIT, FAST, k=3, b=0, seed=0)
    b = estimate_decomposition(data.swap_groups(), FAST_LOGIT, FAST, k=3, b=0, seed=0)
    assert b.tv.point == -a.tv.point
    assert b.baseline == a.comparison


def test_format_cell():
    assert format_cell(0.016, 0.0001) == "0.016 (0.0001)"
    assert format_cell(0.016, math.nan) == "0.016 (n/a)"


def test_zero_bootstrap_report_uses_na(cpt_a, make_roled, tmp_path):
    result = estimate_decomposition(make_roled(cpt_a, 500, 5), FAST_LOGIT, FAST, k=3, b=0)
    report = decomposition_report(result)
    assert [r["effect"] for r in report["rows"]] == list(EFFECTS)
    assert all(r["ci_low"] == "n/a" and r["cell"].endswith("(n/a)") for r in report["rows"])
    truth = scm.true_effects(cpt_a).to_dict()
    write_report(result, tmp_path / "d.json", tmp_path / "d.csv", truth=truth)
    body = json.loads((tmp_path / "d.json").read_text())
    assert len(body["comparison_to_truth"]) == 6
    assert (tmp_path / "d.csv").read_text().count("\n") == 7
    rows = compare_to_truth(result, truth)
    assert float(rows[0]["difference"]) == pytest.approx(result.tv.point - truth["tv"], abs=1e-6)


def test_config_echo(cpt_a, make_roled):
    result = estimate_decomposition(make_roled(cpt_a, 300, 6), FAST_LOGIT, FAST, k=2, b=0, seed=3)
    assert result.config["k"] == 2 and result.config["seed"] == 3
    assert LearnerSpec.from_dict(result.config["mu_spec"]) == FAST_LOGIT


@pytest.mark.parametrize("kw,err", [(dict(k=1), ValueError), (dict(k=10_000), DataError), (dict(b=-1), ValueError),
                                    (dict(nu_spec=FAST_LOGIT), ValueError)])
def test_argument_errors(cpt_a, make_roled, kw, err):
    with pytest.raises(err):
        estimate_decomposition(make_roled(cpt_a, 300, 7), **{"mu_spec": FAST_LOGIT, "nu_spec": FAST, **kw})


def test_empty_group_rejected(cpt_a, make_roled):
    data = make_roled(cpt_a, 300, 8)
    only = data.take(np.flatnonzero(data.s == 1))
    with pytest.raises(DataError):
        total_variation(only)
    with pytest.raises(DataError):
        estimate_decomposition(only, FAST_LOGIT, FAST)


def test_learner_failure_carries_context(cpt_a, make_roled):
    # one s1 row per fold leaves fewer than two training rows for nu/kappa
    data = make_roled(cpt_a, 400, 9)
    s1 = np.flatnonzero(data.s == 0)[:2]
    small = data.take(np.sort(np.concatenate([s1, np.flatnonzero(data.s == 1)])))
    with pytest.raises(RuntimeError, match="point estimate failed"):
        estimate_decomposition(small, FAST_LOGIT, FAST, k=2, b=0)


# coverage over simulated datasets with linear learners; the data have no
# direct path (b = 0) and S independent of X, so ctf_de = ctf_se = 0
NULL_SCM = scm.LinearScm(a=0.5, b=0.0, d=0.4, x_dim=2, g=(0.3, 0.0), t=(0.5, 0.2))
N_DATASETS = 200


@pytest.fixture(scope="module")
def null_coverage():
    hits = {"ctf_de": 0, "ctf_se": 0}
    for i in range(N_DATASETS):
        result = estimate_decomposition(scm_roled(NULL_SCM, 500, 1000 + i), LINEAR, LINEAR, k=5, b=100, seed=i)
        for name in hits:
            e = result.effect(name)
            hits[name] += e.ci_low <= 0.0 <= e.ci_high
    return {name: h / N_DATASETS for name, h in hits.items()}


@pytest.mark.parametrize("effect", ["ctf_de", "ctf_se"])
def test_null_effect_coverage(null_coverage, effect):
    assert null_coverage[effect] >= 0.92
