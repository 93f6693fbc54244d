"""Scorers, top-k selection, and the stable-prefix search."""
from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muscert.attribution import (
    LIME_RIDGE,
    ScoreVector,
    binary_search_prefix,
    gradient_scores,
    greedy_stable_attribution,
    lime_lite_scores,
    occlusion_scores,
    prefix_mask,
    score_ordering,
    shap_lite_scores,
    smoothed_gradient_scores,
    topk_binarize,
)
from muscert.certify import consistency_check, decremental_radius, incremental_radius
from muscert.core import (
    CapabilityError,
    ConfigError,
    DimensionError,
    FeatureGrouping,
    NumericalError,
    mask_apply,
    ones_mask,
    popcount,
    top_class_and_gap,
)
from muscert.models import LinearSoftmaxModel, random_linear, random_mlp
from muscert.noise import SmoothingConfig, iid_bernoulli_masks
from muscert.smoothing import SmoothedModel, mus_evaluate, smoothed_predict

from conftest import ConstantHandle


class DyadicAdditiveHandle:
    """Class-0 probability parts are small powers of two, so every subset
    sum and difference is exact in binary floating point."""

    def __init__(self, offset, weights):
        self.offset = offset
        self.weights = tuple(weights)
        self.d = len(self.weights)
        self.m = 2

    def evaluate(self, x):
        p0 = self.offset
        for j, v in enumerate(x):
            if v != 0.0:
                p0 += self.weights[j]
        return (p0, 1.0 - p0)


class GradientFreeAdapter:
    """Hide an analytic gradient so only evaluate() is visible."""

    def __init__(self, inner):
        self._inner = inner
        self.d = inner.d
        self.m = inner.m

    def evaluate(self, x):
        return self._inner.evaluate(x)


def _identity_pair():
    base = LinearSoftmaxModel(weights=((1.0, 0.0), (0.0, 1.0)), bias=(0.0, 0.0))
    grouping = FeatureGrouping.trivial(2)
    return base, grouping


# ---------------------------------------------------------------- occlusion

def test_occlusion_on_bare_classifier():
    base, grouping = _identity_pair()
    sv = occlusion_scores(base, (2.0, 0.0), grouping)
    e2 = math.exp(2.0)
    assert sv.method == "occlusion"
    assert abs(sv.scores[0] - (e2 / (e2 + 1) - 0.5)) <= 1e-15
    assert sv.scores[1] == 0.0  # that coordinate is already zero


def test_occlusion_smoothed_at_full_keep_matches_bare():
    base, grouping = _identity_pair()
    cfg = SmoothingConfig(n=2, q=4, lambda_num=4, seed=4)
    model = SmoothedModel.build(base, grouping, cfg)
    x = (2.0, 0.0)
    smoothed = occlusion_scores(model, x)
    bare = occlusion_scores(base, x, grouping)
    for a, b in zip(smoothed.scores, bare.scores):
        assert abs(a - b) <= 1e-15


def test_occlusion_requires_grouping_for_bare_base():
    base, _ = _identity_pair()
    with pytest.raises(ConfigError):
        occlusion_scores(base, (1.0, 1.0))


def test_occlusion_zero_input_scores_zero():
    base, grouping = _identity_pair()
    sv = occlusion_scores(base, (0.0, 0.0), grouping)
    assert sv.scores == (0.0, 0.0)


def test_occlusion_recovers_additive_group_effects():
    # Offset 0.5 keeps class 0 on top for every ablation.
    handle = DyadicAdditiveHandle(0.5, (0.125, 0.0625, 0.03125))
    grouping = FeatureGrouping(groups=((0, 2), (1,)), d=3)
    sv = occlusion_scores(handle, (1.0, 1.0, 1.0), grouping)
    assert sv.scores == (0.125 + 0.03125, 0.0625)


# ----------------------------------------------------------------- gradient

def test_gradient_scores_sum_abs_entries_per_group():
    model = random_linear(3, 2, 31)
    grouping = FeatureGrouping(groups=((0, 2), (1,)), d=3)
    x = (0.4, -0.8, 1.2)
    c, _ = top_class_and_gap(model.evaluate(x))
    grad = model.gradient(x, c)
    sv = gradient_scores(model, x, grouping)
    assert sv.method == "vgrad"
    assert sv.scores == (abs(grad[0]) + abs(grad[2]), abs(grad[1]))


def test_gradient_finite_difference_fallback_is_close():
    model = random_mlp(3, 4, 2, 5)
    x = (0.3, -0.2, 0.9)
    grouping = FeatureGrouping.trivial(3)
    analytic = gradient_scores(model, x, grouping)
    numeric = gradient_scores(GradientFreeAdapter(model), x, grouping)
    for a, b in zip(analytic.scores, numeric.scores):
        assert abs(a - b) <= 1e-6


def test_gradient_fallback_can_be_disabled():
    model = GradientFreeAdapter(random_linear(2, 2, 0))
    with pytest.raises(CapabilityError):
        gradient_scores(model, (1.0, 1.0), FeatureGrouping.trivial(2),
                        allow_finite_differences=False)


def test_gradient_scores_of_constant_classifier_are_zero():
    handle = ConstantHandle((0.25, 0.75), d=3)
    sv = gradient_scores(handle, (1.0, 2.0, 3.0), FeatureGrouping.trivial(3))
    assert sv.scores == (0.0, 0.0, 0.0)


def test_smoothed_gradient_at_full_keep_matches_plain():
    model_base = random_linear(3, 2, 12)
    grouping = FeatureGrouping.trivial(3)
    cfg = SmoothingConfig(n=3, q=4, lambda_num=4, seed=2)
    model = SmoothedModel.build(model_base, grouping, cfg)
    x = (0.5, -1.0, 0.25)
    smoothed = smoothed_gradient_scores(model, x)
    plain = gradient_scores(model_base, x, grouping)
    assert smoothed.method == "vgrad-smoothed"
    for a, b in zip(smoothed.scores, plain.scores):
        assert abs(a - b) <= 1e-15


def test_smoothed_gradient_averages_over_atoms():
    base = random_linear(2, 2, 44)
    grouping = FeatureGrouping.trivial(2)
    cfg = SmoothingConfig(n=2, q=4, lambda_num=2, seed=4)
    model = SmoothedModel.build(base, grouping, cfg)
    x = (1.5, -0.75)
    c, _ = top_class_and_gap(smoothed_predict(model, x))
    expected = []
    for j in range(2):
        parts = []
        for atom in model.atoms.atoms:
            g = base.gradient(mask_apply(x, atom, grouping), c)
            parts.append(g[j] * atom[j])
        expected.append(abs(math.fsum(parts) / cfg.q))
    sv = smoothed_gradient_scores(model, x)
    assert sv.scores == tuple(expected)


def test_smoothed_gradient_needs_analytic_gradient():
    base = GradientFreeAdapter(random_linear(2, 2, 0))
    cfg = SmoothingConfig(n=2, q=4, lambda_num=2, seed=1)
    model = SmoothedModel.build(base, FeatureGrouping.trivial(2), cfg)
    with pytest.raises(CapabilityError):
        smoothed_gradient_scores(model, (1.0, 1.0))


# --------------------------------------------------------------------- lime

def test_lime_ignores_inactive_groups():
    handle = DyadicAdditiveHandle(0.3125, (0.375, 0.0, 0.0))
    grouping = FeatureGrouping.trivial(3)
    sv = lime_lite_scores(handle, (1.0, 1.0, 1.0), grouping,
                          samples=256, kernel_width=3.0, rng_state=5)
    assert sv.method == "lime"
    assert abs(sv.scores[0] - 0.375) <= 1e-4
    assert abs(sv.scores[1]) <= 1e-4
    assert abs(sv.scores[2]) <= 1e-4


def _exact_wls_oracle(handle, x, grouping, samples, kernel_width, rng_state):
    """Same surrogate fit, redone in exact rational arithmetic."""
    n = grouping.n
    c, _ = top_class_and_gap(handle.evaluate(x))
    masks = iid_bernoulli_masks(0.5, n, samples, rng_state)
    rows = []
    targets = []
    weights = []
    for z in masks:
        rows.append([Fraction(1)] + [Fraction(b) for b in z])
        targets.append(Fraction(handle.evaluate(mask_apply(x, z, grouping))[c]))
        dropped = n - sum(z)
        weights.append(Fraction(math.exp(-(dropped * dropped)
                                         / (kernel_width * kernel_width))))
    k = n + 1
    lhs = [[Fraction(0)] * k for _ in range(k)]
    rhs = [Fraction(0)] * k
    for row, y, w in zip(rows, targets, weights):
        for a in range(k):
            rhs[a] += w * row[a] * y
            for b in range(k):
                lhs[a][b] += w * row[a] * row[b]
    ridge = Fraction(LIME_RIDGE)
    for a in range(k):
        lhs[a][a] += ridge
    # Gaussian elimination with exact pivots.
    for col in range(k):
        pivot = max(range(col, k), key=lambda r: abs(lhs[r][col]))
        lhs[col], lhs[pivot] = lhs[pivot], lhs[col]
        rhs[col], rhs[pivot] = rhs[pivot], rhs[col]
        inv = Fraction(1) / lhs[col][col]
        for r in range(k):
            if r == col:
                continue
            factor = lhs[r][col] * inv
            for b in range(col, k):
                lhs[r][b] -= factor * lhs[col][b]
            rhs[r] -= factor * rhs[col]
    return [float(rhs[a] / lhs[a][a]) for a in range(1, k)]


def test_lime_matches_exact_rational_wls():
    handle = random_linear(3, 2, 21)
    grouping = FeatureGrouping.trivial(3)
    x = (0.8, -1.1, 0.4)
    sv = lime_lite_scores(handle, x, grouping, samples=48,
                          kernel_width=3.0, rng_state=11)
    oracle = _exact_wls_oracle(handle, x, grouping, 48, 3.0, 11)
    for got, want in zip(sv.scores, oracle):
        assert abs(got - want) <= 1e-9


def test_lime_constant_classifier_has_flat_surrogate():
    # The ridge term leaves a sub-1e-6 shadow on a perfectly flat target.
    handle = ConstantHandle((0.5, 0.5), d=3)
    sv = lime_lite_scores(handle, (1.0, 1.0, 1.0), FeatureGrouping.trivial(3),
                          samples=64, rng_state=0)
    for v in sv.scores:
        assert abs(v) <= 1e-6


def test_lime_sample_floor():
    handle = ConstantHandle((0.5, 0.5), d=3)
    with pytest.raises(ConfigError):
        lime_lite_scores(handle, (1.0, 1.0, 1.0), FeatureGrouping.trivial(3),
                         samples=3)


def test_lime_kernel_width_must_be_positive():
    handle = ConstantHandle((0.5, 0.5), d=2)
    with pytest.raises(ConfigError):
        lime_lite_scores(handle, (1.0, 1.0), FeatureGrouping.trivial(2),
                         samples=16, kernel_width=0.0)


def test_lime_is_deterministic_in_rng_state():
    handle = random_linear(3, 2, 2)
    grouping = FeatureGrouping.trivial(3)
    x = (1.0, 2.0, 3.0)
    a = lime_lite_scores(handle, x, grouping, samples=32, rng_state=7)
    b = lime_lite_scores(handle, x, grouping, samples=32, rng_state=7)
    c = lime_lite_scores(handle, x, grouping, samples=32, rng_state=8)
    assert a == b
    assert a.scores != c.scores


# --------------------------------------------------------------------- shap

def test_shap_two_group_closed_form():
    base, grouping = _identity_pair()
    x = (1.5, -0.5)
    c, _ = top_class_and_gap(base.evaluate(x))

    def v(alpha):
        return base.evaluate(mask_apply(x, alpha, grouping))[c]

    sv = shap_lite_scores(base, x, grouping, exhaustive=True)
    want0 = 0.5 * (v((1, 0)) - v((0, 0))) + 0.5 * (v((1, 1)) - v((0, 1)))
    want1 = 0.5 * (v((0, 1)) - v((0, 0))) + 0.5 * (v((1, 1)) - v((1, 0)))
    assert abs(sv.scores[0] - want0) <= 1e-15
    assert abs(sv.scores[1] - want1) <= 1e-15


def test_shap_additive_game_credits_exact_weights():
    weights = (0.125, 0.0625, 0.03125)
    handle = DyadicAdditiveHandle(0.5, weights)
    grouping = FeatureGrouping.trivial(3)
    x = (1.0, 1.0, 1.0)
    exhaustive = shap_lite_scores(handle, x, grouping, exhaustive=True)
    sampled = shap_lite_scores(handle, x, grouping, permutations=8, rng_state=3)
    assert exhaustive.scores == weights
    assert sampled.scores == weights


def test_shap_efficiency_for_exhaustive_orders():
    model = random_linear(4, 3, 61)
    grouping = FeatureGrouping.trivial(4)
    x = (0.9, -0.4, 1.3, 0.2)
    c, _ = top_class_and_gap(model.evaluate(x))
    sv = shap_lite_scores(model, x, grouping, exhaustive=True)
    full = model.evaluate(x)[c]
    empty = model.evaluate((0.0, 0.0, 0.0, 0.0))[c]
    assert abs(math.fsum(sv.scores) - (full - empty)) <= 1e-10


def test_shap_sampling_is_deterministic():
    model = random_linear(3, 2, 14)
    grouping = FeatureGrouping.trivial(3)
    x = (1.0, -1.0, 0.5)
    a = shap_lite_scores(model, x, grouping, permutations=16, rng_state=9)
    b = shap_lite_scores(model, x, grouping, permutations=16, rng_state=9)
    assert a == b


def test_shap_rejects_nonpositive_permutations():
    handle = ConstantHandle((0.5, 0.5), d=2)
    with pytest.raises(ConfigError):
        shap_lite_scores(handle, (1.0, 1.0), FeatureGrouping.trivial(2),
                         permutations=0)


# ---------------------------------------------------- selection and prefixes

def test_topk_prefers_lower_index_on_ties():
    assert topk_binarize((0.5, 0.9, 0.5, -1.0), 2) == (1, 1, 0, 0)
    assert topk_binarize((0.5, 0.9, 0.5, -1.0), 3) == (1, 1, 1, 0)


def test_topk_extremes_and_range():
    sv = ScoreVector(scores=(0.1, 0.2), method="occlusion")
    assert topk_binarize(sv, 0) == (0, 0)
    assert topk_binarize(sv, 2) == (1, 1)
    with pytest.raises(ConfigError):
        topk_binarize(sv, 3)
    with pytest.raises(ConfigError):
        topk_binarize(sv, -1)


@settings(max_examples=60, deadline=None)
@given(
    vals=st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=8),
    data=st.data(),
)
def test_topk_mask_properties(vals, data):
    k = data.draw(st.integers(0, len(vals)))
    mask = topk_binarize(vals, k)
    assert popcount(mask) == k
    chosen = [vals[i] for i in range(len(vals)) if mask[i]]
    dropped = [vals[i] for i in range(len(vals)) if not mask[i]]
    if chosen and dropped:
        assert min(chosen) >= max(dropped)


def test_score_ordering_and_prefix_mask():
    ordering = score_ordering((0.1, 0.3, 0.2))
    assert ordering == (1, 2, 0)
    assert prefix_mask(ordering, 0, 3) == (0, 0, 0)
    assert prefix_mask(ordering, 2, 3) == (0, 1, 1)
    assert prefix_mask(ordering, 3, 3) == (1, 1, 1)


def test_score_ordering_breaks_ties_low():
    assert score_ordering((1.0, 1.0, 2.0)) == (2, 0, 1)


# ------------------------------------------------------------ greedy search

def _small_smoothed(seed=3):
    base = random_linear(4, 2, seed)
    grouping = FeatureGrouping.trivial(4)
    cfg = SmoothingConfig(n=4, q=4, lambda_num=2, seed=6)
    return SmoothedModel.build(base, grouping, cfg)


def test_greedy_zero_targets_returns_shortest_consistent_prefix():
    model = _small_smoothed()
    x = (1.2, -0.6, 0.9, 0.3)
    scores = occlusion_scores(model, x)
    mask, met = greedy_stable_attribution(model, x, scores, 0, 0)
    assert met
    pred, _ = top_class_and_gap(smoothed_predict(model, x))
    ordering = score_ordering(scores)
    shortest = None
    for length in range(1, 5):
        candidate = prefix_mask(ordering, length, 4)
        got, _ = top_class_and_gap(mus_evaluate(model, x, candidate))
        if got == pred:
            shortest = candidate
            break
    assert mask == shortest


def test_greedy_unreachable_targets_reports_not_met():
    model = _small_smoothed()
    x = (1.2, -0.6, 0.9, 0.3)
    scores = occlusion_scores(model, x)
    mask, met = greedy_stable_attribution(model, x, scores, 0, 99)
    assert mask == ones_mask(4)
    assert not met


def test_greedy_met_masks_pass_independent_recheck():
    # lambda = 1/8 keeps integer radii >= 1 within reach of ordinary gaps.
    checked = 0
    for seed in range(8):
        base = random_linear(4, 2, seed)
        grouping = FeatureGrouping.trivial(4)
        cfg = SmoothingConfig(n=4, q=8, lambda_num=1, seed=6)
        model = SmoothedModel.build(base, grouping, cfg)
        x = (0.8, -0.5, 1.1, -0.2)
        scores = occlusion_scores(model, x)
        mask, met = greedy_stable_attribution(model, x, scores, 1, 1)
        if not met:
            continue
        checked += 1
        assert consistency_check(model, x, mask)
        _, r_inc = incremental_radius(model, x, mask)
        _, r_dec = decremental_radius(model, x)
        assert r_inc >= 1 and r_dec >= 1
    assert checked >= 1


def test_greedy_rejects_negative_targets():
    model = _small_smoothed()
    with pytest.raises(ConfigError):
        greedy_stable_attribution(model, (1.0, 1.0, 1.0, 1.0),
                                  (0.1, 0.2, 0.3, 0.4), -1, 0)


def test_binary_search_on_monotone_predicate():
    model = _small_smoothed()
    ordering = (0, 1, 2, 3)
    length, met = binary_search_prefix(
        model, (1.0, 1.0, 1.0, 1.0), ordering,
        lambda alpha: popcount(alpha) >= 3,
    )
    assert (length, met) == (3, True)


def test_binary_search_never_true_predicate():
    model = _small_smoothed()
    length, met = binary_search_prefix(
        model, (1.0, 1.0, 1.0, 1.0), (0, 1, 2, 3), lambda alpha: False,
    )
    assert (length, met) == (4, False)


def test_binary_search_nonmonotone_midpoint_hit():
    model = _small_smoothed()
    length, met = binary_search_prefix(
        model, (1.0, 1.0, 1.0, 1.0), (0, 1, 2, 3),
        lambda alpha: popcount(alpha) == 2,
    )
    assert (length, met) == (2, True)


def test_binary_search_falls_back_on_nonmonotone_predicate():
    # True only at length 1: the bisection walks past it and must rescan.
    model = _small_smoothed()
    length, met = binary_search_prefix(
        model, (1.0, 1.0, 1.0, 1.0), (0, 1, 2, 3),
        lambda alpha: popcount(alpha) == 1,
    )
    assert (length, met) == (1, True)


# ------------------------------------------------------------- score vector

def test_score_vector_validation():
    with pytest.raises(DimensionError):
        ScoreVector(scores=(), method="occlusion")
    with pytest.raises(NumericalError):
        ScoreVector(scores=(1.0, float("nan")), method="occlusion")
    with pytest.raises(NumericalError):
        ScoreVector(scores=(float("inf"),), method="occlusion")
