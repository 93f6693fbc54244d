"""Built-in verification suites that re-derive every guarantee by brute force.

Each suite generates small random instances, computes ground truth by
exhaustive enumeration or an independent formula, and counts violations.
These are the same checks the test suite runs at larger trial counts; the
command-line entry point exists so a deployed build can re-verify itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .attribution import gradient_scores, shap_lite_scores
from .certify import (
    brute_force_stability_oracle,
    certify_example,
)
from .core import (
    ConfigError,
    FeatureGrouping,
    l1_distance,
    mask_leq,
    top_class_and_gap,
)
from .models import random_linear, random_mlp
from .noise import (
    LcgStream,
    SmoothingConfig,
    derive_rng_state,
    enumerate_atoms,
)
from .smoothing import SmoothedModel, masking_equivalence_check, mus_evaluate

LIPSCHITZ_SLACK = 1e-9
SHAP_EFFICIENCY_TOL = 1e-10
GRADIENT_FD_TOL = 1e-5


@dataclass(frozen=True)
class SuiteResult:
    name: str
    trials: int
    failures: int
    first_failure_seed: int | None

    @property
    def ok(self) -> bool:
        return self.failures == 0


@dataclass(frozen=True)
class SelfcheckReport:
    suites: tuple[SuiteResult, ...]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.suites)


def _all_masks(n: int) -> list[tuple[int, ...]]:
    return [tuple((code >> i) & 1 for i in range(n)) for code in range(1 << n)]


def _random_x(stream: LcgStream, d: int) -> tuple[float, ...]:
    return tuple(4.0 * stream.next_unit() - 2.0 for _ in range(d))


def _random_instance(trial_seed: int, max_n: int):
    """A small random smoothed model with an input, trivially grouped."""
    stream = LcgStream(derive_rng_state(trial_seed, 0))
    n = 2 + stream.next_below(max(1, min(max_n, 6) - 1))
    q = (4, 8)[stream.next_below(2)]
    lambda_num = 1 + stream.next_below(q)
    m = 2 + stream.next_below(2)
    base = random_linear(n, m, derive_rng_state(trial_seed, 1))
    grouping = FeatureGrouping.trivial(n)
    cfg = SmoothingConfig(q=q, lambda_num=lambda_num, seed=trial_seed, n=n)
    model = SmoothedModel.build(base, grouping, cfg)
    x = _random_x(stream, n)
    return model, x, stream


def check_lqv_marginals(trials: int, seed: int, max_n: int = 8) -> SuiteResult:
    """Every coordinate of the atom set carries exactly lambda_num ones."""
    failures = 0
    first = None
    for t in range(trials):
        trial_seed = seed + t
        stream = LcgStream(derive_rng_state(trial_seed, 0))
        q = 2 + stream.next_below(15)
        lambda_num = 1 + stream.next_below(q)
        n = 1 + stream.next_below(max_n)
        cfg = SmoothingConfig(q=q, lambda_num=lambda_num, seed=trial_seed, n=n)
        atoms = enumerate_atoms(cfg)
        for i in range(n):
            if sum(atom[i] for atom in atoms.atoms) != lambda_num:
                failures += 1
                first = first if first is not None else trial_seed
                break
    return SuiteResult("lqv_marginals", trials, failures, first)


def check_lipschitz(trials: int, seed: int, max_n: int = 6) -> SuiteResult:
    """Exhaustive pairwise slope bound on the smoothed output over masks."""
    failures = 0
    first = None
    for t in range(trials):
        trial_seed = seed + t
        model, x, _ = _random_instance(trial_seed, max_n)
        n = model.grouping.n
        lam = model.cfg.lambda_num / model.cfg.q
        masks = _all_masks(n)
        values = [mus_evaluate(model, x, alpha) for alpha in masks]
        bad = False
        for a in range(len(masks)):
            for b in range(a + 1, len(masks)):
                bound = lam * l1_distance(masks[a], masks[b]) + LIPSCHITZ_SLACK
                for c in range(model.m):
                    if abs(values[a][c] - values[b][c]) > bound:
                        bad = True
                        break
                if bad:
                    break
            if bad:
                break
        if bad:
            failures += 1
            first = first if first is not None else trial_seed
    return SuiteResult("lipschitz", trials, failures, first)


def check_masking_equivalence(trials: int, seed: int, max_n: int = 6) -> SuiteResult:
    """Mask-then-average equals pre-mask-then-average, with and without mu."""
    failures = 0
    first = None
    for t in range(trials):
        trial_seed = seed + t
        model, x, stream = _random_instance(trial_seed, max_n)
        n = model.grouping.n
        mu = tuple(stream.next_below(2) for _ in range(n))
        with_mu = SmoothedModel(base=model.base, grouping=model.grouping,
                                cfg=model.cfg, atoms=model.atoms, mu=mu)
        bad = False
        for alpha in _all_masks(n):
            if not masking_equivalence_check(model, x, alpha):
                bad = True
                break
            if mask_leq(mu, alpha) and not masking_equivalence_check(with_mu, x, alpha):
                bad = True
                break
        if bad:
            failures += 1
            first = first if first is not None else trial_seed
    return SuiteResult("masking_equivalence", trials, failures, first)


def check_soundness(trials: int, seed: int, max_n: int = 8) -> SuiteResult:
    """Certified radii never exceed what exhaustive enumeration allows."""
    failures = 0
    first = None
    for t in range(trials):
        trial_seed = seed + t
        model, x, stream = _random_instance(trial_seed, max_n)
        n = model.grouping.n
        phi = tuple(stream.next_below(2) for _ in range(n))
        record = certify_example(model, x, phi, example_id=t)
        ok_inc = brute_force_stability_oracle(model, x, phi, record.r_inc, "inc")
        ok_dec = brute_force_stability_oracle(model, x, phi, record.r_dec, "dec")
        if not (ok_inc and ok_dec):
            failures += 1
            first = first if first is not None else trial_seed
    return SuiteResult("soundness", trials, failures, first)


def check_shap_efficiency(trials: int, seed: int, max_n: int = 4) -> SuiteResult:
    """Exhaustive-permutation Shapley scores sum to p_c(x) - p_c(0)."""
    failures = 0
    first = None
    for t in range(trials):
        trial_seed = seed + t
        stream = LcgStream(derive_rng_state(trial_seed, 0))
        n = 2 + stream.next_below(min(max_n, 4) - 1)
        m = 2 + stream.next_below(2)
        base = random_linear(n, m, derive_rng_state(trial_seed, 1))
        grouping = FeatureGrouping.trivial(n)
        x = _random_x(stream, n)
        sv = shap_lite_scores(base, x, grouping, permutations=1,
                              rng_state=trial_seed, exhaustive=True)
        p_full = base.evaluate(x)
        c, _ = top_class_and_gap(p_full)
        p_zero = base.evaluate(tuple(0.0 for _ in range(n)))
        total = math.fsum(sv.scores)
        if abs(total - (p_full[c] - p_zero[c])) > SHAP_EFFICIENCY_TOL:
            failures += 1
            first = first if first is not None else trial_seed
    return SuiteResult("shap_efficiency", trials, failures, first)


def check_gradient_fd(trials: int, seed: int, max_n: int = 6) -> SuiteResult:
    """Analytic gradients agree with central finite differences."""
    failures = 0
    first = None
    for t in range(trials):
        trial_seed = seed + t
        stream = LcgStream(derive_rng_state(trial_seed, 0))
        n = 2 + stream.next_below(max(1, min(max_n, 6) - 1))
        m = 2 + stream.next_below(2)
        if stream.next_below(2) == 0:
            base = random_linear(n, m, derive_rng_state(trial_seed, 1))
        else:
            base = random_mlp(n, 4, m, derive_rng_state(trial_seed, 1))
        grouping = FeatureGrouping.trivial(n)
        x = _random_x(stream, n)
        analytic = gradient_scores(base, x, grouping)
        numeric = gradient_scores(_NoGradient(base), x, grouping)
        err = max(abs(a - b) for a, b in zip(analytic.scores, numeric.scores))
        if err > GRADIENT_FD_TOL:
            failures += 1
            first = first if first is not None else trial_seed
    return SuiteResult("gradient_fd", trials, failures, first)


class _NoGradient:
    """Wrapper hiding a model's analytic gradient to force finite differences."""

    def __init__(self, base) -> None:
        self._base = base
        self.d = base.d
        self.m = base.m

    def evaluate(self, x):
        return self._base.evaluate(x)


def run_selfcheck(max_n: int = 6, trials: int = 20, seed: int = 0) -> SelfcheckReport:
    if max_n > 10:
        raise ConfigError(f"max_n is capped at 10, got {max_n}")
    if max_n < 2:
        raise ConfigError(f"max_n must be >= 2, got {max_n}")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    suites = (
        check_lqv_marginals(trials, seed, max_n),
        check_lipschitz(trials, seed, max_n),
        check_masking_equivalence(trials, seed, max_n),
        check_soundness(trials, seed, max_n),
        check_shap_efficiency(trials, seed, min(max_n, 4)),
        check_gradient_fd(trials, seed, max_n),
    )
    return SelfcheckReport(suites=suites)
