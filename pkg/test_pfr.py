#!/usr/bin/env python3
"""
Poisson 函数表示测试
码本可再生、选择规则的精确停止、折叠形式与分布性质
"""
import sys

import numpy as np
from scipy import stats

from errors import BudgetError, PreconditionError, ValidationError
from pfr import (BLOCK, ContinuousPrior, build_codebook, collapse_exponentials, collapsed_select,
                 conditional_select, induced_function, select, select_many)
from probspace import DiscreteDistribution, Kernel
from testkit import run_suite

PRIOR3 = DiscreteDistribution.uniform(3)
SKEWED = DiscreteDistribution([0.7, 0.2, 0.1])


def test_codebook_regenerates():
    a = build_codebook(42, PRIOR3, initial_points=1)
    b = build_codebook(42, PRIOR3, initial_points=3 * BLOCK)
    a.extend(3 * BLOCK)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.marks, b.marks)
    assert np.all(np.diff(a.times) > 0) and a.times[0] > 0
    other = build_codebook(42, PRIOR3, substream=1)
    assert not np.array_equal(other.times[:BLOCK], a.times[:BLOCK])


def test_codebook_rejects_bad_seed():
    for seed in (-1, 2 ** 64):
        try:
            build_codebook(seed, PRIOR3)
        except ValidationError:
            continue
        raise AssertionError(f"seed {seed} accepted")


def test_select_matches_collapsed_form():
    for substream in range(50):
        cb = build_codebook(7, PRIOR3, substream=substream)
        outcome = select(cb, SKEWED)
        z = collapse_exponentials(cb)
        assert outcome.y == collapsed_select(z, SKEWED)
        assert outcome.k >= 1 and outcome.points_examined >= outcome.k
        assert cb.symbol_at(outcome.k) == outcome.y


def test_select_many_matches_select():
    kernel = Kernel([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [1 / 3, 1 / 3, 1 / 3]])
    prior = kernel.output_marginal(DiscreteDistribution.uniform(3))
    for substream in range(20):
        cb = build_codebook(11, prior, substream=substream)
        ks, ys, _ = select_many(cb, kernel)
        for x in range(3):
            single = select(cb, kernel.row(x))
            assert (ks[x], ys[x]) == (single.k, single.y)


def test_selection_distribution():
    # 选中的符号服从条件分布
    counts = np.zeros(3)
    trials = 3000
    for substream in range(trials):
        z = collapse_exponentials(build_codebook(3, PRIOR3, substream=substream))
        counts[collapsed_select(z, SKEWED)] += 1
    assert np.allclose(counts / trials, SKEWED.probs, atol=0.03), counts / trials


def test_collapsed_coordinates_are_unit_exponential():
    prior = DiscreteDistribution([0.5, 0.3, 0.2, 0.0])
    zs = np.array([collapse_exponentials(build_codebook(5, prior, substream=s)) for s in range(2000)])
    assert np.all(np.isinf(zs[:, 3]))
    assert np.allclose(zs[:, :3].mean(axis=0), 1.0, atol=0.08)
    for y in range(3):
        assert stats.kstest(zs[:, y], "expon").pvalue > 1e-4


def test_precondition_and_budget():
    prior = DiscreteDistribution([0.5, 0.5, 0.0])
    try:
        select(build_codebook(1, prior), DiscreteDistribution([0.0, 0.5, 0.5]))
    except PreconditionError:
        pass
    else:
        raise AssertionError("mass outside the prior support accepted")
    rare = DiscreteDistribution([1.0 - 1e-9, 1e-9])
    try:
        select(build_codebook(1, rare, cap=5), DiscreteDistribution.point_mass(2, 1))
    except BudgetError:
        pass
    else:
        raise AssertionError("cap not enforced")


def test_induced_function():
    cb = build_codebook(9, DiscreteDistribution.uniform(4))
    table = induced_function(cb, Kernel.identity(4))
    assert table.key == (0, 1, 2, 3)
    noisy = induced_function(cb, Kernel.bsc(0.2), DiscreteDistribution.uniform(2))
    assert len(noisy) == 2 and set(noisy.key) <= {0, 1}


def test_conditional_select():
    priors = [DiscreteDistribution([0.9, 0.1]), DiscreteDistribution([0.2, 0.8])]
    cb = build_codebook(21, DiscreteDistribution.uniform(2))
    out = conditional_select(cb, 1, [DiscreteDistribution.point_mass(2, 0)] * 2, priors)
    assert out.y == 0


def test_continuous_prior():
    prior = ContinuousPrior.uniform(ratio_bound=2.0)
    ys = []
    for substream in range(2000):
        cb = build_codebook(13, prior, substream=substream)
        ys.append(select(cb, lambda y: 2.0 * np.asarray(y)).y)
    # 条件密度 2y 的均值为 2/3
    assert abs(np.mean(ys) - 2.0 / 3.0) < 0.03


def run_all_tests():
    return run_suite("PFR 测试套件", {
        "码本可再生": test_codebook_regenerates,
        "非法种子": test_codebook_rejects_bad_seed,
        "选择与折叠形式一致": test_select_matches_collapsed_form,
        "批量选择一致": test_select_many_matches_select,
        "选择分布": test_selection_distribution,
        "折叠坐标为单位指数": test_collapsed_coordinates_are_unit_exponential,
        "前提与点数上限": test_precondition_and_budget,
        "诱导函数": test_induced_function,
        "条件选择": test_conditional_select,
        "连续先验": test_continuous_prior,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
