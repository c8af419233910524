#!/usr/bin/env python3
"""
数值优化测试
容量、率失真与 Carathéodory 混合
"""
import math
import sys

import numpy as np
from scipy.special import xlogy

from errors import InfeasibleError, ValidationError
from numopt import (MIX_SLACK, blahut_arimoto_capacity, blahut_arimoto_rate_distortion, caratheodory_mix,
                    distortion_range)
from probspace import DiscreteDistribution, Kernel, binary_entropy
from testkit import run_suite

HAMMING = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_bsc_capacity():
    cap, p = blahut_arimoto_capacity(Kernel.bsc(0.11))
    assert abs(cap - (1.0 - binary_entropy(0.11))) < 1e-6
    assert np.allclose(p.probs, [0.5, 0.5], atol=1e-4)


def test_z_channel_capacity():
    eps = 0.3
    closed = math.log2(1.0 + (1.0 - eps) * eps ** (eps / (1.0 - eps)))
    cap, _ = blahut_arimoto_capacity(Kernel.z_channel(eps))
    assert abs(cap - closed) < 1e-6
    assert cap <= closed + 1e-9


def test_capacity_edge_cases():
    cap, _ = blahut_arimoto_capacity(Kernel.identity(4))
    assert abs(cap - 2.0) < 1e-9
    useless, _ = blahut_arimoto_capacity(Kernel([[0.5, 0.5], [0.5, 0.5]]))
    assert useless < 1e-9
    try:
        blahut_arimoto_capacity(Kernel.bsc(0.1), tol=0.0)
    except ValidationError:
        pass
    else:
        raise AssertionError("tol=0 accepted")


def test_binary_hamming_rate_distortion():
    src = DiscreteDistribution.uniform(2)
    assert distortion_range(src, HAMMING) == (0.0, 0.5)
    for D in (0.05, 0.11, 0.25):
        sol = blahut_arimoto_rate_distortion(src, HAMMING, D)
        assert sol.distortion <= D + 1e-12
        assert abs(sol.rate - (1.0 - binary_entropy(D))) < 1e-3, (D, sol.rate)


def test_rate_distortion_ends():
    src = DiscreteDistribution.uniform(2)
    zero = blahut_arimoto_rate_distortion(src, HAMMING, 0.5)
    assert zero.rate < 1e-12
    assert abs(zero.distortion - 0.5) < 1e-12
    lossless = blahut_arimoto_rate_distortion(src, HAMMING, 0.0)
    assert abs(lossless.rate - 1.0) < 1e-3
    assert lossless.distortion < 1e-9
    try:
        blahut_arimoto_rate_distortion(src, HAMMING, -0.1)
    except InfeasibleError:
        pass
    else:
        raise AssertionError("negative distortion target accepted")


def test_rate_distortion_matches_grid_search():
    # Bern(0.3) 信源：在 P(Y=1|X=0) = a、P(Y=0|X=1) = b 的网格上直接搜索最小互信息
    px = np.array([0.7, 0.3])
    D = 0.1
    sol = blahut_arimoto_rate_distortion(DiscreteDistribution(px), HAMMING, D)
    a, b = np.meshgrid(np.linspace(0.0, 1.0, 1001), np.linspace(0.0, 1.0, 1001), indexing="ij")
    feasible = px[0] * a + px[1] * b <= D
    py1 = px[0] * a + px[1] * (1.0 - b)
    rows = ((1.0 - a, a), (b, 1.0 - b))
    info = np.zeros_like(a)
    for x, (w0, w1) in enumerate(rows):
        info += px[x] * (xlogy(w0, w0) - xlogy(w0, 1.0 - py1) + xlogy(w1, w1) - xlogy(w1, py1))
    grid_min = float(info[feasible].min()) / math.log(2.0)
    assert sol.rate <= grid_min + 1e-5
    assert grid_min - sol.rate < 5e-3, (grid_min, sol.rate)
    assert abs(sol.rate - (binary_entropy(0.3) - binary_entropy(D))) < 1e-3


def test_capacity_nonincreasing_in_noise():
    caps = [blahut_arimoto_capacity(Kernel.bsc(eps))[0] for eps in np.linspace(0.0, 0.5, 11)]
    assert abs(caps[0] - 1.0) < 1e-6 and caps[-1] < 1e-9
    assert np.all(np.diff(caps) <= 1e-9), caps


def test_rate_distortion_nonincreasing_in_d():
    for px in ([0.7, 0.3], [1 / 3, 1 / 3, 1 / 3]):
        src = DiscreteDistribution(px)
        d = 1.0 - np.eye(len(px))
        d_min, d_max = distortion_range(src, d)
        rates = [blahut_arimoto_rate_distortion(src, d, D).rate for D in np.linspace(d_min, d_max, 13)]
        assert np.all(np.diff(rates) <= 1e-4), rates
        assert rates[-1] < 1e-9


def test_caratheodory_feasible():
    points = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]]
    sol = caratheodory_mix(points, [0.5, 0.5, 0.6])
    assert abs(sol.weights.sum() - 1.0) < 1e-9
    assert np.all(sol.weights > 0)
    assert len(sol.support) <= 4
    assert np.all(sol.achieved <= np.array([0.5, 0.5, 0.6]) + 1e-9)


def test_caratheodory_objective():
    # 在坐标 1 ≤ 0.5 的约束下最小化坐标 0
    points = [[3.0, 0.0], [1.0, 1.0], [2.0, 0.4], [0.0, 2.0]]
    sol = caratheodory_mix(points, [3.0, 0.5], objective_axis=0)
    assert len(sol.support) <= 2
    assert sol.achieved[1] <= 0.5 + 1e-9
    # 下凸包上 (0.4, 2) 与 (1, 1) 之间，c1 = 0.5 处取 11/6
    assert abs(sol.achieved[0] - 11.0 / 6.0) < 1e-9


def test_caratheodory_random_points():
    points = np.random.default_rng(5).random((40, 7))
    target = points.mean(axis=0)
    sol = caratheodory_mix(points, target)
    assert len(sol.support) <= 8
    recomputed = sol.weights @ points[sol.support]
    assert np.allclose(recomputed, sol.achieved)
    assert np.all(recomputed <= target + 1e-10 + MIX_SLACK)


def test_caratheodory_infeasible():
    try:
        caratheodory_mix([[1.0, 1.0], [2.0, 0.5]], [0.5, 2.0])
    except InfeasibleError as e:
        assert e.coordinate == 0
    else:
        raise AssertionError("infeasible target accepted")


def run_all_tests():
    return run_suite("数值优化测试套件", {
        "BSC 容量": test_bsc_capacity,
        "Z 信道容量": test_z_channel_capacity,
        "容量边界情形": test_capacity_edge_cases,
        "二元汉明率失真": test_binary_hamming_rate_distortion,
        "率失真端点": test_rate_distortion_ends,
        "率失真网格搜索": test_rate_distortion_matches_grid_search,
        "容量随噪声不增": test_capacity_nonincreasing_in_noise,
        "率失真随 D 不增": test_rate_distortion_nonincreasing_in_d,
        "混合可行": test_caratheodory_feasible,
        "带目标的混合": test_caratheodory_objective,
        "随机点混合": test_caratheodory_random_points,
        "混合不可行": test_caratheodory_infeasible,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
