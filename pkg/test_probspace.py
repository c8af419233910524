#!/usr/bin/env python3
"""
概率空间测试
分布校验、边缘与条件、各类信息度量
"""
import math
import sys

import numpy as np

from errors import ShapeError, ValidationError
from probspace import (DiscreteDistribution, JointDistribution, Kernel, binary_entropy,
                       conditional_entropy, conditional_mutual_information, entropy, kl_divergence,
                       mutual_information, tv_distance)
from testkit import run_suite


def _raises(exc, fn, *args):
    try:
        fn(*args)
    except exc:
        return
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def test_distribution_validation():
    _raises(ValidationError, DiscreteDistribution, [0.5, 0.6])
    _raises(ValidationError, DiscreteDistribution, [1.5, -0.5])
    _raises(ValidationError, DiscreteDistribution, [])
    _raises(ValidationError, DiscreteDistribution, [float("nan"), 1.0])
    _raises(ShapeError, DiscreteDistribution, np.eye(2) / 2)
    d = DiscreteDistribution([0.25, 0.0, 0.75])
    assert d.alphabet_size == 3
    assert list(d.support) == [0, 2]
    assert d[2] == 0.75


def test_entropy_extremes():
    assert abs(entropy(DiscreteDistribution.uniform(8)) - 3.0) < 1e-12
    assert entropy(DiscreteDistribution.point_mass(5, 3)) == 0.0
    assert abs(binary_entropy(0.5) - 1.0) < 1e-12
    h = binary_entropy(0.11)
    assert abs(h - (-(0.11 * math.log2(0.11) + 0.89 * math.log2(0.89)))) < 1e-12


def test_kl_and_tv():
    p = DiscreteDistribution([0.5, 0.5])
    q = DiscreteDistribution([0.25, 0.75])
    expected = 0.5 * math.log2(0.5 / 0.25) + 0.5 * math.log2(0.5 / 0.75)
    assert abs(kl_divergence(p, q) - expected) < 1e-12
    assert kl_divergence(p, p) == 0.0
    assert math.isinf(kl_divergence(p, DiscreteDistribution([1.0, 0.0])))
    assert abs(tv_distance(p, q) - 0.25) < 1e-12
    _raises(ShapeError, tv_distance, p, DiscreteDistribution.uniform(3))


def test_mutual_information():
    ident = Kernel.identity(4).joint_with(DiscreteDistribution.uniform(4))
    assert abs(mutual_information(ident) - 2.0) < 1e-12
    prod = JointDistribution.product(DiscreteDistribution([0.3, 0.7]), DiscreteDistribution.uniform(3))
    assert mutual_information(prod) < 1e-12
    bsc = Kernel.bsc(0.11).joint_with(DiscreteDistribution.uniform(2))
    assert abs(mutual_information(bsc) - (1.0 - binary_entropy(0.11))) < 1e-12


def test_marginals_and_conditionals():
    probs = np.array([[0.1, 0.2, 0.1], [0.3, 0.0, 0.3]])
    j = JointDistribution(probs)
    assert np.allclose(j.marginal(0).probs, [0.4, 0.6])
    assert np.allclose(j.marginal(1).probs, [0.4, 0.2, 0.4])
    k = j.conditional(0)
    assert np.allclose(k.rows[0], [0.25, 0.5, 0.25])
    assert np.allclose(k.rows[1], [0.5, 0.0, 0.5])
    back = j.conditional(1)
    assert back.input_size == 3 and back.output_size == 2
    assert np.allclose(back.rows[1], [1.0, 0.0])
    swapped = j.marginal_joint((1, 0))
    assert swapped.shape == (3, 2)
    assert np.allclose(swapped.probs, probs.T)
    _raises(ShapeError, j.marginal, 2)


def test_conditional_mutual_information_xor():
    # Z = X ⊕ Y，X、Y 独立均匀
    probs = np.zeros((2, 2, 2))
    for x in range(2):
        for y in range(2):
            probs[x, y, x ^ y] = 0.25
    j = JointDistribution(probs)
    assert conditional_mutual_information(j, 0, 1) < 1e-12
    assert abs(conditional_mutual_information(j, 0, 1, given=2) - 1.0) < 1e-12
    assert abs(conditional_entropy(j, (0, 1))) < 1e-12
    assert abs(conditional_entropy(j, 2) - 1.0) < 1e-12
    _raises(ShapeError, conditional_mutual_information, j, 0, 0)


def test_kernel_checks():
    _raises(ValidationError, Kernel, [[0.5, 0.4], [0.5, 0.5]])
    _raises(ShapeError, Kernel, [0.5, 0.5])
    z = Kernel.z_channel(0.3)
    assert np.allclose(z.rows, [[1.0, 0.0], [0.3, 0.7]])
    out = z.output_marginal(DiscreteDistribution.uniform(2))
    assert np.allclose(out.probs, [0.65, 0.35])
    _raises(ShapeError, z.joint_with, DiscreteDistribution.uniform(3))


def run_all_tests():
    return run_suite("概率空间测试套件", {
        "分布校验": test_distribution_validation,
        "熵的极值": test_entropy_extremes,
        "相对熵与总变差": test_kl_and_tv,
        "互信息": test_mutual_information,
        "边缘与条件": test_marginals_and_conditionals,
        "条件互信息（异或）": test_conditional_mutual_information_xor,
        "条件核校验": test_kernel_checks,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
