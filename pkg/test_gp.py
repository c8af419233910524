#!/usr/bin/env python3
"""
Gelfand–Pinsker 约化测试
模型信息量、逐 trial 精确估计与两条不等式、规模与参数校验
"""
import sys

import numpy as np

from errors import ShapeError, SizeError, ValidationError
from gp import GpSetup, dirty_paper_toy, gp_rate_gap, gp_reduce
from harness import gp_setups
from pfr import build_codebook, induced_function
from probspace import DiscreteDistribution, Kernel, binary_entropy, entropy_bits
from testkit import run_suite

TRIALS = 10_000


def test_dirty_paper_information():
    setup = dirty_paper_toy(crossover=0.1, u_flip=0.3)
    report = gp_reduce(setup, trials=TRIALS, seed=3)
    # Y = U ⊕ N，U 均匀
    assert abs(report.i_uy - (1.0 - binary_entropy(0.1))) < 1e-12
    assert abs(report.i_us - (1.0 - binary_entropy(0.3))) < 1e-12
    assert abs(gp_rate_gap(setup) - report.rate_gap) < 1e-12
    assert report.rate_gap < 0
    assert report.chain_ok and report.sfrl_ok, report.as_dict()
    assert 0.0 <= report.h_u_given_v <= 1.0
    assert report.trials == TRIALS and report.distinct_tables >= 1


def test_tables_follow_induced_function():
    setup = dirty_paper_toy(crossover=0.1, u_flip=0.3)
    report = gp_reduce(setup, trials=TRIALS, seed=4)
    ps = setup.p_s.probs
    prior = setup.p_u_given_s.output_marginal(setup.p_s)
    h_u, keys = [], set()
    for t in range(TRIALS):
        table = induced_function(build_codebook(4, prior, substream=t), setup.p_u_given_s, prior)
        h_u.append(entropy_bits(np.bincount(table.table, weights=ps, minlength=len(prior.probs))))
        keys.add(table.key)
    assert np.isclose(report.h_u_given_v, np.mean(h_u), rtol=0.0, atol=1e-12)
    assert report.distinct_tables == len(keys)


def test_degenerate_setups():
    setups = gp_setups()
    indep = gp_reduce(setups["independent"], trials=TRIALS, seed=1)
    # U ⊥ S：每个码本的函数表与 s 无关，V 决定 U
    assert indep.h_u_given_v == 0.0 and indep.h_u_given_v_se == 0.0
    assert indep.as_dict()["pass"]
    ident = gp_reduce(setups["identity_clean"], trials=TRIALS, seed=1)
    # U = S：函数表恒为恒等映射，V 不含信息
    assert abs(ident.h_u_given_v - 1.0) < 1e-12
    assert abs(ident.i_vy) < 1e-12
    assert ident.as_dict()["pass"]


def test_report_keys():
    report = gp_reduce(gp_setups()["dirty_paper"], trials=TRIALS, seed=9)
    data = report.as_dict()
    for key in ("H(U|V)", "I(V;Y)", "I(U;Y)", "I(U;S)", "H(U|V)_plugin", "I(V;Y)_plugin", "pass"):
        assert key in data
    assert data["H(U|V)_plugin"] >= 0.0 and data["I(V;Y)_plugin"] >= 0.0


def test_guards():
    setup = dirty_paper_toy()
    try:
        gp_reduce(setup, trials=TRIALS - 1)
    except ValidationError:
        pass
    else:
        raise AssertionError("too few trials accepted")
    big = GpSetup(DiscreteDistribution.uniform(7), Kernel(np.full((7, 8), 0.125)),
                  np.zeros((8, 7), dtype=int), np.ones((1, 7, 1)))
    assert big.table_count == 8 ** 7
    try:
        gp_reduce(big, trials=TRIALS)
    except SizeError:
        pass
    else:
        raise AssertionError("oversized table alphabet accepted")
    try:
        GpSetup(DiscreteDistribution.uniform(2), Kernel.bsc(0.1), np.zeros((3, 2), dtype=int), np.ones((1, 2, 1)))
    except ShapeError:
        pass
    else:
        raise AssertionError("bad x_map shape accepted")


def run_all_tests():
    return run_suite("Gelfand–Pinsker 约化测试套件", {
        "脏纸信息量与不等式": test_dirty_paper_information,
        "函数表来自诱导函数": test_tables_follow_induced_function,
        "退化设定": test_degenerate_setups,
        "报告字段": test_report_keys,
        "参数校验": test_guards,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
