#!/usr/bin/env python3
"""
多终端编码测试
Gray–Wyner 与多描述角点码的设计、编解码、界的核对，以及角点时分
"""
import sys

import numpy as np

from coding import BitString
from errors import FramingError, ValidationError
from harness import MT_DISTORTION_MARGIN, gw_instances, mdc_instances
from multiterminal import (Q_HEADER_BITS, gw_bounds, gw_decode1, gw_decode2, gw_design, gw_encode, gw_evaluate,
                           mdc_corner_rates, mdc_decode0, mdc_decode1, mdc_decode2, mdc_design, mdc_encode,
                           mdc_evaluate, mdc_rate_region, mdc_timeshare_decode0, mdc_timeshare_decode1,
                           mdc_timeshare_decode2, mdc_timeshare_design, mdc_timeshare_encode,
                           mdc_timeshare_lengths, per_stage_bounds, timeshare_rates)
from testkit import run_suite

SEED = 4242
CANDIDATES = 60


def _targets(setup, noisy):
    margin = MT_DISTORTION_MARGIN if noisy else 0.0
    return [d + margin for d in setup.model_distortions()]


def test_gw_identical_sources():
    setup, _ = gw_instances()["identical"]
    info = setup.info_terms()
    assert abs(info["I(X1X2;U)"] - 1.0) < 1e-12
    assert info["I(X1;Y1|U)"] < 1e-12
    code = gw_design(setup, SEED, candidates=CANDIDATES)
    report = gw_evaluate(code)
    assert report.passed, report.as_dict()
    assert report.distortions == {"D1": 0.0, "D2": 0.0}
    for x in (0, 1):
        m0, m1, m2 = gw_encode(code, x, x, q=0)
        assert gw_decode1(code, m0, m1) == x
        assert gw_decode2(code, m0, m2) == x


def test_gw_all_instances_meet_bounds():
    for name, (setup, noisy) in gw_instances().items():
        code = gw_design(setup, SEED, candidates=CANDIDATES, distortion_targets=_targets(setup, noisy))
        report = gw_evaluate(code)
        assert report.passed, (name, report.as_dict())
        assert report.header_ok and 1 <= report.support_size <= 5
        assert report.length_bounds == gw_bounds(setup)
        assert abs(sum(code.weights) - 1.0) < 1e-9


def test_gw_round_trip_matches_tables():
    setup, noisy = gw_instances()["dsbs011"]
    code = gw_design(setup, SEED, candidates=CANDIDATES, distortion_targets=_targets(setup, noisy))
    for q, branch in enumerate(code.branches):
        for (x1, x2), (u, y1, y2) in branch.table.items():
            m0, m1, m2 = gw_encode(code, x1, x2, q=q)
            assert int(m0.bits[:Q_HEADER_BITS], 2) == q
            assert gw_decode1(code, m0, m1) == y1
            assert gw_decode2(code, m0, m2) == y2
    rng = np.random.default_rng(1)
    m0, m1, _ = gw_encode(code, 0, 0, coin=rng)
    assert gw_decode1(code, m0, m1) in (0, 1)


def test_gw_framing_and_domain():
    setup, _ = gw_instances()["identical"]
    code = gw_design(setup, SEED, candidates=10)
    m0, m1, _ = gw_encode(code, 1, 1, q=0)
    for bad in ((m0 + BitString("0"), m1), (BitString("111" + m0.bits[3:]), m1)):
        try:
            gw_decode1(code, *bad)
        except FramingError:
            continue
        raise AssertionError(f"malformed common description {bad[0]} accepted")
    for args in ({"x1": 0, "x2": 1, "q": 0}, {"x1": 0, "x2": 0}):
        try:
            gw_encode(code, **args)
        except ValidationError:
            continue
        raise AssertionError(f"gw_encode accepted {args}")


def test_mdc_refinement():
    setup, _ = mdc_instances()["refinement4"]
    code = mdc_design(setup, SEED, candidates=CANDIDATES)
    report = mdc_evaluate(code)
    assert report.passed, report.as_dict()
    assert report.support_size <= 7
    for x in range(4):
        m1, m2 = mdc_encode(code, x, q=0)
        assert mdc_decode1(code, m1) == x // 2
        assert mdc_decode2(code, m2) == x // 2
        assert mdc_decode0(code, m1, m2) == (x, x // 2, x // 2)


def test_mdc_all_instances_meet_corner_rates():
    for name, (setup, noisy) in mdc_instances().items():
        code = mdc_design(setup, SEED, candidates=CANDIDATES, distortion_targets=_targets(setup, noisy))
        report = mdc_evaluate(code)
        assert report.passed, (name, report.as_dict())
        assert report.length_bounds == mdc_corner_rates(setup)
        assert report.extra["eta"] == setup.eta()
        for q, branch in enumerate(code.branches):
            for x, (u, y1, y2, y0) in branch.table.items():
                m1, m2 = mdc_encode(code, x, q=q)
                assert mdc_decode0(code, m1, m2) == (y0, y1, y2)


def test_mdc_decoders_disagree():
    setup, _ = mdc_instances()["refinement4"]
    code = mdc_design(setup, SEED, candidates=10)
    m1, m2 = mdc_encode(code, 0, q=0)
    try:
        mdc_decode1(code, m1 + BitString("1"))
    except FramingError:
        pass
    else:
        raise AssertionError("trailing bits accepted")
    try:
        mdc_decode0(code, m1, BitString(m2.bits[:-1]))
    except FramingError:
        pass
    else:
        raise AssertionError("truncated refinement accepted")


def test_rate_region_and_stage_bounds():
    setup, _ = mdc_instances()["constant"]
    # 常数实例：所有互信息为 0，η = 7
    assert abs(setup.eta() - 7.0) < 1e-12
    region = mdc_rate_region(setup, 100.0, 100.0)
    assert abs(region["R1_min"] - 14.0) < 1e-12 and abs(region["sum_min"] - 35.0) < 1e-12
    assert region["achievable"] == 1.0
    assert mdc_rate_region(setup, 14.0, 14.0)["achievable"] == 0.0
    rows = per_stage_bounds(setup)
    assert len(rows) == 4 and all(r["absorbed"] for r in rows)
    corner = mdc_corner_rates(setup)
    assert abs(corner["M1"] - 13.0) < 1e-12 and abs(corner["M2"] - 20.0) < 1e-12
    shared = timeshare_rates(setup, 1.0)
    assert shared == {"M1": corner["M1"] + 1.0, "M2": corner["M2"] + 1.0}
    try:
        timeshare_rates(setup, 1.5)
    except ValidationError:
        pass
    else:
        raise AssertionError("alpha outside [0, 1] accepted")


def test_timeshare():
    setup, _ = mdc_instances()["refinement4"]
    ts = mdc_timeshare_design(setup, SEED, 0.5, candidates=30)
    rng = np.random.default_rng(3)
    flags = set()
    for _ in range(40):
        x = int(rng.integers(4))
        m1, m2 = mdc_timeshare_encode(ts, x, rng)
        flags.add(m1.bits[0])
        assert mdc_timeshare_decode1(ts, m1) == x // 2
        assert mdc_timeshare_decode2(ts, m2) == x // 2
        assert mdc_timeshare_decode0(ts, m1, m2) == (x, x // 2, x // 2)
    assert flags == {"0", "1"}
    lengths = mdc_timeshare_lengths(ts)
    rates = timeshare_rates(setup, 0.5)
    assert lengths["M1"] <= rates["M1"] + 1e-9 and lengths["M2"] <= rates["M2"] + 1e-9


def run_all_tests():
    return run_suite("多终端编码测试套件", {
        "Gray–Wyner 相同信源": test_gw_identical_sources,
        "Gray–Wyner 全部实例": test_gw_all_instances_meet_bounds,
        "Gray–Wyner 编解码": test_gw_round_trip_matches_tables,
        "Gray–Wyner 帧与定义域": test_gw_framing_and_domain,
        "MDC 细化实例": test_mdc_refinement,
        "MDC 全部实例": test_mdc_all_instances_meet_corner_rates,
        "MDC 帧错误": test_mdc_decoders_disagree,
        "可达区域与阶段界": test_rate_region_and_stage_bounds,
        "角点时分": test_timeshare,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
