#!/usr/bin/env python3
"""
信道模拟测试
编码 / 解码一致、蒙特卡洛评估、长度与索引界、session 台账
"""
import math
import os
import sys
import tempfile

from chansim import (FIXED_INPUT, SessionLedger, build_scheme, common_randomness_cardinality_bound,
                     evaluate_scheme, huffman_oracle_length, sim_decode, sim_decode_stream, sim_encode,
                     sim_transmit)
from coding import E_LOG2E, BitString
from errors import FramingError, SessionReuseError, ValidationError
from numopt import blahut_arimoto_capacity
from probspace import DiscreteDistribution, Kernel, binary_entropy
from testkit import run_suite

SEED = 20240611


def _bsc_scheme():
    return build_scheme(Kernel.bsc(0.11), SEED, DiscreteDistribution.uniform(2))


def test_encode_decode_agree():
    scheme = _bsc_scheme()
    assert abs(scheme.info_bits - (1.0 - binary_entropy(0.11))) < 1e-12
    for session in range(200):
        x = session % 2
        bits, outcome = sim_transmit(scheme, x, session)
        assert sim_decode(scheme, bits, session) == outcome.y
        assert str(sim_encode(scheme, x, session)) == str(bits)


def test_stream_decoding():
    scheme = _bsc_scheme()
    sessions = [3, 4, 5, 6]
    words = [sim_transmit(scheme, s % 2, s) for s in sessions]
    stream = BitString.concat(bits for bits, _ in words)
    assert sim_decode_stream(scheme, stream, sessions) == [o.y for _, o in words]
    try:
        sim_decode_stream(scheme, stream + BitString("1"), sessions)
    except FramingError:
        pass
    else:
        raise AssertionError("trailing bit accepted")


def test_framing_errors():
    scheme = _bsc_scheme()
    bits = sim_encode(scheme, 1, 0)
    for bad in (bits + BitString("0"), BitString(bits.bits[:-1])):
        try:
            sim_decode(scheme, bad, 0)
        except FramingError:
            continue
        raise AssertionError(f"malformed description {bad} accepted")
    try:
        sim_encode(scheme, 2, 0)
    except ValidationError:
        pass
    else:
        raise AssertionError("out-of-alphabet input accepted")


def test_source_coupled_evaluation():
    scheme = _bsc_scheme()
    report = evaluate_scheme(scheme, trials=1000)
    assert report.mismatches == 0
    assert report.passed, report.as_dict()
    assert report.expected_length <= report.bound_value
    for x in (0, 1):
        # E[log K | X=x] ≤ D(P_{Y|x} || P_Y) + e⁻¹log₂e + 1
        bound = report.divergence[x] + E_LOG2E + 1.0
        assert report.mean_log_index[x] <= bound + 3 * report.log_index_se[x]
    assert report.index_entropy >= 0.0


def test_fixed_input_mode():
    kernel = Kernel.z_channel(0.3)
    scheme = build_scheme(kernel, SEED, mode=FIXED_INPUT)
    cap, _ = blahut_arimoto_capacity(kernel)
    assert abs(scheme.info_bits - cap) < 1e-12
    report = evaluate_scheme(scheme, trials=1000)
    assert report.mismatches == 0
    assert report.passed, report.as_dict()
    single = evaluate_scheme(scheme, source=1, trials=1000)
    assert set(single.tv_per_input) == {1}


def test_evaluation_guards():
    scheme = _bsc_scheme()
    try:
        evaluate_scheme(scheme, trials=999)
    except ValidationError:
        pass
    else:
        raise AssertionError("too few trials accepted")
    try:
        build_scheme(Kernel.bsc(0.1), SEED, mode="other")
    except ValidationError:
        pass
    else:
        raise AssertionError("unknown mode accepted")


def test_huffman_oracle():
    scheme = _bsc_scheme()
    mean, se = huffman_oracle_length(scheme, trials=200)
    # 二元输出的 Huffman 码每次至多 1 比特
    assert 0.0 <= mean <= 1.0 and se >= 0.0


def test_cardinality_bound():
    bound, bits = common_randomness_cardinality_bound(2, 3)
    assert bound == 7 and abs(bits - math.log2(7)) < 1e-12


def test_session_ledger():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ledger.json")
        ledger = SessionLedger(path)
        ledger.claim(SEED, 0, x=1)
        ledger.claim_many(SEED, [1, 2])
        ledger.claim(SEED + 1, 0)
        ledger.claim(SEED, 0, x=1)
        try:
            ledger.claim(SEED, 0, x=0)
        except SessionReuseError:
            pass
        else:
            raise AssertionError("session reused for a different input")
        try:
            ledger.claim(SEED, 2)
        except SessionReuseError:
            pass
        else:
            raise AssertionError("session reuse accepted")
        ledger.save()
        reloaded = SessionLedger(path)
        assert reloaded.entries() == ledger.entries()
        try:
            reloaded.claim(SEED, 1)
        except SessionReuseError:
            pass
        else:
            raise AssertionError("persisted session reused")


def run_all_tests():
    return run_suite("信道模拟测试套件", {
        "编码解码一致": test_encode_decode_agree,
        "多条描述流": test_stream_decoding,
        "帧错误": test_framing_errors,
        "信源耦合评估": test_source_coupled_evaluation,
        "固定输入模式": test_fixed_input_mode,
        "评估参数校验": test_evaluation_guards,
        "Huffman 对照": test_huffman_oracle,
        "共享随机性基数": test_cardinality_bound,
        "session 台账": test_session_ledger,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
