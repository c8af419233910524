#!/usr/bin/env python3
"""
前缀码测试
Zipf / Elias-delta 整数码、规范 Huffman 码与容器格式
"""
import math
import sys

import numpy as np

from coding import (E_LOG2E, BitReader, BitString, EliasDeltaCode, huffman_build, read_container,
                    write_container, zipf_build, zipf_params)
from errors import DomainError, FramingError, ValidationError
from probspace import DiscreteDistribution
from testkit import run_suite


def _expect(exc, fn, *args):
    try:
        fn(*args)
    except exc:
        return
    raise AssertionError(f"expected {exc.__name__}")


def test_zipf_parameter():
    assert abs(zipf_params(0.0) - (1.0 + 1.0 / (E_LOG2E + 1.0))) < 1e-15
    assert 1.0 < zipf_params(50.0) < zipf_params(1.0)
    _expect(ValidationError, zipf_params, -0.5)
    _expect(ValidationError, zipf_build, 1.0)


def test_zipf_stream_is_prefix_free():
    code = zipf_build(zipf_params(0.8))
    ks = list(range(1, 300)) + [1023, 1024, 65537, 10 ** 9, 10 ** 15]
    stream = BitString.concat(code.encode(k) for k in ks)
    reader = BitReader(stream)
    decoded = [code.read(reader) for _ in ks]
    assert decoded == ks
    assert reader.at_end()
    for k in (1, 7, 1000, 10 ** 9):
        assert len(code.encode(k)) == code.length_of(k)


def test_zipf_lengths_and_kraft():
    lam = zipf_params(2.0)
    code = zipf_build(lam)
    assert code.kraft_sum() <= 1.0 + 1e-12
    for k in (1, 2, 50, 4096):
        shannon = lam * math.log2(k) + math.log2(1.0 / code.norm_c)
        assert shannon <= code.length_of(k) < shannon + 1.0
    lengths = [code.length_of(k) for k in range(1, 100_001)]
    assert np.all(np.diff(lengths) >= 0)
    assert zipf_build(lam) is code
    _expect(DomainError, code.encode, 0)


def test_elias_delta():
    code = EliasDeltaCode()
    assert [code.length_of(k) for k in (1, 2, 3, 4, 17)] == [1, 4, 4, 5, 9]
    assert str(code.encode(1)) == "1"
    assert str(code.encode(17)) == "001010001"
    stream = code.encode(5) + code.encode(1) + code.encode(300)
    reader = BitReader(stream)
    assert [code.read(reader) for _ in range(3)] == [5, 1, 300]


def test_huffman_dyadic():
    code = huffman_build(DiscreteDistribution([0.5, 0.25, 0.125, 0.125]))
    assert code.codewords == {0: "0", 1: "10", 2: "110", 3: "111"}
    assert abs(code.expected_length - 1.75) < 1e-12
    reader = BitReader("110" + "0" + "111")
    assert [code.read(reader) for _ in range(3)] == [2, 0, 3]
    _expect(FramingError, code.read, BitReader("11"))


def test_huffman_degenerate_and_zero_mass():
    single = huffman_build(DiscreteDistribution.point_mass(3, 2))
    assert single.codewords == {2: ""}
    assert single.read(BitReader("")) == 2
    code = huffman_build(DiscreteDistribution([0.6, 0.0, 0.4]))
    assert set(code.codewords) == {0, 2}
    _expect(DomainError, code.encode, 1)


def test_huffman_within_one_bit_of_entropy():
    pmf = DiscreteDistribution([0.4, 0.3, 0.15, 0.1, 0.05])
    code = huffman_build(pmf)
    h = -sum(p * math.log2(p) for p in pmf.probs)
    assert h <= code.expected_length < h + 1.0
    kraft = sum(2.0 ** -len(w) for w in code.codewords.values())
    assert abs(kraft - 1.0) < 1e-12


def test_container():
    bits = BitString("1011001110001")
    blob = write_container(bits)
    assert blob[:4] == b"SFRL"
    assert read_container(blob) == bits
    assert read_container(write_container(BitString(""))) == BitString("")
    _expect(FramingError, read_container, b"XXXX" + blob[4:])
    _expect(FramingError, read_container, blob[:-1])
    _expect(FramingError, read_container, blob[:5])
    _expect(ValidationError, BitString, "10a1")


def run_all_tests():
    return run_suite("前缀码测试套件", {
        "Zipf 参数": test_zipf_parameter,
        "Zipf 码流前缀性": test_zipf_stream_is_prefix_free,
        "Zipf 码长与 Kraft": test_zipf_lengths_and_kraft,
        "Elias-delta": test_elias_delta,
        "二进 Huffman": test_huffman_dyadic,
        "Huffman 退化情形": test_huffman_degenerate_and_zero_mass,
        "Huffman 与熵": test_huffman_within_one_bit_of_entropy,
        "容器格式": test_container,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
