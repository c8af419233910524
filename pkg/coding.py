"""
前缀码与比特流
PFR 索引 K 的 Zipf 整数码、Elias-delta 备用码、有限字母表上的规范 Huffman 码，以及描述容器格式
"""
import heapq
import logging
import math
import struct
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DesignError, DomainError, FramingError, ValidationError
from probspace import DiscreteDistribution

logger = logging.getLogger(__name__)

# e^{-1} log2 e
E_LOG2E = math.log2(math.e) / math.e
# 归一化常数的部分和截断点
ZIPF_K0 = 1_000_000
# 索引上限，超过即视为非法码字
MAX_INDEX = 2 ** 63

CONTAINER_MAGIC = b"SFRL"
CONTAINER_VERSION = 1
_HEADER = struct.Struct(">4sBQ")


@dataclass(frozen=True)
class BitString:
    """'0'/'1' 字符串形式的比特序列"""
    bits: str = ""

    def __post_init__(self):
        if self.bits.strip("01"):
            raise ValidationError("BitString accepts only '0' and '1'")

    @property
    def length(self) -> int:
        return len(self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __add__(self, other: "BitString") -> "BitString":
        return BitString(self.bits + other.bits)

    def __str__(self) -> str:
        return self.bits

    @classmethod
    def concat(cls, parts: Iterable["BitString"]) -> "BitString":
        return cls("".join(p.bits for p in parts))

    @classmethod
    def from_uint(cls, value: int, width: int) -> "BitString":
        if width == 0:
            return cls("")
        return cls(format(value, f"0{width}b"))

    def pack(self) -> bytes:
        """MSB 在前打包，末字节补 0"""
        if not self.bits:
            return b""
        padded = self.bits + "0" * (-len(self.bits) % 8)
        return int(padded, 2).to_bytes(len(padded) // 8, "big")

    @classmethod
    def unpack(cls, data: bytes, length: int) -> "BitString":
        if length > 8 * len(data):
            raise FramingError(f"payload holds {8 * len(data)} bits, header claims {length}", position=8 * len(data))
        if length == 0:
            return cls("")
        return cls(format(int.from_bytes(data, "big"), f"0{8 * len(data)}b")[:length])


class BitReader:
    """顺序读取比特，越界时抛出带位置的 FramingError"""

    def __init__(self, bits: Union[BitString, str], position: int = 0):
        self.bits = bits.bits if isinstance(bits, BitString) else bits
        self.position = position

    @property
    def remaining(self) -> int:
        return len(self.bits) - self.position

    def at_end(self) -> bool:
        return self.position >= len(self.bits)

    def read_bit(self) -> int:
        if self.position >= len(self.bits):
            raise FramingError("unexpected end of stream", position=self.position)
        bit = self.bits[self.position]
        self.position += 1
        return 1 if bit == "1" else 0

    def read_uint(self, width: int) -> int:
        if self.position + width > len(self.bits):
            raise FramingError(f"need {width} bits, {self.remaining} left", position=self.position)
        value = int(self.bits[self.position:self.position + width], 2) if width else 0
        self.position += width
        return value


def write_container(bits: BitString) -> bytes:
    """magic "SFRL" | 版本 | 8 字节大端比特长度 | 负载"""
    return _HEADER.pack(CONTAINER_MAGIC, CONTAINER_VERSION, bits.length) + bits.pack()


def read_container(data: bytes) -> BitString:
    if len(data) < _HEADER.size:
        raise FramingError(f"container shorter than the {_HEADER.size}-byte header", position=8 * len(data))
    magic, version, length = _HEADER.unpack_from(data)
    if magic != CONTAINER_MAGIC:
        raise FramingError(f"bad magic {magic!r}", position=0)
    if version != CONTAINER_VERSION:
        raise FramingError(f"unsupported container version {version}", position=32)
    payload = data[_HEADER.size:]
    if len(payload) != (length + 7) // 8:
        raise FramingError(f"payload is {len(payload)} bytes, header implies {(length + 7) // 8}",
                           position=8 * _HEADER.size)
    return BitString.unpack(payload, length)


class IntegerCode(ABC):
    """正整数上的前缀码"""

    @abstractmethod
    def length_of(self, k: int) -> int:
        ...

    @abstractmethod
    def encode(self, k: int) -> BitString:
        ...

    @abstractmethod
    def read(self, reader: BitReader) -> int:
        ...

    def decode(self, bits: Union[BitString, str], start: int = 0) -> Tuple[int, int]:
        """返回 (k, 消耗的比特数)"""
        reader = BitReader(bits, start)
        k = self.read(reader)
        return k, reader.position - start

    @staticmethod
    def _check_index(k: int) -> int:
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
            raise DomainError(f"integer codes need k >= 1, got {k!r}")
        if k >= MAX_INDEX:
            raise DomainError(f"index {k} beyond the supported range")
        return int(k)


def zipf_params(info_bits: float) -> float:
    """
    λ = 1 + 1/(I + e⁻¹log₂e + 1)

    Args:
        info_bits: 互信息 I(X;Y)（或容量 C），比特

    Returns:
        λ ∈ (1, 1.6533]
    """
    if not math.isfinite(info_bits) or info_bits < 0:
        raise ValidationError(f"info_bits must be finite and nonnegative, got {info_bits}")
    return 1.0 + 1.0 / (info_bits + E_LOG2E + 1.0)


@lru_cache(maxsize=128)
def zeta_bounds(lam: float) -> Tuple[float, float]:
    """Σ_k k^{-λ} 的下界与上界：k ≤ K0 的部分和加积分尾界"""
    ks = np.arange(1, ZIPF_K0 + 1, dtype=float)
    partial = float(np.sum(ks ** -lam))
    upper = partial + ZIPF_K0 ** (1.0 - lam) / (lam - 1.0)
    lower = partial + (ZIPF_K0 + 1) ** (1.0 - lam) / (lam - 1.0)
    return lower, upper


@dataclass(frozen=True)
class _LengthClass:
    length: int
    first_k: int
    count: int
    first_code: int


@dataclass(eq=False)
class ZipfCode(IntegerCode):
    """
    q(k) = c·k^{-λ} 的 Shannon 码长 ⌈λ log₂k + log₂(1/c)⌉，长度类内按字典序规范分配

    c 取 1/ζ 的上界，使 Σ q ≤ 1，从而 Kraft 成立
    """
    lam: float
    norm_c: float
    norm_gap: float = 0.0
    _classes: List[_LengthClass] = field(default_factory=list, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self._offset = math.log2(1.0 / self.norm_c)
        first = self.length_of(1)
        self._classes.append(_LengthClass(first, 1, self._first_k(first + 1) - 1, 0))

    def length_of(self, k: int) -> int:
        k = self._check_index(k)
        return max(0, math.ceil(self.lam * math.log2(k) + self._offset))

    def lengths(self, ks: np.ndarray) -> np.ndarray:
        """向量化码长，仅用于 Kraft 核查"""
        return np.maximum(0, np.ceil(self.lam * np.log2(np.asarray(ks, dtype=float)) + self._offset))

    def _first_k(self, length: int) -> int:
        """码长 >= length 的最小 k"""
        if self.length_of(MAX_INDEX - 1) < length:
            return MAX_INDEX
        lo, hi = 1, MAX_INDEX - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.length_of(mid) >= length:
                hi = mid
            else:
                lo = mid + 1
        return lo

    def _extend_to(self, predicate) -> Optional[_LengthClass]:
        with self._lock:
            for cls in self._classes:
                if predicate(cls):
                    return cls
            while True:
                last = self._classes[-1]
                if last.first_k + last.count >= MAX_INDEX:
                    return None
                length = last.length + 1
                first_k = last.first_k + last.count
                count = self._first_k(length + 1) - first_k
                first_code = (last.first_code + last.count) << 1
                if first_code + count > 1 << length:
                    raise DesignError(f"Zipf code violates Kraft at length {length}")
                cls = _LengthClass(length, first_k, count, first_code)
                self._classes.append(cls)
                if predicate(cls):
                    return cls

    def encode(self, k: int) -> BitString:
        k = self._check_index(k)
        cls = self._extend_to(lambda c: c.first_k <= k < c.first_k + c.count)
        return BitString.from_uint(cls.first_code + (k - cls.first_k), cls.length)

    def read(self, reader: BitReader) -> int:
        start = reader.position
        code = reader.read_uint(self._classes[0].length)
        index = 0
        while True:
            if index >= len(self._classes):
                if self._extend_to(lambda c: c.length > self._classes[index - 1].length) is None:
                    raise FramingError("invalid Zipf codeword", position=start)
            cls = self._classes[index]
            if cls.first_code <= code < cls.first_code + cls.count:
                return cls.first_k + (code - cls.first_code)
            code = (code << 1) | reader.read_bit()
            index += 1

    def kraft_sum(self) -> float:
        """k ≤ K0 的 Σ 2^{-L(k)} 加上 Σ_{k>K0} q(k) 的积分上界"""
        ks = np.arange(1, ZIPF_K0 + 1, dtype=float)
        partial = float(np.sum(2.0 ** -self.lengths(ks)))
        tail = self.norm_c * ZIPF_K0 ** (1.0 - self.lam) / (self.lam - 1.0)
        return partial + tail


@lru_cache(maxsize=64)
def zipf_build(lam: float, tol: float = 1e-6) -> ZipfCode:
    """
    构造 Zipf 码；相同 λ 总是返回同一个对象，编码端与解码端共享同一 c

    Raises:
        ValidationError: λ ≤ 1（级数发散）
    """
    if not lam > 1.0 or not math.isfinite(lam):
        raise ValidationError(f"Zipf exponent must exceed 1 (series diverges), got {lam}")
    lower, upper = zeta_bounds(lam)
    gap = (upper - lower) / upper
    if gap > tol:
        logger.warning(f"Zipf normalizer bracket {gap:.2e} exceeds tol {tol:.1e} at lambda={lam}")
    code = ZipfCode(lam=lam, norm_c=1.0 / upper, norm_gap=gap)
    logger.debug(f"Zipf code lambda={lam:.6f} c={code.norm_c:.6f} L(1)={code.length_of(1)}")
    return code


def zipf_encode(code: ZipfCode, k: int) -> BitString:
    return code.encode(k)


def zipf_decode(code: ZipfCode, bits: Union[BitString, str], start: int = 0) -> Tuple[int, int]:
    return code.decode(bits, start)


def zipf_expected_length(code: IntegerCode, pmf_over_k: Sequence[float]) -> float:
    """Σ_k p(k)·L(k)，pmf_over_k[0] 对应 k = 1"""
    return float(sum(p * code.length_of(k) for k, p in enumerate(pmf_over_k, 1) if p > 0))


class EliasDeltaCode(IntegerCode):
    """Elias-delta：γ(⌊log₂k⌋+1) 后接 k 去掉首位 1 的二进制"""

    def length_of(self, k: int) -> int:
        n = self._check_index(k).bit_length()
        return (n - 1) + 2 * (n.bit_length() - 1) + 1

    def encode(self, k: int) -> BitString:
        k = self._check_index(k)
        n = k.bit_length()
        gamma = "0" * (n.bit_length() - 1) + format(n, "b")
        return BitString(gamma + format(k, "b")[1:])

    def read(self, reader: BitReader) -> int:
        start = reader.position
        zeros = 0
        while reader.read_bit() == 0:
            zeros += 1
            if zeros > 6:
                raise FramingError("invalid Elias-delta prefix", position=start)
        n = (1 << zeros) | reader.read_uint(zeros)
        if n > 63:
            raise FramingError("Elias-delta length field out of range", position=start)
        return (1 << (n - 1)) | reader.read_uint(n - 1)


@dataclass(frozen=True, eq=False)
class HuffmanCode:
    """规范 Huffman 码；零概率符号没有码字"""
    codewords: Dict[int, str]
    probs: np.ndarray
    expected_length: float

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.shape[0])

    @property
    def max_length(self) -> int:
        return max(len(c) for c in self.codewords.values())

    def length_of(self, symbol: int) -> int:
        if symbol not in self.codewords:
            raise DomainError(f"symbol {symbol} has no codeword (zero design mass)")
        return len(self.codewords[symbol])

    def encode(self, symbol: int) -> BitString:
        symbol = int(symbol)
        if symbol not in self.codewords:
            raise DomainError(f"symbol {symbol} has no codeword (zero design mass)")
        return BitString(self.codewords[symbol])

    def read(self, reader: BitReader) -> int:
        start = reader.position
        if self.max_length == 0:
            return next(iter(self.codewords))
        by_word = self._by_word()
        word = ""
        while len(word) < self.max_length:
            word += "1" if reader.read_bit() else "0"
            if word in by_word:
                return by_word[word]
        raise FramingError("invalid Huffman codeword", position=start)

    def _by_word(self) -> Dict[str, int]:
        cached = self.__dict__.get("_words")
        if cached is None:
            cached = {w: s for s, w in self.codewords.items()}
            object.__setattr__(self, "_words", cached)
        return cached


def huffman_build(pmf: DiscreteDistribution) -> HuffmanCode:
    """
    规范 Huffman 码

    堆中以 (概率, 子树最小符号) 排序保证确定性；码字按 (码长, 符号) 依次分配。
    只有一个正概率符号时分配零长度码字，解码端需从帧结构得知符号个数。

    Args:
        pmf: 设计分布

    Returns:
        HuffmanCode
    """
    probs = pmf.probs
    support = [int(s) for s in np.flatnonzero(probs > 0)]
    lengths = {s: 0 for s in support}
    if len(support) > 1:
        heap = [(float(probs[s]), s, [s]) for s in support]
        heapq.heapify(heap)
        while len(heap) > 1:
            p1, s1, leaves1 = heapq.heappop(heap)
            p2, s2, leaves2 = heapq.heappop(heap)
            for s in leaves1 + leaves2:
                lengths[s] += 1
            heapq.heappush(heap, (p1 + p2, min(s1, s2), leaves1 + leaves2))

    codewords: Dict[int, str] = {}
    code, prev = 0, None
    for s in sorted(support, key=lambda s: (lengths[s], s)):
        if prev is not None:
            code = (code + 1) << (lengths[s] - prev)
        codewords[s] = format(code, f"0{lengths[s]}b") if lengths[s] else ""
        prev = lengths[s]
    expected = float(sum(probs[s] * lengths[s] for s in support))
    return HuffmanCode(codewords=codewords, probs=probs, expected_length=expected)


def huffman_encode(code: HuffmanCode, symbol: int) -> BitString:
    return code.encode(symbol)


def huffman_decode(code: HuffmanCode, bits: Union[BitString, str], start: int = 0) -> Tuple[int, int]:
    reader = BitReader(bits, start)
    symbol = code.read(reader)
    return symbol, reader.position - start
