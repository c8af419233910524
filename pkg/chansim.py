"""
一次性精确信道模拟（共享随机性）
编码端把 X 压缩成 PFR 索引 k 的 Zipf 码字，解码端用同一 (seed, session) 再生码本并输出 ỹ_k
"""
import json
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from coding import BitReader, BitString, ZipfCode, huffman_build, zipf_build, zipf_params
from errors import FramingError, SessionReuseError, ValidationError
from numopt import blahut_arimoto_capacity
from pfr import DEFAULT_CAP, PfrCodebook, SelectionOutcome, build_codebook, select, select_many
from probspace import (DiscreteDistribution, Kernel, entropy_bits, kl_divergence, mutual_information,
                       tv_distance)

logger = logging.getLogger(__name__)

SOURCE_COUPLED = "source-coupled"
FIXED_INPUT = "fixed-input"
MIN_TRIALS = 1000
# 信道模拟的长度上界常数
LENGTH_SLACK_BITS = 5.0


def tv_threshold(alphabet_size: int, n: int) -> float:
    """蒙特卡洛分辨率下的 TV 阈值 max(0.01, 3·sqrt(|Y|/N))"""
    return max(0.01, 3.0 * math.sqrt(alphabet_size / n))


@dataclass(frozen=True, eq=False)
class ChannelSimScheme:
    kernel: Kernel
    prior: DiscreteDistribution
    master_seed: int
    zipf: ZipfCode
    mode: str
    info_bits: float
    source: Optional[DiscreteDistribution] = None
    cap: int = DEFAULT_CAP

    @property
    def bound_value(self) -> float:
        return self.info_bits + math.log2(self.info_bits + 1.0) + LENGTH_SLACK_BITS

    def codebook(self, session: int) -> PfrCodebook:
        return build_codebook(self.master_seed, self.prior, substream=session, cap=self.cap)


def build_scheme(kernel: Kernel, master_seed: int, source: Optional[DiscreteDistribution] = None,
                 mode: str = SOURCE_COUPLED, cap: int = DEFAULT_CAP) -> ChannelSimScheme:
    """
    构造信道模拟方案

    source-coupled 模式下先验为 P_X∘kernel 的输出边缘，λ 由 I(X;Y) 决定；
    fixed-input 模式下先验为达到容量的输出边缘，λ 由容量 C 决定。
    """
    if mode == SOURCE_COUPLED:
        if source is None:
            raise ValidationError("source-coupled mode needs a source distribution")
        joint = kernel.joint_with(source)
        prior = joint.marginal(1)
        info = mutual_information(joint)
    elif mode == FIXED_INPUT:
        info, achieving = blahut_arimoto_capacity(kernel)
        prior = kernel.output_marginal(achieving)
        source = achieving
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    scheme = ChannelSimScheme(kernel=kernel, prior=prior, master_seed=int(master_seed),
                              zipf=zipf_build(zipf_params(info)), mode=mode, info_bits=info,
                              source=source, cap=cap)
    logger.info(f"channel simulation scheme ({mode}): I={info:.6f} bits, lambda={scheme.zipf.lam:.6f}")
    return scheme


def sim_transmit(scheme: ChannelSimScheme, x: int, session: int) -> Tuple[BitString, SelectionOutcome]:
    """编码并返回编码端的选择结果（测试与评估用）"""
    if not 0 <= x < scheme.kernel.input_size:
        raise ValidationError(f"input symbol {x} outside alphabet of size {scheme.kernel.input_size}")
    outcome = select(scheme.codebook(session), scheme.kernel.row(x))
    return scheme.zipf.encode(outcome.k), outcome


def sim_encode(scheme: ChannelSimScheme, x: int, session: int) -> BitString:
    bits, _ = sim_transmit(scheme, x, session)
    return bits


def sim_decode(scheme: ChannelSimScheme, bits: Union[BitString, str], session: int) -> int:
    """
    解码一条描述

    Raises:
        FramingError: 码字截断、非法，或其后还有多余比特
    """
    k, used = scheme.zipf.decode(bits)
    total = len(bits)
    if used != total:
        raise FramingError(f"{total - used} trailing bits after the description", position=used)
    return scheme.codebook(session).symbol_at(k)


def sim_decode_stream(scheme: ChannelSimScheme, bits: Union[BitString, str],
                      sessions: Sequence[int]) -> List[int]:
    """依次解码首尾相接的多条描述，每条对应一个 session"""
    reader = BitReader(bits)
    outputs = []
    for session in sessions:
        k = scheme.zipf.read(reader)
        outputs.append(scheme.codebook(session).symbol_at(k))
    if not reader.at_end():
        raise FramingError(f"{reader.remaining} trailing bits after {len(sessions)} descriptions",
                           position=reader.position)
    return outputs


@dataclass
class SimReport:
    mode: str
    expected_length: float
    standard_error: float
    bound_value: float
    info_bits: float
    tv_per_input: Dict[int, float]
    tv_threshold: float
    trials: int
    mismatches: int
    mean_log_index: Dict[int, float] = field(default_factory=dict)
    log_index_se: Dict[int, float] = field(default_factory=dict)
    divergence: Dict[int, float] = field(default_factory=dict)
    average_log_index: float = 0.0
    average_log_index_se: float = 0.0
    index_entropy: float = 0.0
    length_per_input: Dict[int, float] = field(default_factory=dict)
    length_se_per_input: Dict[int, float] = field(default_factory=dict)
    passed: bool = False

    @property
    def length_gap(self) -> float:
        """测得长度超出界的量（<= 0 表示满足）"""
        return self.expected_length - self.bound_value

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "expected_length": self.expected_length,
            "standard_error": self.standard_error,
            "bound_value": self.bound_value,
            "info_bits": self.info_bits,
            "tv_per_input": {str(x): v for x, v in self.tv_per_input.items()},
            "tv_threshold": self.tv_threshold,
            "trials": self.trials,
            "mismatches": self.mismatches,
            "mean_log_index": {str(x): v for x, v in self.mean_log_index.items()},
            "divergence": {str(x): v for x, v in self.divergence.items()},
            "average_log_index": self.average_log_index,
            "index_entropy": self.index_entropy,
            "length_per_input": {str(x): v for x, v in self.length_per_input.items()},
            "pass": self.passed,
        }


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    n = values.shape[0]
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def evaluate_scheme(scheme: ChannelSimScheme, source: Union[DiscreteDistribution, int, None] = None,
                    trials: int = 10_000, first_session: int = 0) -> SimReport:
    """
    蒙特卡洛评估：每个 session 一个码本，对 X 精确求期望

    每个 session 上编码端对全部输入做选择，解码端独立再生码本并解码，
    统计长度、索引、解码输出的经验分布与编码端输出的一致性。

    Args:
        scheme: 信道模拟方案
        source: source-coupled 模式下的 P_X（默认方案自带）；fixed-input 模式下可指定单个 x
        trials: session 数（>= 1000）
        first_session: 第一个 session 编号

    Returns:
        SimReport
    """
    if trials < MIN_TRIALS:
        raise ValidationError(f"trials must be >= {MIN_TRIALS}, got {trials}")
    kernel = scheme.kernel
    if scheme.mode == FIXED_INPUT:
        inputs = list(range(kernel.input_size)) if source is None else [int(source)]
        weights = np.full(len(inputs), 1.0 / len(inputs))
    else:
        src = scheme.source if source is None else source
        if isinstance(src, int) or src is None:
            raise ValidationError("source-coupled evaluation needs a source distribution")
        inputs = list(range(kernel.input_size))
        weights = src.probs

    m, n_out = len(inputs), kernel.output_size
    lengths = np.empty((trials, m))
    log_k = np.empty((trials, m))
    counts = np.zeros((m, n_out))
    k_mass: Counter = Counter()
    mismatches = 0
    sub = Kernel(kernel.rows[inputs])
    for t in range(trials):
        session = first_session + t
        ks, ys, _ = select_many(scheme.codebook(session), sub, scheme.prior)
        words = [scheme.zipf.encode(int(k)) for k in ks]
        decoder_cb = scheme.codebook(session)
        for i, word in enumerate(words):
            k_hat, _ = scheme.zipf.decode(word)
            y_hat = decoder_cb.symbol_at(k_hat)
            if y_hat != ys[i]:
                mismatches += 1
            counts[i, y_hat] += 1
            lengths[t, i] = len(word)
            log_k[t, i] = math.log2(int(ks[i]))
            k_mass[int(ks[i])] += weights[i]

    tv = {x: tv_distance(counts[i] / trials, kernel.rows[x]) for i, x in enumerate(inputs)}
    threshold = tv_threshold(n_out, trials)
    divergence = {x: kl_divergence(kernel.rows[x], scheme.prior) for x in inputs}
    mean_log, log_se = {}, {}
    length_x, length_se_x = {}, {}
    for i, x in enumerate(inputs):
        mean_log[x], log_se[x] = _mean_se(log_k[:, i])
        length_x[x], length_se_x[x] = _mean_se(lengths[:, i])
    avg_log, avg_log_se = _mean_se(log_k @ weights)
    index_entropy = entropy_bits(np.array(list(k_mass.values())) / trials)

    bound = scheme.bound_value
    if scheme.mode == FIXED_INPUT:
        worst = max(inputs, key=lambda x: length_x[x])
        expected, se = length_x[worst], length_se_x[worst]
        length_ok = all(length_x[x] <= bound + 3 * length_se_x[x] for x in inputs)
    else:
        expected, se = _mean_se(lengths @ weights)
        length_ok = expected <= bound + 3 * se
    passed = length_ok and mismatches == 0 and all(v <= threshold for v in tv.values())
    report = SimReport(
        mode=scheme.mode, expected_length=expected, standard_error=se, bound_value=bound,
        info_bits=scheme.info_bits, tv_per_input=tv, tv_threshold=threshold, trials=trials,
        mismatches=mismatches, mean_log_index=mean_log, log_index_se=log_se, divergence=divergence,
        average_log_index=avg_log, average_log_index_se=avg_log_se, index_entropy=index_entropy,
        length_per_input=length_x, length_se_per_input=length_se_x, passed=passed,
    )
    logger.info(f"channel simulation eval ({scheme.mode}, {trials} sessions): E[L]={expected:.4f}±{se:.4f} "
                f"bound={bound:.4f} max TV={max(tv.values()):.4f} pass={passed}")
    return report


def huffman_oracle_length(scheme: ChannelSimScheme, trials: int = 1000,
                          first_session: int = 0) -> Tuple[float, float]:
    """
    用 p_{Y|Z}(·|z) 上的 Huffman 码直接描述 y 的期望长度（对照用）

    p_{Y|Z}(y|z) = Σ_x p(x)·1[g(x,z) = y]，对 X 精确枚举；返回 (均值, 标准误)
    """
    if scheme.source is None:
        raise ValidationError("the Huffman oracle needs a source distribution")
    px = scheme.source.probs
    per_session = np.empty(trials)
    for t in range(trials):
        _, ys, _ = select_many(scheme.codebook(first_session + t), scheme.kernel, scheme.prior)
        pmf = np.bincount(ys, weights=px, minlength=scheme.kernel.output_size)
        code = huffman_build(DiscreteDistribution(pmf / pmf.sum()))
        per_session[t] = code.expected_length
    return _mean_se(per_session)


def common_randomness_cardinality_bound(input_size: int, output_size: int) -> Tuple[int, float]:
    """固定输入模式下共享随机性 Z 的基数上界 |X||Y|+1 及其比特数（存在性陈述，不做构造）"""
    if input_size < 1 or output_size < 1:
        raise ValidationError("alphabet sizes must be positive")
    bound = input_size * output_size + 1
    return bound, math.log2(bound)


class SessionLedger:
    """
    记录一次运行中已用过的 (seed, session)，重复使用即报错

    可选地持久化到 JSON 文件，供 CLI 在多次调用间共享
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.used: Dict[str, Optional[int]] = {}
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                self.used = json.load(f)

    @staticmethod
    def _key(seed: int, session: int) -> str:
        return f"{int(seed)}:{int(session)}"

    def claim(self, seed: int, session: int, x: Optional[int] = None) -> None:
        """同一 (seed, session) 只能用一次；同一输入 x 的重复编码视为同一次使用"""
        key = self._key(seed, session)
        if key in self.used:
            if x is not None and self.used[key] == int(x):
                logger.debug(f"session ledger: {key} re-encoded with the same input")
                return
            raise SessionReuseError(f"session {session} under seed {seed} was already used")
        self.used[key] = None if x is None else int(x)
        logger.debug(f"session ledger: claimed {key}")

    def claim_many(self, seed: int, sessions: Iterable[int]) -> None:
        for session in sessions:
            self.claim(seed, session)

    def entries(self) -> List[str]:
        return sorted(self.used)

    def save(self) -> None:
        if not self.path:
            return
        tmp = f"{self.path}.tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(self.used, f, indent=2, sort_keys=True)
        os.replace(tmp, self.path)
