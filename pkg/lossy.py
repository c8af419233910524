"""
一次性变长有损信源编码
soft 码：一个固定的 PFR 码本实现 + Zipf 码；
mixture 码：两个折叠 z 实现之间的 Carathéodory 两点混合 + 每个分支一个 Huffman 码
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from coding import BitReader, BitString, HuffmanCode, ZipfCode, huffman_build, zipf_build, zipf_params
from errors import DesignError, FramingError, InfeasibleError, SizeError, ValidationError
from numopt import RdSolution, blahut_arimoto_rate_distortion, caratheodory_mix
from pfr import PfrCodebook, build_codebook, collapse_exponentials, select_many
from probspace import DiscreteDistribution, Kernel, entropy_bits

logger = logging.getLogger(__name__)

SOFT = "soft"
MIXTURE = "mixture"
# 候选混合时熵目标上的松弛（比特）
CANDIDATE_SLACK = 0.05
HEADER_BITS = 1
# 有损编码长度上界常数
LENGTH_SLACK_BITS = 6.0
# 块信源失真矩阵的元素上限
MAX_BLOCK_ENTRIES = 1 << 20
DISTORTION_TOL = 1e-9


def length_bound(rate: float) -> float:
    """R(D) + log₂(R(D)+1) + 6"""
    return rate + math.log2(rate + 1.0) + LENGTH_SLACK_BITS


@dataclass(frozen=True, eq=False)
class MixtureBranch:
    """混合的一个分支：固定 z 的诱导重建函数及其 Huffman 码"""
    substream: int
    z: np.ndarray
    table: np.ndarray
    huffman: HuffmanCode
    entropy: float
    distortion: float

    def reconstruct(self, x: int) -> int:
        return int(self.table[x])


@dataclass(eq=False)
class LossyCode:
    variant: str
    source: DiscreteDistribution
    distortion: np.ndarray
    target: float
    rd: RdSolution
    prior: DiscreteDistribution
    seed: int
    zipf: Optional[ZipfCode] = None
    codebook: Optional[PfrCodebook] = None
    branches: List[MixtureBranch] = field(default_factory=list)
    lam_mix: float = 0.0
    slack: float = 0.0
    candidates: int = 0
    _selection: Dict[int, Tuple[int, int]] = field(default_factory=dict, repr=False)

    @property
    def kernel(self) -> Kernel:
        return self.rd.kernel

    @property
    def rate(self) -> float:
        return self.rd.rate

    @property
    def bounds(self) -> Tuple[float, float]:
        return length_bound(self.rate), self.target

    @property
    def weights(self) -> Tuple[float, float]:
        return 1.0 - self.lam_mix, self.lam_mix


@dataclass
class LossyReport:
    variant: str
    expected_length: float
    expected_distortion: float
    rate: float
    length_bound: float
    distortion_bound: float
    length_se: float = 0.0
    distortion_se: float = 0.0
    slack: float = 0.0
    codebooks: int = 1
    passed: bool = False

    def as_dict(self) -> dict:
        return {
            "variant": self.variant,
            "expected_length": self.expected_length,
            "expected_distortion": self.expected_distortion,
            "rate": self.rate,
            "bounds": [self.length_bound, self.distortion_bound],
            "length_se": self.length_se,
            "distortion_se": self.distortion_se,
            "slack": self.slack,
            "codebooks": self.codebooks,
            "pass": self.passed,
        }


def _design_kernel(src: DiscreteDistribution, d, D: float) -> Tuple[RdSolution, np.ndarray, DiscreteDistribution]:
    dist = np.array(d, dtype=float)
    rd = blahut_arimoto_rate_distortion(src, dist, D)
    prior = rd.kernel.output_marginal(src)
    return rd, dist, prior


def design_soft(src: DiscreteDistribution, d, D: float, seed: int) -> LossyCode:
    """
    soft 随机码：R(D) 最优核 + 固定码本 (seed, substream 0) + Zipf 码

    Raises:
        InfeasibleError: D 低于最小可达失真
    """
    rd, dist, prior = _design_kernel(src, d, D)
    code = LossyCode(variant=SOFT, source=src, distortion=dist, target=float(D), rd=rd, prior=prior,
                     seed=int(seed), zipf=zipf_build(zipf_params(rd.rate)),
                     codebook=build_codebook(seed, prior, substream=0))
    logger.info(f"soft code designed: R(D)={rd.rate:.6f}, lambda={code.zipf.lam:.6f}")
    return code


def _soft_selections(code: LossyCode) -> Dict[int, Tuple[int, int]]:
    if not code._selection:
        ks, ys, _ = select_many(code.codebook, code.kernel, code.prior)
        code._selection.update({x: (int(k), int(y)) for x, (k, y) in enumerate(zip(ks, ys))})
    return code._selection


def _require(code: LossyCode, variant: str) -> None:
    if code.variant != variant:
        raise ValidationError(f"operation needs a {variant} code, got {code.variant}")


def soft_encode(code: LossyCode, x: int) -> BitString:
    _require(code, SOFT)
    k, _ = _soft_selections(code)[int(x)]
    return code.zipf.encode(k)


def soft_reconstruction(code: LossyCode, x: int) -> int:
    """编码端的重建 ỹ_k"""
    _require(code, SOFT)
    return _soft_selections(code)[int(x)][1]


def soft_decode(code: LossyCode, bits: Union[BitString, str]) -> int:
    _require(code, SOFT)
    k, used = code.zipf.decode(bits)
    if used != len(bits):
        raise FramingError(f"{len(bits) - used} trailing bits after the description", position=used)
    return code.codebook.symbol_at(k)


def soft_expected(code: LossyCode) -> Tuple[float, float]:
    """固定码本下对 X 精确枚举的 (E[L], E[d])"""
    _require(code, SOFT)
    sel = _soft_selections(code)
    px = code.source.probs
    length = sum(px[x] * code.zipf.length_of(k) for x, (k, _) in sel.items() if px[x] > 0)
    dist = sum(px[x] * code.distortion[x, y] for x, (_, y) in sel.items() if px[x] > 0)
    return float(length), float(dist)


def evaluate_soft(src: DiscreteDistribution, d, D: float, seed: int, codebooks: int = 200) -> LossyReport:
    """
    对多个码本 (substream 0..codebooks-1) 平均的 soft 码性能

    每个码本上对 X 精确枚举；均值 ± 3·SE 与 (R(D)+log₂(R(D)+1)+6, D) 比较
    """
    if codebooks < 2:
        raise ValidationError("codebooks must be at least 2")
    rd, dist, prior = _design_kernel(src, d, D)
    zipf = zipf_build(zipf_params(rd.rate))
    px = src.probs
    lengths, dists = np.empty(codebooks), np.empty(codebooks)
    for c in range(codebooks):
        ks, ys, _ = select_many(build_codebook(seed, prior, substream=c), rd.kernel, prior)
        lengths[c] = sum(px[x] * zipf.length_of(int(k)) for x, k in enumerate(ks) if px[x] > 0)
        chosen = dist[np.arange(len(px)), ys]
        with np.errstate(invalid="ignore"):
            dists[c] = float(np.sum(np.where(px > 0, px * chosen, 0.0)))
    mean_l, mean_d = float(lengths.mean()), float(dists.mean())
    se_l = float(lengths.std(ddof=1) / math.sqrt(codebooks))
    se_d = float(dists.std(ddof=1) / math.sqrt(codebooks))
    bound = length_bound(rd.rate)
    passed = mean_l <= bound + 3 * se_l and mean_d <= D + 3 * se_d + DISTORTION_TOL
    logger.info(f"soft code over {codebooks} codebooks: E[L]={mean_l:.4f}±{se_l:.4f} (bound {bound:.4f}), "
                f"E[d]={mean_d:.5f}±{se_d:.5f} (D={D})")
    return LossyReport(variant=SOFT, expected_length=mean_l, expected_distortion=mean_d, rate=rd.rate,
                       length_bound=bound, distortion_bound=float(D), length_se=se_l, distortion_se=se_d,
                       codebooks=codebooks, passed=passed)


def _candidate(src: DiscreteDistribution, dist: np.ndarray, kernel: Kernel, prior: DiscreteDistribution,
               seed: int, substream: int) -> Tuple[np.ndarray, np.ndarray, float, float, np.ndarray]:
    z = collapse_exponentials(build_codebook(seed, prior, substream=substream), prior)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(kernel.rows > 0, z[None, :] / kernel.rows, np.inf)
    table = np.argmin(scores, axis=1)
    px = src.probs
    pmf = np.bincount(table, weights=px, minlength=kernel.output_size)
    chosen = dist[np.arange(len(px)), table]
    with np.errstate(invalid="ignore"):
        distortion = float(np.sum(np.where(px > 0, px * chosen, 0.0)))
    return z, table, entropy_bits(pmf), distortion, pmf


def _branch(src, dist, kernel, prior, seed, substream) -> MixtureBranch:
    z, table, h, distortion, pmf = _candidate(src, dist, kernel, prior, seed, substream)
    return MixtureBranch(substream=substream, z=z, table=table,
                         huffman=huffman_build(DiscreteDistribution(pmf / pmf.sum())),
                         entropy=h, distortion=distortion)


def mixture_expected(code: LossyCode) -> Tuple[float, float]:
    """设计时精确值：1 比特头 + Σ_q w_q·E[L_Huffman | q]，以及 Σ_q w_q·E[d | q]"""
    _require(code, MIXTURE)
    length = HEADER_BITS + sum(w * b.huffman.expected_length for w, b in zip(code.weights, code.branches))
    distortion = sum(w * b.distortion for w, b in zip(code.weights, code.branches))
    return float(length), float(distortion)


def design_mixture(src: DiscreteDistribution, d, D: float, seed: int, candidates: int = 2000,
                   slack: float = CANDIDATE_SLACK) -> LossyCode:
    """
    两点混合码

    采样 candidates 个折叠 z，对每个 z 精确枚举 (H(g(X,z)), E[d(X,g(X,z))])，
    在熵不超过 I+log₂(I+1)+4+slack 的约束下最小化失真，得到 ≤ 2 个支撑点。
    若 Huffman 取整使总长度越过 R(D)+log₂(R(D)+1)+6，收紧熵目标重解。

    Args:
        src: 信源
        d: 失真矩阵
        D: 目标失真
        seed: 主种子；第 c 个候选使用 substream c
        candidates: 候选数（>= 2）
        slack: 熵目标松弛 ε

    Returns:
        LossyCode (variant = mixture)

    Raises:
        DesignError: 候选不足以支配目标
    """
    if candidates < 2:
        raise ValidationError("candidates must be at least 2")
    rd, dist, prior = _design_kernel(src, d, D)
    info = rd.rate
    points = np.empty((candidates, 2))
    for c in range(candidates):
        _, _, h, distortion, _ = _candidate(src, dist, rd.kernel, prior, seed, c)
        points[c] = (h, distortion)
    usable = np.flatnonzero(np.isfinite(points[:, 1]))
    if usable.size == 0:
        raise DesignError(f"all {candidates} candidates have infinite distortion")
    entropy_target = info + math.log2(info + 1.0) + 4.0 + slack
    distortion_target = min(rd.distortion, float(D))
    bound = length_bound(info)

    for attempt in range(4):
        try:
            mix = caratheodory_mix(points[usable], [entropy_target, distortion_target], objective_axis=1)
        except InfeasibleError as e:
            raise DesignError(f"no mixture of {candidates} candidates meets (H <= {entropy_target:.4f}, "
                              f"E[d] <= {distortion_target:.6f}); try more candidates") from e
        order = np.argsort(mix.support)
        support = [int(usable[mix.support[i]]) for i in order]
        weights = [float(mix.weights[i]) for i in order]
        if len(support) == 1:
            support, weights = support * 2, [1.0, 0.0]
        branches = [_branch(src, dist, rd.kernel, prior, seed, s) for s in support]
        code = LossyCode(variant=MIXTURE, source=src, distortion=dist, target=float(D), rd=rd, prior=prior,
                         seed=int(seed), branches=branches, lam_mix=weights[1], slack=slack,
                         candidates=candidates)
        length, _ = mixture_expected(code)
        if length <= bound:
            break
        entropy_target -= length - bound
        logger.warning(f"mixture length {length:.4f} exceeds {bound:.4f}; tightening entropy target")
    else:
        raise DesignError("Huffman rounding keeps the mixture above the length bound")
    logger.info(f"mixture code: support {support}, lambda_mix={code.lam_mix:.4f}, "
                f"design E[L]={mixture_expected(code)[0]:.4f}, E[d]={mixture_expected(code)[1]:.6f}")
    return code


def mixture_encode(code: LossyCode, x: int, coin: np.random.Generator) -> BitString:
    """Q ~ Bern(λ_mix) 写成 1 比特头，之后是分支 Q 上 g(x, z_Q) 的 Huffman 码字"""
    _require(code, MIXTURE)
    q = 1 if coin.random() < code.lam_mix else 0
    branch = code.branches[q]
    return BitString(str(q)) + branch.huffman.encode(branch.reconstruct(int(x)))


def mixture_decode(code: LossyCode, bits: Union[BitString, str]) -> int:
    _require(code, MIXTURE)
    reader = BitReader(bits)
    q = reader.read_bit()
    y = code.branches[q].huffman.read(reader)
    if not reader.at_end():
        raise FramingError(f"{reader.remaining} trailing bits after the description", position=reader.position)
    return y


def evaluate_mixture(code: LossyCode, trials: int, seed: int) -> LossyReport:
    """蒙特卡洛测量 (E[L], E[d])，并与设计值及界比较"""
    _require(code, MIXTURE)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC01]))
    px = code.source.probs
    xs = rng.choice(len(px), size=trials, p=px)
    lengths, dists = np.empty(trials), np.empty(trials)
    for i, x in enumerate(xs):
        bits = mixture_encode(code, int(x), rng)
        y = mixture_decode(code, bits)
        lengths[i] = len(bits)
        dists[i] = code.distortion[x, y]
    design_length, design_distortion = mixture_expected(code)
    se_l = float(lengths.std(ddof=1) / math.sqrt(trials))
    se_d = float(dists.std(ddof=1) / math.sqrt(trials))
    bound = length_bound(code.rate)
    passed = design_length <= bound and design_distortion <= code.target + DISTORTION_TOL
    return LossyReport(variant=MIXTURE, expected_length=float(lengths.mean()),
                       expected_distortion=float(dists.mean()), rate=code.rate, length_bound=bound,
                       distortion_bound=code.target, length_se=se_l, distortion_se=se_d,
                       slack=code.slack, passed=passed)


def design_report(code: LossyCode) -> LossyReport:
    """设计时精确的报告（mixture 为枚举值，soft 为单码本枚举值）"""
    length, distortion = mixture_expected(code) if code.variant == MIXTURE else soft_expected(code)
    bound = length_bound(code.rate)
    return LossyReport(variant=code.variant, expected_length=length, expected_distortion=distortion,
                       rate=code.rate, length_bound=bound, distortion_bound=code.target, slack=code.slack,
                       passed=length <= bound and distortion <= code.target + DISTORTION_TOL)


def block_source(src: DiscreteDistribution, d, n: int) -> Tuple[DiscreteDistribution, np.ndarray]:
    """
    i.i.d. n 维块信源及逐符号平均失真 (1/n)Σ d(x_i, y_i)

    符号按 itertools.product 的字典序编号
    """
    dist = np.array(d, dtype=float)
    if n < 1:
        raise ValidationError("block length must be >= 1")
    m, k = dist.shape
    if (m * k) ** n > MAX_BLOCK_ENTRIES:
        raise SizeError(f"block distortion matrix would have {(m * k) ** n} entries")
    probs = np.array([1.0])
    total = np.zeros((1, 1))
    for _ in range(n):
        probs = np.multiply.outer(probs, src.probs).ravel()
        total = (total[:, None, :, None] + dist[None, :, None, :]).reshape(total.shape[0] * m, total.shape[1] * k)
    return DiscreteDistribution(probs), total / n


def redundancy_trend(src: DiscreteDistribution, d, D: float, seed: int, blocks: Sequence[int] = (1, 2, 4, 8),
                     candidates: int = 200) -> List[dict]:
    """
    对 Xⁿ 应用 mixture 码，给出逐符号开销与参考曲线 (1/n)(log₂(nR(D)+1)+6)

    Returns:
        每个 n 一行：n, rate_per_symbol, length_per_symbol, overhead, reference
    """
    rows = []
    for n in blocks:
        block_src, block_d = block_source(src, d, n)
        code = design_mixture(block_src, block_d, D, seed, candidates=candidates)
        length, distortion = mixture_expected(code)
        rate = code.rate / n
        rows.append({
            "n": int(n),
            "rate_per_symbol": rate,
            "length_per_symbol": length / n,
            "distortion": distortion,
            "overhead": length / n - rate,
            "reference": (math.log2(n * rate + 1.0) + LENGTH_SLACK_BITS) / n,
        })
        logger.info(f"block n={n}: {length / n:.4f} bits/symbol at R(D)={rate:.4f}")
    return rows


def code_to_record(code: LossyCode) -> dict:
    """只保存配置、种子、候选 substream 与权重，不保存码本实现"""
    record = {
        "variant": code.variant,
        "source": [float(p) for p in code.source.probs],
        "distortion": [[float(v) if math.isfinite(v) else "inf" for v in row] for row in code.distortion],
        "D": code.target,
        "seed": code.seed,
    }
    if code.variant == MIXTURE:
        record.update({
            "substreams": [b.substream for b in code.branches],
            "weights": list(code.weights),
            "slack": code.slack,
            "candidates": code.candidates,
        })
    return record


def code_from_record(record: dict) -> LossyCode:
    src = DiscreteDistribution(record["source"])
    dist = np.array([[math.inf if v == "inf" else v for v in row] for row in record["distortion"]], dtype=float)
    D, seed = float(record["D"]), int(record["seed"])
    if record["variant"] == SOFT:
        return design_soft(src, dist, D, seed)
    if record["variant"] != MIXTURE:
        raise ValidationError(f"unknown lossy code variant {record['variant']!r}")
    rd, dist, prior = _design_kernel(src, dist, D)
    branches = [_branch(src, dist, rd.kernel, prior, seed, int(s)) for s in record["substreams"]]
    return LossyCode(variant=MIXTURE, source=src, distortion=dist, target=D, rd=rd, prior=prior, seed=seed,
                     branches=branches, lam_mix=float(record["weights"][1]),
                     slack=float(record.get("slack", CANDIDATE_SLACK)),
                     candidates=int(record.get("candidates", 0)))
