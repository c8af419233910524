"""
超额函数信息 Ψ(X→Y)
精确下界（分段求和）、基于 PFR 的 Monte Carlo 上界估计、下界紧性的构造族，以及最大熵界 H(Θ) ≤ E[log Θ] + log(E[log Θ]+1) + 1
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Tuple

import numpy as np

from errors import SizeError, ValidationError
from pfr import build_codebook, collapse_exponentials
from probspace import DiscreteDistribution, JointDistribution, entropy_bits, mutual_information

logger = logging.getLogger(__name__)

MAX_EXAMPLE_K = 20
# 构造族的联合分布是 2^k × 2^k，超过此 k 不再物化
MAX_MATERIALIZED_K = 12
CLOSED_FORM_TOL = 1e-9
SANDWICH_SIGMAS = 3.0


def _plogp(phi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(phi > 0, -phi * np.log2(np.where(phi > 0, phi, 1.0)), 0.0)


def _segment_integral(values: np.ndarray, weights: np.ndarray) -> float:
    """
    ∫₀¹ −Φ(t) log₂ Φ(t) dt，其中 Φ(t) = Σ_{values ≥ t} weights

    Φ 为分段常数，断点为排序后的不同取值，逐段精确求和
    """
    uniq, inverse = np.unique(values, return_inverse=True)
    mass = np.bincount(inverse, weights=weights, minlength=uniq.shape[0])
    # t ∈ (uniq[j-1], uniq[j]] 时 Φ = 所有取值 ≥ uniq[j] 的质量
    phi = np.cumsum(mass[::-1])[::-1]
    lengths = np.diff(np.concatenate(([0.0], uniq)))
    return float(np.sum(lengths * _plogp(phi)))


def psi_lower_bound(joint: JointDistribution) -> float:
    """
    Ψ(X→Y) 的精确下界 −Σ_y ∫₀¹ Φ_y(t) log₂ Φ_y(t) dt − I(X;Y)

    Φ_y(t) = P_X{p_{Y|X}(y|X) ≥ t}；|Y| = 2 时取等。

    Args:
        joint: (X, Y) 二维联合分布

    Returns:
        下界（比特），可以为负
    """
    if joint.ndim != 2:
        raise ValidationError("psi_lower_bound needs a 2-axis joint (X, Y)")
    p = joint.probs
    px = p.sum(axis=1)
    live = px > 0
    cond = p[live] / px[live, None]
    total = sum(_segment_integral(cond[:, y], px[live]) for y in range(p.shape[1]))
    return total - mutual_information(joint)


def _trial_stats(values: np.ndarray) -> Tuple[float, float]:
    n = values.shape[0]
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(values.mean()), se


def _induced_tables(cond: np.ndarray, prior: DiscreteDistribution, seed: int, substream: int) -> np.ndarray:
    cb = build_codebook(seed, prior, substream=substream)
    z = collapse_exponentials(cb, prior)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(cond > 0, z[None, :] / cond, math.inf)
    return np.argmin(scores, axis=1)


def psi_upper_estimate(joint: JointDistribution, trials: int = 10_000, seed: int = 0) -> Tuple[float, float]:
    """
    Ψ 的 PFR 上界估计：对每个码本 z 精确计算 H(g(X, z))，平均得 H(Y|Z)，再减去 I(X;Y)

    Args:
        joint: (X, Y) 联合分布
        trials: 码本个数
        seed: 主种子，第 t 个码本使用 substream t

    Returns:
        (估计值, 标准误)
    """
    if trials < 1:
        raise ValidationError("trials must be positive")
    p = joint.probs
    px = p.sum(axis=1)
    live = np.flatnonzero(px > 0)
    cond = p[live] / px[live, None]
    prior = DiscreteDistribution(p.sum(axis=0))
    h = np.empty(trials)
    for t in range(trials):
        table = _induced_tables(cond, prior, seed, t)
        h[t] = entropy_bits(np.bincount(table, weights=px[live], minlength=p.shape[1]))
    mean, se = _trial_stats(h)
    i_xy = mutual_information(joint)
    logger.debug(f"psi upper estimate: H(Y|Z)={mean:.4f} ± {se:.4f}, I={i_xy:.4f}")
    return mean - i_xy, se


def psi_upper_estimate_product(j1: JointDistribution, j2: JointDistribution, trials: int = 10_000,
                               seed: int = 0) -> Dict[str, float]:
    """
    独立对 (X1,Y1)、(X2,Y2) 上的乘积 PFR：Z = (Z1, Z2)，substream 2t 与 2t+1

    对每个 t 精确枚举 (x1, x2) 得 H(g1(X1), g2(X2))，并与各自的估计比较
    """
    if trials < 1:
        raise ValidationError("trials must be positive")
    parts = []
    for j in (j1, j2):
        p = j.probs
        px = p.sum(axis=1)
        live = np.flatnonzero(px > 0)
        parts.append((p[live] / px[live, None], DiscreteDistribution(p.sum(axis=0)), px[live], p.shape[1]))
    joint_h, single_h = np.empty(trials), np.empty((trials, 2))
    for t in range(trials):
        tables = [_induced_tables(cond, prior, seed, 2 * t + i) for i, (cond, prior, _, _) in enumerate(parts)]
        (_, _, w1, n1), (_, _, w2, n2) = parts
        pair = np.zeros((n1, n2))
        np.add.at(pair, (tables[0][:, None], tables[1][None, :]), np.outer(w1, w2))
        joint_h[t] = entropy_bits(pair)
        single_h[t] = [entropy_bits(pair.sum(axis=1)), entropy_bits(pair.sum(axis=0))]
    i1, i2 = mutual_information(j1), mutual_information(j2)
    product, product_se = _trial_stats(joint_h)
    first, first_se = _trial_stats(single_h[:, 0])
    second, second_se = _trial_stats(single_h[:, 1])
    combined_se = math.sqrt(product_se ** 2 + first_se ** 2 + second_se ** 2)
    product_est, sum_est = product - i1 - i2, (first - i1) + (second - i2)
    return {
        "product_estimate": product_est,
        "product_se": product_se,
        "sum_of_estimates": sum_est,
        "combined_se": combined_se,
        "subadditive": product_est <= sum_est + SANDWICH_SIGMAS * combined_se,
    }


@dataclass(frozen=True)
class EfiReport:
    lower_bound: float
    upper_estimate: float
    upper_se: float
    i_xy: float
    sfrl_bound: float
    equality_case: bool
    trials: int

    @property
    def sandwich_ok(self) -> bool:
        slack = SANDWICH_SIGMAS * self.upper_se + 1e-12
        return self.lower_bound <= self.upper_estimate + slack and self.upper_estimate <= self.sfrl_bound + slack

    @property
    def equality_ok(self) -> bool:
        if not self.equality_case:
            return True
        return abs(self.upper_estimate - self.lower_bound) <= SANDWICH_SIGMAS * self.upper_se + 1e-9

    def as_dict(self) -> dict:
        return {
            "lower_bound": self.lower_bound,
            "upper_estimate": self.upper_estimate,
            "upper_se": self.upper_se,
            "i_xy": self.i_xy,
            "sfrl_bound": self.sfrl_bound,
            "equality_case": self.equality_case,
            "trials": self.trials,
            "pass": self.sandwich_ok and self.equality_ok,
        }


def efi_report(joint: JointDistribution, trials: int = 10_000, seed: int = 0) -> EfiReport:
    i_xy = mutual_information(joint)
    upper, se = psi_upper_estimate(joint, trials, seed)
    report = EfiReport(
        lower_bound=psi_lower_bound(joint),
        upper_estimate=upper,
        upper_se=se,
        i_xy=i_xy,
        sfrl_bound=math.log2(i_xy + 1.0) + 4.0,
        equality_case=joint.shape[1] == 2,
        trials=trials,
    )
    logger.info(f"EFI: lb={report.lower_bound:.4f}, ub={upper:.4f} ± {se:.4f}, I={i_xy:.4f}")
    return report


@dataclass(frozen=True, eq=False)
class LbExampleFamily:
    """
    X 均匀于 [0 : 2^k − 1]，Y = (X + V) mod 2^k，
    p_V(v) = γ⁻¹·2^(k − ⌈log₂(v+1)⌉)，γ = 2^(k−1)(k+2)
    """
    k: int
    gamma: Fraction
    p_v: DiscreteDistribution
    h_v: float
    h_v_closed: float
    i_xy: float
    i_xy_closed: float
    psi_lb: float

    @property
    def joint(self) -> JointDistribution:
        if self.k > MAX_MATERIALIZED_K:
            raise SizeError(f"joint of size 4^{self.k} is not materialized; use k <= {MAX_MATERIALIZED_K}")
        n = 1 << self.k
        idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
        return JointDistribution(self.p_v.probs[idx] / n)

    @property
    def target(self) -> float:
        """log₂(I+1) − 1"""
        return math.log2(self.i_xy + 1.0) - 1.0

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "gamma": float(self.gamma),
            "H(V)": self.h_v,
            "H(V)_closed": self.h_v_closed,
            "I(X;Y)": self.i_xy,
            "I(X;Y)_closed": self.i_xy_closed,
            "psi_lb": self.psi_lb,
            "log2(I+1)-1": self.target,
            "pass": self.psi_lb >= self.target - 1e-12 and abs(self.h_v - self.h_v_closed) <= CLOSED_FORM_TOL,
        }


def _example_pmf(k: int) -> Tuple[Fraction, List[Fraction]]:
    gamma = Fraction(2 ** k * (k + 2), 2)
    # ⌈log₂(v+1)⌉ 恰为 v 的二进制位数
    pmf = [Fraction(2 ** (k - v.bit_length())) / gamma for v in range(1 << k)]
    if sum(pmf) != 1:
        raise ValidationError(f"p_V does not normalize for k={k}")
    return gamma, pmf


def lb_example_build(k: int) -> LbExampleFamily:
    """
    构造紧性族并交叉核对闭式

    H(V) = k/2 + log₂(k+2) − 3/2 + 1/(k+2)，I(X;Y) = k − H(V)；
    Ψ 下界利用循环结构：每个 y 的 {p(y|x)} 都是 p_V 的一个排列。

    Raises:
        ValidationError: k 不在 [0, 20]
    """
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= MAX_EXAMPLE_K:
        raise ValidationError(f"k must be an integer in [0, {MAX_EXAMPLE_K}], got {k!r}")
    k = int(k)
    gamma, pmf = _example_pmf(k)
    p_v = DiscreteDistribution(np.array([float(p) for p in pmf]))
    h_v = entropy_bits(p_v.probs)
    if k == 0:
        # |V| = 1
        h_closed = 0.0
    else:
        h_closed = k / 2 + math.log2(k + 2) - 1.5 + 1.0 / (k + 2)
    if abs(h_v - h_closed) > CLOSED_FORM_TOL:
        raise ValidationError(f"H(V) closed form disagrees at k={k}: {h_v} vs {h_closed}")
    n = 1 << k
    i_xy = max(0.0, k - h_v)
    per_y = _segment_integral(p_v.probs, np.full(n, 1.0 / n))
    family = LbExampleFamily(k=k, gamma=gamma, p_v=p_v, h_v=h_v, h_v_closed=h_closed, i_xy=i_xy,
                             i_xy_closed=k - h_closed, psi_lb=n * per_y - i_xy)
    logger.debug(f"lb example k={k}: H(V)={h_v:.6f}, I={i_xy:.6f}, psi_lb={family.psi_lb:.6f}")
    return family


def lb_example_sweep(k_range: Iterable[int] = range(1, 13)) -> List[dict]:
    return [lb_example_build(k).as_dict() for k in k_range]


def entropy_bound(mean_log: float) -> float:
    """
    最大熵界：Θ ∈ {1, 2, ...} 时 H(Θ) ≤ E[log₂Θ] + log₂(E[log₂Θ] + 1) + 1

    Raises:
        ValidationError: mean_log 为负或非有限
    """
    if not math.isfinite(mean_log) or mean_log < 0:
        raise ValidationError(f"mean_log must be a finite nonnegative real, got {mean_log}")
    return mean_log + math.log2(mean_log + 1.0) + 1.0


def entropy_bound_sweep(samples: int = 1000, support: int = 64, seed: int = 0) -> Dict[str, float]:
    """在 {1..support} 上随机抽取 pmf（Dirichlet，浓度跨越多个量级），统计界被违反的次数"""
    rng = np.random.default_rng(np.random.SeedSequence([seed, support]))
    logs = np.log2(np.arange(1, support + 1))
    violations, worst = 0, -math.inf
    for i in range(samples):
        alpha = 10.0 ** rng.uniform(-2, 1)
        pmf = rng.dirichlet(np.full(support, alpha))
        gap = entropy_bits(pmf) - entropy_bound(float(pmf @ logs))
        worst = max(worst, gap)
        violations += gap > 1e-12
    return {"samples": samples, "support": support, "violations": violations, "worst_gap": worst,
            "pass": violations == 0}
