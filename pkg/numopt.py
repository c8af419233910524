"""
数值优化工具
Blahut–Arimoto（信道容量 / 率失真）以及 Carathéodory 凸混合可行性求解
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from errors import ConvergenceError, InfeasibleError, ShapeError, ValidationError
from probspace import DiscreteDistribution, JointDistribution, Kernel, mutual_information

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000
# 斜率二分的上限；超过即视为无损端点
MAX_SLOPE = 2.0 ** 40
# 权重低于此值视为 0
WEIGHT_EPS = 1e-13
# HiGHS 的最小原始可行性容差
LP_FEASIBILITY_TOL = 1e-10
# 凸组合后验检查在 tol 之外允许的求解器误差
MIX_SLACK = 10 * LP_FEASIBILITY_TOL
# 失真下限比较时容许的数值误差
NORM_SLACK = 1e-12


@dataclass
class RdSolution:
    """率失真最优核及其指标"""
    kernel: Kernel
    rate: float
    distortion: float
    iterations: int
    gap: float
    slope: float = float("inf")
    output: Optional[DiscreteDistribution] = None


@dataclass
class MixtureSolution:
    """凸组合：support 上的权重及混合后的坐标"""
    weights: np.ndarray
    support: List[int]
    achieved: np.ndarray
    objective_axis: Optional[int] = None

    def as_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "support": [int(i) for i in self.support],
            "achieved": [float(a) for a in self.achieved],
        }


def blahut_arimoto_capacity(k: Kernel, tol: float = DEFAULT_TOL,
                            max_iter: int = DEFAULT_MAX_ITER) -> Tuple[float, DiscreteDistribution]:
    """
    信道容量（比特）及达到容量的输入分布

    收敛判据为标准的对偶间隙 log max_x c_x - log Σ_x r_x c_x，
    其中 c_x = exp D(W_x || q)；初始化为均匀分布。

    Args:
        k: 信道 P_{Y|X}
        tol: 间隙上限（比特）
        max_iter: 最大迭代次数

    Returns:
        (capacity, input_dist)，capacity 为可证的下端
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    W = k.rows
    r = np.full(k.input_size, 1.0 / k.input_size)
    gap = float("inf")
    lower = 0.0
    for iteration in range(1, max_iter + 1):
        q = r @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            log_ratio = np.where(W > 0, np.log(W) - np.log(np.where(q > 0, q, 1.0)), 0.0)
        c = np.exp(np.sum(W * log_ratio, axis=1))
        weighted = float(r @ c)
        lower = math.log(weighted)
        gap = (math.log(float(c.max())) - lower) / LN2
        if gap <= tol:
            logger.debug(f"capacity converged after {iteration} iterations, gap={gap:.3e}")
            break
        r = r * c / weighted
    else:
        raise ConvergenceError(f"capacity did not converge in {max_iter} iterations (gap={gap:.3e})",
                               last_iterate=r, gap=gap)
    return max(0.0, lower / LN2), DiscreteDistribution(r)


def _expected_distortion(px: np.ndarray, kernel: np.ndarray, dist: np.ndarray) -> float:
    with np.errstate(invalid="ignore"):
        terms = np.where(kernel > 0, kernel * dist, 0.0)
    return float(px @ terms.sum(axis=1))


def _ba_fixed_slope(px: np.ndarray, A: np.ndarray, tol_nats: float,
                    max_iter: int) -> Tuple[np.ndarray, np.ndarray, int, float]:
    # A[x, y] = exp(-s * (d(x,y) - d_min(x)))，无限失真处为 0
    n = A.shape[1]
    q = np.full(n, 1.0 / n)
    pos = px > 0
    p, Ap = px[pos], A[pos]
    gap = float("inf")
    for iteration in range(1, max_iter + 1):
        den = Ap @ q
        c = (p / den) @ Ap
        q = q * c
        with np.errstate(divide="ignore"):
            log_c = np.log(c)
        upper = -float(np.sum(q[q > 0] * log_c[q > 0]))
        lower = -float(log_c.max())
        gap = upper - lower
        if gap <= tol_nats:
            break
    else:
        raise ConvergenceError(f"rate-distortion iteration did not converge in {max_iter} steps",
                               last_iterate=q, gap=gap / LN2)
    q = q / q.sum()
    den = A @ q
    kernel = np.empty_like(A)
    ok = den > 0
    kernel[ok] = q * A[ok] / den[ok, None]
    # 概率为 0 且无可达输出的输入行：退化为各自的最小失真点
    for x in np.flatnonzero(~ok):
        kernel[x] = 0.0
        kernel[x, int(np.argmax(A[x]))] = 1.0
    return kernel, q, iteration, max(0.0, gap) / LN2


def _rd_solution(px, kernel, q, dist, iterations, gap, slope) -> RdSolution:
    kern = Kernel(kernel)
    joint = JointDistribution(px[:, None] * kern.rows)
    return RdSolution(
        kernel=kern,
        rate=mutual_information(joint),
        distortion=_expected_distortion(px, kern.rows, dist),
        iterations=iterations,
        gap=gap,
        slope=slope,
        output=DiscreteDistribution(joint.probs.sum(axis=0)),
    )


def distortion_range(src: DiscreteDistribution, d) -> Tuple[float, float]:
    """(D_min, D_max)：最小可达失真，以及率为 0 时的最小失真"""
    px, dist = src.probs, _checked_distortion(src, d)
    pos = px > 0
    dmin = dist.min(axis=1)
    if np.any(~np.isfinite(dmin[pos])):
        raise InfeasibleError("some source symbol has infinite distortion to every reproduction")
    with np.errstate(invalid="ignore"):
        col = np.where(pos[:, None], dist, 0.0)
    col_avg = px[pos] @ col[pos]
    return float(px[pos] @ dmin[pos]), float(col_avg.min())


def _checked_distortion(src: DiscreteDistribution, d) -> np.ndarray:
    dist = np.array(d, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != src.alphabet_size:
        raise ShapeError(f"distortion matrix shape {dist.shape} does not match source size {src.alphabet_size}")
    if np.any(np.isnan(dist)) or np.any(dist < 0):
        raise ValidationError("distortion entries must lie in [0, +inf]")
    return dist


def blahut_arimoto_rate_distortion(src: DiscreteDistribution, d, D: float, tol: float = 1e-6,
                                   max_iter: int = DEFAULT_MAX_ITER) -> RdSolution:
    """
    在给定失真 D 处求 R(D) 及最优核 P_{Y|X}

    在斜率 s 上二分，使最优核的失真落在 [D - tol, D]；
    D 等于最小可达失真时取 s→∞ 的极限（只允许每行最小失真的重建符号），
    D ≥ D_max 时率为 0，核为常数重建。

    Args:
        src: 信源分布 P_X
        d: 失真矩阵 |X|×|Y|，元素可为 +inf
        D: 目标失真
        tol: 失真与率的精度
        max_iter: 每次 Blahut–Arimoto 的最大迭代次数

    Returns:
        RdSolution，保证 distortion ≤ D
    """
    dist = _checked_distortion(src, d)
    px = src.probs
    d_min, d_max = distortion_range(src, dist)
    if D < d_min - NORM_SLACK:
        raise InfeasibleError(f"target distortion {D} is below the minimum achievable {d_min}")

    if D >= d_max:
        with np.errstate(invalid="ignore"):
            col_avg = px @ np.where(px[:, None] > 0, dist, 0.0)
        y_star = int(np.argmin(col_avg))
        kernel = np.zeros_like(dist)
        kernel[:, y_star] = 1.0
        logger.info(f"D={D} >= D_max={d_max}: constant reproduction {y_star}, rate 0")
        return _rd_solution(px, kernel, None, dist, 0, 0.0, 0.0)

    row_min = dist.min(axis=1)
    shifted = dist - row_min[:, None]
    ba_tol = tol * LN2 * 0.1

    def lossless_end() -> RdSolution:
        A = (shifted == 0).astype(float)
        kernel, q, its, gap = _ba_fixed_slope(px, A, ba_tol, max_iter)
        return _rd_solution(px, kernel, q, dist, its, gap, float("inf"))

    if D <= d_min + tol:
        solution = lossless_end()
        logger.info(f"R({D}) at the lossless end: rate={solution.rate:.6f}")
        return solution

    def solve(slope: float) -> RdSolution:
        with np.errstate(invalid="ignore", over="ignore"):
            A = np.exp(-slope * shifted)
        kernel, q, its, gap = _ba_fixed_slope(px, A, ba_tol, max_iter)
        return _rd_solution(px, kernel, q, dist, its, gap, slope)

    lo, hi = 0.0, 1.0
    best = solve(hi)
    while best.distortion > D:
        lo, hi = hi, hi * 2.0
        if hi > MAX_SLOPE:
            best = lossless_end()
            break
        best = solve(hi)
    else:
        for _ in range(200):
            if best.distortion >= D - tol:
                break
            mid = 0.5 * (lo + hi)
            candidate = solve(mid)
            if candidate.distortion > D:
                lo = mid
            else:
                hi, best = mid, candidate
            if hi - lo <= 1e-12 * hi:
                break
    logger.info(f"R({D}) = {best.rate:.6f} bits at slope {best.slope:.4g} "
                f"(distortion {best.distortion:.6g}, gap {best.gap:.2e})")
    return best


def _null_direction(M: np.ndarray) -> Optional[np.ndarray]:
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > 1e-12 * max(1.0, s.max() if s.size else 0.0)))
    if rank >= M.shape[1]:
        return None
    return vt[-1]


def _reduce_support(P: np.ndarray, w: np.ndarray, cons: Sequence[int],
                    cost: Optional[np.ndarray]) -> np.ndarray:
    """Carathéodory 约简：沿零空间方向移动权重直到支撑向量线性无关"""
    w = w.copy()
    while True:
        w[w <= WEIGHT_EPS] = 0.0
        S = np.flatnonzero(w)
        M = np.vstack([P[np.ix_(S, cons)].T, np.ones(len(S))]) if len(cons) else np.ones((1, len(S)))
        alpha = _null_direction(M)
        if alpha is None:
            return w / w.sum()
        if cost is not None and float(cost[S] @ alpha) < 0:
            alpha = -alpha
        positive = alpha > 1e-15
        if not np.any(positive):
            alpha = -alpha
            positive = alpha > 1e-15
        ratios = w[S][positive] / alpha[positive]
        theta = float(ratios.min())
        w[S] = w[S] - theta * alpha
        w[S[positive][int(np.argmin(ratios))]] = 0.0
        w[w < 0] = 0.0


def _violated_coordinate(P: np.ndarray, target: np.ndarray, cons: Sequence[int], tol: float) -> int:
    for j in cons:
        if P[:, j].min() > target[j] + tol:
            return int(j)
    n, m = P.shape[0], len(cons)
    # 最小化总违反量，报告违反最大的坐标
    c = np.concatenate([np.zeros(n), np.ones(m)])
    A_ub = np.hstack([P[:, cons].T, -np.eye(m)])
    A_eq = np.concatenate([np.ones(n), np.zeros(m)])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=target[cons] + tol, A_eq=A_eq, b_eq=[1.0],
                  bounds=(0, None), method="highs")
    if not res.success:
        return int(cons[0])
    return int(cons[int(np.argmax(res.x[n:]))])


def caratheodory_mix(points, target, tol: float = 1e-10,
                     objective_axis: Optional[int] = None) -> MixtureSolution:
    """
    找一个凸组合，使每个坐标都不超过 target + tol（另加求解器误差 MIX_SLACK）

    以权重为变量的线性可行性问题（HiGHS 对偶单纯形取基本解），
    再做 Carathéodory 约简，支撑大小 ≤ m+1；给定 objective_axis 时
    改为在其余坐标约束下最小化该坐标，支撑大小 ≤ m。
    HiGHS 的可行性判定有 LP_FEASIBILITY_TOL 量级的误差，
    因此保证的是 achieved ≤ target + tol + MIX_SLACK。

    Args:
        points: n 个 m 维候选点
        target: m 维目标
        tol: 每个坐标的容差
        objective_axis: 可选，被最小化的坐标

    Returns:
        MixtureSolution

    Raises:
        InfeasibleError: 目标不被任何凸组合支配，coordinate 为违反的坐标
    """
    P = np.array(points, dtype=float)
    t = np.array(target, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ShapeError(f"points must be a non-empty n×m array, got shape {P.shape}")
    if t.shape != (P.shape[1],):
        raise ShapeError(f"target shape {t.shape} does not match point dimension {P.shape[1]}")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(t))):
        raise ValidationError("points and target must be finite")
    n, m = P.shape
    if objective_axis is not None and not 0 <= objective_axis < m:
        raise ShapeError(f"objective_axis {objective_axis} out of range")
    cons = [j for j in range(m) if j != objective_axis]
    cost = P[:, objective_axis] if objective_axis is not None else np.zeros(n)

    res = linprog(
        cost,
        A_ub=P[:, cons].T if cons else None,
        b_ub=t[cons] + tol if cons else None,
        A_eq=np.ones((1, n)),
        b_eq=[1.0],
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": LP_FEASIBILITY_TOL},
    )
    if res.status == 2:
        j = _violated_coordinate(P, t, cons, tol)
        raise InfeasibleError(f"target not dominated by any convex combination (coordinate {j})", coordinate=j)
    if not res.success:
        raise ConvergenceError(f"mixture LP failed: {res.message}")

    w = _reduce_support(P, np.clip(res.x, 0.0, None), cons,
                        cost if objective_axis is not None else None)
    support = [int(i) for i in np.flatnonzero(w)]
    weights = w[support]
    achieved = weights @ P[support]
    slack = tol + MIX_SLACK
    over = np.flatnonzero(achieved > t + slack)
    if over.size:
        j = int(over[0])
        raise InfeasibleError(f"mixture misses coordinate {j}: {achieved[j]:.6g} > {t[j]:.6g}", coordinate=j)
    logger.debug(f"mixture over {n} points: support {len(support)}, achieved {achieved}")
    return MixtureSolution(weights=weights, support=support, achieved=achieved,
                           objective_axis=objective_axis)
