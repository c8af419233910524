"""
Poisson 函数表示
共享随机性码本 Z = {(ỹ_i, t_i)}、选择规则 k(x, z)、指数折叠形式，以及 z 固定时诱导的函数 x ↦ g(x, z)

码本由 (seed, substream) 经计数器型生成器 (Philox) 展开，编码端与解码端各自再生，
永远不传输或持久化已实现的点。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from errors import BudgetError, PreconditionError, ShapeError, ValidationError
from probspace import DiscreteDistribution, Kernel

logger = logging.getLogger(__name__)

# 每次扩展生成的点数；码本前缀与 initial_points 无关
BLOCK = 256
DEFAULT_CAP = 1_000_000
SEED_LIMIT = 2 ** 64
DENSITY_TOL = 1e-6
# 数值积分时避开 quantile(1)
QUANTILE_EDGE = 1e-12


@dataclass(frozen=True, eq=False)
class ContinuousPrior:
    """
    一维连续先验

    quantile 和 density 需接受 numpy 数组；ratio_bound 为所有可用条件密度
    相对该先验的密度比上界 B，用于精确停止 (t_i / B > 当前最优)
    """
    quantile: Callable[[np.ndarray], np.ndarray]
    density: Callable[[np.ndarray], np.ndarray]
    ratio_bound: float
    name: str = "continuous"

    def __post_init__(self):
        if not math.isfinite(self.ratio_bound) or self.ratio_bound < 1.0:
            raise ValidationError(f"ratio bound must be a finite real >= 1, got {self.ratio_bound}")
        lo = float(self.quantile(np.array([0.0]))[0])
        hi = float(self.quantile(np.array([1.0 - QUANTILE_EDGE]))[0])
        mass, _ = integrate.quad(lambda y: float(self.density(np.array([y]))[0]), lo, hi, limit=200)
        if abs(mass - 1.0) > DENSITY_TOL:
            raise ValidationError(f"{self.name}: density integrates to {mass:.9f} over the quantile range")

    @classmethod
    def uniform(cls, ratio_bound: float = 1.0) -> "ContinuousPrior":
        return cls(
            quantile=lambda u: np.asarray(u, dtype=float),
            density=lambda y: np.where((np.asarray(y) >= 0) & (np.asarray(y) <= 1), 1.0, 0.0),
            ratio_bound=ratio_bound,
            name="unif[0,1]",
        )


Prior = Union[DiscreteDistribution, ContinuousPrior]
Density = Callable[[np.ndarray], np.ndarray]


def _quantile_table(prior: DiscreteDistribution) -> Tuple[np.ndarray, int]:
    cdf = np.cumsum(prior.probs)
    return cdf, int(prior.support[-1])


def map_marks(prior: Prior, marks: np.ndarray) -> np.ndarray:
    """把 [0,1) 上的 mark 经先验的分位数函数映射为符号"""
    if isinstance(prior, ContinuousPrior):
        return np.asarray(prior.quantile(marks), dtype=float)
    cdf, last = _quantile_table(prior)
    # cdf 尾部的舍入误差落到最后一个正概率符号上
    return np.minimum(np.searchsorted(cdf, marks, side="right"), last)


@dataclass(eq=False)
class PfrCodebook:
    """
    可惰性扩展的标记 Poisson 过程实现

    times 严格递增，marks 为 [0,1) 上的均匀变量；同一 (seed, substream) 的
    任意前缀在任意机器上逐位一致
    """
    seed: int
    prior: Prior
    substream: int = 0
    cap: int = DEFAULT_CAP
    times: np.ndarray = field(init=False, repr=False)
    marks: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= int(self.seed) < SEED_LIMIT:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if int(self.substream) < 0:
            raise ValidationError(f"substream must be nonnegative, got {self.substream}")
        if self.cap < 1:
            raise ValidationError("cap must be at least 1")
        self._rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(self.seed), int(self.substream)])))
        self.times = np.empty(0)
        self.marks = np.empty(0)

    @property
    def realized(self) -> int:
        return int(self.times.shape[0])

    @property
    def realized_points(self) -> np.ndarray:
        """(mark, arrival_time) 对，形状 (n, 2)"""
        return np.column_stack([self.marks, self.times])

    def _next_block(self, last: float) -> Tuple[np.ndarray, np.ndarray]:
        u = self._rng.random((BLOCK, 2))
        inc = -np.log1p(-u[:, 0])
        times = last + np.cumsum(inc)
        steps = np.diff(np.concatenate([[last], times]))
        if np.all(steps > 0):
            return times, u[:, 1]
        # 零增量或浮点吸收：按顺序重抽该增量
        times = np.empty(BLOCK)
        for i in range(BLOCK):
            t = last + inc[i]
            while not t > last:
                t = last - math.log1p(-self._rng.random())
            times[i] = last = t
        return times, u[:, 1]

    def extend(self, n: int) -> None:
        """确保至少实现 n 个点（按 BLOCK 取整）"""
        if n <= self.realized:
            return
        times, marks = [self.times], [self.marks]
        last = float(self.times[-1]) if self.realized else 0.0
        have = self.realized
        while have < n:
            t, m = self._next_block(last)
            times.append(t)
            marks.append(m)
            last = float(t[-1])
            have += BLOCK
        self.times = np.concatenate(times)
        self.marks = np.concatenate(marks)

    def block(self, start: int) -> Tuple[np.ndarray, np.ndarray]:
        """从 start 开始的 (times, marks)；必要时倍增扩展，不超过 cap"""
        if start >= self.cap:
            raise BudgetError(f"codebook cap of {self.cap} points exhausted (seed={self.seed}, substream={self.substream})")
        self.extend(max(start + 1, min(2 * self.realized, self.cap)))
        stop = min(self.realized, self.cap)
        return self.times[start:stop], self.marks[start:stop]

    def symbols(self, prior: Optional[Prior] = None, count: Optional[int] = None) -> np.ndarray:
        """前 count 个 mark 在 prior（默认本码本的先验）下对应的符号"""
        count = self.realized if count is None else count
        self.extend(count)
        return map_marks(self.prior if prior is None else prior, self.marks[:count])

    def symbol_at(self, k: int, prior: Optional[Prior] = None):
        """第 k 个点（从 1 开始）的符号"""
        if k < 1:
            raise ValidationError(f"index must be >= 1, got {k}")
        if k > self.cap:
            raise BudgetError(f"index {k} beyond cap {self.cap}")
        self.extend(k)
        prior = self.prior if prior is None else prior
        value = map_marks(prior, self.marks[k - 1:k])[0]
        return float(value) if isinstance(prior, ContinuousPrior) else int(value)


def build_codebook(seed: int, prior: Prior, initial_points: int = BLOCK, substream: int = 0,
                   cap: int = DEFAULT_CAP) -> PfrCodebook:
    """
    构造码本：到达时间为 Exp(1) 增量的累加和，mark 为独立均匀变量

    Args:
        seed: 64 位主种子
        prior: 码本边缘分布 P_Y
        initial_points: 预先实现的点数（>= 1）
        substream: 子流编号（会话）
        cap: 最大索引

    Returns:
        PfrCodebook
    """
    if initial_points < 1:
        raise ValidationError(f"initial_points must be >= 1, got {initial_points}")
    cb = PfrCodebook(seed=int(seed), prior=prior, substream=int(substream), cap=int(cap))
    cb.extend(min(initial_points, cap))
    return cb


@dataclass(frozen=True)
class SelectionOutcome:
    """k 从 1 开始；score = t_k · dP_Y/dP_{Y|X}(ỹ_k)"""
    k: int
    y: Union[int, float]
    score: float
    points_examined: int

    @property
    def log_index(self) -> float:
        return math.log2(self.k)


@dataclass(frozen=True, eq=False)
class InducedFunction:
    """固定码本实现 z 时的函数 x ↦ g(x, z)"""
    table: np.ndarray

    def __post_init__(self):
        arr = np.array(self.table, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "table", arr)

    def __call__(self, x: int) -> int:
        return int(self.table[x])

    def __len__(self) -> int:
        return int(self.table.shape[0])

    @property
    def key(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.table)


def _discrete_ratios(conditional: DiscreteDistribution, prior: DiscreteDistribution) -> Tuple[np.ndarray, float]:
    if conditional.alphabet_size != prior.alphabet_size:
        raise ShapeError(f"conditional has {conditional.alphabet_size} symbols, prior has {prior.alphabet_size}")
    p, c = prior.probs, conditional.probs
    support = c > 0
    if np.any(support & (p == 0)):
        bad = int(np.flatnonzero(support & (p == 0))[0])
        raise PreconditionError(f"conditional puts mass on symbol {bad} which has prior mass 0")
    ratio = np.full(p.shape, np.inf)
    ratio[support] = p[support] / c[support]
    return ratio, float(ratio[support].min())


def _scan(cb: PfrCodebook, score_fn, r_min: float) -> Tuple[int, float, int]:
    if not r_min > 0:
        raise PreconditionError("r_min is zero: the scan has no stopping point")
    best, best_k, start = math.inf, 0, 0
    while True:
        times, marks = cb.block(start)
        scores = score_fn(times, marks)
        running = np.minimum.accumulate(scores)
        prev_best = np.minimum(best, np.concatenate([[math.inf], running[:-1]]))
        stop = np.flatnonzero(times * r_min > prev_best)
        end = int(stop[0]) if stop.size else times.shape[0]
        if end > 0:
            local = int(np.argmin(scores[:end]))
            if scores[local] < best:
                best, best_k = float(scores[local]), start + local + 1
        if stop.size:
            return best_k, best, start + end + 1
        start += times.shape[0]


def select(cb: PfrCodebook, conditional: Union[DiscreteDistribution, Density],
           prior: Optional[Prior] = None) -> SelectionOutcome:
    """
    k = argmin_i t_i · dP_Y/dP_{Y|X}(ỹ_i)，精确停止

    扫描在第一个满足 t_i · r_min > 当前最优 的 i 处停止，r_min 为比值在支撑上的最小值；
    条件概率为 0 的 mark 得分为 +inf。平局取最小索引。

    Args:
        cb: 码本
        conditional: 离散条件分布，或连续先验下的条件密度（接受数组）
        prior: mark 映射所用先验，默认 cb.prior

    Returns:
        SelectionOutcome

    Raises:
        BudgetError: cap 内未满足停止条件
        PreconditionError: 条件分布不绝对连续于先验
    """
    prior = cb.prior if prior is None else prior
    if isinstance(prior, ContinuousPrior):
        if isinstance(conditional, DiscreteDistribution):
            raise ShapeError("a continuous prior needs a conditional density")

        def score_fn(times, marks):
            ys = map_marks(prior, marks)
            with np.errstate(divide="ignore", invalid="ignore"):
                c = np.asarray(conditional(ys), dtype=float)
                ratio = np.where(c > 0, np.asarray(prior.density(ys), dtype=float) / c, np.inf)
            return times * ratio

        k, score, examined = _scan(cb, score_fn, 1.0 / prior.ratio_bound)
        return SelectionOutcome(k=k, y=cb.symbol_at(k, prior), score=score, points_examined=examined)

    if not isinstance(conditional, DiscreteDistribution):
        raise ShapeError("a discrete prior needs a DiscreteDistribution conditional")
    ratio, r_min = _discrete_ratios(conditional, prior)
    k, score, examined = _scan(cb, lambda times, marks: times * ratio[map_marks(prior, marks)], r_min)
    return SelectionOutcome(k=k, y=cb.symbol_at(k, prior), score=score, points_examined=examined)


def select_many(cb: PfrCodebook, kernel: Kernel,
                prior: Optional[DiscreteDistribution] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    对核的每一行在同一码本上做选择，算术与 select 完全相同

    Returns:
        (ks, ys, scores)，长度均为 kernel.input_size
    """
    prior = cb.prior if prior is None else prior
    if isinstance(prior, ContinuousPrior):
        raise ShapeError("select_many needs a discrete prior")
    m = kernel.input_size
    ratios = np.empty((m, prior.alphabet_size))
    r_min = np.empty(m)
    for x in range(m):
        ratios[x], r_min[x] = _discrete_ratios(DiscreteDistribution(kernel.rows[x]), prior)
    best = np.full(m, math.inf)
    best_k = np.zeros(m, dtype=np.int64)
    active = np.arange(m)
    start = 0
    while active.size:
        times, marks = cb.block(start)
        syms = map_marks(prior, marks)
        scores = times[None, :] * ratios[np.ix_(active, syms)]
        running = np.minimum.accumulate(scores, axis=1)
        shifted = np.concatenate([np.full((active.size, 1), math.inf), running[:, :-1]], axis=1)
        prev_best = np.minimum(best[active, None], shifted)
        stop = times[None, :] * r_min[active, None] > prev_best
        stopped = stop.any(axis=1)
        end = np.where(stopped, np.argmax(stop, axis=1), times.shape[0])
        cols = np.arange(times.shape[0])[None, :]
        masked = np.where(cols < end[:, None], scores, math.inf)
        local = np.argmin(masked, axis=1)
        local_best = masked[np.arange(active.size), local]
        better = local_best < best[active]
        best[active[better]] = local_best[better]
        best_k[active[better]] = start + local[better] + 1
        active = active[~stopped]
        start += times.shape[0]
    ys = map_marks(prior, cb.marks[best_k - 1]).astype(np.int64)
    return best_k, ys, best


def collapse_exponentials(cb: PfrCodebook, prior: Optional[DiscreteDistribution] = None) -> np.ndarray:
    """
    z_y = p_Y(y) · (mark 为 y 的第一个到达时间)

    各坐标边缘为 Exp(1) 且相互独立；零概率符号的坐标为 +inf
    """
    prior = cb.prior if prior is None else prior
    if isinstance(prior, ContinuousPrior):
        raise ShapeError("collapse_exponentials needs a discrete prior")
    p = prior.probs
    first = np.full(p.shape, math.inf)
    missing = set(int(y) for y in prior.support)
    start = 0
    while missing:
        times, marks = cb.block(start)
        syms = map_marks(prior, marks)
        values, idx = np.unique(syms, return_index=True)
        for y, i in zip(values, idx):
            y = int(y)
            if y in missing:
                first[y] = times[i]
                missing.discard(y)
        start += times.shape[0]
    with np.errstate(invalid="ignore"):
        return np.where(p > 0, p * first, math.inf)


def collapsed_select(z: np.ndarray, conditional: DiscreteDistribution) -> int:
    """折叠形式的选择：argmin_y z_y / p_{Y|X}(y|x)"""
    z = np.asarray(z, dtype=float)
    c = conditional.probs
    if z.shape != c.shape:
        raise ShapeError(f"z has {z.shape[0]} coordinates, conditional has {c.shape[0]}")
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(c > 0, z / c, math.inf)
    return int(np.argmin(scores))


def induced_function(cb: PfrCodebook, kernel: Kernel,
                     prior: Optional[DiscreteDistribution] = None) -> InducedFunction:
    """table[x] = select(cb, kernel 第 x 行, prior).y"""
    _, ys, _ = select_many(cb, kernel, prior)
    return InducedFunction(ys)


def conditional_select(cb: PfrCodebook, u: int,
                       conditional_given_u: Union[DiscreteDistribution, Sequence[DiscreteDistribution], Mapping],
                       prior_given_u: Union[Sequence[Prior], Mapping]) -> SelectionOutcome:
    """
    条件 SFRL：同一码本服务所有 u，mark 经 prior_given_u[u] 的分位数映射

    Args:
        cb: 与 U 独立的码本
        u: 条件符号
        conditional_given_u: 该 u（及 x）下的条件分布，或按 u 索引的序列 / 映射
        prior_given_u: 按 u 索引的先验
    """
    prior = prior_given_u[u]
    conditional = conditional_given_u if isinstance(conditional_given_u, DiscreteDistribution) \
        else conditional_given_u[u]
    return select(cb, conditional, prior)
