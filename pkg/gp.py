"""
Gelfand–Pinsker 约化演示
对 (S, U) 应用 PFR 得到与 S 独立的 V（诱导函数表），把带状态信道变成点到点信道 p_{Y|V}，
并核对 I(V;Y) ≥ I(U;Y) − H(U|V) 与 H(U|V) ≤ I(U;S) + log₂(I(U;S)+1) + 4
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import ShapeError, SizeError, ValidationError
from pfr import build_codebook, induced_function
from probspace import (DiscreteDistribution, JointDistribution, Kernel, conditional_mutual_information,
                       entropy_bits)

logger = logging.getLogger(__name__)

MIN_TRIALS = 10_000
MAX_TABLES = 1_000_000
# 抽样 (S, Y) 用的 substream，与码本 substream 0..trials-1 不相交
GP_DRAW_STREAM = 2 ** 62
SIGMAS = 3.0


@dataclass(frozen=True, eq=False)
class GpSetup:
    """
    p_s: 状态分布；p_u_given_s: |S| × |U| 的核；
    x_map: |U| × |S| 的整数表 x(u, s)；p_y_given_xs: (|X|, |S|, |Y|) 的信道
    """
    p_s: DiscreteDistribution
    p_u_given_s: Kernel
    x_map: np.ndarray
    p_y_given_xs: np.ndarray

    def __post_init__(self):
        ns, nu = self.p_s.alphabet_size, self.p_u_given_s.output_size
        if self.p_u_given_s.input_size != ns:
            raise ShapeError(f"p_U|S has {self.p_u_given_s.input_size} rows, |S| = {ns}")
        x_map = np.array(self.x_map, dtype=np.int64)
        if x_map.shape != (nu, ns):
            raise ShapeError(f"x_map has shape {x_map.shape}, expected {(nu, ns)}")
        chan = np.array(self.p_y_given_xs, dtype=float)
        if chan.ndim != 3 or chan.shape[1] != ns:
            raise ShapeError(f"p_Y|XS must have shape (|X|, {ns}, |Y|), got {chan.shape}")
        if x_map.min() < 0 or x_map.max() >= chan.shape[0]:
            raise ValidationError("x_map refers to channel inputs outside the alphabet")
        # 逐行校验
        Kernel(chan.reshape(-1, chan.shape[2]))
        object.__setattr__(self, "x_map", x_map)
        object.__setattr__(self, "p_y_given_xs", chan)

    @property
    def table_count(self) -> int:
        return self.p_u_given_s.output_size ** self.p_s.alphabet_size

    def channel_given_us(self) -> np.ndarray:
        """P(y | u, s)，形状 (|U|, |S|, |Y|)"""
        s = np.arange(self.p_s.alphabet_size)
        return self.p_y_given_xs[self.x_map, s[None, :]]

    def model_joint(self) -> JointDistribution:
        """(S, U, X, Y) 的精确联合分布"""
        ns, nu = self.p_s.alphabet_size, self.p_u_given_s.output_size
        nx, ny = self.p_y_given_xs.shape[0], self.p_y_given_xs.shape[2]
        joint = np.zeros((ns, nu, nx, ny))
        for s in range(ns):
            for u in range(nu):
                x = self.x_map[u, s]
                joint[s, u, x] = self.p_s.probs[s] * self.p_u_given_s.rows[s, u] * self.p_y_given_xs[x, s]
        return JointDistribution(joint)


def dirty_paper_toy(crossover: float = 0.1, u_flip: float = 0.3) -> GpSetup:
    """二元脏纸：S 均匀，U|S ~ BSC(u_flip)，x = u ⊕ s，Y = X ⊕ S ⊕ N，N ~ Bern(crossover)"""
    chan = np.zeros((2, 2, 2))
    for x in range(2):
        for s in range(2):
            clean = x ^ s
            chan[x, s, clean] = 1.0 - crossover
            chan[x, s, 1 - clean] = crossover
    x_map = np.array([[u ^ s for s in range(2)] for u in range(2)])
    return GpSetup(DiscreteDistribution.uniform(2), Kernel.bsc(u_flip), x_map, chan)


def _information(setup: GpSetup):
    j = setup.model_joint()
    return conditional_mutual_information(j, 1, 3), conditional_mutual_information(j, 1, 0)


def gp_rate_gap(setup: GpSetup) -> float:
    """I(U;Y) − I(U;S) − log₂(I(U;S)+1) − 4，桌面规模下可为负，如实返回"""
    i_uy, i_us = _information(setup)
    return i_uy - i_us - math.log2(i_us + 1.0) - 4.0


@dataclass(frozen=True)
class GpReport:
    i_uy: float
    i_us: float
    h_u_given_v: float
    h_u_given_v_se: float
    i_vy: float
    i_vy_se: float
    rate_gap: float
    sfrl_bound: float
    h_u_given_v_plugin: float
    i_vy_plugin: float
    distinct_tables: int
    trials: int

    @property
    def chain_ok(self) -> bool:
        slack = SIGMAS * math.hypot(self.i_vy_se, self.h_u_given_v_se) + 1e-12
        return self.i_vy >= self.i_uy - self.h_u_given_v - slack

    @property
    def sfrl_ok(self) -> bool:
        return self.h_u_given_v <= self.sfrl_bound + SIGMAS * self.h_u_given_v_se + 1e-12

    def as_dict(self) -> dict:
        return {
            "I(U;Y)": self.i_uy,
            "I(U;S)": self.i_us,
            "H(U|V)": self.h_u_given_v,
            "H(U|V)_se": self.h_u_given_v_se,
            "I(V;Y)": self.i_vy,
            "I(V;Y)_se": self.i_vy_se,
            "rate_gap": self.rate_gap,
            "sfrl_bound": self.sfrl_bound,
            "H(U|V)_plugin": self.h_u_given_v_plugin,
            "I(V;Y)_plugin": self.i_vy_plugin,
            "distinct_tables": self.distinct_tables,
            "trials": self.trials,
            "chain_ok": self.chain_ok,
            "sfrl_ok": self.sfrl_ok,
            "pass": self.chain_ok and self.sfrl_ok,
        }


def _plugin_mi(a: np.ndarray, b: np.ndarray) -> float:
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    counts = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(counts, (ia, ib), 1.0)
    p = counts / counts.sum()
    return max(0.0, entropy_bits(p.sum(axis=1)) + entropy_bits(p.sum(axis=0)) - entropy_bits(p))


def _plugin_conditional_entropy(target: np.ndarray, given: np.ndarray) -> float:
    _, ig = np.unique(given, return_inverse=True)
    _, it = np.unique(target, return_inverse=True)
    counts = np.zeros((ig.max() + 1, it.max() + 1))
    np.add.at(counts, (ig, it), 1.0)
    p = counts / counts.sum()
    return max(0.0, entropy_bits(p) - entropy_bits(p.sum(axis=1)))


def gp_reduce(setup: GpSetup, trials: int = MIN_TRIALS, seed: int = 0) -> GpReport:
    """
    构造 V 并估计 H(U|V)、I(V;Y)

    每个 trial t 用 substream t 的码本得到函数表 v = (g(s, z))_s。由于 V ⊥ S，
    给定 v 时 U = v[S] 与 Y 的条件分布可精确枚举，H(U|V) 与 H(Y|V) 取逐 trial 精确值的平均；
    另从独立的抽样流 (S, Y) 得到经验联合，给出插件估计作为对照。

    Args:
        setup: GP 设定
        trials: 码本个数（≥ 10⁴）
        seed: 主种子

    Raises:
        SizeError: 函数表字母表 |U|^|S| 超过 10⁶
    """
    if trials < MIN_TRIALS:
        raise ValidationError(f"trials must be >= {MIN_TRIALS}, got {trials}")
    if setup.table_count > MAX_TABLES:
        raise SizeError(f"|U|^|S| = {setup.table_count} function tables exceed {MAX_TABLES}")
    ps = setup.p_s.probs
    ns, nu = ps.shape[0], setup.p_u_given_s.output_size
    prior = setup.p_u_given_s.output_marginal(setup.p_s)
    chan_us = setup.channel_given_us()
    ny = chan_us.shape[2]

    tables = np.empty((trials, ns), dtype=np.int64)
    h_u = np.empty(trials)
    h_y = np.empty(trials)
    for t in range(trials):
        table = induced_function(build_codebook(seed, prior, substream=t), setup.p_u_given_s, prior).table
        tables[t] = table
        h_u[t] = entropy_bits(np.bincount(table, weights=ps, minlength=nu))
        h_y[t] = entropy_bits(ps @ chan_us[table, np.arange(ns)])

    i_uy, i_us = _information(setup)
    p_y = setup.model_joint().probs.sum(axis=(0, 1, 2))
    h_u_v, h_u_v_se = float(h_u.mean()), float(h_u.std(ddof=1) / math.sqrt(trials))
    i_vy = entropy_bits(p_y) - float(h_y.mean())
    i_vy_se = float(h_y.std(ddof=1) / math.sqrt(trials))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, GP_DRAW_STREAM])))
    s = rng.choice(ns, size=trials, p=ps)
    u = tables[np.arange(trials), s]
    cdf = np.cumsum(chan_us[u, s], axis=1)
    y = np.minimum((rng.random(trials)[:, None] >= cdf).sum(axis=1), ny - 1)
    v = tables @ (nu ** np.arange(ns))

    report = GpReport(
        i_uy=i_uy, i_us=i_us,
        h_u_given_v=h_u_v, h_u_given_v_se=h_u_v_se,
        i_vy=i_vy, i_vy_se=i_vy_se,
        rate_gap=i_uy - i_us - math.log2(i_us + 1.0) - 4.0,
        sfrl_bound=i_us + math.log2(i_us + 1.0) + 4.0,
        h_u_given_v_plugin=_plugin_conditional_entropy(u, v),
        i_vy_plugin=_plugin_mi(v, y),
        distinct_tables=int(np.unique(v).shape[0]),
        trials=trials,
    )
    logger.info(f"GP reduction: H(U|V)={h_u_v:.4f} ± {h_u_v_se:.4f}, I(V;Y)={i_vy:.4f} ± {i_vy_se:.4f}, "
                f"I(U;Y)={i_uy:.4f}, I(U;S)={i_us:.4f}")
    return report
