"""
有限概率空间
离散分布、联合分布、条件核，以及以比特为单位的信息度量（log 以 2 为底）
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from errors import ShapeError, ValidationError

logger = logging.getLogger(__name__)

# 构造时的归一化容差：在容差内则重新归一化，超出则拒绝
NORM_TOL = 1e-12

Axes = Union[int, Sequence[int]]


def _checked_probs(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        raise ValidationError(f"{what}: empty probability array")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what}: non-finite probability mass")
    if np.any(arr < 0):
        raise ValidationError(f"{what}: negative probability mass {arr.min()!r}")
    total = arr.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise ValidationError(f"{what}: total mass {total!r} is not within {NORM_TOL} of 1")
    arr = arr / total
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """有限字母表上的概率质量函数 p_X"""
    probs: np.ndarray

    def __post_init__(self):
        arr = _checked_probs(self.probs, "DiscreteDistribution")
        if arr.ndim != 1:
            raise ShapeError(f"DiscreteDistribution needs a vector, got shape {arr.shape}")
        object.__setattr__(self, "probs", arr)

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.shape[0])

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def __len__(self) -> int:
        return self.alphabet_size

    def __getitem__(self, symbol: int) -> float:
        return float(self.probs[symbol])

    @classmethod
    def uniform(cls, n: int) -> "DiscreteDistribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, symbol: int) -> "DiscreteDistribution":
        probs = np.zeros(n)
        probs[symbol] = 1.0
        return cls(probs)

    @classmethod
    def bernoulli(cls, p: float) -> "DiscreteDistribution":
        return cls([1.0 - p, p])


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """k 维联合分布，第 i 个轴对应第 i 个随机变量"""
    probs: np.ndarray

    def __post_init__(self):
        arr = _checked_probs(self.probs, "JointDistribution")
        if arr.ndim < 1:
            raise ShapeError("JointDistribution needs at least one axis")
        object.__setattr__(self, "probs", arr)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(n) for n in self.probs.shape)

    @property
    def ndim(self) -> int:
        return self.probs.ndim

    def _axes(self, axes: Axes) -> Tuple[int, ...]:
        axes = (axes,) if isinstance(axes, (int, np.integer)) else tuple(axes)
        for a in axes:
            if not 0 <= a < self.ndim:
                raise ShapeError(f"axis {a} out of range for a {self.ndim}-axis joint")
        if len(set(axes)) != len(axes):
            raise ShapeError(f"repeated axis in {axes}")
        return tuple(int(a) for a in axes)

    def marginal(self, axis: int) -> DiscreteDistribution:
        (axis,) = self._axes(axis)
        other = tuple(a for a in range(self.ndim) if a != axis)
        return DiscreteDistribution(self.probs.sum(axis=other))

    def marginal_joint(self, axes: Axes) -> "JointDistribution":
        """按给定顺序保留若干轴的边缘联合分布"""
        axes = self._axes(axes)
        other = tuple(a for a in range(self.ndim) if a not in axes)
        kept = self.probs.sum(axis=other) if other else self.probs
        # sum 之后剩余轴按原顺序排列，再转置成调用方要求的顺序
        order = sorted(axes)
        return JointDistribution(np.transpose(kept, [order.index(a) for a in axes]))

    def conditional(self, given_axis: int) -> "Kernel":
        """二维联合分布的条件核 P(other | given)；given 零概率的行填为均匀分布"""
        if self.ndim != 2:
            raise ShapeError("conditional() needs a 2-axis joint")
        (given_axis,) = self._axes(given_axis)
        mat = self.probs if given_axis == 0 else self.probs.T
        return Kernel.from_joint_rows(mat)

    @classmethod
    def product(cls, *parts: DiscreteDistribution) -> "JointDistribution":
        probs = np.array(1.0)
        for part in parts:
            probs = np.multiply.outer(probs, part.probs)
        return cls(probs)


@dataclass(frozen=True, eq=False)
class Kernel:
    """条件分布 P_{Y|X}，rows[x] 为给定 x 时输出的分布"""
    rows: np.ndarray

    def __post_init__(self):
        mat = np.array(self.rows, dtype=float)
        if mat.ndim != 2 or mat.shape[0] == 0 or mat.shape[1] == 0:
            raise ShapeError(f"Kernel needs a non-empty matrix, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)) or np.any(mat < 0):
            raise ValidationError("Kernel rows must be finite and nonnegative")
        sums = mat.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > NORM_TOL)
        if bad.size:
            raise ValidationError(f"Kernel row {int(bad[0])} sums to {sums[bad[0]]!r}")
        mat = mat / sums[:, None]
        mat.setflags(write=False)
        object.__setattr__(self, "rows", mat)

    @property
    def input_size(self) -> int:
        return int(self.rows.shape[0])

    @property
    def output_size(self) -> int:
        return int(self.rows.shape[1])

    def row(self, x: int) -> DiscreteDistribution:
        return DiscreteDistribution(self.rows[x])

    def joint_with(self, source: DiscreteDistribution) -> JointDistribution:
        if source.alphabet_size != self.input_size:
            raise ShapeError(f"source has {source.alphabet_size} symbols, kernel expects {self.input_size}")
        return JointDistribution(source.probs[:, None] * self.rows)

    def output_marginal(self, source: DiscreteDistribution) -> DiscreteDistribution:
        return self.joint_with(source).marginal(1)

    @classmethod
    def from_joint_rows(cls, mat: np.ndarray) -> "Kernel":
        mat = np.asarray(mat, dtype=float)
        sums = mat.sum(axis=1, keepdims=True)
        uniform = np.full(mat.shape, 1.0 / mat.shape[1])
        with np.errstate(invalid="ignore", divide="ignore"):
            rows = np.where(sums > 0, mat / np.where(sums > 0, sums, 1.0), uniform)
        return cls(rows)

    @classmethod
    def identity(cls, n: int) -> "Kernel":
        return cls(np.eye(n))

    @classmethod
    def bsc(cls, eps: float) -> "Kernel":
        return cls([[1 - eps, eps], [eps, 1 - eps]])

    @classmethod
    def z_channel(cls, eps: float) -> "Kernel":
        # 输入 1 以概率 eps 翻成 0
        return cls([[1.0, 0.0], [eps, 1 - eps]])


DistLike = Union[DiscreteDistribution, Iterable[float], np.ndarray]


def as_distribution(d: DistLike) -> DiscreteDistribution:
    return d if isinstance(d, DiscreteDistribution) else DiscreteDistribution(np.asarray(d, dtype=float))


def entropy_bits(probs: np.ndarray) -> float:
    """未校验数组的熵（比特），0·log0 = 0；内部热路径使用"""
    p = np.asarray(probs, dtype=float).ravel()
    p = p[p > 0]
    return max(0.0, float(-np.sum(p * np.log2(p))))


def entropy(d: DistLike) -> float:
    """
    熵 H(d)，单位比特

    Args:
        d: 离散分布（原始数组会先经过校验）

    Returns:
        -Σ p log2 p，落在 [0, log2 |alphabet|]
    """
    return entropy_bits(as_distribution(d).probs)


def joint_entropy(j: JointDistribution) -> float:
    return entropy_bits(j.probs)


def kl_divergence(p: DistLike, q: DistLike) -> float:
    """
    相对熵 D(p || q)，单位比特

    p 的支撑超出 q 的支撑时返回 +inf（不抛异常）
    """
    p, q = as_distribution(p), as_distribution(q)
    if p.alphabet_size != q.alphabet_size:
        raise ShapeError(f"alphabet mismatch: {p.alphabet_size} vs {q.alphabet_size}")
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        return float("inf")
    pp, qq = p.probs[mask], q.probs[mask]
    return max(0.0, float(np.sum(pp * (np.log2(pp) - np.log2(qq)))))


def mutual_information(j: JointDistribution) -> float:
    """I(X;Y) = H(X) + H(Y) - H(X,Y)，要求二维联合分布"""
    if j.ndim != 2:
        raise ShapeError(f"mutual_information needs a 2-axis joint, got {j.ndim} axes")
    hx = entropy_bits(j.probs.sum(axis=1))
    hy = entropy_bits(j.probs.sum(axis=0))
    return max(0.0, hx + hy - entropy_bits(j.probs))


def conditional_entropy(j: JointDistribution, given_axis: Axes) -> float:
    """H(其余变量 | given_axis 上的变量) = H(joint) - H(given 边缘)"""
    axes = j._axes(given_axis)
    other = tuple(a for a in range(j.ndim) if a not in axes)
    given = j.probs.sum(axis=other) if other else j.probs
    return max(0.0, entropy_bits(j.probs) - entropy_bits(given))


def _marginal_entropy(j: JointDistribution, axes: Tuple[int, ...]) -> float:
    if not axes:
        return 0.0
    other = tuple(a for a in range(j.ndim) if a not in axes)
    return entropy_bits(j.probs.sum(axis=other) if other else j.probs)


def conditional_mutual_information(j: JointDistribution, a: Axes, b: Axes, given: Axes = ()) -> float:
    """
    I(A;B|C)，A、B、C 为联合分布中互不相交的轴组

    Args:
        j: 联合分布
        a: A 对应的轴
        b: B 对应的轴
        given: C 对应的轴（可为空）
    """
    a, b = j._axes(a), j._axes(b)
    c = j._axes(given)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ShapeError("axis groups must be disjoint")
    value = (_marginal_entropy(j, a + c) + _marginal_entropy(j, b + c)
             - _marginal_entropy(j, a + b + c) - _marginal_entropy(j, c))
    return max(0.0, value)


def tv_distance(p: DistLike, q: DistLike) -> float:
    """总变差距离：L1 距离的一半"""
    pa = np.asarray(p.probs if isinstance(p, DiscreteDistribution) else p, dtype=float)
    qa = np.asarray(q.probs if isinstance(q, DiscreteDistribution) else q, dtype=float)
    if pa.shape != qa.shape:
        raise ShapeError(f"shape mismatch: {pa.shape} vs {qa.shape}")
    return 0.5 * float(np.abs(pa - qa).sum())


def binary_entropy(p: float) -> float:
    return entropy_bits(np.array([p, 1.0 - p]))
