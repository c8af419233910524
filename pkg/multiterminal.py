"""
多终端一次性变长编码
有损 Gray–Wyner 系统与多描述编码 (MDC) 的角点方案：嵌套的条件 PFR、候选 z 的 Carathéodory 混合、
3 比特时分头 Q，以及按条件单元拼接的 Huffman 描述
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from coding import BitReader, BitString, HuffmanCode, huffman_build
from errors import DesignError, FramingError, InfeasibleError, ShapeError, ValidationError
from numopt import caratheodory_mix
from pfr import build_codebook, collapse_exponentials, collapsed_select
from probspace import DiscreteDistribution, JointDistribution, conditional_mutual_information, entropy_bits

logger = logging.getLogger(__name__)

Q_HEADER_BITS = 3
MAX_Q = 1 << Q_HEADER_BITS
# 候选混合时每个熵坐标上的松弛（比特）
CANDIDATE_SLACK = 0.05
DISTORTION_TOL = 1e-9
TIGHTEN_ROUNDS = 4


def _normalize_rows(arr: np.ndarray, axis: int = -1) -> np.ndarray:
    sums = arr.sum(axis=axis, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(sums > 0, arr / np.where(sums > 0, sums, 1.0), 0.0)


def _check_kernel(arr, shape: Tuple[int, ...], what: str) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    if arr.shape[:len(shape)] != shape:
        raise ShapeError(f"{what} has shape {arr.shape}, expected leading axes {shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} must be finite and nonnegative")
    sums = arr.reshape(-1, arr.shape[-1]).sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValidationError(f"{what} rows must sum to 1")
    return arr / arr.sum(axis=-1, keepdims=True)


class _StageCodebook:
    """一个条件 PFR 阶段：同一码本，按条件值 c 用 prior[c] 的分位数折叠"""

    def __init__(self, seed: int, substream: int, priors: Dict[tuple, DiscreteDistribution]):
        self.priors = priors
        any_prior = next(iter(priors.values()))
        self.codebook = build_codebook(seed, any_prior, substream=substream)
        self._z: Dict[tuple, np.ndarray] = {}

    def choose(self, cond: tuple, conditional: np.ndarray) -> int:
        z = self._z.get(cond)
        if z is None:
            z = self._z[cond] = collapse_exponentials(self.codebook, self.priors[cond])
        return collapsed_select(z, DiscreteDistribution(conditional))


def _conditional_priors(joint: np.ndarray, cond_axes: Tuple[int, ...], target_axis: int) -> Dict[tuple, DiscreteDistribution]:
    """P(target | cond) 对每个正概率的条件值"""
    other = tuple(a for a in range(joint.ndim) if a not in cond_axes and a != target_axis)
    marg = joint.sum(axis=other) if other else joint
    # marg 的轴顺序为原顺序，把 target 放到最后
    kept = sorted(cond_axes + (target_axis,))
    perm = [kept.index(a) for a in cond_axes] + [kept.index(target_axis)]
    marg = np.transpose(marg, perm)
    priors = {}
    for cond in np.ndindex(*marg.shape[:-1]):
        mass = marg[cond].sum()
        if mass > 0:
            priors[tuple(int(c) for c in cond)] = DiscreteDistribution(marg[cond] / mass)
    return priors


def _cell_codes(pmfs: Dict[tuple, np.ndarray]) -> Dict[tuple, HuffmanCode]:
    codes = {}
    for key, pmf in pmfs.items():
        total = pmf.sum()
        if total > 0:
            codes[key] = huffman_build(DiscreteDistribution(pmf / total))
    return codes


def _mix(points: np.ndarray, targets: np.ndarray, what: str) -> Tuple[List[int], List[float]]:
    try:
        mix = caratheodory_mix(points, targets, objective_axis=0)
    except InfeasibleError as e:
        raise DesignError(f"{what}: candidates do not dominate the targets (coordinate {e.coordinate}); "
                          f"try more candidates") from e
    if len(mix.support) > MAX_Q:
        raise DesignError(f"{what}: mixture support {len(mix.support)} does not fit the Q header")
    return list(mix.support), [float(w) for w in mix.weights]


def _read_q(reader: BitReader, weights: Sequence[float]) -> int:
    start = reader.position
    q = reader.read_uint(Q_HEADER_BITS)
    if q >= len(weights):
        raise FramingError(f"Q = {q} outside the {len(weights)} designed branches", position=start)
    return q


def _draw_q(weights: Sequence[float], coin: Optional[np.random.Generator], q: Optional[int]) -> int:
    if q is not None:
        if not 0 <= q < len(weights):
            raise ValidationError(f"branch {q} out of range")
        return int(q)
    if coin is None:
        raise ValidationError("either a coin generator or an explicit branch q is required")
    return int(min(np.searchsorted(np.cumsum(weights), coin.random(), side="right"), len(weights) - 1))


@dataclass
class RateReport:
    """按 (x, q) 精确枚举的期望长度与失真，及定理给出的界"""
    scheme: str
    lengths: Dict[str, float]
    length_bounds: Dict[str, float]
    distortions: Dict[str, float]
    distortion_bounds: Dict[str, float]
    slack: float
    support_size: int
    header_ok: bool = True
    passed: bool = False
    extra: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "lengths": self.lengths,
            "length_bounds": self.length_bounds,
            "distortions": self.distortions,
            "distortion_bounds": self.distortion_bounds,
            "slack": self.slack,
            "support_size": self.support_size,
            "header_ok": self.header_ok,
            "extra": self.extra,
            "pass": self.passed,
        }


def _finish(report: RateReport) -> RateReport:
    lengths_ok = all(report.lengths[k] <= report.length_bounds[k] + 1e-9 for k in report.length_bounds)
    dist_ok = all(report.distortions[k] <= report.distortion_bounds[k] + DISTORTION_TOL
                  for k in report.distortion_bounds)
    report.passed = lengths_ok and dist_ok and report.header_ok
    return report


# ---------------------------------------------------------------- Gray–Wyner

@dataclass(frozen=True, eq=False)
class GwSetup:
    """
    source: P_{X1X2}；kernel_u: (n1, n2, |U|)；kernel_y1: (n1, |U|, |Y1|)；kernel_y2: (n2, |U|, |Y2|)
    """
    source: JointDistribution
    kernel_u: np.ndarray
    kernel_y1: np.ndarray
    kernel_y2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def __post_init__(self):
        if self.source.ndim != 2:
            raise ShapeError("Gray–Wyner source must be a 2-axis joint")
        n1, n2 = self.source.shape
        ku = _check_kernel(self.kernel_u, (n1, n2), "kernel_u")
        nu = ku.shape[-1]
        object.__setattr__(self, "kernel_u", ku)
        object.__setattr__(self, "kernel_y1", _check_kernel(self.kernel_y1, (n1, nu), "kernel_y1"))
        object.__setattr__(self, "kernel_y2", _check_kernel(self.kernel_y2, (n2, nu), "kernel_y2"))
        for name, kern in (("d1", self.kernel_y1), ("d2", self.kernel_y2)):
            d = np.array(getattr(self, name), dtype=float)
            if d.shape != (kern.shape[0], kern.shape[-1]):
                raise ShapeError(f"{name} has shape {d.shape}, expected {(kern.shape[0], kern.shape[-1])}")
            object.__setattr__(self, name, d)

    def model_joint(self) -> JointDistribution:
        """(X1, X2, U, Y1, Y2) 的联合分布"""
        p = self.source.probs[:, :, None, None, None] * self.kernel_u[:, :, :, None, None]
        p = p * self.kernel_y1[:, None, :, :, None] * self.kernel_y2[None, :, :, None, :]
        return JointDistribution(p)

    def info_terms(self) -> Dict[str, float]:
        j = self.model_joint()
        return {
            "I(X1X2;U)": conditional_mutual_information(j, (0, 1), 2),
            "I(X1;Y1|U)": conditional_mutual_information(j, 0, 3, 2),
            "I(X2;Y2|U)": conditional_mutual_information(j, 1, 4, 2),
        }

    def model_distortions(self) -> Tuple[float, float]:
        j = self.model_joint().probs
        p1 = j.sum(axis=(1, 2, 4))
        p2 = j.sum(axis=(0, 2, 3))
        return float(np.sum(p1 * self.d1)), float(np.sum(p2 * self.d2))


def gw_bounds(setup: GwSetup) -> Dict[str, float]:
    """R0 ≥ I(X1X2;U)+log₂(·+1)+8，Ri ≥ I(Xi;Yi|U)+log₂(·+1)+5"""
    info = setup.info_terms()
    return {
        "M0": info["I(X1X2;U)"] + math.log2(info["I(X1X2;U)"] + 1.0) + 8.0,
        "M1": info["I(X1;Y1|U)"] + math.log2(info["I(X1;Y1|U)"] + 1.0) + 5.0,
        "M2": info["I(X2;Y2|U)"] + math.log2(info["I(X2;Y2|U)"] + 1.0) + 5.0,
    }


@dataclass(frozen=True, eq=False)
class GwBranch:
    substreams: Tuple[int, int, int]
    table: Dict[Tuple[int, int], Tuple[int, int, int]]
    code_u: HuffmanCode
    codes_y1: Dict[int, HuffmanCode]
    codes_y2: Dict[int, HuffmanCode]
    coords: np.ndarray


@dataclass(frozen=True, eq=False)
class GwCode:
    setup: GwSetup
    seed: int
    branches: List[GwBranch]
    weights: List[float]
    targets: np.ndarray
    bounds: Dict[str, float]
    slack: float


def _gw_candidate(setup: GwSetup, seed: int, subs: Tuple[int, int, int], priors) -> Tuple[np.ndarray, dict, dict]:
    prior_u, prior_y1, prior_y2 = priors
    stage_u = _StageCodebook(seed, subs[0], {(): prior_u})
    stage_1 = _StageCodebook(seed, subs[1], prior_y1)
    stage_2 = _StageCodebook(seed, subs[2], prior_y2)
    p = setup.source.probs
    nu = setup.kernel_u.shape[-1]
    pmf_u = np.zeros(nu)
    pmf_y1 = np.zeros((nu, setup.kernel_y1.shape[-1]))
    pmf_y2 = np.zeros((nu, setup.kernel_y2.shape[-1]))
    d1 = d2 = 0.0
    table = {}
    for x1, x2 in zip(*np.nonzero(p)):
        x1, x2 = int(x1), int(x2)
        w = p[x1, x2]
        u = stage_u.choose((), setup.kernel_u[x1, x2])
        y1 = stage_1.choose((u,), setup.kernel_y1[x1, u])
        y2 = stage_2.choose((u,), setup.kernel_y2[x2, u])
        table[(x1, x2)] = (u, y1, y2)
        pmf_u[u] += w
        pmf_y1[u, y1] += w
        pmf_y2[u, y2] += w
        d1 += w * setup.d1[x1, y1]
        d2 += w * setup.d2[x2, y2]
    h_u = entropy_bits(pmf_u)
    coords = np.array([h_u, entropy_bits(pmf_y1) - h_u, entropy_bits(pmf_y2) - h_u, d1, d2])
    pmfs = {"u": pmf_u, "y1": pmf_y1, "y2": pmf_y2}
    return coords, table, pmfs


def _gw_branch(setup, seed, subs, priors) -> GwBranch:
    coords, table, pmfs = _gw_candidate(setup, seed, subs, priors)
    code_u = huffman_build(DiscreteDistribution(pmfs["u"] / pmfs["u"].sum()))
    codes_y1 = {k[0]: c for k, c in _cell_codes({(u,): pmfs["y1"][u] for u in range(len(pmfs["u"]))}).items()}
    codes_y2 = {k[0]: c for k, c in _cell_codes({(u,): pmfs["y2"][u] for u in range(len(pmfs["u"]))}).items()}
    return GwBranch(substreams=subs, table=table, code_u=code_u, codes_y1=codes_y1, codes_y2=codes_y2,
                    coords=coords)


def _gw_priors(setup: GwSetup):
    j = setup.model_joint().probs
    prior_u = DiscreteDistribution(j.sum(axis=(0, 1, 3, 4)))
    return prior_u, _conditional_priors(j, (2,), 3), _conditional_priors(j, (2,), 4)


def gw_design(setup: GwSetup, seed: int, candidates: int = 500, distortion_targets: Optional[Sequence[float]] = None,
              slack: float = CANDIDATE_SLACK) -> GwCode:
    """
    Gray–Wyner 码设计

    候选 c 使用 substream (3c, 3c+1, 3c+2) 作为 (Z0, Z1, Z2)；对每个候选精确枚举
    (H(Ũ), H(Ỹ1|Ũ), H(Ỹ2|Ũ), E d1, E d2)，混合后 |Q| ≤ 5。

    Args:
        setup: 信源与辅助核
        seed: 主种子
        candidates: 候选 z 三元组个数
        distortion_targets: (D1, D2)，默认为模型失真 E d_i(X_i, Y_i)
        slack: 熵坐标上的松弛 ε
    """
    if candidates < 1:
        raise ValidationError("candidates must be positive")
    info = setup.info_terms()
    dt = setup.model_distortions() if distortion_targets is None else tuple(distortion_targets)
    bounds = gw_bounds(setup)
    targets = np.array([
        info["I(X1X2;U)"] + math.log2(info["I(X1X2;U)"] + 1.0) + 4.0 + slack,
        info["I(X1;Y1|U)"] + math.log2(info["I(X1;Y1|U)"] + 1.0) + 4.0 + slack,
        info["I(X2;Y2|U)"] + math.log2(info["I(X2;Y2|U)"] + 1.0) + 4.0 + slack,
        dt[0], dt[1],
    ])
    priors = _gw_priors(setup)
    subs = [(3 * c, 3 * c + 1, 3 * c + 2) for c in range(candidates)]
    points = np.array([_gw_candidate(setup, seed, s, priors)[0] for s in subs])

    for _ in range(TIGHTEN_ROUNDS):
        support, weights = _mix(points, targets, "Gray–Wyner design")
        branches = [_gw_branch(setup, seed, subs[i], priors) for i in support]
        code = GwCode(setup=setup, seed=int(seed), branches=branches, weights=weights, targets=targets,
                      bounds=bounds, slack=slack)
        report = gw_evaluate(code)
        excess = [report.lengths[k] - bounds[k] for k in ("M0", "M1", "M2")]
        if max(excess) <= 0:
            logger.info(f"Gray–Wyner code: |Q|={len(branches)}, lengths={report.lengths}")
            return code
        for i, e in enumerate(excess):
            if e > 0:
                targets[i] -= e
        logger.warning(f"Gray–Wyner lengths exceed bounds by {excess}; tightening entropy targets")
    raise DesignError("Huffman rounding keeps the Gray–Wyner code above its bounds")


def gw_encode(code: GwCode, x1: int, x2: int, coin: Optional[np.random.Generator] = None,
              q: Optional[int] = None) -> Tuple[BitString, BitString, BitString]:
    """m0 = Q(3 比特) + C(Ũ|Q)，m1 = C(Ỹ1|Ũ,Q)，m2 = C(Ỹ2|Ũ,Q)"""
    q = _draw_q(code.weights, coin, q)
    branch = code.branches[q]
    if (x1, x2) not in branch.table:
        raise ValidationError(f"source pair {(x1, x2)} has probability zero")
    u, y1, y2 = branch.table[(x1, x2)]
    m0 = BitString.from_uint(q, Q_HEADER_BITS) + branch.code_u.encode(u)
    return m0, branch.codes_y1[u].encode(y1), branch.codes_y2[u].encode(y2)


def _gw_common(code: GwCode, m0) -> Tuple[int, int]:
    reader = BitReader(m0)
    q = _read_q(reader, code.weights)
    u = code.branches[q].code_u.read(reader)
    if not reader.at_end():
        raise FramingError("trailing bits in the common description", position=reader.position)
    return q, u


def _read_exact(huffman: HuffmanCode, bits) -> int:
    reader = BitReader(bits)
    value = huffman.read(reader)
    if not reader.at_end():
        raise FramingError("trailing bits in the private description", position=reader.position)
    return value


def gw_decode1(code: GwCode, m0, m1) -> int:
    q, u = _gw_common(code, m0)
    return _read_exact(code.branches[q].codes_y1[u], m1)


def gw_decode2(code: GwCode, m0, m2) -> int:
    q, u = _gw_common(code, m0)
    return _read_exact(code.branches[q].codes_y2[u], m2)


def gw_evaluate(code: GwCode) -> RateReport:
    """对 (x1, x2, q) 精确枚举实际码字长度与失真"""
    setup = code.setup
    p = setup.source.probs
    lengths = np.zeros(3)
    dist = np.zeros(2)
    header_ok = True
    for q, (w, branch) in enumerate(zip(code.weights, code.branches)):
        for (x1, x2), (u, y1, y2) in branch.table.items():
            m0, m1, m2 = gw_encode(code, x1, x2, q=q)
            header_ok &= len(m0) == Q_HEADER_BITS + len(branch.code_u.encode(u))
            mass = w * p[x1, x2]
            lengths += mass * np.array([len(m0), len(m1), len(m2)])
            dist += mass * np.array([setup.d1[x1, y1], setup.d2[x2, y2]])
    report = RateReport(
        scheme="gray-wyner",
        lengths={"M0": float(lengths[0]), "M1": float(lengths[1]), "M2": float(lengths[2])},
        length_bounds=dict(code.bounds),
        distortions={"D1": float(dist[0]), "D2": float(dist[1])},
        distortion_bounds={"D1": float(code.targets[3]), "D2": float(code.targets[4])},
        slack=code.slack, support_size=len(code.branches), header_ok=bool(header_ok),
    )
    return _finish(report)


# ---------------------------------------------------------------- 多描述编码

@dataclass(frozen=True, eq=False)
class MdcSetup:
    """source: P_X；aux: (n, |U|, |Y0|, |Y1|, |Y2|) 的 P_{U,Y0,Y1,Y2|X}；d0/d1/d2: n × |Yi|"""
    source: DiscreteDistribution
    aux: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def __post_init__(self):
        n = self.source.alphabet_size
        aux = np.array(self.aux, dtype=float)
        if aux.ndim != 5 or aux.shape[0] != n:
            raise ShapeError(f"aux must have shape (n, |U|, |Y0|, |Y1|, |Y2|) with n={n}, got {aux.shape}")
        flat = _check_kernel(aux.reshape(n, -1), (n,), "aux system")
        object.__setattr__(self, "aux", flat.reshape(aux.shape))
        for i, name in enumerate(("d0", "d1", "d2")):
            d = np.array(getattr(self, name), dtype=float)
            if d.shape != (n, aux.shape[2 + i]):
                raise ShapeError(f"{name} has shape {d.shape}, expected {(n, aux.shape[2 + i])}")
            object.__setattr__(self, name, d)

    def model_joint(self) -> JointDistribution:
        """(X, U, Y0, Y1, Y2) 的联合分布"""
        return JointDistribution(self.source.probs[:, None, None, None, None] * self.aux)

    def swapped(self) -> "MdcSetup":
        """交换 Y1 与 Y2 的角色（另一个角点）"""
        return MdcSetup(self.source, np.swapaxes(self.aux, 3, 4), self.d0, self.d2, self.d1)

    def info_terms(self) -> Dict[str, float]:
        j = self.model_joint()
        return {
            "I(X;U)": conditional_mutual_information(j, 0, 1),
            "I(X;Y1|U)": conditional_mutual_information(j, 0, 3, 1),
            "I(XY1;Y2|U)": conditional_mutual_information(j, (0, 3), 4, 1),
            "I(X;Y0|Y1Y2U)": conditional_mutual_information(j, 0, 2, (1, 3, 4)),
            "I(X;Y0Y1Y2U)": conditional_mutual_information(j, 0, (1, 2, 3, 4)),
            "I(Y1;Y2|U)": conditional_mutual_information(j, 3, 4, 1),
            "I(X;Y1U)": conditional_mutual_information(j, 0, (1, 3)),
            "I(X;Y2U)": conditional_mutual_information(j, 0, (1, 4)),
            "I(X;Y0Y1Y2|U)": conditional_mutual_information(j, 0, (2, 3, 4), 1),
        }

    def eta(self) -> float:
        info = self.info_terms()
        return math.log2(info["I(X;Y0Y1Y2U)"] + info["I(Y1;Y2|U)"] + 1.0) + 7.0

    def model_distortions(self) -> Tuple[float, float, float]:
        j = self.model_joint().probs
        px_y0 = j.sum(axis=(1, 3, 4))
        px_y1 = j.sum(axis=(1, 2, 4))
        px_y2 = j.sum(axis=(1, 2, 3))
        return (float(np.sum(px_y0 * self.d0)), float(np.sum(px_y1 * self.d1)), float(np.sum(px_y2 * self.d2)))


def mdc_corner_rates(setup: MdcSetup) -> Dict[str, float]:
    """角点：R1 = I(X;Y1|U)+I(X;U)+2η−1，R2 = I(X,Y1;Y2|U)+I(X;Y0|Y1,Y2,U)+I(X;U)+3η−1"""
    info, eta = setup.info_terms(), setup.eta()
    return {
        "M1": info["I(X;Y1|U)"] + info["I(X;U)"] + 2 * eta - 1,
        "M2": info["I(XY1;Y2|U)"] + info["I(X;Y0|Y1Y2U)"] + info["I(X;U)"] + 3 * eta - 1,
    }


def mdc_rate_region(setup: MdcSetup, r1: Optional[float] = None, r2: Optional[float] = None) -> Dict[str, float]:
    """
    可达区域的三个不等式右端，以及给定 (R1, R2) 时的判定

    R1 ≥ I(X;Y1,U)+2η，R2 ≥ I(X;Y2,U)+2η，R1+R2 ≥ I(X;Y0,Y1,Y2|U)+2I(X;U)+I(Y1;Y2|U)+5η
    """
    info, eta = setup.info_terms(), setup.eta()
    region = {
        "eta": eta,
        "R1_min": info["I(X;Y1U)"] + 2 * eta,
        "R2_min": info["I(X;Y2U)"] + 2 * eta,
        "sum_min": info["I(X;Y0Y1Y2|U)"] + 2 * info["I(X;U)"] + info["I(Y1;Y2|U)"] + 5 * eta,
    }
    if r1 is not None and r2 is not None:
        region["achievable"] = float(r1 >= region["R1_min"] - 1e-9 and r2 >= region["R2_min"] - 1e-9
                                     and r1 + r2 >= region["sum_min"] - 1e-9)
    return region


def timeshare_rates(setup: MdcSetup, alpha: float) -> Dict[str, float]:
    """以概率 alpha 用本角点、1-alpha 用翻转角点，加 1 比特角点标志"""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    a = mdc_corner_rates(setup)
    b = mdc_corner_rates(setup.swapped())
    return {
        "M1": alpha * a["M1"] + (1 - alpha) * b["M2"] + 1.0,
        "M2": alpha * a["M2"] + (1 - alpha) * b["M1"] + 1.0,
    }


def per_stage_bounds(setup: MdcSetup) -> List[dict]:
    """四个阶段各自的 SFRL 界 log₂(I+1)+4 与 η−3 的比较"""
    info, eta = setup.info_terms(), setup.eta()
    rows = []
    for name in ("I(X;U)", "I(X;Y1|U)", "I(XY1;Y2|U)", "I(X;Y0|Y1Y2U)"):
        value = info[name]
        sfrl = math.log2(value + 1.0) + 4.0
        rows.append({"stage": name, "info": value, "sfrl_excess": sfrl, "eta_minus_3": eta - 3.0,
                     "absorbed": sfrl <= eta - 3.0 + 1e-12})
    return rows


@dataclass(frozen=True, eq=False)
class MdcBranch:
    substreams: Tuple[int, int, int, int]
    table: Dict[int, Tuple[int, int, int, int]]
    code_u: HuffmanCode
    codes_y1: Dict[int, HuffmanCode]
    codes_y2: Dict[int, HuffmanCode]
    codes_y0: Dict[Tuple[int, int, int], HuffmanCode]
    coords: np.ndarray


@dataclass(frozen=True, eq=False)
class MdcCode:
    setup: MdcSetup
    seed: int
    branches: List[MdcBranch]
    weights: List[float]
    targets: np.ndarray
    bounds: Dict[str, float]
    eta: float
    slack: float


def _mdc_priors(setup: MdcSetup):
    j = setup.model_joint().probs
    prior_u = DiscreteDistribution(j.sum(axis=(0, 2, 3, 4)))
    return (prior_u, _conditional_priors(j, (1,), 3), _conditional_priors(j, (1,), 4),
            _conditional_priors(j, (3, 4, 1), 2))


def _mdc_conditionals(setup: MdcSetup):
    j = setup.model_joint().probs
    ku = _normalize_rows(j.sum(axis=(2, 3, 4)))                       # [x, u]
    k1 = _normalize_rows(j.sum(axis=(2, 4)))                          # [x, u, y1]
    k2 = _normalize_rows(j.sum(axis=2))                               # [x, u, y1, y2]
    k0 = _normalize_rows(np.transpose(j, (0, 1, 3, 4, 2)))            # [x, u, y1, y2, y0]
    return ku, k1, k2, k0


def _mdc_candidate(setup: MdcSetup, seed: int, subs, priors, conds):
    prior_u, prior_y1, prior_y2, prior_y0 = priors
    ku, k1, k2, k0 = conds
    stage_u = _StageCodebook(seed, subs[0], {(): prior_u})
    stage_1 = _StageCodebook(seed, subs[1], prior_y1)
    stage_2 = _StageCodebook(seed, subs[2], prior_y2)
    stage_0 = _StageCodebook(seed, subs[3], prior_y0)
    p = setup.source.probs
    _, nu, n0, n1, n2 = setup.aux.shape
    pmf_u = np.zeros(nu)
    pmf_y1 = np.zeros((nu, n1))
    pmf_y2 = np.zeros((nu, n2))
    pmf_y0 = np.zeros((n1, n2, nu, n0))
    dist = np.zeros(3)
    table = {}
    for x in np.flatnonzero(p > 0):
        x = int(x)
        w = p[x]
        u = stage_u.choose((), ku[x])
        y1 = stage_1.choose((u,), k1[x, u])
        y2 = stage_2.choose((u,), k2[x, u, y1])
        y0 = stage_0.choose((y1, y2, u), k0[x, u, y1, y2])
        table[x] = (u, y1, y2, y0)
        pmf_u[u] += w
        pmf_y1[u, y1] += w
        pmf_y2[u, y2] += w
        pmf_y0[y1, y2, u, y0] += w
        dist += w * np.array([setup.d0[x, y0], setup.d1[x, y1], setup.d2[x, y2]])
    h_u = entropy_bits(pmf_u)
    h_cond0 = entropy_bits(pmf_y0) - entropy_bits(pmf_y0.sum(axis=3))
    coords = np.array([h_u, entropy_bits(pmf_y1) - h_u, entropy_bits(pmf_y2) - h_u, h_cond0, *dist])
    return coords, table, (pmf_u, pmf_y1, pmf_y2, pmf_y0)


def _mdc_branch(setup, seed, subs, priors, conds) -> MdcBranch:
    coords, table, (pmf_u, pmf_y1, pmf_y2, pmf_y0) = _mdc_candidate(setup, seed, subs, priors, conds)
    nu = len(pmf_u)
    codes_y1 = {k[0]: c for k, c in _cell_codes({(u,): pmf_y1[u] for u in range(nu)}).items()}
    codes_y2 = {k[0]: c for k, c in _cell_codes({(u,): pmf_y2[u] for u in range(nu)}).items()}
    codes_y0 = _cell_codes({cell: pmf_y0[cell] for cell in np.ndindex(*pmf_y0.shape[:3])})
    return MdcBranch(substreams=subs, table=table, code_u=huffman_build(DiscreteDistribution(pmf_u / pmf_u.sum())),
                     codes_y1=codes_y1, codes_y2=codes_y2, codes_y0=codes_y0, coords=coords)


def mdc_design(setup: MdcSetup, seed: int, candidates: int = 500,
               distortion_targets: Optional[Sequence[float]] = None, slack: float = CANDIDATE_SLACK) -> MdcCode:
    """
    多描述角点码设计

    阶段顺序 U → Y1 → Y2 → Y0，候选 c 使用 substream 4c..4c+3；
    7 维坐标 (H(Ũ), H(Ỹ1|Ũ), H(Ỹ2|Ũ), H(Ỹ0|Ỹ1Ỹ2Ũ), E d0, E d1, E d2)，
    熵坐标目标为各阶段的 I + η − 3 (+ε)，混合后 |Q| ≤ 7。
    """
    if candidates < 1:
        raise ValidationError("candidates must be positive")
    info, eta = setup.info_terms(), setup.eta()
    dt = setup.model_distortions() if distortion_targets is None else tuple(distortion_targets)
    targets = np.array([
        info["I(X;U)"] + eta - 3 + slack,
        info["I(X;Y1|U)"] + eta - 3 + slack,
        info["I(XY1;Y2|U)"] + eta - 3 + slack,
        info["I(X;Y0|Y1Y2U)"] + eta - 3 + slack,
        dt[0], dt[1], dt[2],
    ])
    bounds = mdc_corner_rates(setup)
    priors, conds = _mdc_priors(setup), _mdc_conditionals(setup)
    subs = [(4 * c, 4 * c + 1, 4 * c + 2, 4 * c + 3) for c in range(candidates)]
    points = np.array([_mdc_candidate(setup, seed, s, priors, conds)[0] for s in subs])

    for _ in range(TIGHTEN_ROUNDS):
        support, weights = _mix(points, targets, "multiple-description design")
        branches = [_mdc_branch(setup, seed, subs[i], priors, conds) for i in support]
        code = MdcCode(setup=setup, seed=int(seed), branches=branches, weights=weights, targets=targets,
                       bounds=bounds, eta=eta, slack=slack)
        report = mdc_evaluate(code)
        excess = {k: report.lengths[k] - bounds[k] for k in ("M1", "M2")}
        if max(excess.values()) <= 0:
            logger.info(f"MDC code: |Q|={len(branches)}, eta={eta:.4f}, lengths={report.lengths}")
            return code
        # M1 含 U 与 Y1 两段，M2 含 U、Y2、Y0 三段
        if excess["M1"] > 0:
            targets[[0, 1]] -= excess["M1"] / 2
        if excess["M2"] > 0:
            targets[[0, 2, 3]] -= excess["M2"] / 3
        logger.warning(f"MDC lengths exceed corner rates by {excess}; tightening entropy targets")
    raise DesignError("Huffman rounding keeps the MDC code above its corner rates")


def mdc_encode(code: MdcCode, x: int, coin: Optional[np.random.Generator] = None,
               q: Optional[int] = None) -> Tuple[BitString, BitString]:
    """M1 = Q + C(Ũ|Q) + C(Ỹ1|Ũ,Q)；M2 = Q + C(Ũ|Q) + C(Ỹ2|Ũ,Q) + C(Ỹ0|Ỹ1,Ỹ2,Ũ,Q)"""
    q = _draw_q(code.weights, coin, q)
    branch = code.branches[q]
    if x not in branch.table:
        raise ValidationError(f"source symbol {x} has probability zero")
    u, y1, y2, y0 = branch.table[x]
    head = BitString.from_uint(q, Q_HEADER_BITS) + branch.code_u.encode(u)
    m1 = head + branch.codes_y1[u].encode(y1)
    m2 = head + branch.codes_y2[u].encode(y2) + branch.codes_y0[(y1, y2, u)].encode(y0)
    return m1, m2


def _mdc_head(code: MdcCode, reader: BitReader) -> Tuple[int, int]:
    q = _read_q(reader, code.weights)
    return q, code.branches[q].code_u.read(reader)


def mdc_decode1(code: MdcCode, m1) -> int:
    reader = BitReader(m1)
    q, u = _mdc_head(code, reader)
    y1 = code.branches[q].codes_y1[u].read(reader)
    if not reader.at_end():
        raise FramingError("trailing bits in description 1", position=reader.position)
    return y1


def mdc_decode2(code: MdcCode, m2) -> int:
    """解码端 2 只读到 Ỹ2；其后的 Ỹ0 部分以 Ỹ1 为条件，不可解也不需要"""
    reader = BitReader(m2)
    q, u = _mdc_head(code, reader)
    return code.branches[q].codes_y2[u].read(reader)


def mdc_decode0(code: MdcCode, m1, m2) -> Tuple[int, int, int]:
    """返回 (Ỹ0, Ỹ1, Ỹ2)"""
    r1, r2 = BitReader(m1), BitReader(m2)
    q, u = _mdc_head(code, r1)
    q2, u2 = _mdc_head(code, r2)
    if (q, u) != (q2, u2):
        raise FramingError("descriptions disagree on (Q, U)", position=0)
    branch = code.branches[q]
    y1 = branch.codes_y1[u].read(r1)
    y2 = branch.codes_y2[u].read(r2)
    if (y1, y2, u) not in branch.codes_y0:
        raise FramingError("no refinement code for the decoded cell", position=r2.position)
    y0 = branch.codes_y0[(y1, y2, u)].read(r2)
    if not (r1.at_end() and r2.at_end()):
        raise FramingError("trailing bits after joint decoding", position=r2.position)
    return y0, y1, y2


def mdc_evaluate(code: MdcCode) -> RateReport:
    """对 (x, q) 精确枚举：实际码字长度、头部核算与三路失真"""
    setup = code.setup
    p = setup.source.probs
    lengths = np.zeros(2)
    dist = np.zeros(3)
    header_ok = True
    for q, (w, branch) in enumerate(zip(code.weights, code.branches)):
        for x, (u, y1, y2, y0) in branch.table.items():
            m1, m2 = mdc_encode(code, x, q=q)
            head = Q_HEADER_BITS + len(branch.code_u.encode(u))
            header_ok &= len(m1) == head + len(branch.codes_y1[u].encode(y1))
            header_ok &= len(m2) == head + len(branch.codes_y2[u].encode(y2)) + \
                len(branch.codes_y0[(y1, y2, u)].encode(y0))
            mass = w * p[x]
            lengths += mass * np.array([len(m1), len(m2)])
            dist += mass * np.array([setup.d0[x, y0], setup.d1[x, y1], setup.d2[x, y2]])
    report = RateReport(
        scheme="multiple-description",
        lengths={"M1": float(lengths[0]), "M2": float(lengths[1])},
        length_bounds=dict(code.bounds),
        distortions={"D0": float(dist[0]), "D1": float(dist[1]), "D2": float(dist[2])},
        distortion_bounds={"D0": float(code.targets[4]), "D1": float(code.targets[5]), "D2": float(code.targets[6])},
        slack=code.slack, support_size=len(code.branches), header_ok=bool(header_ok),
        extra={"eta": code.eta},
    )
    return _finish(report)


@dataclass(frozen=True, eq=False)
class MdcTimeShare:
    """两个角点之间的时分：1 比特角点标志置于两条描述之首"""
    corner: MdcCode
    flipped: MdcCode
    alpha: float


def mdc_timeshare_design(setup: MdcSetup, seed: int, alpha: float, candidates: int = 500) -> MdcTimeShare:
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    corner = mdc_design(setup, seed, candidates)
    flipped = mdc_design(setup.swapped(), seed + 1, candidates)
    return MdcTimeShare(corner=corner, flipped=flipped, alpha=float(alpha))


def mdc_timeshare_encode(ts: MdcTimeShare, x: int, coin: np.random.Generator) -> Tuple[BitString, BitString]:
    if coin.random() < ts.alpha:
        m1, m2 = mdc_encode(ts.corner, x, coin)
        return BitString("0") + m1, BitString("0") + m2
    # 翻转角点中 Y1/Y2 角色互换：长描述给解码端 1
    short, long = mdc_encode(ts.flipped, x, coin)
    return BitString("1") + long, BitString("1") + short


def _split_flag(bits) -> Tuple[int, str]:
    raw = bits.bits if isinstance(bits, BitString) else bits
    if not raw:
        raise FramingError("missing corner flag", position=0)
    return int(raw[0]), raw[1:]


def mdc_timeshare_decode1(ts: MdcTimeShare, m1) -> int:
    flag, rest = _split_flag(m1)
    return mdc_decode1(ts.corner, rest) if flag == 0 else mdc_decode2(ts.flipped, rest)


def mdc_timeshare_decode2(ts: MdcTimeShare, m2) -> int:
    flag, rest = _split_flag(m2)
    return mdc_decode2(ts.corner, rest) if flag == 0 else mdc_decode1(ts.flipped, rest)


def mdc_timeshare_decode0(ts: MdcTimeShare, m1, m2) -> Tuple[int, int, int]:
    f1, r1 = _split_flag(m1)
    f2, r2 = _split_flag(m2)
    if f1 != f2:
        raise FramingError("descriptions disagree on the corner flag", position=0)
    if f1 == 0:
        return mdc_decode0(ts.corner, r1, r2)
    y0, y2, y1 = mdc_decode0(ts.flipped, r2, r1)
    return y0, y1, y2


def mdc_timeshare_lengths(ts: MdcTimeShare) -> Dict[str, float]:
    a, b = mdc_evaluate(ts.corner), mdc_evaluate(ts.flipped)
    return {
        "M1": ts.alpha * a.lengths["M1"] + (1 - ts.alpha) * b.lengths["M2"] + 1.0,
        "M2": ts.alpha * a.lengths["M2"] + (1 - ts.alpha) * b.lengths["M1"] + 1.0,
    }
