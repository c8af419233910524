#!/usr/bin/env python3
"""
sfrl 命令行入口
读取 JSON 实例文件，运行各方案与验收套件，把报告 (RunRecord) 与码流写入输出目录
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv

import harness
from chansim import FIXED_INPUT, SOURCE_COUPLED, SessionLedger, build_scheme, evaluate_scheme, sim_decode, sim_encode
from coding import read_container, write_container
from efi import efi_report, lb_example_build, lb_example_sweep, psi_lower_bound
from errors import SfrlError
from gp import GpSetup, gp_rate_gap, gp_reduce
from lossy import (MIXTURE, SOFT, code_from_record, code_to_record, design_mixture, design_report, design_soft,
                   evaluate_mixture, evaluate_soft, mixture_decode, mixture_encode, soft_decode, soft_encode)
from multiterminal import (GwSetup, MdcSetup, gw_design, gw_evaluate, mdc_design, mdc_evaluate, mdc_rate_region,
                           per_stage_bounds, timeshare_rates)
from numopt import blahut_arimoto_capacity, blahut_arimoto_rate_distortion
from pfr import DEFAULT_CAP
from probspace import DiscreteDistribution, JointDistribution, Kernel

# 加载环境变量
load_dotenv()

# 配置日志
logging.basicConfig(
    level=getattr(logging, os.getenv('SFRL_LOG_LEVEL', 'INFO').upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
EXIT_PASS = 0
EXIT_VIOLATION = 1
EXIT_ERROR = 2


@dataclass
class RunRecord:
    """一次命令运行的可复现记录；重跑相同 (command, config, seed) 得到相同 report"""
    command: str
    config_digest: str
    master_seed: int
    report: Dict[str, Any]
    config_path: Optional[str] = None
    config_file_digest: Optional[str] = None
    ledger: List[str] = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    timestamp: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.report.get("pass", True))


def config_digest(command: str, config: Any, seed: int) -> str:
    payload = {"command": command, "config": config, "seed": int(seed)}
    return hashlib.sha256(harness.canonical_bytes(payload)).hexdigest()


def file_digest(path: str) -> str:
    return hashlib.sha256(harness.canonical_bytes(load_config(path))).hexdigest()


def load_config(path: str) -> dict:
    """读取 JSON 实例文件，格式错误时抛出 ValueError（映射为退出码 2）"""
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"malformed config {path}: {e}") from e


def _matrix(value) -> np.ndarray:
    return np.array([[float("inf") if v == "inf" else v for v in row] for row in value], dtype=float)


def load_kernel(config: dict) -> Tuple[Kernel, Optional[DiscreteDistribution]]:
    kernel = Kernel(config["kernel"])
    source = DiscreteDistribution(config["source"]) if "source" in config else None
    return kernel, source


def load_lossy(config: dict) -> Tuple[DiscreteDistribution, np.ndarray, float]:
    return DiscreteDistribution(config["source"]), _matrix(config["distortion"]), float(config["D"])


def load_gw(config: dict) -> GwSetup:
    return GwSetup(JointDistribution(config["source"]), np.array(config["kernel_u"]), np.array(config["kernel_y1"]),
                   np.array(config["kernel_y2"]), _matrix(config["d1"]), _matrix(config["d2"]))


def load_mdc(config: dict) -> MdcSetup:
    return MdcSetup(DiscreteDistribution(config["source"]), np.array(config["aux"]), _matrix(config["d0"]),
                    _matrix(config["d1"]), _matrix(config["d2"]))


def load_gp(config: dict) -> GpSetup:
    return GpSetup(DiscreteDistribution(config["p_s"]), Kernel(config["p_u_given_s"]), np.array(config["x_map"]),
                   np.array(config["p_y_given_xs"]))


def _atomic_write(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, 'wb') as f:
        f.write(data)
    os.replace(tmp, path)


def _flatten(payload: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)) and not any(isinstance(v, dict) for v in value):
            flat[name] = json.dumps(value, default=harness._json_default)
        elif not isinstance(value, (list, tuple)):
            flat[name] = value
    return flat


def write_csv(path: str, rows: List[Dict[str, Any]]) -> None:
    fields = sorted({k for row in rows for k in row})
    tmp = f"{path}.tmp"
    with open(tmp, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    os.replace(tmp, path)


class Runner:
    """解析后的参数 + 输出目录 + session 账本"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.seed = resolve_seed(args.seed)
        self.out = args.out or os.getenv('SFRL_OUT', 'runs')
        self.cap = int(os.getenv('SFRL_PFR_CAP', str(DEFAULT_CAP)))
        os.makedirs(self.out, exist_ok=True)
        self.ledger = SessionLedger(os.path.join(self.out, 'ledger.json'))

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def finish(self, command: str, config: Any, report: Dict[str, Any], config_path: Optional[str] = None,
               csv_rows: Optional[List[Dict[str, Any]]] = None) -> int:
        record = RunRecord(
            command=command,
            config_digest=config_digest(command, config, self.seed),
            master_seed=self.seed,
            report=report,
            config_path=os.path.abspath(config_path) if config_path else None,
            config_file_digest=file_digest(config_path) if config_path else None,
            ledger=self.ledger.entries(),
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        stem = command.replace(' ', '_')
        if self.args.format == 'csv':
            rows = csv_rows if csv_rows is not None else [_flatten(report)]
            write_csv(self.path(f"{stem}.csv"), rows)
        body = json.dumps(asdict(record), indent=2, sort_keys=True, default=harness._json_default)
        _atomic_write(self.path(f"{stem}.json"), body.encode('utf-8'))
        self.ledger.save()
        logger.info(f"report written: {self.path(stem)} (pass={record.passed})")
        if not record.passed:
            logger.error(f"{command}: bound violation")
            return EXIT_VIOLATION
        return EXIT_PASS


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return int(seed)
    env = os.getenv('SFRL_SEED')
    if env is None:
        logger.warning("no --seed and no SFRL_SEED; using seed 0")
        return 0
    return int(env)


def parse_range(text: str) -> range:
    """'1..12' → range(1, 13)"""
    if '..' in text:
        lo, hi = text.split('..', 1)
        return range(int(lo), int(hi) + 1)
    return range(int(text), int(text) + 1)


# ---------------------------------------------------------------- commands

def cmd_capacity(run: Runner) -> int:
    config = load_config(run.args.kernel)
    kernel, _ = load_kernel(config)
    capacity, achieving = blahut_arimoto_capacity(kernel)
    report = {"capacity": capacity, "input": achieving.probs.tolist(),
              "output": kernel.output_marginal(achieving).probs.tolist(), "pass": True}
    return run.finish("capacity", config, report, run.args.kernel)


def cmd_rd(run: Runner) -> int:
    config = load_config(run.args.instance)
    src, d, D = load_lossy(config)
    if run.args.D is not None:
        D = run.args.D
    sol = blahut_arimoto_rate_distortion(src, d, D)
    report = {"D": D, "rate": sol.rate, "distortion": sol.distortion, "gap": sol.gap,
              "iterations": sol.iterations, "kernel": sol.kernel.rows.tolist(), "pass": True}
    return run.finish("rd", {"config": config, "D": D}, report, run.args.instance)


def _scheme(run: Runner, config: dict):
    kernel, source = load_kernel(config)
    mode = run.args.mode
    if mode == SOURCE_COUPLED and source is None:
        source = DiscreteDistribution.uniform(kernel.input_size)
    return build_scheme(kernel, run.seed, source=source, mode=mode, cap=run.cap)


def cmd_chansim(run: Runner) -> int:
    args = run.args
    config = load_config(args.kernel)
    scheme = _scheme(run, config)
    settings = {"config": config, "mode": args.mode}
    if args.action == 'encode':
        run.ledger.claim(run.seed, args.session, args.x)
        bits = sim_encode(scheme, args.x, args.session)
        _atomic_write(run.path(f"chansim_s{args.session}.bin"), write_container(bits))
        report = {"session": args.session, "x": args.x, "bits": str(bits), "length": len(bits), "pass": True}
        return run.finish("chansim encode", {**settings, "session": args.session, "x": args.x}, report, args.kernel)
    if args.action == 'decode':
        with open(args.bits, 'rb') as f:
            bits = read_container(f.read())
        y = sim_decode(scheme, bits, args.session)
        report = {"session": args.session, "y": y, "pass": True}
        return run.finish("chansim decode", {**settings, "session": args.session, "bits": str(bits)}, report,
                          args.kernel)
    trials = args.trials or 10_000
    # 评估的 session 只在本次运行内查重，不写入持久账本
    SessionLedger().claim_many(run.seed, range(args.first_session, args.first_session + trials))
    report = evaluate_scheme(scheme, trials=trials, first_session=args.first_session).as_dict()
    return run.finish("chansim eval", {**settings, "trials": trials, "first_session": args.first_session},
                      report, args.kernel)


def cmd_lossy(run: Runner) -> int:
    args = run.args
    if args.action in ('design', 'eval'):
        config = load_config(args.instance)
        src, d, D = load_lossy(config)
        settings = {"config": config, "variant": args.variant, "candidates": args.candidates}
        if args.action == 'design':
            if args.variant == SOFT:
                code = design_soft(src, d, D, run.seed)
            else:
                code = design_mixture(src, d, D, run.seed, candidates=args.candidates)
            record = code_to_record(code)
            body = json.dumps(record, indent=2, sort_keys=True).encode('utf-8')
            _atomic_write(run.path('lossy_code.json'), body)
            return run.finish("lossy design", settings, design_report(code).as_dict(), args.instance)
        trials = args.trials or 10_000
        if args.variant == SOFT:
            report = evaluate_soft(src, d, D, run.seed, codebooks=min(trials, 1000)).as_dict()
        else:
            code = design_mixture(src, d, D, run.seed, candidates=args.candidates)
            report = evaluate_mixture(code, trials, run.seed).as_dict()
        return run.finish("lossy eval", {**settings, "trials": trials}, report, args.instance)

    record = load_config(args.code)
    code = code_from_record(record)
    if args.action == 'encode':
        if code.variant == MIXTURE:
            run.ledger.claim(run.seed, args.session, args.x)
            coin = np.random.default_rng(np.random.SeedSequence([run.seed, args.session]))
            bits = mixture_encode(code, args.x, coin)
        else:
            bits = soft_encode(code, args.x)
        _atomic_write(run.path(f"lossy_s{args.session}.bin"), write_container(bits))
        report = {"x": args.x, "session": args.session, "bits": str(bits), "length": len(bits), "pass": True}
        return run.finish("lossy encode", {"record": record, "x": args.x, "session": args.session}, report, args.code)
    with open(args.bits, 'rb') as f:
        bits = read_container(f.read())
    y = mixture_decode(code, bits) if code.variant == MIXTURE else soft_decode(code, bits)
    return run.finish("lossy decode", {"record": record, "bits": str(bits)}, {"y": y, "pass": True}, args.code)


def _targets(config: dict) -> Optional[List[float]]:
    targets = config.get("distortion_targets")
    return None if targets is None else [float(t) for t in targets]


def cmd_gw(run: Runner) -> int:
    config = load_config(run.args.instance)
    setup = load_gw(config)
    code = gw_design(setup, run.seed, candidates=run.args.candidates, distortion_targets=_targets(config))
    report = gw_evaluate(code).as_dict()
    report["weights"] = code.weights
    return run.finish("gw", {"config": config, "candidates": run.args.candidates}, report, run.args.instance)


def cmd_mdc(run: Runner) -> int:
    config = load_config(run.args.instance)
    setup = load_mdc(config)
    code = mdc_design(setup, run.seed, candidates=run.args.candidates, distortion_targets=_targets(config))
    report = mdc_evaluate(code).as_dict()
    report["region"] = mdc_rate_region(setup)
    report["stages"] = per_stage_bounds(setup)
    if run.args.alpha is not None:
        report["timeshare"] = timeshare_rates(setup, run.args.alpha)
    settings = {"config": config, "candidates": run.args.candidates, "alpha": run.args.alpha}
    return run.finish("mdc", settings, report, run.args.instance)


def cmd_efi(run: Runner) -> int:
    args = run.args
    if args.action == 'example':
        if args.sweep:
            rows = lb_example_sweep(parse_range(args.sweep))
            report = {"rows": rows, "pass": all(r["pass"] for r in rows)}
            return run.finish("efi example", {"sweep": args.sweep}, report, csv_rows=rows)
        report = lb_example_build(args.k).as_dict()
        return run.finish("efi example", {"k": args.k}, report)
    config = load_config(args.instance)
    joint = JointDistribution(config["joint"])
    if args.action == 'lb':
        report = {"lower_bound": psi_lower_bound(joint), "pass": True}
        return run.finish("efi lb", {"config": config}, report, args.instance)
    trials = args.trials or 10_000
    report = efi_report(joint, trials=trials, seed=run.seed).as_dict()
    return run.finish("efi ub", {"config": config, "trials": trials}, report, args.instance)


def cmd_gp(run: Runner) -> int:
    config = load_config(run.args.setup)
    setup = load_gp(config)
    trials = run.args.trials or 10_000
    report = gp_reduce(setup, trials=trials, seed=run.seed).as_dict()
    report["rate_gap_exact"] = gp_rate_gap(setup)
    return run.finish("gp", {"config": config, "trials": trials}, report, run.args.setup)


def cmd_verify_all(run: Runner) -> int:
    result = harness.run_all(run.seed, quick=run.args.quick)
    scale = harness.QUICK if run.args.quick else harness.FULL
    for name, blob in sorted(harness.fixtures(run.seed, scale).items()):
        _atomic_write(run.path(name), blob)
    rows = [{"criterion": name, "pass": r["pass"]} for name, r in result["criteria"].items()]
    return run.finish("verify-all", {"quick": run.args.quick}, result, csv_rows=rows)


def cmd_check_record(run: Runner) -> int:
    record = load_config(run.args.record)
    path = record.get("config_path")
    if not path:
        logger.warning("record has no config file; nothing to check")
        return EXIT_PASS
    current = file_digest(path)
    stored = record.get("config_file_digest")
    logger.info(f"record {run.args.record}: run digest {record['config_digest'][:12]}, file digest {current[:12]}")
    if stored != current:
        logger.warning(f"stale record: config file {path} changed since the run")
        return EXIT_VIOLATION
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help='64 位主种子（缺省读 SFRL_SEED）')
    common.add_argument('--trials', type=int, default=None)
    common.add_argument('--out', default=None, help='输出目录（缺省读 SFRL_OUT）')
    common.add_argument('--format', choices=('json', 'csv'), default='json')

    parser = argparse.ArgumentParser(prog='sfrl', description='Poisson functional representation toolkit')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('capacity', parents=[common])
    p.add_argument('--kernel', required=True)
    p.set_defaults(handler=cmd_capacity)

    p = sub.add_parser('rd', parents=[common])
    p.add_argument('--instance', required=True)
    p.add_argument('--D', type=float, default=None)
    p.set_defaults(handler=cmd_rd)

    p = sub.add_parser('chansim', parents=[common])
    p.add_argument('action', choices=('encode', 'decode', 'eval'))
    p.add_argument('--kernel', required=True)
    p.add_argument('--mode', choices=(SOURCE_COUPLED, FIXED_INPUT), default=SOURCE_COUPLED)
    p.add_argument('--x', type=int, default=0)
    p.add_argument('--session', type=int, default=0)
    p.add_argument('--first-session', type=int, default=0)
    p.add_argument('--bits', default=None)
    p.set_defaults(handler=cmd_chansim)

    p = sub.add_parser('lossy', parents=[common])
    p.add_argument('action', choices=('design', 'encode', 'decode', 'eval'))
    p.add_argument('--instance', default=None)
    p.add_argument('--variant', choices=(SOFT, MIXTURE), default=MIXTURE)
    p.add_argument('--candidates', type=int, default=2000)
    p.add_argument('--code', default=None)
    p.add_argument('--x', type=int, default=0)
    p.add_argument('--session', type=int, default=0)
    p.add_argument('--bits', default=None)
    p.set_defaults(handler=cmd_lossy)

    for name, handler in (('gw', cmd_gw), ('mdc', cmd_mdc)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument('--instance', required=True)
        p.add_argument('--candidates', type=int, default=500)
        if name == 'mdc':
            p.add_argument('--alpha', type=float, default=None)
        p.set_defaults(handler=handler)

    p = sub.add_parser('efi', parents=[common])
    p.add_argument('action', choices=('lb', 'ub', 'example'))
    p.add_argument('--instance', default=None)
    p.add_argument('--k', type=int, default=2)
    p.add_argument('--sweep', default=None, help="k 范围，如 1..12")
    p.set_defaults(handler=cmd_efi)

    p = sub.add_parser('gp', parents=[common])
    p.add_argument('--setup', required=True)
    p.set_defaults(handler=cmd_gp)

    p = sub.add_parser('verify-all', parents=[common])
    p.add_argument('--quick', action='store_true')
    p.set_defaults(handler=cmd_verify_all)

    p = sub.add_parser('check-record', parents=[common])
    p.add_argument('record')
    p.set_defaults(handler=cmd_check_record)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(Runner(args))
    except SfrlError as e:
        logger.error(f"{args.command}: {type(e).__name__}: {e}")
        return EXIT_ERROR
    except (OSError, ValueError, KeyError, TypeError) as e:
        logger.error(f"{args.command}: bad input: {e}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
