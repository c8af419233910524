#!/usr/bin/env python3
"""
命令行测试
在临时输出目录里调用 sfrl.main，检查退出码、报告内容与复现性
"""
import json
import os
import sys
import tempfile

import numpy as np

import sfrl
from chansim import build_scheme, sim_transmit
from harness import gw_instances
from probspace import DiscreteDistribution, Kernel, binary_entropy
from testkit import run_suite

SEED = 31337


def _write(folder, name, payload):
    path = os.path.join(folder, name)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f)
    return path


def _report(folder, stem):
    with open(os.path.join(folder, f"{stem}.json"), 'r', encoding='utf-8') as f:
        return json.load(f)


def _run(folder, *argv):
    return sfrl.main([*argv, '--seed', str(SEED), '--out', folder])


def test_capacity_and_record():
    with tempfile.TemporaryDirectory() as tmp:
        kernel = _write(tmp, 'bsc.json', {"kernel": [[0.89, 0.11], [0.11, 0.89]]})
        assert _run(tmp, 'capacity', '--kernel', kernel) == sfrl.EXIT_PASS
        record = _report(tmp, 'capacity')
        assert abs(record["report"]["capacity"] - (1.0 - binary_entropy(0.11))) < 1e-6
        assert record["master_seed"] == SEED and record["tool_version"] == sfrl.TOOL_VERSION
        first = record["report"]
        assert _run(tmp, 'capacity', '--kernel', kernel) == sfrl.EXIT_PASS
        assert _report(tmp, 'capacity')["report"] == first

        record_path = os.path.join(tmp, 'capacity.json')
        assert sfrl.main(['check-record', record_path, '--out', tmp]) == sfrl.EXIT_PASS
        _write(tmp, 'bsc.json', {"kernel": [[0.9, 0.1], [0.1, 0.9]]})
        assert sfrl.main(['check-record', record_path, '--out', tmp]) == sfrl.EXIT_VIOLATION


def test_bad_inputs_exit_2():
    with tempfile.TemporaryDirectory() as tmp:
        broken = os.path.join(tmp, 'broken.json')
        with open(broken, 'w', encoding='utf-8') as f:
            f.write('{"kernel": [[0.5, 0.5]')
        assert _run(tmp, 'capacity', '--kernel', broken) == sfrl.EXIT_ERROR
        assert _run(tmp, 'capacity', '--kernel', os.path.join(tmp, 'missing.json')) == sfrl.EXIT_ERROR
        bad_rows = _write(tmp, 'bad.json', {"kernel": [[0.5, 0.6], [0.5, 0.5]]})
        assert _run(tmp, 'capacity', '--kernel', bad_rows) == sfrl.EXIT_ERROR
        lossy = _write(tmp, 'rd.json', {"source": [0.5, 0.5], "distortion": [[0, 1], [1, 0]], "D": 0.1})
        assert _run(tmp, 'rd', '--instance', lossy) == sfrl.EXIT_PASS
        assert _run(tmp, 'rd', '--instance', lossy, '--D', '-0.2') == sfrl.EXIT_ERROR


def test_chansim_encode_decode():
    with tempfile.TemporaryDirectory() as tmp:
        rows = [[0.89, 0.11], [0.11, 0.89]]
        kernel = _write(tmp, 'bsc.json', {"kernel": rows, "source": [0.5, 0.5]})
        assert _run(tmp, 'chansim', 'encode', '--kernel', kernel, '--x', '1', '--session', '4') == sfrl.EXIT_PASS
        blob = os.path.join(tmp, 'chansim_s4.bin')
        assert os.path.exists(blob)
        assert _run(tmp, 'chansim', 'decode', '--kernel', kernel, '--session', '4', '--bits', blob) == sfrl.EXIT_PASS
        decoded = _report(tmp, 'chansim_decode')["report"]["y"]
        scheme = build_scheme(Kernel(rows), SEED, DiscreteDistribution.uniform(2))
        _, outcome = sim_transmit(scheme, 1, 4)
        assert decoded == outcome.y
        # 同一输入重复编码得到同样的码流；换输入则拒绝
        first_bits = _report(tmp, 'chansim_encode')["report"]["bits"]
        assert _run(tmp, 'chansim', 'encode', '--kernel', kernel, '--x', '1', '--session', '4') == sfrl.EXIT_PASS
        assert _report(tmp, 'chansim_encode')["report"]["bits"] == first_bits
        assert _run(tmp, 'chansim', 'encode', '--kernel', kernel, '--x', '0', '--session', '4') == sfrl.EXIT_ERROR
        assert _report(tmp, 'chansim_encode')["ledger"] == [f"{SEED}:4"]


def test_chansim_eval_rerun():
    with tempfile.TemporaryDirectory() as tmp:
        kernel = _write(tmp, 'bsc.json', {"kernel": [[0.89, 0.11], [0.11, 0.89]]})
        argv = ('chansim', 'eval', '--kernel', kernel, '--trials', '1000')
        assert _run(tmp, *argv) == sfrl.EXIT_PASS
        first = _report(tmp, 'chansim_eval')
        assert _run(tmp, *argv) == sfrl.EXIT_PASS
        second = _report(tmp, 'chansim_eval')
        assert second["report"] == first["report"]
        assert second["config_digest"] == first["config_digest"]
        assert second["ledger"] == []
        record_path = os.path.join(tmp, 'chansim_eval.json')
        assert sfrl.main(['check-record', record_path, '--out', tmp]) == sfrl.EXIT_PASS


def test_lossy_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        instance = _write(tmp, 'rd.json', {"source": [0.5, 0.5], "distortion": [[0, 1], [1, 0]], "D": 0.2})
        assert _run(tmp, 'lossy', 'design', '--instance', instance, '--candidates', '100') == sfrl.EXIT_PASS
        code = os.path.join(tmp, 'lossy_code.json')
        assert _report(tmp, 'lossy_design')["report"]["pass"]
        assert _run(tmp, 'lossy', 'encode', '--code', code, '--x', '1', '--session', '2') == sfrl.EXIT_PASS
        blob = os.path.join(tmp, 'lossy_s2.bin')
        assert _run(tmp, 'lossy', 'decode', '--code', code, '--bits', blob) == sfrl.EXIT_PASS
        assert _report(tmp, 'lossy_decode')["report"]["y"] in (0, 1)


def test_efi_commands():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'efi', 'example', '--k', '2') == sfrl.EXIT_PASS
        report = _report(tmp, 'efi_example')["report"]
        assert abs(report["H(V)"] - 1.75) < 1e-9 and abs(report["I(X;Y)"] - 0.25) < 1e-9
        assert _run(tmp, 'efi', 'example', '--sweep', '1..4', '--format', 'csv') == sfrl.EXIT_PASS
        with open(os.path.join(tmp, 'efi_example.csv'), 'r', encoding='utf-8') as f:
            assert len(f.read().strip().splitlines()) == 5
        joint = _write(tmp, 'joint.json', {"joint": [[0.445, 0.055], [0.055, 0.445]]})
        assert _run(tmp, 'efi', 'lb', '--instance', joint) == sfrl.EXIT_PASS
        assert _report(tmp, 'efi_lb')["report"]["lower_bound"] > 0


def test_gray_wyner_command():
    setup, _ = gw_instances()["identical"]
    payload = {
        "source": setup.source.probs.tolist(),
        "kernel_u": setup.kernel_u.tolist(),
        "kernel_y1": setup.kernel_y1.tolist(),
        "kernel_y2": setup.kernel_y2.tolist(),
        "d1": setup.d1.tolist(),
        "d2": setup.d2.tolist(),
    }
    with tempfile.TemporaryDirectory() as tmp:
        instance = _write(tmp, 'gw.json', payload)
        assert _run(tmp, 'gw', '--instance', instance, '--candidates', '20') == sfrl.EXIT_PASS
        report = _report(tmp, 'gw')["report"]
        assert report["pass"] and abs(sum(report["weights"]) - 1.0) < 1e-9
        assert np.isclose(report["distortions"]["D1"], 0.0)


def test_parse_range_and_seed():
    assert sfrl.parse_range('1..12') == range(1, 13)
    assert sfrl.parse_range('3') == range(3, 4)
    assert sfrl.resolve_seed(5) == 5
    digest = sfrl.config_digest('capacity', {"kernel": [[1.0]]}, 1)
    assert digest == sfrl.config_digest('capacity', {"kernel": [[1.0]]}, 1)
    assert digest != sfrl.config_digest('capacity', {"kernel": [[1.0]]}, 2)


def run_all_tests():
    return run_suite("命令行测试套件", {
        "容量与运行记录": test_capacity_and_record,
        "错误输入退出码": test_bad_inputs_exit_2,
        "信道模拟编解码": test_chansim_encode_decode,
        "信道模拟评估可重跑": test_chansim_eval_rerun,
        "有损编码流程": test_lossy_pipeline,
        "EFI 命令": test_efi_commands,
        "Gray–Wyner 命令": test_gray_wyner_command,
        "范围与种子": test_parse_range_and_seed,
    })


if __name__ == "__main__":
    sys.exit(run_all_tests())
