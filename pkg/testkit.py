"""
测试脚本公用的运行器
每个 test_*.py 以 run_suite 汇总结果，返回进程退出码
"""
import traceback
from typing import Callable, Dict


def run_suite(title: str, tests: Dict[str, Callable[[], None]]) -> int:
    """按顺序运行测试，打印汇总；全部通过返回 0，否则 1"""
    print("=" * 60)
    print(f"🧪 {title}")
    print("=" * 60)

    results = {}
    for name, fn in tests.items():
        print(f"\n🔍 {name}...")
        try:
            fn()
            print(f"✅ {name} 通过")
            results[name] = True
        except Exception as e:
            print(f"❌ {name} 失败: {type(e).__name__}: {e}")
            traceback.print_exc()
            results[name] = False

    print("\n" + "=" * 60)
    print("📊 测试结果总结")
    print("=" * 60)
    for name, passed in results.items():
        status = "✅ 通过" if passed else "❌ 失败"
        print(f"{name}: {status}")

    print("\n" + "=" * 60)
    if all(results.values()):
        print("🎉 所有测试通过！")
        print("=" * 60)
        return 0
    print("⚠️  部分测试失败，请检查上述错误。")
    print("=" * 60)
    return 1
