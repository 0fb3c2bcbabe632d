import math
import zlib
from typing import Tuple, Union

import numpy as np
from scipy.stats import norm

SeedKey = Union[int, str]

_UINT64 = 2 ** 64


def stable_key(key: SeedKey) -> int:
    """把字符串角色名映射为稳定的非负整数（跨进程不变，不依赖 hash 随机化）"""
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) % _UINT64


def derive_seed(master_seed: int, *keys: SeedKey) -> int:
    """
    由主种子和若干键（试验序号、角色名……）派生出 64 位子种子。

    相同输入永远得到相同输出；不同键之间互不干扰，
    因此增加指标或角色不会改变其他角色的抽样。
    """
    sequence = np.random.SeedSequence(
        entropy=int(master_seed) % _UINT64,
        spawn_key=tuple(stable_key(k) for k in keys),
    )
    low, high = sequence.generate_state(2, dtype=np.uint32)
    return int(high) << 32 | int(low)


def make_rng(seed: int, *keys: SeedKey) -> np.random.Generator:
    """构造确定性的随机数生成器"""
    sequence = np.random.SeedSequence(
        entropy=int(seed) % _UINT64,
        spawn_key=tuple(stable_key(k) for k in keys),
    )
    return np.random.default_rng(sequence)


def round_half_up(value: float) -> int:
    """四舍五入，0.5 向上取整"""
    return int(math.floor(value + 0.5))


def wilson_interval(failures: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """
    计算二项比例的 Wilson 置信区间。

    估计值为 0 时区间仍有宽度（512 次试验约为 [0, 0.0075]），不会退化为一个点。
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    z = float(norm.ppf(0.5 + confidence / 2))
    p = failures / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)
