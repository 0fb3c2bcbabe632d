# 此文件包含所有内置合成数据池的预设定义

PRESET_DATA = [
    # Format: (name, description, kind, n, d, options)
    ("mean_shift", "各向同性高斯与均值平移后的高斯，MIND/FID 的闭式参考", "mean_shift", 20000, 64,
     {"shift": 1.0}),
    ("bimodal", "两个等权高斯分量组成的双峰数据，用于矩匹配攻击", "bimodal", 4000, 64,
     {"separation": 4.0, "initial_shift": 2.0}),
    ("discrimination", "随机协方差的数据池与均值、协方差都被扰动的模型池", "discrimination", 20000, 512,
     {"mean_shift": 0.05, "cov_shift": 0.05}),
    ("checkpoints", "五个逐步接近数据分布的模型池，模拟训练过程中的检查点", "checkpoints", 20000, 32,
     {"k": 5, "start_offset": 1.0, "end_offset": 0.2}),
    ("contamination", "数据池与坐标支撑不相交的污染池，用于混合扰动", "contamination", 20000, 16,
     {"offset": 10.0}),
]

# 文件角色名，generate 子命令按 {preset}_{role}.emb 写出
PRESET_ROLES = {
    "mean_shift": ("data", "model"),
    "bimodal": ("data", "initial"),
    "discrimination": ("data", "model"),
    "checkpoints": ("data", "model_0", "model_1", "model_2", "model_3", "model_4"),
    "contamination": ("data", "other"),
}
