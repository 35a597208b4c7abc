# 评估模块 