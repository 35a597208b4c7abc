# 自旋-玻色子核心模块
