# UI模块 