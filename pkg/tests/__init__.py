"""
OpenClaw Pro 测试模块
"""
