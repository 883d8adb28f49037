"""
Core Package
格点、聚类、代数数、分岔方程、多尺度传播子、逐阶递推与树展开
"""
