"""Convex training of two-layer ReLU networks: arrangements, programs, solvers and baselines"""
