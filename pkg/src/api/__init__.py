"""HTTP surface over the convex training pipeline"""
