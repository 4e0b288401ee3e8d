"""Kernel smoothing, derivative and instantaneous-frequency estimation"""
