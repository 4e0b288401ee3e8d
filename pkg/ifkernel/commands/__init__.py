"""Subcommands of the ifkernel CLI, one module per workflow"""
