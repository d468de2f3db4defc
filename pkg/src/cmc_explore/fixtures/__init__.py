"""Frozen environment documents and builtin experiment configurations"""
