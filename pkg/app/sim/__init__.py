"""Discrete-event simulation engine for in-vehicle networks"""
