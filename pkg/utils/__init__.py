"""
Path algebra, statistics and artifact helpers for the transitory queue lab.
"""
