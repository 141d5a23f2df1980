"""
Service laws, scaling, queue and limit-process simulators for the transitory queue lab.
"""
