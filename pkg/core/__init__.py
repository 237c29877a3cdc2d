"""
Numerical core of DAMC (Distributionally Aware Matrix Completion)
"""
