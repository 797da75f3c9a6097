"""
Simulation, closed-form analytics and cross-verification for the
continuum Pólya-like random walk
"""
