"""
Engine package
- Dynamics, seeker, guidance, learning and harness modules
"""
