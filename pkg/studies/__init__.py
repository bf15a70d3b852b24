"""
Probin - Studies Module
Oracles analytiques et études de limites
"""

from .limits import coating_sweep, p_continuity_scan, p_limit_classify_inf, p_limit_scan_one
