"""
Output Services
CSV/JSON writers and SVG plotting used by the experiment runner
"""
