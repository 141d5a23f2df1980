"""
Plotly figures for the artifacts written by the command line.
"""
