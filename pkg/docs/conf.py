import os
import sys
sys.path.insert(0, os.path.abspath('..'))  # repository root, so that irl_forge is importable

project = 'irl_forge'
extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
    'sphinx.ext.viewcode',
]
napoleon_numpy_docstring = True
autodoc_member_order = 'bysource'

html_theme = 'sphinx_rtd_theme'
