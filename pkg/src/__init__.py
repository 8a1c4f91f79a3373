"""deconvlab - nonparametric density deconvolution lab"""

__version__ = "0.1.0"
