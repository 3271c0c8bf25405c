"""Higher-order extragradient-type methods for (weakly) monotone VIs in lp geometry."""

__version__ = "0.1.0"
