# Predictive recursion with quadrature and PRticle engines
__version__ = "0.1.0"
