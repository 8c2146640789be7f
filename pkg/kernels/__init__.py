"""Kernels: асимптотические разложения ядер вырожденного оператора расширения"""

__version__ = "1.0.0"
