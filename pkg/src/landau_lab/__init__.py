from landau_lab.core.version import VERSION

__version__ = VERSION
