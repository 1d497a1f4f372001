"""Bath-reset cooling and dissipative state preparation on a free-fermion chain."""

__version__ = "0.1.0"
