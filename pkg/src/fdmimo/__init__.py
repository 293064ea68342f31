"""Channel estimation for full-duplex mmWave MIMO: channel models, pilot
schemes, LS/MMSE estimators, a small NumPy neural-network engine and an
experiment harness."""

__version__ = "0.1.0"
