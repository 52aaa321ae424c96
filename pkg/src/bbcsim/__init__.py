"""Asynchronous binary Byzantine consensus: algorithms, common coins and a simulator."""
__version__ = "0.1.0"
