"""Desk-scale simulation toolkit for closed-loop brain co-processors.

Submodules: ``plant`` (simulated motor plant and spiking network),
``decoders``, ``encoders``, ``mimo`` (probit-Volterra spike models),
``coproc`` (co-processor and emulator networks) and ``harness``
(scenarios, metrics, persistence, CLI).
"""
__version__ = "0.1.0"
