"""Knowledge-aided federated learning over energy-limited wireless networks.

Simulator and library: prototype-exchange training, per-round latency and
energy model, closed-form power control, Lambert-W bandwidth allocation and
Lyapunov-based online device scheduling.
"""

__version__ = "0.1.0"
