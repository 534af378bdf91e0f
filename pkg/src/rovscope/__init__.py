"""Route origin validation measurement toolkit.

Simulates two-prefix hijack experiments over synthetic AS topologies,
preprocesses control-plane dumps and traceroutes, classifies ASes by
their ROV behaviour, and analyses IXP leakage and propagation graphs.
"""

__version__ = "0.1.0"
