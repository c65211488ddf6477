"""Link-level simulator and DDPG learner for a full-duplex two-RIS MIMO cell."""

__version__ = "0.1.0"
