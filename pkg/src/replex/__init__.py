"""Token loss dynamic reweighting, repetition metrics and a small seq2seq testbed."""

__version__ = "0.1.0"
