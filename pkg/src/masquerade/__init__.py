"""Simulator of token-number ordering as a defence against MEV front running."""
