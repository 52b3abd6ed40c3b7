"""Corpus manifests, the synthetic-accent lab, experiment runner and CLI."""
