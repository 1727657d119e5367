"""Personalized restaurant-booking dialog toolkit.

Seeded knowledge base and dialog generator, a rule-based reference responder,
and two retrieval rankers (supervised embeddings and memory networks) with a
training and evaluation harness.
"""

__version__ = "0.1.0"
