"""Learned rankers and their checkpoint format."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .embedding import EmbeddingHyper, SupervisedEmbedding, encode_inputs, se_encode_input
from .encoding import SPLIT, STANDARD, CandidateTable, build_memories, encode_dialog
from .memnn import AttentionTrace, MemNN, MemNNHyper
from .predict import predict

__all__ = [
    "AttentionTrace", "CandidateTable", "CheckpointError", "EmbeddingHyper", "MemNN", "MemNNHyper",
    "SPLIT", "STANDARD", "SupervisedEmbedding", "build_memories", "encode_dialog", "encode_inputs",
    "load_checkpoint", "predict", "save_checkpoint", "se_encode_input",
]
