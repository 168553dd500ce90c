"""Phonetic similarity between a spoken target word and a typed response."""

from .align import Alignment, SimilarityScore, align, sequence_similarity, similarity
from .features import INVENTORY, distance_matrix, feature_table, feature_vector, phoneme_distance
from .lexicon import Lexicon, PhonemeSequence, default_lexicon, letter_to_sound, to_phonemes

__all__ = [
    "Alignment", "SimilarityScore", "align", "sequence_similarity", "similarity",
    "INVENTORY", "distance_matrix", "feature_table", "feature_vector", "phoneme_distance",
    "Lexicon", "PhonemeSequence", "default_lexicon", "letter_to_sound", "to_phonemes",
]
