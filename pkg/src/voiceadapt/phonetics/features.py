"""Articulatory feature vectors for the 39 ARPAbet phonemes and their distance."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

MANNERS = ("stop", "fricative", "affricate", "nasal", "liquid", "glide", "vowel")
PLACES = {
    "bilabial": 0.0, "labiodental": 0.15, "dental": 0.3, "alveolar": 0.45,
    "postalveolar": 0.6, "palatal": 0.7, "velar": 0.85, "glottal": 1.0,
}

# phoneme -> (voiced, place, manner)
CONSONANTS = {
    "P": (0, "bilabial", "stop"), "B": (1, "bilabial", "stop"),
    "T": (0, "alveolar", "stop"), "D": (1, "alveolar", "stop"),
    "K": (0, "velar", "stop"), "G": (1, "velar", "stop"),
    "F": (0, "labiodental", "fricative"), "V": (1, "labiodental", "fricative"),
    "TH": (0, "dental", "fricative"), "DH": (1, "dental", "fricative"),
    "S": (0, "alveolar", "fricative"), "Z": (1, "alveolar", "fricative"),
    "SH": (0, "postalveolar", "fricative"), "ZH": (1, "postalveolar", "fricative"),
    "HH": (0, "glottal", "fricative"),
    "CH": (0, "postalveolar", "affricate"), "JH": (1, "postalveolar", "affricate"),
    "M": (1, "bilabial", "nasal"), "N": (1, "alveolar", "nasal"), "NG": (1, "velar", "nasal"),
    "L": (1, "alveolar", "liquid"), "R": (1, "postalveolar", "liquid"),
    "W": (1, "bilabial", "glide"), "Y": (1, "palatal", "glide"),
}

# vowel -> (height, backness, rounding), all in [0, 1]
VOWELS = {
    "IY": (1.0, 0.0, 0.0), "IH": (0.8, 0.1, 0.0), "EY": (0.7, 0.0, 0.0), "EH": (0.5, 0.0, 0.0),
    "AE": (0.2, 0.0, 0.0), "AA": (0.0, 1.0, 0.0), "AO": (0.3, 1.0, 1.0), "OW": (0.55, 1.0, 1.0),
    "UH": (0.8, 0.9, 1.0), "UW": (1.0, 1.0, 1.0), "AH": (0.4, 0.5, 0.0), "ER": (0.45, 0.5, 0.5),
    "AY": (0.25, 0.4, 0.0), "AW": (0.25, 0.7, 0.5), "OY": (0.45, 0.8, 0.6),
}

INVENTORY = tuple(sorted(CONSONANTS) + sorted(VOWELS))

# per-dimension weights: voicing, place, 7 manner slots, height, backness, rounding.
# Manner slots get 0.5 so two different manners differ by 1 in total.
WEIGHTS = np.array([1.0, 1.0] + [0.5] * len(MANNERS) + [1.0, 1.0, 1.0])


def feature_vector(ph: str) -> np.ndarray:
    v = np.zeros(2 + len(MANNERS) + 3)
    if ph in CONSONANTS:
        voiced, place, manner = CONSONANTS[ph]
        v[0], v[1] = voiced, PLACES[place]
        v[2 + MANNERS.index(manner)] = 1.0
    elif ph in VOWELS:
        v[0] = 1.0
        v[2 + MANNERS.index("vowel")] = 1.0
        v[-3:] = VOWELS[ph]
    else:
        raise KeyError(f"unknown phoneme {ph!r}")
    return v


@lru_cache(maxsize=1)
def feature_table() -> dict:
    return {ph: feature_vector(ph) for ph in INVENTORY}


def _raw_distance(u, v):
    return float(np.sum(WEIGHTS * np.abs(u - v)))


@lru_cache(maxsize=1)
def distance_matrix():
    """(symbols, index, D) with D the normalised pairwise distance, max 1."""
    table = feature_table()
    vecs = np.array([table[p] for p in INVENTORY])
    raw = np.sum(WEIGHTS * np.abs(vecs[:, None, :] - vecs[None, :, :]), axis=2)
    d = raw / raw.max()
    d.setflags(write=False)
    return INVENTORY, {p: i for i, p in enumerate(INVENTORY)}, d


def phoneme_distance(a: str, b: str) -> float:
    _, index, d = distance_matrix()
    return float(d[index[a], index[b]])
