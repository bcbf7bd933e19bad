"""Codon vocabulary and the standard genetic code."""

from itertools import product

SPECIAL_TOKENS = ("[PAD]", "[MASK]", "[CLS]", "[SEP]", "[UNK]", "[EOS]")
NUCLEOTIDES = "ACGT"
CODONS = tuple("".join(p) for p in product(NUCLEOTIDES, repeat=3))
VOCAB = SPECIAL_TOKENS + CODONS
VOCAB_SIZE = len(VOCAB)  # 70
TOKEN_TO_ID = {tok: i for i, tok in enumerate(VOCAB)}

PAD_ID, MASK_ID, CLS_ID, SEP_ID, UNK_ID, EOS_ID = range(len(SPECIAL_TOKENS))
N_SPECIAL = len(SPECIAL_TOKENS)
CODON_IDS = tuple(range(N_SPECIAL, VOCAB_SIZE))

AMINO_ACIDS = {
    "A": "Alanine",
    "R": "Arginine",
    "N": "Asparagine",
    "D": "Aspartic acid",
    "C": "Cysteine",
    "Q": "Glutamine",
    "E": "Glutamic acid",
    "G": "Glycine",
    "H": "Histidine",
    "I": "Isoleucine",
    "L": "Leucine",
    "K": "Lysine",
    "M": "Methionine",
    "F": "Phenylalanine",
    "P": "Proline",
    "S": "Serine",
    "T": "Threonine",
    "W": "Tryptophan",
    "Y": "Tyrosine",
    "V": "Valine",
    "*": "Stop",
}
SPECIAL_FAMILY = "Special"

_TCAG = "TCAG"
_TABLE = "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG"
GENETIC_CODE = {
    a + b + c: AMINO_ACIDS[_TABLE[16 * i + 4 * j + k]]
    for (i, a), (j, b), (k, c) in product(enumerate(_TCAG), repeat=3)
}

FAMILIES = tuple(sorted(set(GENETIC_CODE.values()), key=lambda f: (f == "Stop", f))) + (SPECIAL_FAMILY,)
