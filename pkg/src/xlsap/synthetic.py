"""Synthetic multilingual synonym corpus for desk-scale transfer experiments.

Concepts get a random stem. English synonyms are stem variants, some with
modifier words drawn from a small shared vocabulary (the source of hard
negatives). Each pseudo-language rewrites English names with a fixed
character substitution on stems plus a word-level dictionary for modifiers,
so foreign names share some but far from all n-grams with English.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from xlsap.bitext import TranslationPair
from xlsap.core import NameRecord
from xlsap.linker import EvalExample
from xlsap.rng import SplitMix64

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"
SUFFIXES = ["itis", "osis", "emia", "oma", "algia", "pathy", "ase", "ine"]


@dataclass
class SyntheticCorpus:
    train: list[NameRecord]
    ontology: list[NameRecord]
    tests: dict[str, list[EvalExample]]
    bitext: list[TranslationPair] = field(default_factory=list)
    languages: list[str] = field(default_factory=list)

    def english(self) -> list[NameRecord]:
        return [r for r in self.train if r.lang == "en"]


def _word(rng: SplitMix64, syllables: int) -> str:
    return "".join(
        CONSONANTS[rng.randbelow(len(CONSONANTS))] + VOWELS[rng.randbelow(len(VOWELS))]
        for _ in range(syllables)
    )


def _substitution(rng: SplitMix64, n_swaps: int) -> dict[str, str]:
    letters = CONSONANTS + VOWELS
    mapping = {}
    for i in rng.sample(len(letters), n_swaps):
        src = letters[i]
        pool = CONSONANTS if src in CONSONANTS else VOWELS
        mapping[src] = pool[(pool.index(src) + 1 + rng.randbelow(len(pool) - 1)) % len(pool)]
    return mapping


@dataclass
class PseudoLanguage:
    code: str
    letters: dict[str, str]
    ending: str
    words: dict[str, str]

    def stem(self, word: str) -> str:
        return "".join(self.letters.get(c, c) for c in word) + self.ending

    def translate(self, name: str) -> str:
        return " ".join(self.words.get(w) or self.stem(w) for w in name.split(" "))


def make_corpus(
    seed: int = 0,
    n_concepts: int = 500,
    languages: tuple[str, ...] = ("xa", "xb", "xc"),
    n_modifiers: int = 24,
    n_swaps: int = 9,
    n_bitext: int = 1000,
) -> SyntheticCorpus:
    """Generate concepts with 3 English and 2-per-language foreign synonyms.

    One foreign synonym per concept and language is held out as the test
    query; everything else is both training data and the candidate index.
    ``n_bitext`` English->foreign single-word translation pairs are drawn
    from stems and modifiers, cycling through the languages.
    """
    rng = SplitMix64(seed)
    modifiers = sorted({_word(rng, 2 + rng.randbelow(2)) for _ in range(n_modifiers * 2)})[:n_modifiers]
    langs = []
    for code in languages:
        ending = VOWELS[rng.randbelow(len(VOWELS))] + CONSONANTS[rng.randbelow(len(CONSONANTS))]
        words = {m: _word(rng, 2 + rng.randbelow(2)) for m in modifiers}
        langs.append(PseudoLanguage(code, _substitution(rng, n_swaps), ending, words))

    train, ontology = [], []
    tests: dict[str, list[EvalExample]] = {lang.code: [] for lang in langs}
    stems = []
    used = set()
    for c in range(n_concepts):
        cui = f"C{9000000 + c:07d}"
        stem = _word(rng, 2 + rng.randbelow(2))
        while stem in used:
            stem = _word(rng, 2 + rng.randbelow(2))
        used.add(stem)
        stems.append(stem)
        sfx = rng.sample(len(SUFFIXES), 2)
        mods = rng.sample(len(modifiers), 2)
        english = [
            stem,
            f"{stem}{SUFFIXES[sfx[0]]} {modifiers[mods[0]]}",
            f"{modifiers[mods[1]]} {stem}{SUFFIXES[sfx[1]]}",
        ]
        for name in english:
            rec = NameRecord(name, cui, "en")
            train.append(rec)
            ontology.append(rec)
        for lang in langs:
            order = rng.sample(3, 2)
            kept, held = (lang.translate(english[i]) for i in order)
            rec = NameRecord(kept, cui, lang.code)
            train.append(rec)
            ontology.append(rec)
            tests[lang.code].append(EvalExample("", held, cui, lang.code))

    vocab = [(w, i) for i, w in enumerate(stems)] + [(m, None) for m in modifiers]
    bitext = []
    for j in range(n_bitext):
        lang = langs[j % len(langs)]
        word, _ = vocab[rng.randbelow(len(vocab))]
        bitext.append(TranslationPair(word, lang.translate(word), "en", lang.code))
    return SyntheticCorpus(train, ontology, tests, bitext, [lang.code for lang in langs])
