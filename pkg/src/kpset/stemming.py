"""Porter stemming and phrase normalization.

Implements the classic Porter (1980) suffix-stripping algorithm, following
the author's canonical C port (including its two documented departures:
``bli -> ble`` and ``logi -> log``, and leaving words of length <= 2
untouched). Used both for the present/absent keyphrase split and for
stem-level evaluation matching.
"""

from __future__ import annotations

_VOWELS = "aeiou"


class _Buffer:
    """Mutable word buffer with the offset bookkeeping the algorithm needs.

    ``end`` is the index of the last live character; ``stem_end`` marks the
    end of the candidate stem after a suffix match.
    """

    def __init__(self, word: str):
        self.b = word
        self.end = len(word) - 1
        self.stem_end = 0

    def is_cons(self, i: int) -> bool:
        ch = self.b[i]
        if ch in _VOWELS:
            return False
        if ch == "y":
            return i == 0 or not self.is_cons(i - 1)
        return True

    def measure(self) -> int:
        """Count vowel-consonant sequences in b[0..stem_end]."""
        i, n = 0, 0
        while True:
            if i > self.stem_end:
                return n
            if not self.is_cons(i):
                break
            i += 1
        i += 1
        while True:
            while True:
                if i > self.stem_end:
                    return n
                if self.is_cons(i):
                    break
                i += 1
            i += 1
            n += 1
            while True:
                if i > self.stem_end:
                    return n
                if not self.is_cons(i):
                    break
                i += 1
            i += 1

    def has_vowel(self) -> bool:
        return any(not self.is_cons(i) for i in range(self.stem_end + 1))

    def double_cons(self, i: int) -> bool:
        return i > 0 and self.b[i] == self.b[i - 1] and self.is_cons(i)

    def cvc(self, i: int) -> bool:
        if i < 2 or not self.is_cons(i) or self.is_cons(i - 1) or not self.is_cons(i - 2):
            return False
        return self.b[i] not in "wxy"

    def ends(self, suffix: str) -> bool:
        length = len(suffix)
        if suffix[-1] != self.b[self.end]:
            return False
        if length > self.end + 1:
            return False
        if self.b[self.end - length + 1 : self.end + 1] != suffix:
            return False
        self.stem_end = self.end - length
        return True

    def set_suffix(self, s: str) -> None:
        self.b = self.b[: self.stem_end + 1] + s
        self.end = len(self.b) - 1

    def replace_if_m(self, s: str) -> None:
        if self.measure() > 0:
            self.set_suffix(s)


def _step1ab(w: _Buffer) -> None:
    if w.b[w.end] == "s":
        if w.ends("sses"):
            w.end -= 2
        elif w.ends("ies"):
            w.set_suffix("i")
        elif w.b[w.end - 1] != "s":
            w.end -= 1
    if w.ends("eed"):
        if w.measure() > 0:
            w.end -= 1
    elif (w.ends("ed") or w.ends("ing")) and w.has_vowel():
        w.end = w.stem_end
        if w.ends("at"):
            w.set_suffix("ate")
        elif w.ends("bl"):
            w.set_suffix("ble")
        elif w.ends("iz"):
            w.set_suffix("ize")
        elif w.double_cons(w.end):
            if w.b[w.end - 1] not in "lsz":
                w.end -= 1
        elif w.measure() == 1 and w.cvc(w.end):
            w.set_suffix("e")


def _step1c(w: _Buffer) -> None:
    if w.ends("y") and w.has_vowel():
        w.b = w.b[: w.end] + "i"


_STEP2_RULES = {
    "a": (("ational", "ate"), ("tional", "tion")),
    "c": (("enci", "ence"), ("anci", "ance")),
    "e": (("izer", "ize"),),
    "l": (("bli", "ble"), ("alli", "al"), ("entli", "ent"), ("eli", "e"), ("ousli", "ous")),
    "o": (("ization", "ize"), ("ation", "ate"), ("ator", "ate")),
    "s": (("alism", "al"), ("iveness", "ive"), ("fulness", "ful"), ("ousness", "ous")),
    "t": (("aliti", "al"), ("iviti", "ive"), ("biliti", "ble")),
    "g": (("logi", "log"),),
}

_STEP3_RULES = {
    "e": (("icate", "ic"), ("ative", ""), ("alize", "al")),
    "i": (("iciti", "ic"),),
    "l": (("ical", "ic"), ("ful", "")),
    "s": (("ness", ""),),
}


def _apply_table(w: _Buffer, rules, key_offset: int) -> None:
    for suffix, replacement in rules.get(w.b[w.end - key_offset], ()):
        if w.ends(suffix):
            w.replace_if_m(replacement)
            return


_STEP4_SUFFIXES = {
    "a": ("al",),
    "c": ("ance", "ence"),
    "e": ("er",),
    "i": ("ic",),
    "l": ("able", "ible"),
    "n": ("ant", "ement", "ment", "ent"),
    "o": ("ion", "ou"),
    "s": ("ism",),
    "t": ("ate", "iti"),
    "u": ("ous",),
    "v": ("ive",),
    "z": ("ize",),
}


def _step4(w: _Buffer) -> None:
    for suffix in _STEP4_SUFFIXES.get(w.b[w.end - 1], ()):
        if w.ends(suffix):
            if suffix == "ion" and w.b[w.stem_end] not in "st":
                continue
            if w.measure() > 1:
                w.end = w.stem_end
            return


def _step5(w: _Buffer) -> None:
    w.stem_end = w.end
    if w.b[w.end] == "e":
        a = w.measure()
        if a > 1 or (a == 1 and not w.cvc(w.end - 1)):
            w.end -= 1
    if w.b[w.end] == "l" and w.double_cons(w.end) and w.measure() > 1:
        w.end -= 1


def porter_stem(word: str) -> str:
    """Stem a single lowercase word; non-ASCII-alphabetic input is returned as is."""
    if not word.isascii() or not word.isalpha():
        return word
    word = word.lower()
    if len(word) <= 2:
        return word
    w = _Buffer(word)
    _step1ab(w)
    _step1c(w)
    _apply_table(w, _STEP2_RULES, 1)
    _apply_table(w, _STEP3_RULES, 0)
    _step4(w)
    _step5(w)
    return w.b[: w.end + 1]


def normalize_phrase(tokens: list[str]) -> tuple[str, ...]:
    """Lowercase and stem each token of a phrase; drops empty tokens."""
    out = []
    for tok in tokens:
        for part in tok.lower().split():
            out.append(porter_stem(part))
    return tuple(out)
