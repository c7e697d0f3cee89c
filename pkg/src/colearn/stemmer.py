"""Classic Porter suffix-stripping stemmer.

Implements the original 1980 rule set as published: five ordered steps,
longest-suffix match within a step, measure/vowel conditions evaluated on
the candidate stem. Words shorter than three letters are returned
unchanged, as in the reference algorithm. Input is expected to be a
lowercase alphabetic token.
"""

from __future__ import annotations

_VOWELS = frozenset("aeiou")


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(word: str, end: int) -> int:
    """Number of vowel->consonant transitions in word[:end] (Porter's m)."""
    m = 0
    prev_vowel = False
    for i in range(end):
        if _is_consonant(word, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _contains_vowel(word: str, end: int) -> bool:
    return any(not _is_consonant(word, i) for i in range(end))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word: str, end: int) -> bool:
    """word[:end] ends consonant-vowel-consonant, last not w/x/y (Porter's *o)."""
    if end < 3:
        return False
    return (
        _is_consonant(word, end - 1)
        and not _is_consonant(word, end - 2)
        and _is_consonant(word, end - 3)
        and word[end - 1] not in "wxy"
    )


def _replace_longest(word: str, rules, min_measure: int) -> str:
    """Apply the longest-matching suffix rule whose measure condition holds.

    Per Porter, only the longest matching suffix is considered; if its
    condition fails, no rule in the step applies.
    """
    for suffix, replacement in rules:
        if word.endswith(suffix):
            stem_len = len(word) - len(suffix)
            if _measure(word, stem_len) > min_measure:
                return word[:stem_len] + replacement
            return word
    return word


def _step1a(word: str) -> str:
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies"):
        return word[:-2]
    if word.endswith("ss"):
        return word
    if word.endswith("s"):
        return word[:-1]
    return word


def _step1b(word: str) -> str:
    if word.endswith("eed"):
        if _measure(word, len(word) - 3) > 0:
            return word[:-1]
        return word
    removed = None
    if word.endswith("ed"):
        if _contains_vowel(word, len(word) - 2):
            removed = word[:-2]
    elif word.endswith("ing"):
        if _contains_vowel(word, len(word) - 3):
            removed = word[:-3]
    if removed is None:
        return word
    if removed.endswith(("at", "bl", "iz")):
        return removed + "e"
    if _ends_double_consonant(removed) and removed[-1] not in "lsz":
        return removed[:-1]
    if _measure(removed, len(removed)) == 1 and _ends_cvc(removed, len(removed)):
        return removed + "e"
    return removed


def _step1c(word: str) -> str:
    if word.endswith("y") and _contains_vowel(word, len(word) - 1):
        return word[:-1] + "i"
    return word


_STEP2 = sorted(
    [
        ("ational", "ate"),
        ("tional", "tion"),
        ("enci", "ence"),
        ("anci", "ance"),
        ("izer", "ize"),
        ("abli", "able"),
        ("alli", "al"),
        ("entli", "ent"),
        ("eli", "e"),
        ("ousli", "ous"),
        ("ization", "ize"),
        ("ation", "ate"),
        ("ator", "ate"),
        ("alism", "al"),
        ("iveness", "ive"),
        ("fulness", "ful"),
        ("ousness", "ous"),
        ("aliti", "al"),
        ("iviti", "ive"),
        ("biliti", "ble"),
    ],
    key=lambda rule: len(rule[0]),
    reverse=True,
)

_STEP3 = sorted(
    [
        ("icate", "ic"),
        ("ative", ""),
        ("alize", "al"),
        ("iciti", "ic"),
        ("ical", "ic"),
        ("ful", ""),
        ("ness", ""),
    ],
    key=lambda rule: len(rule[0]),
    reverse=True,
)

_STEP4 = sorted(
    ["al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
     "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize"],
    key=len,
    reverse=True,
)


def _step4(word: str) -> str:
    for suffix in _STEP4:
        if word.endswith(suffix):
            stem_len = len(word) - len(suffix)
            if _measure(word, stem_len) > 1:
                if suffix == "ion" and word[stem_len - 1] not in "st":
                    return word
                return word[:stem_len]
            return word
    return word


def _step5a(word: str) -> str:
    if not word.endswith("e"):
        return word
    stem_len = len(word) - 1
    m = _measure(word, stem_len)
    if m > 1 or (m == 1 and not _ends_cvc(word, stem_len)):
        return word[:stem_len]
    return word


def _step5b(word: str) -> str:
    if (
        _measure(word, len(word)) > 1
        and _ends_double_consonant(word)
        and word.endswith("l")
    ):
        return word[:-1]
    return word


def porter_stem(word: str) -> str:
    """Stem one lowercase word with the classic Porter rules."""
    if len(word) < 3:
        return word
    word = _step1a(word)
    word = _step1b(word)
    word = _step1c(word)
    word = _replace_longest(word, _STEP2, 0)
    word = _replace_longest(word, _STEP3, 0)
    word = _step4(word)
    word = _step5a(word)
    word = _step5b(word)
    return word
