"""Base/novel category split by stemmed-word overlap with a reference action list.

A benchmark class is *base* when every one of its content words (stopwords
removed) has its stem in the stemmed word set of the reference list, otherwise
*novel*. Word normalization is lower-casing, punctuation stripping, a small
irregular-form table, and Porter stemming.
"""

from __future__ import annotations

import re

from .exceptions import InputError

# The built-in stopword list, applied verbatim to benchmark class tokens.
STOPWORDS = frozenset("""
a an and are as at be but by for from had has have he her his if in into is it
its of on or she so that the their them they this to was were will with you
your not no nor does do did doing done being been am we us our ours i me my
""".split())

# Irregular past/plural forms folded to their lemma before stemming.
IRREGULAR_FORMS = {
    "ran": "run",
    "swam": "swim",
    "sang": "sing",
    "sung": "sing",
    "flew": "fly",
    "threw": "throw",
    "ate": "eat",
    "drank": "drink",
    "rode": "ride",
    "drove": "drive",
    "dove": "dive",
    "swung": "swing",
    "feet": "foot",
    "teeth": "tooth",
    "children": "child",
    "men": "man",
    "women": "woman",
}

_VOWELS = "aeiou"


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of vowel-consonant sequences ([C](VC)^m[V])."""
    if not stem:
        return 0
    form = []
    for i in range(len(stem)):
        c = "c" if _is_consonant(stem, i) else "v"
        if not form or form[-1] != c:
            form.append(c)
    return "".join(form).count("vc")


def _has_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _double_consonant(word: str) -> bool:
    return len(word) >= 2 and word[-1] == word[-2] and _is_consonant(word, len(word) - 1)


def _cvc_at(word: str, i: int) -> bool:
    """consonant-vowel-consonant ending at position i, last not in wxy."""
    if i < 2 or not _is_consonant(word, i) or _is_consonant(word, i - 1) or not _is_consonant(word, i - 2):
        return False
    return word[i] not in "wxy"


def _step1ab(w: str) -> str:
    if w.endswith("s"):
        if w.endswith("sses"):
            w = w[:-2]
        elif w.endswith("ies"):
            w = w[:-3] + "i"
        elif len(w) >= 2 and w[-2] != "s":
            w = w[:-1]
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            w = w[:-1]
    else:
        for suffix in ("ed", "ing"):
            if w.endswith(suffix) and _has_vowel(w[:-len(suffix)]):
                w = w[:-len(suffix)]
                if w.endswith(("at", "bl", "iz")):
                    w += "e"
                elif _double_consonant(w) and w[-1] not in "lsz":
                    w = w[:-1]
                elif _measure(w) == 1 and _cvc_at(w, len(w) - 1):
                    w += "e"
                break
    return w


def _step1c(w: str) -> str:
    if w.endswith("y") and _has_vowel(w[:-1]):
        return w[:-1] + "i"
    return w


_STEP2 = {
    "a": (("ational", "ate"), ("tional", "tion")),
    "c": (("enci", "ence"), ("anci", "ance")),
    "e": (("izer", "ize"),),
    "l": (("bli", "ble"), ("alli", "al"), ("entli", "ent"), ("eli", "e"), ("ousli", "ous")),
    "o": (("ization", "ize"), ("ation", "ate"), ("ator", "ate")),
    "s": (("alism", "al"), ("iveness", "ive"), ("fulness", "ful"), ("ousness", "ous")),
    "t": (("aliti", "al"), ("iviti", "ive"), ("biliti", "ble")),
    "g": (("logi", "log"),),
}

_STEP3 = {
    "e": (("icate", "ic"), ("ative", ""), ("alize", "al")),
    "i": (("iciti", "ic"),),
    "l": (("ical", "ic"), ("ful", "")),
    "s": (("ness", ""),),
}

_STEP4 = {
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


def _apply_rules(w: str, rules, min_measure: int) -> str:
    for suffix, repl in rules:
        if w.endswith(suffix) and len(suffix) <= len(w):
            prefix = w[:-len(suffix)]
            if _measure(prefix) > min_measure:
                return prefix + repl
            return w  # suffix matched but context too short: stop here
    return w


def _step2(w: str) -> str:
    if len(w) < 2:
        return w
    return _apply_rules(w, _STEP2.get(w[-2], ()), 0)


def _step3(w: str) -> str:
    return _apply_rules(w, ((s, r) for s, r in _STEP3.get(w[-1], ())), 0)


def _step4(w: str) -> str:
    if len(w) < 2:
        return w
    for suffix in _STEP4.get(w[-2], ()):
        if w.endswith(suffix):
            prefix = w[:-len(suffix)]
            if suffix == "ion" and (not prefix or prefix[-1] not in "st"):
                continue
            if _measure(prefix) > 1:
                return prefix
            return w
    return w


def _step5(w: str) -> str:
    scope = w  # measure for the -ll rule is taken over the word as it enters
    if w.endswith("e"):
        a = _measure(w)
        if a > 1 or (a == 1 and not _cvc_at(w, len(w) - 2)):
            w = w[:-1]
    if w.endswith("l") and _double_consonant(w) and _measure(scope) > 1:
        w = w[:-1]
    return w


def porter_stem(word: str) -> str:
    """Porter-stem a lower-case word; words of length <= 2 pass through."""
    if len(word) <= 2:
        return word
    for step in (_step1ab, _step1c, _step2, _step3, _step4, _step5):
        word = step(word)
    return word


def normalize_word(word: str) -> str:
    """Lower-case, strip punctuation, fold irregular forms, Porter-stem."""
    if not word:
        raise InputError("cannot normalize an empty token")
    cleaned = re.sub(r"[^a-z0-9]", "", word.lower())
    if not cleaned:
        raise InputError(f"token '{word}' has no alphanumeric content")
    return porter_stem(IRREGULAR_FORMS.get(cleaned, cleaned))


def tokenize(text: str) -> list:
    return [t for t in re.split(r"[^A-Za-z0-9]+", text) if t]


def split_categories(benchmark_classes, reference_classes, stopwords=None):
    """Partition benchmark classes into (base, novel).

    A class is base iff every content word's stem appears in the stemmed word
    set of the reference classes; order of the inputs is preserved.
    """
    if not benchmark_classes:
        raise InputError("benchmark class list is empty")
    stop = STOPWORDS if stopwords is None else frozenset(s.lower() for s in stopwords)
    reference_stems = set()
    for ref in reference_classes:
        for token in tokenize(ref):
            reference_stems.add(normalize_word(token))
    base, novel = [], []
    for cls in benchmark_classes:
        content = [t for t in tokenize(cls) if t.lower() not in stop]
        if not content:
            raise InputError(f"class '{cls}' has no content words after stopword removal")
        stems = [normalize_word(t) for t in content]
        if all(s in reference_stems for s in stems):
            base.append(cls)
        else:
            novel.append(cls)
    return base, novel
