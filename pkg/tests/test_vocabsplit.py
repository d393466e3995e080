import pytest

from ovtal.exceptions import InputError
from ovtal.vocabsplit import STOPWORDS, normalize_word, porter_stem, split_categories

# Frozen from the canonical Porter reference implementation (buffer-pointer
# ANSI-C port); our functional rewrite must agree on every entry.
REFERENCE_STEMS = {
    "running": "run",
    "carries": "carri",
    "run": "run",
    "jogging": "jog",
    "swimming": "swim",
    "dancing": "danc",
    "flies": "fli",
    "happiness": "happi",
    "relational": "relat",
    "caresses": "caress",
    "ponies": "poni",
    "agreed": "agre",
    "plastered": "plaster",
    "motoring": "motor",
    "sing": "sing",
    "conflated": "conflat",
    "troubled": "troubl",
    "sized": "size",
    "hopping": "hop",
    "tanned": "tan",
    "falling": "fall",
    "hissing": "hiss",
    "fizzed": "fizz",
    "failing": "fail",
    "filing": "file",
    "feed": "feed",
    "trying": "try",
    "skiing": "ski",
    "archery": "archeri",
    "skies": "ski",
    "died": "di",
    "cried": "cri",
    "electricity": "electr",
    "national": "nation",
    "triplicate": "triplic",
    "formative": "form",
    "oscillator": "oscil",
    "controllable": "control",
    "roll": "roll",
    "rate": "rate",
    "crying": "cry",
    "string": "string",
    "meetings": "meet",
    "cats": "cat",
    "marathon": "marathon",
    "javelin": "javelin",
    "cycling": "cycl",
    "throwing": "throw",
    "jumping": "jump",
    "climbing": "climb",
    "diving": "dive",
    "surfing": "surf",
    "bowling": "bowl",
    "skating": "skate",
    "juggling": "juggl",
    "knitting": "knit",
    "abseiling": "abseil",
    "playing": "plai",
    "singing": "sing",
    "barbecuing": "barbecu",
    "grooming": "groom",
    "washing": "wash",
    "dishes": "dish",
    "vacuuming": "vacuum",
    "ironing": "iron",
    "shaving": "shave",
    "brushing": "brush",
}


def test_porter_matches_reference_table():
    for word, want in REFERENCE_STEMS.items():
        assert porter_stem(word) == want, f"{word}: {porter_stem(word)} != {want}"


def test_normalize_word_examples():
    assert normalize_word("Running") == "run"
    assert normalize_word("run") == "run"
    assert normalize_word("carries") == "carri"


def test_normalize_strips_punctuation_and_case():
    assert normalize_word("Jogging!") == "jog"
    assert normalize_word("HIGH-FIVE") == normalize_word("highfive")


def test_normalize_irregular_forms():
    assert normalize_word("ran") == "run"
    assert normalize_word("swam") == "swim"
    assert normalize_word("threw") == "throw"


def test_normalize_rejects_empty():
    with pytest.raises(InputError):
        normalize_word("")
    with pytest.raises(InputError):
        normalize_word("!!!")


def test_split_base_via_stem_overlap():
    base, novel = split_categories(["jogging"], ["jog around the park"])
    assert base == ["jogging"] and novel == []


def test_split_all_words_rule():
    base, novel = split_categories(["running marathon"], ["running"])
    assert base == [] and novel == ["running marathon"]
    base, novel = split_categories(["running marathon"], ["running", "marathon relay"])
    assert base == ["running marathon"] and novel == []


def test_split_empty_reference_all_novel():
    classes = ["cycling", "archery", "high jump"]
    base, novel = split_categories(classes, [])
    assert base == [] and novel == classes


def test_split_is_partition():
    classes = ["swimming", "playing guitar", "washing dishes", "zumba"]
    reference = ["swimming freestyle", "guitar playing", "doing dishes"]
    base, novel = split_categories(classes, reference)
    assert sorted(base + novel) == sorted(classes)
    assert set(base) & set(novel) == set()


def test_split_stopwords_ignored():
    base, novel = split_categories(["playing the guitar"], ["playing guitar"])
    assert base == ["playing the guitar"]


def test_split_case_insensitive():
    classes = ["Playing GUITAR", "ZUMBA"]
    ref = ["playing guitar"]
    upper = split_categories([c.upper() for c in classes], ref)
    lower = split_categories([c.lower() for c in classes], ref)
    assert [c.lower() for c in upper[0]] == [c.lower() for c in lower[0]]
    assert [c.lower() for c in upper[1]] == [c.lower() for c in lower[1]]


def test_split_idempotent_under_stemming():
    classes = ["jogging", "carrying boxes", "skating"]
    reference = ["jog", "skate ramp"]
    first = split_categories(classes, reference)
    stemmed_classes = [" ".join(normalize_word(t) for t in c.split()) for c in classes]
    stemmed_reference = [" ".join(normalize_word(t) for t in r.split()) for r in reference]
    second = split_categories(stemmed_classes, stemmed_reference)
    assert [len(first[0]), len(first[1])] == [len(second[0]), len(second[1])]
    assert [classes.index(c) for c in first[0]] == [stemmed_classes.index(c) for c in second[0]]


def test_split_rejects_contentless_class():
    with pytest.raises(InputError):
        split_categories(["the and of"], ["anything"])
    with pytest.raises(InputError):
        split_categories([], ["anything"])


def test_stopword_list_is_documented_size():
    assert 40 <= len(STOPWORDS) <= 60
