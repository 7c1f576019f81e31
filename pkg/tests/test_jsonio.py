"""Canonical serialization and seeded sub-stream tests."""

import hashlib

from calclash.jsonio import (
    canonical_text,
    digest_of,
    dump_canonical,
    load_json,
    sha256_text,
    substream,
)


def test_canonical_text_sorts_keys_and_ends_with_newline():
    text = canonical_text({"b": 1, "a": 2})
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")


def test_canonical_text_is_stable_across_key_insertion_order():
    a = canonical_text({"x": 1, "y": [1, 2], "z": {"k": 0}})
    b = canonical_text({"z": {"k": 0}, "y": [1, 2], "x": 1})
    assert a == b


def test_digest_matches_manual_sha256():
    obj = {"n": 3}
    expected = hashlib.sha256(canonical_text(obj).encode()).hexdigest()
    assert digest_of(obj) == expected
    assert sha256_text(canonical_text(obj)) == expected


def test_dump_canonical_round_trips_and_returns_digest(tmp_path):
    obj = {"rounds": [1, 2, 3], "id": "x"}
    digest = dump_canonical(obj, tmp_path / "d" / "f.json")
    assert load_json(tmp_path / "d" / "f.json") == obj
    assert digest == digest_of(obj)


def test_substream_reproducible_and_name_sensitive():
    a = substream(7, "calendar", "u1")
    b = substream(7, "calendar", "u1")
    c = substream(7, "calendar", "u2")
    d = substream(8, "calendar", "u1")
    seq_a = [a.random() for _ in range(5)]
    assert seq_a == [b.random() for _ in range(5)]
    assert seq_a != [c.random() for _ in range(5)]
    assert seq_a != [d.random() for _ in range(5)]


def test_substream_path_is_unambiguous():
    # ("ab", "c") and ("a", "bc") must be distinct streams.
    x = substream(1, "ab", "c").random()
    y = substream(1, "a", "bc").random()
    assert x != y
