import random

import pytest

from synoe.errors import EmptyCatalog
from synoe.prompts import (
    PromptCatalog,
    default_catalog,
    load_catalog,
    lostandfound_extension,
    merge_catalogs,
    sample_prompt,
)


class TestPackagedCatalogs:
    def test_base_size_after_dedupe(self):
        assert len(default_catalog()) == 81

    def test_extended_size(self):
        assert len(default_catalog(lostandfound=True)) == 90

    def test_extension_entries(self):
        ext = lostandfound_extension()
        assert "cardboard" in ext.entries
        assert "bloated plastic bag" in ext.entries
        assert len(ext) == 9

    def test_known_base_entries(self):
        entries = set(default_catalog().entries)
        for expected in ("tiger", "robot", "Vacuum cleaner", "Coffee table"):
            assert expected in entries

    def test_no_case_insensitive_duplicates(self):
        entries = default_catalog(lostandfound=True).entries
        lowered = [e.lower() for e in entries]
        assert len(lowered) == len(set(lowered))


class TestLoadCatalog:
    def test_trims_skips_blanks_and_comments(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("  tiger  \n\n# noise\nzebra\nTiger\n")
        cat = load_catalog(p)
        assert cat.entries == ("tiger", "zebra")

    def test_first_spelling_wins(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("Wheelie Bin\nwheelie bin\n")
        assert load_catalog(p).entries == ("Wheelie Bin",)

    def test_empty_file_raises(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("# only a comment\n\n")
        with pytest.raises(EmptyCatalog):
            load_catalog(p)


class TestMerge:
    def test_merge_dedupes_across_sources(self):
        a = PromptCatalog(entries=("tiger", "zebra"), sources=("a",))
        b = PromptCatalog(entries=("ZEBRA", "crate"), sources=("b",))
        merged = merge_catalogs(a, b)
        assert merged.entries == ("tiger", "zebra", "crate")
        assert merged.sources == ("a", "b")


class TestSampling:
    def test_deterministic(self):
        cat = default_catalog()
        seq1 = [sample_prompt(cat, random.Random(5)) for _ in range(1)]
        seq2 = [sample_prompt(cat, random.Random(5)) for _ in range(1)]
        assert seq1 == seq2

    def test_uniform_coverage(self):
        cat = PromptCatalog(entries=("a", "b", "c"), sources=())
        rng = random.Random(0)
        seen = {sample_prompt(cat, rng) for _ in range(100)}
        assert seen == {"a", "b", "c"}
