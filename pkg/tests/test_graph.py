"""Loader, data model, and persistence round trips."""

from __future__ import annotations

import logging

import pytest

from tkgkit import (
    DataError,
    Quadruple,
    Quintuple,
    StaticTriple,
    TemporalGraph,
    dataset_stats,
    load_dataset,
    load_triples,
    save_dataset,
    save_triples,
    slice_at,
    strip_temporal,
    to_valid_time,
)
from tkgkit.graph import SPLIT_NAMES, format_stats, restrict_predicate

from conftest import build_graph, write_split_files


def test_tiny_stats(tiny_graph):
    st = dataset_stats(tiny_graph)
    assert st.entities == 3
    assert st.predicates == 2
    assert st.timestamps == 10  # every year 2000-2009 appears as an endpoint
    assert (st.train, st.valid, st.test) == (5, 1, 1)


def test_time_ids_chronological(tiny_graph):
    labels = tiny_graph.time_labels
    assert list(labels) == sorted(labels, key=int)


def test_only_observed_endpoints_interned(tmp_path):
    root = write_split_files(
        tmp_path / "d",
        {
            "train": [("a", "r", "b", "1900", "1950")],
            "valid": [("a", "r", "b", "1900", "1900")],
            "test": [("b", "r", "a", "1950", "1950")],
        },
    )
    g = load_dataset(root)
    assert g.time_labels == ("1900", "1950")  # interior years are not interned


def test_ids_dense(tiny_graph):
    g = tiny_graph
    assert {f.s for f in g.facts} | {f.o for f in g.facts} == set(range(g.num_entities))
    assert {f.p for f in g.facts} == set(range(g.num_predicates))
    for f in g.facts:
        assert 0 <= f.b <= f.e < g.num_timestamps


def test_missing_begin_and_end_clamped(tmp_path):
    root = write_split_files(
        tmp_path / "d",
        {
            "train": [
                ("a", "r", "b", "####", "1990"),
                ("a", "r", "c", "1970", "-"),
                ("b", "r", "c", "1980", "1985"),
            ],
            "valid": [("a", "r", "b", "1970", "1990")],
            "test": [("b", "r", "a", "1985", "1985")],
        },
    )
    g = load_dataset(root)
    assert g.time_labels == ("1970", "1980", "1985", "1990")
    assert g.facts[0].b == 0 and g.facts[0].e == 3  # missing begin -> first
    assert g.facts[1].b == 0 and g.facts[1].e == 3  # missing end -> last


def test_end_before_begin_dropped(tmp_path):
    root = write_split_files(
        tmp_path / "d",
        {
            "train": [("a", "r", "b", "2005", "2001"), ("a", "r", "c", "2001", "2005")],
            "valid": [("a", "r", "b", "2001", "2001")],
            "test": [("b", "r", "a", "2005", "2005")],
        },
    )
    g = load_dataset(root)
    assert dataset_stats(g).train == 1


def test_malformed_line_dropped_with_warning(tmp_path, caplog):
    root = tmp_path / "d"
    root.mkdir()
    (root / "train.txt").write_text(
        "a\tr\tb\t2000\t2001\n"
        "only\ttwo\n"
        "\tr\tb\t2000\t2001\n"
        "c\tr\td\t2002\t2003\n"
    )
    (root / "valid.txt").write_text("a\tr\tb\t2000\t2000\n")
    (root / "test.txt").write_text("c\tr\td\t2003\t2003\n")
    with caplog.at_level(logging.WARNING):
        g = load_dataset(root)
    assert dataset_stats(g).train == 2
    dropped = [r for r in caplog.records if "malformed" in r.getMessage()]
    assert len(dropped) == 2
    assert ":2:" in dropped[0].getMessage()  # line number reported


def test_missing_file_raises(tmp_path):
    root = tmp_path / "d"
    root.mkdir()
    (root / "train.txt").write_text("a\tr\tb\t2000\t2001\n")
    with pytest.raises(DataError):
        load_dataset(root)


def test_empty_split_raises(tmp_path):
    root = write_split_files(tmp_path / "d", {"train": [], "valid": [], "test": []})
    with pytest.raises(DataError, match="no facts"):
        load_dataset(root)


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        load_dataset(tmp_path, fmt="interval")


def test_event_format_numeric_sort(tmp_path):
    root = write_split_files(
        tmp_path / "d",
        {
            "train": [("a", "r", "b", "10"), ("a", "r", "c", "2"), ("b", "r", "c", "100")],
            "valid": [("a", "r", "b", "2")],
            "test": [("b", "r", "a", "10")],
        },
    )
    g = load_dataset(root, fmt="event")
    assert g.time_labels == ("2", "10", "100")  # numeric, not lexicographic
    for f in g.facts:
        assert f.b == f.e


def test_event_format_date_sort(tmp_path):
    root = write_split_files(
        tmp_path / "d",
        {
            "train": [("a", "r", "b", "2014-02-01"), ("a", "r", "c", "2014-01-15")],
            "valid": [("a", "r", "b", "2014-01-15")],
            "test": [("b", "r", "a", "2014-02-01")],
        },
    )
    g = load_dataset(root, fmt="event")
    assert g.time_labels == ("2014-01-15", "2014-02-01")


def test_to_valid_time():
    assert to_valid_time(Quadruple(1, 2, 3, 7)) == Quintuple(1, 2, 3, 7, 7)


def test_constructor_validates_interval():
    with pytest.raises(ValueError):
        build_graph([(0, 0, 1, 3, 2)], num_times=5)
    with pytest.raises(ValueError):
        build_graph([(0, 0, 1, 0, 9)], num_times=5)
    with pytest.raises(ValueError):
        TemporalGraph(
            facts=[Quintuple(0, 0, 1, 0, 0)],
            splits=[0, 0],
            entity_labels=("a", "b"),
            predicate_labels=("r",),
            time_labels=("0",),
        )


def test_slice_at_matches_bruteforce():
    facts = [(0, 0, 1, 0, 3), (1, 0, 2, 2, 2), (2, 1, 0, 1, 4), (0, 1, 2, 4, 4)]
    g = build_graph(facts, splits=[0, 0, 1, 2])
    for t in range(5):
        sl = slice_at(g, t)
        expect = [(f, sp) for f, sp in zip(g.facts, g.splits) if f.b <= t <= f.e]
        assert list(zip(sl.facts, sl.splits)) == expect
    with pytest.raises(ValueError):
        slice_at(g, 5)


def test_restrict_predicate():
    facts = [(0, 0, 1, 0, 3), (1, 1, 2, 2, 2), (2, 0, 0, 1, 4)]
    g = build_graph(facts, splits=[0, 1, 2])
    r = restrict_predicate(g, 0)
    assert [f.p for f in r.facts] == [0, 0]
    assert list(r.splits) == [0, 2]


def test_by_predicate_groups():
    facts = [(0, 1, 1, 0, 3), (1, 0, 2, 2, 2), (2, 1, 0, 1, 4)]
    g = build_graph(facts)
    groups = g.by_predicate()
    assert sorted(groups) == [0, 1]
    assert [g.facts[i] for i in groups[1]] == [g.facts[0], g.facts[2]]


def test_strip_temporal_keeps_duplicates():
    facts = [(0, 0, 1, 0, 1), (0, 0, 1, 3, 4), (1, 0, 2, 0, 0)]
    g = build_graph(facts, splits=[0, 0, 2])
    out = strip_temporal(g)
    assert out["train"] == [StaticTriple(0, 0, 1), StaticTriple(0, 0, 1)]
    assert out["valid"] == []
    assert out["test"] == [StaticTriple(1, 0, 2)]


def test_save_load_dataset_roundtrip(tiny_graph, tmp_path):
    out = tmp_path / "saved"
    save_dataset(tiny_graph, out)
    for name in SPLIT_NAMES:
        assert (out / f"{name}.txt").is_file()
    assert (out / "entities.dict").is_file()
    g2 = load_dataset(out)
    assert list(g2.facts) == list(tiny_graph.facts)
    assert list(g2.splits) == list(tiny_graph.splits)
    assert g2.entity_labels == tiny_graph.entity_labels
    assert g2.predicate_labels == tiny_graph.predicate_labels
    assert g2.time_labels == tiny_graph.time_labels


def test_save_load_triples_roundtrip(tiny_graph, tmp_path):
    triples = strip_temporal(tiny_graph)
    out = tmp_path / "static"
    save_triples(triples, tiny_graph.entity_labels, tiny_graph.predicate_labels, out)
    loaded, ents, preds = load_triples(out)
    remap_e = {i: ents.index(lbl) for i, lbl in enumerate(tiny_graph.entity_labels)}
    remap_p = {i: preds.index(lbl) for i, lbl in enumerate(tiny_graph.predicate_labels)}
    for name in SPLIT_NAMES:
        want = [StaticTriple(remap_e[t.s], remap_p[t.p], remap_e[t.o]) for t in triples[name]]
        assert loaded[name] == want


def test_format_stats(tiny_graph):
    text = format_stats(dataset_stats(tiny_graph))
    assert text.splitlines()[0].split() == ["entities", "3"]
    assert len(text.splitlines()) == 6
