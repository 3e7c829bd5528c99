"""Cluster assignment, recovery, caching, merging, incremental runs, IO."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, strategies as st

from concernmap.corpus import scan_corpus
from concernmap.recover import (
    RecoveryCache,
    RecoveryConfig,
    RecoveryError,
    UNKNOWN_CLUSTER,
    assign_cluster,
    audit_cache,
    cosine_similarity,
    incremental_recover,
    load_cache,
    merge,
    parse_result,
    recover,
    recover_with_stats,
    save_cache,
    serialize_result,
    write_textual_output,
)

from conftest import build_java_corpus, make_result

CONCERNS = ["Database", "Graphics", "Networking"]


class TestAssignCluster:
    def test_reference_affinity_rows(self):
        assert assign_cluster([0.9, 0.1, 0.2], CONCERNS, 0.5) == "Database"
        assert assign_cluster([0.05, 0.95, 0.1], CONCERNS, 0.5) == "Graphics"
        assert assign_cluster([0.02, 0.01, 0.92], CONCERNS, 0.5) == "Networking"

    def test_zero_vector_is_unknown(self):
        assert assign_cluster([0.0, 0.0, 0.0], CONCERNS, 0.1) == UNKNOWN_CLUSTER

    def test_threshold_is_strict(self):
        assert assign_cluster([0.4, 0.4, 0.1], CONCERNS, 0.5) == UNKNOWN_CLUSTER
        assert assign_cluster([0.5, 0.4, 0.1], CONCERNS, 0.5) == "Database"

    def test_ties_take_the_first_concern(self):
        assert assign_cluster([0.8, 0.8, 0.1], CONCERNS, 0.5) == "Database"

    def test_length_mismatch_rejected(self):
        with pytest.raises(RecoveryError):
            assign_cluster([0.9], CONCERNS, 0.5)

    def test_cosine_value_of_reference_row(self):
        # cos((0.9,0.1,0.2), e_Database) = 0.9 / sqrt(0.86)
        got = cosine_similarity([0.9, 0.1, 0.2], [1.0, 0.0, 0.0])
        assert got == pytest.approx(0.9 / math.sqrt(0.86))
        assert got == pytest.approx(0.9705, abs=1e-4)

    def test_zero_vector_cosine_is_zero(self):
        assert cosine_similarity([0.0, 0.0], [1.0, 0.0]) == 0.0

    @given(
        st.lists(
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
            min_size=1,
            max_size=8,
        ).filter(lambda v: any(x > 0 for x in v))
    )
    def test_argmax_equals_cosine_argmax_for_unit_clusters(self, vec):
        units = [[1.0 if i == k else 0.0 for i in range(len(vec))] for k in range(len(vec))]
        by_cosine = max(range(len(vec)), key=lambda k: cosine_similarity(vec, units[k]))
        by_component = max(range(len(vec)), key=lambda k: vec[k])
        assert vec[by_cosine] == vec[by_component]


@pytest.fixture()
def small_corpus(tmp_path, trained_model):
    build_java_corpus(tmp_path, files_per_concern=4, seed=3)
    return scan_corpus(tmp_path, include_globs=("**/*.java",))


class TestRecover:
    def test_clusters_partition_the_records(self, small_corpus, trained_model):
        result = recover(small_corpus, trained_model)
        all_paths = sorted(p for paths in result.clusters.values() for p in paths)
        assert all_paths == [r.entity.path for r in result.records]
        for record in result.records:
            assert record.entity.path in result.clusters[record.main_concern]
        assert UNKNOWN_CLUSTER in result.clusters

    def test_expected_concerns_recovered(self, tmp_path, trained_model):
        expected = build_java_corpus(tmp_path, files_per_concern=4, seed=3)
        scan = scan_corpus(tmp_path, include_globs=("**/*.java",))
        result = recover(scan, trained_model)
        by_path = result.record_by_path()
        for path, concern in expected.items():
            assert by_path[path].main_concern == concern

    def test_empty_corpus(self, tmp_path, trained_model):
        scan = scan_corpus(tmp_path)
        result = recover(scan, trained_model)
        assert result.records == []
        assert result.clusters == {c: [] for c in [*trained_model.concerns, UNKNOWN_CLUSTER]}

    def test_runs_are_byte_identical(self, small_corpus, trained_model):
        r1 = recover(small_corpus, trained_model)
        r2 = recover(small_corpus, trained_model)
        assert serialize_result(r1) == serialize_result(r2)

    def test_parallel_matches_serial(self, small_corpus, trained_model):
        serial = recover(small_corpus, trained_model, jobs=1)
        threaded = recover(small_corpus, trained_model, jobs=8)
        assert serialize_result(serial) == serialize_result(threaded)

    def test_vanished_file_becomes_warning(self, tmp_path, trained_model):
        build_java_corpus(tmp_path, files_per_concern=2, seed=3)
        scan = scan_corpus(tmp_path, include_globs=("**/*.java",))
        victim = scan.entities[0].path
        (tmp_path / victim).unlink()
        result = recover(scan, trained_model)
        assert len(result.records) == len(scan.entities) - 1
        assert any(victim in w for w in result.warnings)

    def test_high_threshold_sends_everything_to_unknown(self, small_corpus, trained_model):
        config = RecoveryConfig(unknown_threshold=1.0)
        result = recover(small_corpus, trained_model, config=config)
        unknown = result.clusters[UNKNOWN_CLUSTER]
        known = [p for c, ps in result.clusters.items() if c != UNKNOWN_CLUSTER for p in ps]
        # affinities are < 1.0, so the strict threshold rejects all of them
        assert len(unknown) == len(result.records)
        assert known == []


class TestCache:
    def test_second_run_hits_cache(self, small_corpus, trained_model):
        cache = RecoveryCache()
        r1, s1 = recover_with_stats(small_corpus, trained_model, cache)
        r2, s2 = recover_with_stats(small_corpus, trained_model, cache)
        assert s1.reclassified == len(r1.records) and s1.reused == 0
        assert s2.reused == len(r2.records) and s2.reclassified == 0
        assert serialize_result(r1) == serialize_result(r2)

    def test_round_trip_file(self, tmp_path, small_corpus, trained_model):
        cache = RecoveryCache()
        recover(small_corpus, trained_model, cache)
        path = tmp_path / "cache.jsonl"
        save_cache(cache, path)
        loaded = load_cache(path)
        assert loaded.items() == cache.items()

    def test_corrupt_cache_file_is_ignored(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        path.write_text('{"format": "concernmap-cache/1"}\nnot json at all\n')
        assert len(load_cache(path)) == 0
        path.write_text('{"format": "something-else/9"}\n')
        assert len(load_cache(path)) == 0

    def test_missing_cache_file_is_empty(self, tmp_path):
        assert len(load_cache(tmp_path / "absent.jsonl")) == 0

    def test_audit_passes_on_honest_cache(self, small_corpus, trained_model):
        cache = RecoveryCache()
        config = RecoveryConfig()
        recover(small_corpus, trained_model, cache, config)
        assert audit_cache(small_corpus, trained_model, config, cache) == []

    def test_audit_catches_poisoned_entry(self, small_corpus, trained_model):
        cache = RecoveryCache()
        config = RecoveryConfig()
        recover(small_corpus, trained_model, cache, config)
        key, vec = cache.items()[0]
        cache.put(key, [0.123] * len(vec))
        mismatches = audit_cache(small_corpus, trained_model, config, cache)
        assert len(mismatches) == 1

    def test_config_change_misses_cache(self, small_corpus, trained_model):
        cache = RecoveryCache()
        recover(small_corpus, trained_model, cache, RecoveryConfig(unknown_threshold=0.5))
        _, stats = recover_with_stats(
            small_corpus, trained_model, cache, RecoveryConfig(unknown_threshold=0.6)
        )
        assert stats.reused == 0  # different config fingerprint, fresh keys


class TestMerge:
    def test_split_merge_equals_whole(self, small_corpus, trained_model):
        whole = recover(small_corpus, trained_model)
        rng = random.Random(8)
        entities = list(small_corpus.entities)
        rng.shuffle(entities)
        cut = len(entities) // 2
        scan1 = type(small_corpus)(root=small_corpus.root, entities=sorted(entities[:cut], key=lambda e: e.path))
        scan2 = type(small_corpus)(root=small_corpus.root, entities=sorted(entities[cut:], key=lambda e: e.path))
        merged = merge(recover(scan1, trained_model), recover(scan2, trained_model))
        assert serialize_result(merged) == serialize_result(whole)

    def test_merge_with_empty_is_identity(self, small_corpus, trained_model, tmp_path):
        whole = recover(small_corpus, trained_model)
        empty_root = tmp_path / "nothing-here"
        empty_root.mkdir()
        empty_scan = scan_corpus(empty_root)
        empty = recover(empty_scan, trained_model)
        assert serialize_result(merge(whole, empty)) == serialize_result(whole)

    def test_different_classifiers_do_not_compose(self):
        r1 = make_result([("a/X.java", "Database")], classifier_fingerprint="1" * 64)
        r2 = make_result([("b/Y.java", "Database")], classifier_fingerprint="2" * 64)
        with pytest.raises(RecoveryError, match="different classifiers"):
            merge(r1, r2)

    def test_different_configs_do_not_compose(self):
        r1 = make_result([("a/X.java", "Database")], config=RecoveryConfig(unknown_threshold=0.5))
        r2 = make_result([("b/Y.java", "Database")], config=RecoveryConfig(unknown_threshold=0.6))
        with pytest.raises(RecoveryError, match="configurations"):
            merge(r1, r2)

    def test_overlapping_paths_listed(self):
        r1 = make_result([("a/X.java", "Database")])
        r2 = make_result([("a/X.java", "Graphics")])
        with pytest.raises(RecoveryError, match="a/X.java"):
            merge(r1, r2)


class TestIncremental:
    def test_fixed_point_when_nothing_changed(self, small_corpus, trained_model):
        previous = recover(small_corpus, trained_model)
        result, stats = incremental_recover(previous, small_corpus, trained_model)
        assert stats.as_dict() == {
            "reused": len(previous.records), "reclassified": 0, "added": 0, "removed": 0,
        }
        assert serialize_result(result) == serialize_result(previous)

    def test_single_edit_reclassifies_exactly_one(self, tmp_path, trained_model):
        build_java_corpus(tmp_path, files_per_concern=4, seed=3)
        scan1 = scan_corpus(tmp_path, include_globs=("**/*.java",))
        previous = recover(scan1, trained_model)

        victim = previous.records[0].entity.path
        target = tmp_path / victim
        target.write_text(target.read_text() + "\n// socket packet tcp udp port\n")
        scan2 = scan_corpus(tmp_path, include_globs=("**/*.java",))
        result, stats = incremental_recover(previous, scan2, trained_model)

        assert stats.reclassified == 1
        assert stats.reused == len(previous.records) - 1
        changed = [
            p for p in (r.entity.path for r in result.records)
            if result.record_by_path()[p] != previous.record_by_path().get(p)
        ]
        assert changed == [victim]

    def test_rename_reuses_cached_vector(self, tmp_path, trained_model):
        build_java_corpus(tmp_path, files_per_concern=2, seed=3)
        cache = RecoveryCache()
        scan1 = scan_corpus(tmp_path, include_globs=("**/*.java",))
        previous = recover(scan1, trained_model, cache)

        old_rel = previous.records[0].entity.path
        new_rel = old_rel.replace(".java", "Renamed.java")
        (tmp_path / old_rel).rename(tmp_path / new_rel)
        scan2 = scan_corpus(tmp_path, include_globs=("**/*.java",))
        result, stats = incremental_recover(previous, scan2, trained_model, cache)

        assert stats.added == 1 and stats.removed == 1
        assert stats.reclassified == 0  # content hash hit in the cache
        old_vec = previous.record_by_path()[old_rel].affinities
        assert result.record_by_path()[new_rel].affinities == old_vec

    def test_config_mismatch_falls_back_to_full_run(self, small_corpus, trained_model):
        previous = recover(small_corpus, trained_model, config=RecoveryConfig(unknown_threshold=0.4))
        result, stats = incremental_recover(
            previous, small_corpus, trained_model, config=RecoveryConfig(unknown_threshold=0.6)
        )
        assert stats.reused == 0
        assert stats.reclassified == len(result.records)


class TestSerialization:
    def test_round_trip_bytes(self, small_corpus, trained_model):
        result = recover(small_corpus, trained_model)
        data = serialize_result(result)
        assert serialize_result(parse_result(data)) == data

    def test_malformed_payload(self):
        with pytest.raises(RecoveryError, match="malformed"):
            parse_result(b"{broken")

    def test_unsupported_version_named(self, small_corpus, trained_model):
        data = serialize_result(recover(small_corpus, trained_model))
        with pytest.raises(RecoveryError, match="concernmap-result/9"):
            parse_result(data.replace(b"concernmap-result/1", b"concernmap-result/9"))


class TestTextualOutput:
    def test_files_and_headers(self, tmp_path, small_corpus, trained_model):
        result = recover(small_corpus, trained_model)
        written = write_textual_output(result, None, tmp_path / "out")
        names = [p.name for p in written]
        assert names == ["entities.tsv", "clusters.tsv", "deps.tsv"]
        entity_lines = (tmp_path / "out/entities.tsv").read_text().splitlines()
        assert entity_lines[0].startswith("# path\t")
        assert len(entity_lines) == 1 + len(result.records)

    def test_empty_result_keeps_headers(self, tmp_path, trained_model):
        result = make_result([], concerns=list(trained_model.concerns))
        write_textual_output(result, None, tmp_path)
        assert (tmp_path / "entities.tsv").read_text() == "# path\tmain_concern\taffinities\tbytes\tphysical_sloc\tlogical_sloc\n"
        assert (tmp_path / "clusters.tsv").read_text() == "# cluster\tpath\n"

    def test_affinity_vector_formatting(self, tmp_path):
        result = make_result([("a/X.java", "Database")])
        result.records[0].affinities = [0.9, 0.1, 0.2]
        write_textual_output(result, None, tmp_path)
        line = (tmp_path / "entities.tsv").read_text().splitlines()[1]
        assert "0.9;0.1;0.2" in line

    def test_cluster_roster_is_valid_ground_truth_input(self, tmp_path, small_corpus, trained_model):
        from concernmap.metrics import parse_roster

        result = recover(small_corpus, trained_model)
        write_textual_output(result, None, tmp_path)
        roster = parse_roster((tmp_path / "clusters.tsv").read_text())
        assert sorted(p for ps in roster.values() for p in ps) == [
            r.entity.path for r in result.records
        ]
