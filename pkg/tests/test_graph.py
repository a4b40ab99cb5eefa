import numpy as np
import pytest

from kgacc.graph import (DeltaBatch, GraphFormatError, KnowledgeGraph,
                         SnapshotError, Triple, apply_delta, build_graph,
                         graph_stats, ingest, restore, snapshot)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestTriple:
    def test_default_kind(self):
        assert Triple("s", "p", "o").object_kind == "data"

    def test_bad_kind(self):
        with pytest.raises(ValueError, match="object_kind"):
            Triple("s", "p", "o", "literal")


class TestIngestTsv:
    def test_groups_by_subject_in_first_appearance_order(self, tmp_path):
        g = ingest(write(tmp_path, "g.tsv",
                         "B\tp\tx\nA\tp\ty\nB\tq\tz\nC\tp\tw\nA\tq\tv\n"))
        assert [c.entity_id for c in g.clusters] == ["B", "A", "C"]
        assert list(g.cluster_sizes) == [2, 2, 1]
        # source order preserved inside a cluster
        assert [t.predicate for t in g.clusters[0].triples] == ["p", "q"]

    def test_comments_blank_lines_and_extra_columns(self, tmp_path):
        g = ingest(write(tmp_path, "g.tsv",
                         "# header\n\nA\tp\tx\tdata\t1\nA\tq\ty\tentity\t0\n"))
        assert g.triple_count == 2
        assert g.clusters[0].triples[1].object_kind == "entity"

    def test_duplicate_rows_are_kept(self, tmp_path):
        g = ingest(write(tmp_path, "g.tsv", "A\tp\tx\nA\tp\tx\n"))
        assert g.triple_count == 2

    def test_too_few_columns_reports_line(self, tmp_path):
        p = write(tmp_path, "g.tsv", "A\tp\tx\nA\tp\n")
        with pytest.raises(GraphFormatError, match="line 2"):
            ingest(p)

    def test_bad_kind_reports_line(self, tmp_path):
        p = write(tmp_path, "g.tsv", "A\tp\tx\tliteral\n")
        with pytest.raises(GraphFormatError, match="line 1.*literal"):
            ingest(p)

    def test_empty_file_rejected(self, tmp_path):
        p = write(tmp_path, "g.tsv", "# nothing\n")
        with pytest.raises(GraphFormatError, match="empty graph"):
            ingest(p)

    def test_unknown_format(self, tmp_path):
        p = write(tmp_path, "g.tsv", "A\tp\tx\n")
        with pytest.raises(ValueError, match="unknown graph format"):
            ingest(p, fmt="csv")


class TestIngestNtriples:
    def test_entity_and_data_objects(self, tmp_path):
        p = write(tmp_path, "g.nt",
                  '<a> <p> <b> .\n<a> <q> "17" .\n')
        g = ingest(p, fmt="ntriples")
        assert g.clusters[0].triples[0].object_kind == "entity"
        assert g.clusters[0].triples[1] == Triple("a", "q", "17", "data")

    def test_missing_dot(self, tmp_path):
        p = write(tmp_path, "g.nt", "<a> <p> <b>\n")
        with pytest.raises(GraphFormatError, match="line 1.*'.'"):
            ingest(p, fmt="ntriples")

    def test_trailing_content(self, tmp_path):
        p = write(tmp_path, "g.nt", '<a> <p> <b> <c> .\n')
        with pytest.raises(GraphFormatError, match="trailing"):
            ingest(p, fmt="ntriples")

    def test_truncated_statement(self, tmp_path):
        p = write(tmp_path, "g.nt", "<a> <p> .\n")
        with pytest.raises(GraphFormatError):
            ingest(p, fmt="ntriples")

    def test_unterminated_term(self, tmp_path):
        p = write(tmp_path, "g.nt", '<a> <p> "broken .\n')
        with pytest.raises(GraphFormatError, match="unterminated"):
            ingest(p, fmt="ntriples")


class TestPositions:
    def test_offsets_and_round_trip(self, toy_abc):
        g, _ = toy_abc
        assert list(g.offsets) == [0, 2, 5, 6]
        for pos in range(g.triple_count):
            ci, li = g.cluster_of_position(pos)
            assert g.position(ci, li) == pos
            assert g.triple_at(pos) is g.clusters[ci].triples[li]

    def test_out_of_range(self, toy_abc):
        g, _ = toy_abc
        with pytest.raises(IndexError):
            g.cluster_of_position(6)
        with pytest.raises(IndexError):
            g.cluster_of_position(-1)

    def test_pps_weights(self, toy_abc):
        g, _ = toy_abc
        assert np.allclose(g.pps_weights, [2 / 6, 3 / 6, 1 / 6])
        assert g.pps_weights.sum() == pytest.approx(1.0)


class TestValidation:
    def test_empty_cluster(self):
        with pytest.raises(ValueError, match="empty"):
            build_graph([("A", ())])

    def test_duplicate_cluster_key(self):
        t = (Triple("A", "p", "x"),)
        with pytest.raises(ValueError, match="duplicate"):
            build_graph([("A", t), ("A", t)])


class TestDelta:
    def delta(self, batch_id=1):
        return DeltaBatch(batch_id, (
            ("A", (Triple("A", "p", "new1"), Triple("A", "p", "new2"))),
            ("D", (Triple("D", "p", "d1"),)),
        ))

    def test_merge_extends_and_appends(self, toy_abc):
        g, _ = toy_abc
        g2 = apply_delta(g, self.delta(), "merge")
        assert g2.cluster_count == 4
        assert g2.cluster_at("A").size == 4
        assert g2.cluster_at("D").size == 1
        assert g2.triple_count == g.triple_count + 3
        assert [c.batch for c in g2.clusters] == [0, 0, 0, 0]

    def test_independent_appends_tagged_clusters(self, toy_abc):
        g, _ = toy_abc
        g2 = apply_delta(g, self.delta(), "independent")
        assert g2.cluster_count == 5
        assert g2.clusters[3].key == ("A", 1)
        assert g2.clusters[4].key == ("D", 1)
        # base stays untouched: same prefix positions and offsets
        assert list(g2.offsets[:4]) == list(g.offsets)
        for pos in range(g.triple_count):
            assert g2.triple_at(pos) == g.triple_at(pos)

    def test_independent_same_entity_twice(self, toy_abc):
        g, _ = toy_abc
        g2 = apply_delta(g, self.delta(1), "independent")
        g3 = apply_delta(g2, self.delta(2), "independent")
        assert g3.cluster_count == 7
        assert g3.cluster_at("A", batch=2).size == 2

    def test_merge_twice_accumulates(self, toy_abc):
        g, _ = toy_abc
        g2 = apply_delta(apply_delta(g, self.delta(1), "merge"),
                         self.delta(2), "merge")
        assert g2.cluster_at("A").size == 6
        assert g2.cluster_at("D").size == 2

    def test_bad_mode(self, toy_abc):
        g, _ = toy_abc
        with pytest.raises(ValueError, match="mode"):
            apply_delta(g, self.delta(), "replace")

    def test_delta_validation(self):
        t = (Triple("A", "p", "x"),)
        with pytest.raises(ValueError, match="batch_id"):
            DeltaBatch(0, (("A", t),))
        with pytest.raises(ValueError, match="duplicate"):
            DeltaBatch(1, (("A", t), ("A", t)))
        with pytest.raises(ValueError, match="empty"):
            DeltaBatch(1, (("A", ()),))

    def test_group_sizes_and_count(self):
        d = self.delta()
        assert list(d.group_sizes) == [2, 1]
        assert d.triple_count == 3


class TestStats:
    def test_counts_and_histogram(self, toy_abc):
        g, _ = toy_abc
        st = graph_stats(g)
        assert st.n_clusters == 3
        assert st.n_triples == 6
        assert st.mean_cluster_size == pytest.approx(2.0)
        assert st.size_histogram == {1: 1, 2: 1, 3: 1}


class TestSnapshot:
    def test_round_trip(self, toy_abc, tmp_path):
        g, _ = toy_abc
        g2 = apply_delta(g, DeltaBatch(1, (("E", (Triple("E", "p", "x"),)),)),
                         "independent")
        path = tmp_path / "snap.tsv"
        digest = snapshot(g2, path)
        back = restore(path)
        assert back.checksum() == digest == g2.checksum()
        assert [c.key for c in back.clusters] == [c.key for c in g2.clusters]
        assert back.clusters[1].triples == g2.clusters[1].triples

    def test_checksum_is_content_addressed(self, toy_abc, toy_123):
        ga, _ = toy_abc
        gb, _ = toy_123
        assert ga.checksum() != gb.checksum()
        rebuilt = build_graph((c.entity_id, c.triples) for c in ga.clusters)
        assert rebuilt.checksum() == ga.checksum()

    def test_corrupt_payload_detected(self, toy_abc, tmp_path):
        g, _ = toy_abc
        path = tmp_path / "snap.tsv"
        snapshot(g, path)
        lines = path.read_text().splitlines()
        lines[3] = lines[3].replace("A", "Z")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SnapshotError, match="checksum"):
            restore(path)

    def test_wrong_version(self, toy_abc, tmp_path):
        g, _ = toy_abc
        path = tmp_path / "snap.tsv"
        snapshot(g, path)
        text = path.read_text().replace("\tv1\t", "\tv2\t", 1)
        path.write_text(text)
        with pytest.raises(SnapshotError, match="version"):
            restore(path)

    def test_not_a_snapshot(self, tmp_path):
        path = tmp_path / "other.tsv"
        path.write_text("A\tp\tx\n")
        with pytest.raises(SnapshotError, match="not a"):
            restore(path)
