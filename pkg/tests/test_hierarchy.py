import random

import pytest

from archint.hierarchy import (
    CycleError,
    DuplicateLocalIdError,
    build_tree,
    flatten,
    priority_merge,
    skeleton_enrich,
)
from archint.model import FieldValue, Record
from conftest import random_forest, random_tree


def rec(local_id, parent=None, **kw):
    return Record(local_id=local_id, parent_ref=parent, **kw)


class TestBuildTree:
    def test_simple_chain(self):
        trees, orphans = build_tree([rec("a"), rec("b", "a"), rec("c", "b")])
        assert orphans.ok
        assert len(trees) == 1
        assert trees[0].local_id == "a"
        assert trees[0].children[0].local_id == "b"
        assert trees[0].children[0].children[0].local_id == "c"

    def test_empty_input(self):
        trees, orphans = build_tree([])
        assert trees == () and orphans.ok

    def test_orphan_reported_not_dropped(self):
        trees, orphans = build_tree([rec("a"), rec("b", "x")])
        assert [t.local_id for t in trees] == ["a"]
        assert [o.local_id for o in orphans.orphans] == ["b"]

    def test_orphan_keeps_its_resolved_children(self):
        trees, orphans = build_tree([rec("a"), rec("b", "x"), rec("c", "b")])
        assert [t.local_id for t in trees] == ["a"]
        assert orphans.orphans[0].children[0].local_id == "c"

    def test_cycle_detected(self):
        with pytest.raises(CycleError) as exc:
            build_tree([rec("a", "b"), rec("b", "a")])
        assert set(exc.value.cycle_ids) >= {"a", "b"}

    def test_duplicate_local_id_rejected(self):
        with pytest.raises(DuplicateLocalIdError):
            build_tree([rec("a"), rec("a")])

    def test_sibling_order_is_input_order(self):
        trees, _ = build_tree([rec("p"), rec("z", "p"), rec("a", "p"), rec("m", "p")])
        assert [c.local_id for c in trees[0].children] == ["z", "a", "m"]


class TestFlatten:
    def test_single_node(self):
        flat = flatten([rec("a")])
        assert len(flat) == 1 and flat[0].parent_ref is None

    def test_chain_refs(self):
        tree = Record(local_id="a", children=(
            Record(local_id="b", parent_ref="a", children=(Record(local_id="c", parent_ref="b"),)),
        ))
        flat = flatten([tree])
        assert [(r.local_id, r.parent_ref) for r in flat] == [("a", None), ("b", "a"), ("c", "b")]
        assert all(r.children == () for r in flat)

    def test_round_trip_on_random_forests(self, rng):
        for _ in range(50):
            forest = random_forest(rng, rng.randint(1, 3), max_depth=4, max_fanout=4)
            rebuilt, orphans = build_tree(flatten(forest))
            assert orphans.ok
            assert list(rebuilt) == list(forest)

    def test_no_data_loss_with_orphans(self, rng):
        forest = random_forest(rng, 2, max_depth=3, max_fanout=3)
        flat = list(flatten(forest))
        # orphan one subtree by pointing it at a missing parent
        victim = flat[len(flat) // 2]
        flat[len(flat) // 2] = victim.with_parent_ref("missing-parent")
        trees, orphans = build_tree(flat)
        kept = {r.local_id for t in trees for r in t.walk()}
        orphaned = {r.local_id for o in orphans.orphans for r in o.walk()}
        assert kept | orphaned == {r.local_id for r in flat}
        assert kept & orphaned == set()


class TestSkeletonEnrich:
    def items_and_fonds(self):
        items = [
            Record(local_id="i1", parent_ref="F", parent_title="Fonds F",
                   fields=(FieldValue("title", "Item 1"),)),
            Record(local_id="i2", parent_ref="F", parent_title="Fonds F",
                   fields=(FieldValue("title", "Item 2"),)),
        ]
        fonds = [Record(local_id="F", fields=(FieldValue("title", "Fonds F full"),
                                              FieldValue("scopecontent", "About F")))]
        return items, fonds

    def test_items_plus_full_fonds(self):
        items, fonds = self.items_and_fonds()
        result = skeleton_enrich(items, fonds)
        assert len(result.trees) == 1
        tree = result.trees[0]
        assert tree.first_value("title") == "Fonds F full"
        assert tree.first_value("scopecontent") == "About F"
        assert [c.local_id for c in tree.children] == ["i1", "i2"]

    def test_items_only_builds_skeletons(self):
        items, _ = self.items_and_fonds()
        result = skeleton_enrich(items, [])
        tree = result.trees[0]
        assert tree.local_id == "F"
        assert tree.first_value("title") == "Fonds F"
        assert len(tree.children) == 2

    def test_fonds_only_stand_alone(self):
        _, fonds = self.items_and_fonds()
        result = skeleton_enrich([], fonds)
        assert [t.local_id for t in result.trees] == ["F"]
        assert result.trees[0].children == ()

    def test_conflicting_skeleton_titles_warn_first_wins(self):
        items = [
            Record(local_id="i1", parent_ref="F", parent_title="Title A"),
            Record(local_id="i2", parent_ref="F", parent_title="Title B"),
        ]
        result = skeleton_enrich(items, [])
        assert result.trees[0].first_value("title") == "Title A"
        assert result.warnings and "conflicting skeleton titles" in result.warnings[0]

    def test_equivalence_with_direct_build(self, rng):
        # skeleton_enrich(items, fonds) == build_tree over combined flat records
        for _ in range(30):
            tree = random_tree(rng, prefix=f"t{rng.randint(0, 10**6)}", max_depth=3, max_fanout=3)
            fonds_flat = tree.with_children(())
            items = [c for c in tree.children]
            enriched = skeleton_enrich(items, [fonds_flat]).trees
            direct, orphans = build_tree(list(flatten([tree])))
            assert orphans.ok
            assert list(enriched) == list(direct)


class TestPriorityMerge:
    def test_primary_keeps_field_supplement_adds_missing(self):
        primary = [Record(local_id="a", fields=(FieldValue("title", "Primary title"),))]
        supplement = [Record(local_id="a", fields=(
            FieldValue("title", "Supp title"), FieldValue("scopecontent", "Added"),
        ))]
        result = priority_merge(primary, supplement)
        merged = result.trees[0]
        assert merged.first_value("title") == "Primary title"
        assert merged.first_value("scopecontent") == "Added"
        assert result.unmatched == ()

    def test_empty_supplement_is_identity(self, rng):
        primary = random_forest(rng, 2, max_depth=3, max_fanout=3)
        result = priority_merge(primary, [])
        assert list(result.trees) == list(primary)

    def test_supplement_only_ids_reported_unmatched(self):
        primary = [Record(local_id="a", fields=(FieldValue("title", "T"),))]
        supplement = [Record(local_id="zz", fields=(FieldValue("note", "N"),))]
        result = priority_merge(primary, supplement)
        assert list(result.trees) == list(primary)
        assert [r.local_id for r in result.unmatched] == ["zz"]

    def test_hierarchy_comes_from_primary_only(self):
        primary = [Record(local_id="a", children=(Record(local_id="b", parent_ref="a"),))]
        supplement = [Record(local_id="b", parent_ref="somewhere-else",
                             fields=(FieldValue("note", "extra"),))]
        result = priority_merge(primary, supplement)
        child = result.trees[0].children[0]
        assert child.first_value("note") == "extra"
        assert child.parent_ref == "a"

    def test_primary_wins_fuzzed(self, rng):
        for _ in range(30):
            primary = random_forest(rng, 1, max_depth=3, max_fanout=3)
            nodes = [r for t in primary for r in t.walk()]
            supplement = []
            for node in nodes:
                if rng.random() < 0.6:
                    fields = [FieldValue(fv.key, fv.value + " CHANGED", fv.language)
                              for fv in node.fields if rng.random() < 0.5]
                    fields.append(FieldValue("custodhist", "supplement-only value"))
                    supplement.append(Record(local_id=node.local_id, fields=tuple(fields)))
            if rng.random() < 0.5:
                supplement.append(Record(local_id="only-in-supplement"))
            result = priority_merge(primary, supplement)
            merged_nodes = {r.local_id: r for t in result.trees for r in t.walk()}
            for node in nodes:
                merged = merged_nodes[node.local_id]
                # every (node, key) present in primary keeps the primary values
                for fv in node.fields:
                    assert merged.values_for(fv.key)[:len(node.values_for(fv.key))] == node.values_for(fv.key)
            unmatched_ids = {r.local_id for r in result.unmatched}
            primary_ids = set(merged_nodes)
            for supp in supplement:
                assert (supp.local_id in primary_ids) != (supp.local_id in unmatched_ids)
