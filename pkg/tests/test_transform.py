import json

import pytest

from archint.harvest import upload_fileset
from archint.interchange import records_to_json
from archint.model import FieldValue, LevelOfDescription, Record
from archint.transform import (
    CsvError,
    CsvSpec,
    JsonError,
    JsonSpec,
    MappingParseError,
    MissingLocalIdRule,
    RewriteRule,
    RuleConflictError,
    Stage,
    StageCache,
    StageFailure,
    StageKind,
    TransformPipeline,
    XmlParseError,
    apply_mapping,
    compile_mapping,
    csv_to_records,
    json_to_records,
    preview,
    run_pipeline,
    structural_rewrite,
)
from archint import pathexpr

HEADER = "record_path,target_field,source,template,condition"


class TestCompileMapping:
    def test_header_only_is_missing_local_id_rule(self):
        with pytest.raises(MissingLocalIdRule):
            compile_mapping(HEADER + "\n")

    def test_single_rule_table(self):
        table = compile_mapping(HEADER + "\n//c,local_id,@id,,\n")
        assert len(table.rules) == 1
        assert table.record_paths() == ("//c",)

    def test_malformed_expression_names_row(self):
        with pytest.raises(MappingParseError) as exc:
            compile_mapping(HEADER + "\n//c,local_id,@@id,,\n")
        assert exc.value.row == 1
        assert "@@id" in str(exc.value)

    def test_unknown_target_field_rejected(self):
        with pytest.raises(MappingParseError):
            compile_mapping(HEADER + "\n//c,nonsense,@id,,\n")

    def test_record_path_without_local_id_rule_rejected(self):
        with pytest.raises(MissingLocalIdRule):
            compile_mapping(HEADER + "\n//c,title,unittitle,,\n")

    def test_row_order_preserved(self):
        text = HEADER + "\n//c,local_id,@id,,\n//c,title,unittitle,,\n//c,note,odd,,\n"
        table = compile_mapping(text)
        assert [r.target_field for r in table.rules] == ["local_id", "title", "note"]

    def test_table_text_round_trip(self):
        text = HEADER + "\n//c,local_id,@id,,\n//c,title,unittitle,,\n"
        table = compile_mapping(text)
        assert compile_mapping(table.to_table_text()).to_dict() == table.to_dict()


class TestApplyMapping:
    def test_nested_components_become_children(self):
        table = compile_mapping(HEADER + "\n//c,local_id,@id,,\n")
        records = apply_mapping(table, '<root><c id="a"><c id="b"/></c></root>')
        assert len(records) == 1
        assert records[0].local_id == "a"
        assert records[0].children[0].local_id == "b"
        assert records[0].children[0].parent_ref == "a"

    def test_no_matches_yields_empty_list(self):
        table = compile_mapping(HEADER + "\n//c,local_id,@id,,\n")
        assert apply_mapping(table, "<root><x/></root>") == []

    def test_duplicate_titles_all_kept_in_order(self):
        table = compile_mapping(
            HEADER + "\n//c,local_id,@id,,\n//c,title,unittitle,,\n"
        )
        doc = '<root><c id="a"><unittitle>First</unittitle><unittitle>Second</unittitle></c></root>'
        records = apply_mapping(table, doc)
        assert records[0].values_for("title") == ("First", "Second")

    def test_multi_valued_sources_append_in_document_order(self):
        table = compile_mapping(
            HEADER + "\n//c,local_id,@id,,\n//c,note,odd,,\n"
        )
        doc = '<root><c id="a"><odd>one</odd><odd>two</odd><odd>three</odd></c></root>'
        records = apply_mapping(table, doc)
        assert records[0].values_for("note") == ("one", "two", "three")

    def test_lang_attribute_carried_onto_values(self):
        table = compile_mapping(HEADER + "\n//c,local_id,@id,,\n//c,title,unittitle,,\n")
        doc = '<root><c id="a"><unittitle lang="ukr">Nazva</unittitle></c></root>'
        records = apply_mapping(table, doc)
        assert records[0].fields[0].language == "ukr"

    def test_condition_gates_rule(self):
        text = (
            HEADER
            + "\n//c,local_id,@id,,"
            + "\n//c,note,odd,,flag"
        )
        table = compile_mapping(text)
        with_flag = '<root><c id="a"><flag/><odd>kept</odd></c></root>'
        without = '<root><c id="b"><odd>skipped</odd></c></root>'
        assert apply_mapping(table, with_flag)[0].values_for("note") == ("kept",)
        assert apply_mapping(table, without)[0].values_for("note") == ()

    def test_template_interpolation(self):
        text = HEADER + '\n//c,local_id,,{@collection}-{@id},\n'
        table = compile_mapping(text)
        records = apply_mapping(table, '<root><c collection="F" id="9"/></root>')
        assert records[0].local_id == "F-9"

    def test_level_and_language_meta_targets(self):
        text = (
            HEADER
            + "\n//c,local_id,@id,,"
            + "\n//c,level,@level,,"
            + "\n//c,language,@lang,,"
        )
        table = compile_mapping(text)
        records = apply_mapping(table, '<root><c id="a" level="series" lang="ger"/></root>')
        assert records[0].level is LevelOfDescription.SERIES
        assert records[0].language == "ger"

    def test_unknown_level_token_warns_and_ignores(self):
        text = HEADER + "\n//c,local_id,@id,,\n//c,level,@level,,"
        table = compile_mapping(text)
        warnings = []
        records = apply_mapping(table, '<root><c id="a" level="weird"/></root>', warnings=warnings)
        assert records[0].level is None
        assert warnings and "weird" in warnings[0]

    def test_missing_local_id_value_is_conflict_error(self):
        table = compile_mapping(HEADER + "\n//c,local_id,@id,,\n")
        with pytest.raises(RuleConflictError):
            apply_mapping(table, "<root><c/></root>")

    def test_conflicting_local_id_values_error(self):
        table = compile_mapping(HEADER + "\n//c,local_id,ident,,\n")
        with pytest.raises(RuleConflictError):
            apply_mapping(table, "<root><c><ident>x</ident><ident>y</ident></c></root>")

    def test_bad_xml_is_parse_error(self):
        table = compile_mapping(HEADER + "\n//c,local_id,@id,,\n")
        with pytest.raises(XmlParseError):
            apply_mapping(table, "<root><unclosed>")

    def test_two_record_path_groups(self):
        text = (
            HEADER
            + "\n/root/top,local_id,@id,,"
            + "\n/root/top,title,heading,,"
            + "\n//c,local_id,@id,,"
        )
        table = compile_mapping(text)
        doc = '<root><top id="T"><heading>Top</heading><c id="a"><c id="b"/></c></top></root>'
        records = apply_mapping(table, doc)
        assert records[0].local_id == "T"
        assert records[0].children[0].local_id == "a"
        assert records[0].children[0].children[0].local_id == "b"

    def test_parent_ref_meta_target_for_flat_files(self):
        text = HEADER + "\n//row,local_id,@id,,\n//row,parent_ref,@within,,"
        table = compile_mapping(text)
        records = apply_mapping(table, '<root><row id="i1" within="F"/></root>')
        assert records[0].parent_ref == "F"


class TestStructuralRewrite:
    def test_empty_rules_is_canonical_identity(self):
        out = structural_rewrite([], b"<root><a x='1'>t</a></root>")
        assert b"<a x=\"1\">t</a>" in out or b"<a x='1'>t</a>" in out

    def test_rename_namespaced_elements(self):
        doc = '<ead xmlns:e="urn:x"><e:c id="1"><e:c id="2"/></e:c></ead>'
        out = structural_rewrite([RewriteRule("rename", pathexpr.parse("//c"), name="c")], doc)
        import xml.etree.ElementTree as ET

        root = ET.fromstring(out)
        assert len(root.findall(".//c")) == 2  # all renamed, count preserved

    def test_prune_removes_all_matches(self):
        doc = "<root><odd>x</odd><keep/><odd>y</odd></root>"
        out = structural_rewrite([RewriteRule("prune", pathexpr.parse("//odd"))], doc)
        assert b"odd" not in out and b"keep" in out

    def test_prune_keeps_tail_text(self):
        doc = "<root><odd>x</odd>tail</root>"
        out = structural_rewrite([RewriteRule("prune", pathexpr.parse("//odd"))], doc)
        assert b"tail" in out

    def test_wrap_inserts_parent(self):
        doc = "<root><item/></root>"
        out = structural_rewrite([RewriteRule("wrap", pathexpr.parse("//item"), name="box")], doc)
        assert b"<box><item /></box>" in out or b"<box><item/></box>" in out

    def test_copy_attribute(self):
        doc = '<root><c id="9"/></root>'
        rule = RewriteRule("copy-attribute", pathexpr.parse("//c"),
                           source_attr="id", target_attr="unitid")
        out = structural_rewrite([rule], doc)
        assert b'unitid="9"' in out

    def test_absent_target_is_noop(self):
        doc = "<root><a/></root>"
        out = structural_rewrite([RewriteRule("prune", pathexpr.parse("//nothing"))], doc)
        assert b"<a />" in out or b"<a/>" in out

    def test_attributes_serialized_sorted(self):
        out = structural_rewrite([], '<r b="2" a="1"/>')
        assert out.index(b'a="1"') < out.index(b'b="2"')


CSV_SPEC = CsvSpec(
    group_by=("collection", "collection_title"),
    parent_columns=(("collection", "local_id"), ("collection_title", "title")),
    child_columns=(("item", "local_id"), ("item_title", "title"), ("notes", "note")),
)


class TestCsvToRecords:
    def test_two_groups_of_two(self):
        text = (
            "collection,collection_title,item,item_title,notes\n"
            "C1,First,i1,Item one,\n"
            "C1,First,i2,Item two,note here\n"
            "C2,Second,i3,Item three,\n"
            "C2,Second,i4,Item four,\n"
        )
        trees = csv_to_records(CSV_SPEC, text)
        assert [t.local_id for t in trees] == ["C1", "C2"]
        assert [c.local_id for c in trees[0].children] == ["i1", "i2"]
        assert trees[0].first_value("title") == "First"
        assert trees[0].children[1].first_value("note") == "note here"

    def test_single_row(self):
        text = "collection,collection_title,item,item_title,notes\nC1,T,i1,I,\n"
        trees = csv_to_records(CSV_SPEC, text)
        assert len(trees) == 1 and len(trees[0].children) == 1

    def test_conflicting_parent_cells_warn_first_wins(self):
        # parent identity comes from the id column alone here, so inconsistent
        # title cells stay within one group and are reported, not split
        spec = CsvSpec(
            group_by=("collection",),
            parent_columns=(("collection", "local_id"), ("collection_title", "title")),
            child_columns=(("item", "local_id"), ("item_title", "title")),
        )
        text = (
            "collection,collection_title,item,item_title\n"
            "C1,English title,i1,I1\n"
            "C1,Ukrainian title,i2,I2\n"
        )
        warnings = []
        trees = csv_to_records(spec, text, warnings=warnings)
        assert trees[0].first_value("title") == "English title"
        assert any("conflicts" in w for w in warnings)

    def test_inconsistent_group_key_titles_give_duplicate_parent_error(self):
        text = (
            "collection,collection_title,item,item_title,notes\n"
            "C1,English title,i1,I1,\n"
            "C1,Ukrainian title,i2,I2,\n"
        )
        with pytest.raises(CsvError) as exc:
            csv_to_records(CSV_SPEC, text)
        assert exc.value.code == "duplicate-parent"

    def test_missing_column_error(self):
        with pytest.raises(CsvError) as exc:
            csv_to_records(CSV_SPEC, "collection,item\nC1,i1\n")
        assert exc.value.code == "missing-column"

    def test_ragged_row_error(self):
        text = "collection,collection_title,item,item_title,notes\nC1,T,i1\n"
        with pytest.raises(CsvError) as exc:
            csv_to_records(CSV_SPEC, text)
        assert exc.value.code == "ragged-row"

    def test_duplicate_child_in_group_error(self):
        text = (
            "collection,collection_title,item,item_title,notes\n"
            "C1,T,i1,A,\nC1,T,i1,B,\n"
        )
        with pytest.raises(CsvError) as exc:
            csv_to_records(CSV_SPEC, text)
        assert exc.value.code == "duplicate-child"

    def test_group_order_is_first_appearance(self):
        text = (
            "collection,collection_title,item,item_title,notes\n"
            "B,Bee,i1,x,\nA,Ay,i2,x,\nB,Bee,i3,x,\n"
        )
        trees = csv_to_records(CSV_SPEC, text)
        assert [t.local_id for t in trees] == ["B", "A"]
        assert [c.local_id for c in trees[0].children] == ["i1", "i3"]

    def test_child_local_id_mapping_is_mandatory(self):
        with pytest.raises(ValueError):
            CsvSpec(group_by=("g",), parent_columns=(), child_columns=(("x", "title"),))


class TestJsonToRecords:
    SPEC = JsonSpec(
        iterator="data.items",
        fields=(("id", "local_id"), ("meta.title", "title"), ("level", "level")),
        parent_ref_path="meta.parent",
    )

    def test_two_flat_records(self):
        payload = {"data": {"items": [
            {"id": "a", "meta": {"title": "A"}},
            {"id": "b", "meta": {"title": "B", "parent": "a"}},
        ]}}
        records = json_to_records(self.SPEC, json.dumps(payload))
        assert [r.local_id for r in records] == ["a", "b"]
        assert records[1].parent_ref == "a"

    def test_missing_id_names_element_index(self):
        payload = {"data": {"items": [{"id": "a"}, {"meta": {"title": "no id"}}]}}
        with pytest.raises(JsonError) as exc:
            json_to_records(self.SPEC, json.dumps(payload))
        assert exc.value.code == "missing-local-id"
        assert "element 1" in str(exc.value)

    def test_nested_path_extraction(self):
        payload = {"data": {"items": [{"id": "x", "meta": {"title": "Deep title"}}]}}
        records = json_to_records(self.SPEC, json.dumps(payload))
        assert records[0].first_value("title") == "Deep title"

    def test_iterator_must_be_array(self):
        with pytest.raises(JsonError) as exc:
            json_to_records(self.SPEC, json.dumps({"data": {"items": {"id": "a"}}}))
        assert exc.value.code == "iterator-not-array"

    def test_parse_error(self):
        with pytest.raises(JsonError) as exc:
            json_to_records(self.SPEC, "{not json")
        assert exc.value.code == "json-parse-error"

    def test_bracket_index_path(self):
        spec = JsonSpec(iterator="rows", fields=(("ids[0]", "local_id"),))
        records = json_to_records(spec, json.dumps({"rows": [{"ids": ["first", "second"]}]}))
        assert records[0].local_id == "first"

    def test_numbers_coerced_to_strings(self):
        spec = JsonSpec(iterator="rows", fields=(("id", "local_id"), ("title", "title")))
        records = json_to_records(spec, json.dumps({"rows": [{"id": 42, "title": "T"}]}))
        assert records[0].local_id == "42"


MAPPING = compile_mapping(HEADER + "\n//c,local_id,@id,,\n//c,title,unittitle,,\n")


def xml_fileset(*docs):
    return upload_fileset([(f"doc-{i}.xml", d.encode()) for i, d in enumerate(docs)])


class TestPipeline:
    def test_type_mismatch_rejected_at_assembly(self):
        with pytest.raises(ValueError):
            TransformPipeline((
                Stage(kind=StageKind.CSV_RESHAPE, csv_spec=CSV_SPEC),
                Stage(kind=StageKind.STRUCTURAL_REWRITE, rewrite_rules=(
                    RewriteRule("prune", pathexpr.parse("//x")),
                )),
            ))

    def test_pipeline_must_end_in_records(self):
        with pytest.raises(ValueError):
            TransformPipeline((
                Stage(kind=StageKind.STRUCTURAL_REWRITE, rewrite_rules=()),
            ))

    def test_rewrite_then_mapping_matches_manual_composition(self):
        rules = (RewriteRule("rename", pathexpr.parse("//komponente"), name="c"),)
        pipe = TransformPipeline((
            Stage(kind=StageKind.STRUCTURAL_REWRITE, rewrite_rules=rules),
            Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),
        ))
        doc = '<root><komponente id="a"><unittitle>T</unittitle></komponente></root>'
        files = xml_fileset(doc)
        result = run_pipeline(pipe, files)
        manual = apply_mapping(MAPPING, structural_rewrite(list(rules), doc))
        assert list(result.records) == manual

    def test_failing_stage_reports_index_and_files(self):
        pipe = TransformPipeline((Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),))
        files = xml_fileset("<root><c id='ok'/></root>", "<broken")
        with pytest.raises(StageFailure) as exc:
            run_pipeline(pipe, files)
        assert exc.value.stage_index == 0
        assert exc.value.errors[0][0] == "doc-1.xml"

    def test_media_type_checked_against_first_stage(self):
        pipe = TransformPipeline((Stage(kind=StageKind.CSV_RESHAPE, csv_spec=CSV_SPEC),))
        files = xml_fileset("<root/>")
        with pytest.raises(StageFailure):
            run_pipeline(pipe, files)

    def test_deleted_items_skipped(self):
        pipe = TransformPipeline((Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),))
        from archint.harvest import FileSet, make_item

        files = FileSet(items=(
            make_item("a.xml", b"<root><c id='a'/></root>", "u:a"),
            make_item("gone.xml", b"", "u:g", deleted=True),
        ))
        result = run_pipeline(pipe, files)
        assert [r.local_id for r in result.records] == ["a"]

    def test_cache_hits_on_rerun_and_outputs_identical(self):
        pipe = TransformPipeline((
            Stage(kind=StageKind.STRUCTURAL_REWRITE, rewrite_rules=(
                RewriteRule("prune", pathexpr.parse("//noise")),
            )),
            Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),
        ))
        files = xml_fileset('<root><noise/><c id="a"><unittitle>T</unittitle></c></root>')
        cache = StageCache()
        first = run_pipeline(pipe, files, cache=cache)
        second = run_pipeline(pipe, files, cache=cache)
        assert all(not run.cache_hit for run in first.trace.runs)
        assert all(run.cache_hit for run in second.trace.runs)
        assert records_to_json(first.records) == records_to_json(second.records)

    def test_editing_stage_k_reuses_earlier_stages(self):
        rules = (RewriteRule("prune", pathexpr.parse("//noise")),)
        files = xml_fileset('<root><noise/><c id="a"><unittitle>T</unittitle></c></root>')
        cache = StageCache()
        pipe1 = TransformPipeline((
            Stage(kind=StageKind.STRUCTURAL_REWRITE, rewrite_rules=rules),
            Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),
        ))
        run_pipeline(pipe1, files, cache=cache)
        changed_mapping = compile_mapping(HEADER + "\n//c,local_id,@id,,\n")
        pipe2 = TransformPipeline((
            Stage(kind=StageKind.STRUCTURAL_REWRITE, rewrite_rules=rules),
            Stage(kind=StageKind.XML_MAPPING, mapping=changed_mapping),
        ))
        result = run_pipeline(pipe2, files, cache=cache)
        assert result.trace.runs[0].cache_hit is True  # stage 0 unchanged: reused
        assert result.trace.runs[1].cache_hit is False  # stage 1 edited: re-executed

    def test_concordance_stage_links_access_points(self, store):
        from archint.vocab import load_concordance

        table = compile_mapping(
            HEADER + "\n//c,local_id,@id,,\n//c,access_point:subject,subject,,\n"
        )
        conc = load_concordance(
            "source_label,kind,target_id\nGhetto,subject,terms-1\n",
            store.space("staging"), scope_id="ds",
        )
        pipe = TransformPipeline((
            Stage(kind=StageKind.XML_MAPPING, mapping=table),
            Stage(kind=StageKind.CONCORDANCE, concordance=conc),
        ))
        files = xml_fileset('<root><c id="a"><subject>ghetto</subject></c></root>')
        result = run_pipeline(pipe, files)
        ap = result.records[0].fields[0]
        assert ap.target == "terms-1"


class TestPreview:
    def make_files(self, n):
        docs = [
            f'<root><c id="d{i}"><unittitle>Title {i}</unittitle></c></root>'
            for i in range(n)
        ]
        return xml_fileset(*docs)

    def test_preview_all_files_equals_full_run(self):
        pipe = TransformPipeline((Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),))
        files = self.make_files(3)
        full = run_pipeline(pipe, files)
        pre = preview(pipe, files, limit=3)
        assert records_to_json(pre.records) == records_to_json(full.records)
        assert len(pre.ead) == len(pre.records)

    def test_preview_k1_is_first_file_slice(self):
        pipe = TransformPipeline((Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),))
        files = self.make_files(3)
        pre = preview(pipe, files, limit=1)
        full = run_pipeline(pipe, files)
        assert list(pre.records) == list(full.records)[:1]

    def test_limit_below_one_rejected(self):
        pipe = TransformPipeline((Stage(kind=StageKind.XML_MAPPING, mapping=MAPPING),))
        with pytest.raises(ValueError):
            preview(pipe, self.make_files(1), limit=0)
