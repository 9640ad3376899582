import xml.etree.ElementTree as ET

import pytest

from archint.pathexpr import PathParseError, parse

DOC = ET.fromstring(
    """
<ead xmlns:e="urn:example">
  <archdesc level="fonds">
    <did>
      <unitid>F1</unitid>
      <unittitle lang="eng">Fonds one</unittitle>
      <unittitle lang="ukr">Fonds odyn</unittitle>
    </did>
    <dsc>
      <c level="file" id="c1">
        <did><unitid>I1</unitid></did>
        <c level="item" id="c2"><did><unitid>I2</unitid></did></c>
      </c>
      <e:c level="item" id="c3"><did><unitid>I3</unitid></did></e:c>
    </dsc>
  </archdesc>
</ead>
"""
)


def ids(elements):
    return [e.attrib.get("id") for e in elements]


class TestParsing:
    def test_double_at_is_an_error(self):
        with pytest.raises(PathParseError):
            parse("@@id")

    def test_empty_expression_is_an_error(self):
        with pytest.raises(PathParseError):
            parse("   ")

    def test_unterminated_predicate_string(self):
        with pytest.raises(PathParseError):
            parse("c[@id='oops]")

    def test_trailing_garbage(self):
        with pytest.raises(PathParseError):
            parse("c/did}")

    def test_parse_round_trips_text(self):
        expr = parse("//c[@level='item']/did/unitid")
        assert str(expr) == "//c[@level='item']/did/unitid"


class TestEvaluation:
    def test_descendant_search_ignores_namespaces(self):
        assert ids(parse("//c").evaluate(DOC, DOC)) == ["c1", "c2", "c3"]

    def test_absolute_child_path(self):
        assert [e.tag for e in parse("/ead/archdesc").evaluate(DOC, DOC)] == ["archdesc"]

    def test_relative_path_from_node(self):
        arch = parse("/ead/archdesc").evaluate(DOC, DOC)[0]
        assert parse("did/unitid").strings(arch) == ["F1"]

    def test_attribute_terminal(self):
        arch = parse("/ead/archdesc").evaluate(DOC, DOC)[0]
        assert parse("@level").strings(arch) == ["fonds"]
        assert parse("@missing").strings(arch) == []

    def test_text_terminal(self):
        arch = parse("/ead/archdesc").evaluate(DOC, DOC)[0]
        assert parse("did/unittitle/text()").strings(arch) == ["Fonds one", "Fonds odyn"]

    def test_attribute_predicate(self):
        assert ids(parse("//c[@level='item']").evaluate(DOC, DOC)) == ["c2", "c3"]

    def test_index_predicate_is_one_based(self):
        arch = parse("/ead/archdesc").evaluate(DOC, DOC)[0]
        assert parse("did/unittitle[2]/text()").strings(arch) == ["Fonds odyn"]

    def test_wildcard_step(self):
        arch = parse("/ead/archdesc").evaluate(DOC, DOC)[0]
        did = parse("did").evaluate(arch)[0]
        assert len(parse("*").evaluate(did)) == 3

    def test_mid_path_descendant_axis(self):
        assert parse("/ead//unitid").strings(DOC, DOC) == ["F1", "I1", "I2", "I3"]

    def test_values_carry_source_elements(self):
        arch = parse("/ead/archdesc").evaluate(DOC, DOC)[0]
        values = parse("did/unittitle").values(arch)
        assert [(v, el.attrib["lang"]) for v, el in values] == [
            ("Fonds one", "eng"),
            ("Fonds odyn", "ukr"),
        ]

    def test_evaluation_is_pure(self):
        before = ET.tostring(DOC)
        parse("//c[@level='item']/did/unitid").strings(DOC, DOC)
        assert ET.tostring(DOC) == before

    def test_document_order_for_descendant_matches(self):
        assert parse("//unitid").strings(DOC, DOC) == ["F1", "I1", "I2", "I3"]
